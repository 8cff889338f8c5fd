#include "hvc/checkpoint.hpp"

#include "hvc/image_io.hpp"

namespace hvc {

namespace {

template <typename T>
void put(std::string& out, T v)
{
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader
{
public:
  explicit Reader(const std::string& bytes)
    : bytes_{bytes}
  {
  }

  template <typename T>
  T get()
  {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }

  std::string take_string(std::size_t n)
  {
    const char* p = take(n);
    return std::string(p, n);
  }

  bool done() const
  {
    return pos_ == bytes_.size();
  }

private:
  const char* take(std::size_t n)
  {
    if (n > bytes_.size() - pos_)
      throw IoError("checkpoint is truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t dtype_size(DType t)
{
  switch (t)
  {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
    case DType::i64: return 8;
  }
  throw IoError("unknown checkpoint dtype tag " + std::to_string(int(t)));
}

std::uint64_t TensorRecord::numel() const
{
  std::uint64_t n = 1;
  for (auto d : shape)
    n *= d;
  return n;
}

bool Checkpoint::contains(const std::string& name) const
{
  for (const auto& r : records)
    if (r.name == name)
      return true;
  return false;
}

const TensorRecord& Checkpoint::at(const std::string& name) const
{
  for (const auto& r : records)
    if (r.name == name)
      return r;
  throw StoreMismatch("checkpoint has no record '" + name + "'");
}

std::string Checkpoint::get_text(const std::string& name) const
{
  const auto& r = at(name);
  if (r.dtype != DType::u8)
    throw StoreMismatch("checkpoint record '" + name + "' is not text");
  return r.bytes;
}

void Checkpoint::push(TensorRecord r)
{
  if (contains(r.name))
    throw StoreMismatch("duplicate checkpoint record '" + r.name + "'");
  records.push_back(std::move(r));
}

std::string encode_checkpoint(const Checkpoint& ckpt)
{
  std::string out(checkpoint_magic, sizeof checkpoint_magic);
  put<std::uint32_t>(out, ckpt.version);
  put<std::uint64_t>(out, ckpt.config_digest);
  put<std::uint64_t>(out, ckpt.records.size());
  for (const auto& r : ckpt.records)
  {
    put<std::uint32_t>(out, std::uint32_t(r.name.size()));
    out += r.name;
    put<std::uint8_t>(out, std::uint8_t(r.dtype));
    put<std::uint32_t>(out, std::uint32_t(r.shape.size()));
    for (auto d : r.shape)
      put<std::uint64_t>(out, d);
    out += r.bytes;
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes)
{
  Reader in(bytes);
  if (in.take_string(4) != std::string(checkpoint_magic, 4))
    throw IoError("not a checkpoint (bad magic)");
  Checkpoint ckpt;
  ckpt.version = in.get<std::uint32_t>();
  if (ckpt.version != checkpoint_version)
    throw IoError("unsupported checkpoint version " + std::to_string(ckpt.version));
  ckpt.config_digest = in.get<std::uint64_t>();
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i)
  {
    TensorRecord r;
    r.name = in.take_string(in.get<std::uint32_t>());
    r.dtype = DType(in.get<std::uint8_t>());
    const std::size_t width = dtype_size(r.dtype);
    r.shape.resize(in.get<std::uint32_t>());
    for (auto& d : r.shape)
      d = in.get<std::uint64_t>();
    r.bytes = in.take_string(r.numel() * width);
    ckpt.records.push_back(std::move(r));
  }
  if (!in.done())
    throw IoError("trailing bytes after the last checkpoint record");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
  return decode_checkpoint(read_file(path));
}

} /* namespace hvc */
