#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include "hvc/parameter_store.hpp"

namespace hvc {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

inline constexpr char checkpoint_magic[4] = {'H', 'V', 'C', '1'};
inline constexpr std::uint32_t checkpoint_version = 1;

enum class DType : std::uint8_t
{
  f32 = 0,
  f64 = 1,
  u8 = 2,
  i64 = 3,
};

std::size_t dtype_size(DType t);

template <typename T>
constexpr DType dtype_of()
{
  if constexpr (std::is_same_v<T, float>)
    return DType::f32;
  else if constexpr (std::is_same_v<T, double>)
    return DType::f64;
  else if constexpr (std::is_same_v<T, std::uint8_t> || std::is_same_v<T, char>)
    return DType::u8;
  else
  {
    static_assert(std::is_same_v<T, std::int64_t>, "unsupported checkpoint dtype");
    return DType::i64;
  }
}

struct TensorRecord
{
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::uint64_t> shape;
  std::string bytes;  // little-endian payload

  std::uint64_t numel() const;
};

// Ordered list of named tensors. Order is preserved through encode/decode so
// save -> load -> save reproduces the same bytes.
struct Checkpoint
{
  std::uint32_t version = checkpoint_version;
  std::uint64_t config_digest = 0;
  std::vector<TensorRecord> records;

  bool contains(const std::string& name) const;
  const TensorRecord& at(const std::string& name) const;

  template <typename T>
  void add(const std::string& name, const T* data, std::vector<std::uint64_t> shape)
  {
    TensorRecord r{name, dtype_of<T>(), std::move(shape), {}};
    r.bytes.resize(r.numel() * sizeof(T));
    if (!r.bytes.empty())
      std::memcpy(r.bytes.data(), data, r.bytes.size());
    push(std::move(r));
  }

  template <typename T>
  void add_vector(const std::string& name, const std::vector<T>& v)
  {
    add(name, v.data(), {v.size()});
  }

  template <typename T>
  void add_scalar(const std::string& name, T v)
  {
    add(name, &v, {});
  }

  void add_text(const std::string& name, const std::string& text)
  {
    add(name, text.data(), {text.size()});
  }

  template <typename T>
  std::vector<T> get_vector(const std::string& name) const
  {
    const auto& r = at(name);
    if (r.dtype != dtype_of<T>())
      throw StoreMismatch("checkpoint record '" + name + "' has an unexpected dtype");
    std::vector<T> out(r.numel());
    if (!out.empty())
      std::memcpy(out.data(), r.bytes.data(), r.bytes.size());
    return out;
  }

  template <typename T>
  T get_scalar(const std::string& name) const
  {
    const auto v = get_vector<T>(name);
    if (v.size() != 1)
      throw StoreMismatch("checkpoint record '" + name + "' is not a scalar");
    return v.front();
  }

  std::string get_text(const std::string& name) const;

private:
  void push(TensorRecord r);
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Writes `prefix + "/" + name` for every parameter of the store.
template <typename Scalar>
void add_store(Checkpoint& ckpt, const std::string& prefix, const ParameterStore<Scalar>& store)
{
  for (const auto& p : store)
  {
    std::vector<std::uint64_t> shape(p.shape.begin(), p.shape.end());
    ckpt.add(prefix + "/" + p.name, p.value.data(), std::move(shape));
  }
}

// Fills every parameter of `store` from `prefix/<name>`; names, shapes and
// dtypes must match exactly.
template <typename Scalar>
void read_store(const Checkpoint& ckpt, const std::string& prefix, ParameterStore<Scalar>& store)
{
  for (auto& p : store)
  {
    const std::string key = prefix + "/" + p.name;
    if (!ckpt.contains(key))
      throw StoreMismatch("checkpoint lacks parameter '" + key + "'");
    const auto& r = ckpt.at(key);
    if (!std::equal(r.shape.begin(), r.shape.end(), p.shape.begin(), p.shape.end(),
                    [](std::uint64_t a, std::int64_t b) { return a == std::uint64_t(b); }))
      throw StoreMismatch("checkpoint shape mismatch for '" + key + "'");
    const auto v = ckpt.get_vector<Scalar>(key);
    p.value = Eigen::Map<const Vector<Scalar>>(v.data(), Eigen::Index(v.size()));
  }
}

} /* namespace hvc */
