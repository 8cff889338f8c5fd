#include "hvc/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace hvc {

namespace {

std::string lower_extension(const fs::path& p)
{
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

std::uint8_t to_byte(float v)
{
  return std::uint8_t(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

// ---- PNM ------------------------------------------------------------------

struct Pnm
{
  int magic = 0;  // 5 or 6
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;
};

Pnm parse_pnm(const std::string& bytes, const fs::path& path)
{
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size())
    {
      if (bytes[pos] == '#')
        while (pos < bytes.size() && bytes[pos] != '\n')
          ++pos;
      else if (std::isspace(static_cast<unsigned char>(bytes[pos])))
        ++pos;
      else
        break;
    }
  };
  auto read_int = [&] {
    skip_space();
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])))
      ++pos;
    if (start == pos)
      throw IoError("malformed PNM header: " + path.string());
    return std::stoi(bytes.substr(start, pos - start));
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw IoError("unsupported PNM variant: " + path.string());
  Pnm p;
  p.magic = bytes[1] - '0';
  pos = 2;
  p.width = read_int();
  p.height = read_int();
  const int maxval = read_int();
  if (maxval != 255)
    throw IoError("only 8-bit PNM is supported: " + path.string());
  ++pos;  // single whitespace before the raster
  const std::size_t n = std::size_t(p.width) * p.height * (p.magic == 6 ? 3 : 1);
  if (bytes.size() < pos + n)
    throw IoError("truncated PNM raster: " + path.string());
  p.data.assign(bytes.begin() + pos, bytes.begin() + pos + n);
  return p;
}

std::string format_pnm(int magic, int w, int h, const std::vector<std::uint8_t>& data)
{
  std::string out = "P" + std::to_string(magic) + "\n" + std::to_string(w) + " " +
                    std::to_string(h) + "\n255\n";
  out.append(reinterpret_cast<const char*>(data.data()), data.size());
  return out;
}

// ---- PNG ------------------------------------------------------------------

struct RawPng
{
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (grey or palette index) or 3
  std::vector<std::uint8_t> data;
};

struct PngReadState
{
  const std::string* bytes;
  std::size_t pos;
};

void png_read_from_string(png_structp png, png_bytep out, png_size_t n)
{
  auto* s = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (s->pos + n > s->bytes->size())
    png_error(png, "truncated PNG stream");
  std::memcpy(out, s->bytes->data() + s->pos, n);
  s->pos += n;
}

// Decodes to 8-bit grey, RGB or raw palette indices (never expands palettes).
RawPng decode_png(const std::string& bytes, const fs::path& path, bool keep_indices)
{
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png)
    throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  RawPng out;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> raster;
  if (setjmp(png_jmpbuf(png)))
  {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode PNG: " + path.string());
  }
  PngReadState state{&bytes, 0};
  png_set_read_fn(png, &state, png_read_from_string);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16)
    png_set_strip_16(png);
  if (depth < 8)
    png_set_packing(png);
  if (color == PNG_COLOR_TYPE_PALETTE && !keep_indices)
    png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8 && !keep_indices)
    png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA)
    png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out.width = int(png_get_image_width(png, info));
  out.height = int(png_get_image_height(png, info));
  out.channels = int(png_get_channels(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  raster.resize(stride * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y)
    rows[y] = raster.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out.data.resize(std::size_t(out.width) * out.height * out.channels);
  for (int y = 0; y < out.height; ++y)
    std::memcpy(out.data.data() + std::size_t(y) * out.width * out.channels, rows[y],
                std::size_t(out.width) * out.channels);
  return out;
}

std::string encode_png(int w, int h, std::uint32_t format, const std::vector<std::uint8_t>& data,
                       const void* colormap = nullptr, int colormap_entries = 0)
{
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = png_uint_32(w);
  image.height = png_uint_32(h);
  image.format = format;
  image.colormap_entries = png_uint_32(colormap_entries);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, data.data(), 0, colormap))
    throw IoError(std::string("PNG encode failed: ") + image.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, data.data(), 0, colormap))
    throw IoError(std::string("PNG encode failed: ") + image.message);
  out.resize(size);
  return out;
}

// Distinct colours for mask visualisation: the usual bit-interleaved palette.
std::array<std::uint8_t, 256 * 3> label_palette()
{
  std::array<std::uint8_t, 256 * 3> pal{};
  for (int i = 0; i < 256; ++i)
  {
    int c = i, r = 0, g = 0, b = 0;
    for (int j = 0; j < 8; ++j)
    {
      r |= ((c >> 0) & 1) << (7 - j);
      g |= ((c >> 1) & 1) << (7 - j);
      b |= ((c >> 2) & 1) << (7 - j);
      c >>= 3;
    }
    pal[i * 3 + 0] = std::uint8_t(r);
    pal[i * 3 + 1] = std::uint8_t(g);
    pal[i * 3 + 2] = std::uint8_t(b);
  }
  return pal;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& bytes)
{
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::random_device rd;
  const fs::path tmp = path.string() + ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw IoError("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out)
      throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_image_file(const fs::path& path)
{
  const auto ext = lower_extension(path);
  return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

std::vector<fs::path> list_images(const fs::path& dir)
{
  if (!fs::is_directory(dir))
    throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path()))
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

ImageBuffer read_image(const fs::path& path)
{
  const auto bytes = read_file(path);
  const auto ext = lower_extension(path);
  int w = 0, h = 0, ch = 0;
  std::vector<std::uint8_t> data;
  if (ext == ".png")
  {
    auto raw = decode_png(bytes, path, false);
    w = raw.width;
    h = raw.height;
    ch = raw.channels;
    data = std::move(raw.data);
  }
  else
  {
    auto pnm = parse_pnm(bytes, path);
    w = pnm.width;
    h = pnm.height;
    ch = pnm.magic == 6 ? 3 : 1;
    data = std::move(pnm.data);
  }
  ImageBuffer img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
      {
        const int src_c = ch == 1 ? 0 : c;
        img.at(y, x, c) = float(data[(std::size_t(y) * w + x) * ch + src_c]) / 255.f;
      }
  return img;
}

void write_image(const fs::path& path, const ImageBuffer& img)
{
  if (img.channels != 3)
    throw IoError("write_image expects RGB: " + path.string());
  std::vector<std::uint8_t> data(img.values.size());
  std::transform(img.values.begin(), img.values.end(), data.begin(), to_byte);
  const auto ext = lower_extension(path);
  if (ext == ".png")
    write_file_atomic(path, encode_png(img.width, img.height, PNG_FORMAT_RGB, data));
  else if (ext == ".ppm" || ext == ".pnm")
    write_file_atomic(path, format_pnm(6, img.width, img.height, data));
  else
    throw IoError("unsupported image extension: " + path.string());
}

LabelImage read_labels(const fs::path& path)
{
  const auto bytes = read_file(path);
  const auto ext = lower_extension(path);
  LabelImage out;
  if (ext == ".png")
  {
    auto raw = decode_png(bytes, path, true);
    if (raw.channels != 1)
      throw IoError("mask must be indexed or greyscale: " + path.string());
    out.resize(raw.height, raw.width);
    for (int i = 0; i < raw.height * raw.width; ++i)
      out.data()[i] = raw.data[i];
    return out;
  }
  auto pnm = parse_pnm(bytes, path);
  if (pnm.magic != 5)
    throw IoError("mask must be PGM: " + path.string());
  out.resize(pnm.height, pnm.width);
  for (int i = 0; i < pnm.height * pnm.width; ++i)
    out.data()[i] = pnm.data[i];
  return out;
}

void write_labels(const fs::path& path, const LabelImage& labels)
{
  if (labels.size() && (labels.minCoeff() < 0 || labels.maxCoeff() > 255))
    throw IoError("class ids must fit in 8 bits: " + path.string());
  std::vector<std::uint8_t> data(std::size_t(labels.size()));
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    data[i] = std::uint8_t(labels.data()[i]);
  const auto ext = lower_extension(path);
  const int w = int(labels.cols());
  const int h = int(labels.rows());
  if (ext == ".png")
  {
    static const auto palette = label_palette();
    write_file_atomic(path, encode_png(w, h, PNG_FORMAT_RGB_COLORMAP, data, palette.data(), 256));
  }
  else if (ext == ".pgm" || ext == ".pnm")
    write_file_atomic(path, format_pnm(5, w, h, data));
  else
    throw IoError("unsupported mask extension: " + path.string());
}

} /* namespace hvc */
