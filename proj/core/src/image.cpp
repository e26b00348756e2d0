#include "latentmark/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <string>

#include "latentmark/error.hpp"

namespace latentmark {
namespace {

void check_dims(int h, int w) {
  if (h <= 0 || w <= 0) throw InvalidArgument("image dimensions must be positive");
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

Image from_interleaved_u8(int h, int w, int channels, const std::vector<unsigned char>& bytes) {
  std::vector<double> planar(static_cast<std::size_t>(h) * w * kChannels);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < kChannels; ++c) {
      const int src = channels == 1 ? 0 : c;
      planar[c * plane + p] = bytes[p * channels + src] / 255.0;
    }
  }
  return Image(h, w, std::move(planar));
}

std::vector<unsigned char> to_interleaved_u8(const Image& img) {
  const std::size_t plane = img.plane_size();
  std::vector<unsigned char> bytes(plane * kChannels);
  auto data = img.data();
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < kChannels; ++c) bytes[p * kChannels + c] = quantize_sample(data[c * plane + p]);
  }
  return bytes;
}

// --- PPM -------------------------------------------------------------------

int read_ppm_int(std::istream& in) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw FormatError("malformed PPM header");
  long value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    if (value > std::numeric_limits<int>::max()) throw FormatError("PPM header value too large");
    c = in.get();
  }
  // Exactly one whitespace byte separates the header from the raster.
  if (c == EOF || !std::isspace(c)) throw FormatError("malformed PPM header");
  return static_cast<int>(value);
}

Image load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '6' && magic[1] != '5')) {
    throw FormatError("unsupported format: '" + path.string() + "' is not a binary PPM/PGM");
  }
  const int channels = magic[1] == '6' ? 3 : 1;
  const int w = read_ppm_int(in);
  const int h = read_ppm_int(in);
  const int maxval = read_ppm_int(in);
  if (w <= 0 || h <= 0) throw FormatError("PPM has empty dimensions");
  if (maxval > 255) throw FormatError("unsupported bit depth (16-bit PPM)");
  if (maxval != 255) throw FormatError("unsupported PPM maxval " + std::to_string(maxval));
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw FormatError("PPM raster truncated");
  return from_interleaved_u8(h, w, channels, bytes);
}

void save_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string header = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  const auto bytes = to_interleaved_u8(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// --- PNG -------------------------------------------------------------------

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp, png_const_charp msg) {
  throw FormatError(std::string("PNG error: ") + msg);
}
void png_warning_handler(png_structp, png_const_charp) {}

Image load_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open '" + path.string() + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                           png_warning_handler);
  if (!png) throw Error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};
  if (!info) throw Error("png_create_info_struct failed");

  png_init_io(png, file.get());
  png_read_info(png, info);
  const auto w = static_cast<int>(png_get_image_width(png, info));
  const auto h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth == 16) throw FormatError("unsupported bit depth (16-bit PNG)");
  if (color & PNG_COLOR_MASK_ALPHA) throw FormatError("non-3-channel input (PNG with alpha)");
  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) throw FormatError("non-3-channel input (palette with transparency)");
  }
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) throw FormatError("non-3-channel input");

  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * channels);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return from_interleaved_u8(h, w, channels, bytes);
}

void write_png(const std::filesystem::path& path, int h, int w, int channels,
               const std::vector<unsigned char>& bytes) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open '" + path.string() + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                            png_warning_handler);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};
  if (!info) throw Error("png_create_info_struct failed");

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) {
    rows[y] = const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * w * channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  if (std::fflush(file.get()) != 0) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

// --- PixelDelta ------------------------------------------------------------

PixelDelta::PixelDelta(int h, int w, std::vector<double> values)
    : height(h), width(w), data(std::move(values)) {
  check_dims(h, w);
  if (data.size() != static_cast<std::size_t>(h) * w * kChannels) {
    throw InvalidArgument("pixel array size does not match dimensions");
  }
}

PixelDelta& PixelDelta::operator+=(const PixelDelta& other) {
  if (!same_shape(other)) throw InvalidArgument("shape mismatch in PixelDelta +=");
  for (std::size_t i = 0; i < data.size(); ++i) data[i] += other.data[i];
  return *this;
}

PixelDelta& PixelDelta::operator*=(double s) {
  for (auto& v : data) v *= s;
  return *this;
}

double dot(const PixelDelta& a, const PixelDelta& b) {
  if (!a.same_shape(b)) throw InvalidArgument("shape mismatch in dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// --- Image -----------------------------------------------------------------

Image::Image(int height, int width, double value)
    : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width * kChannels, value) {
  check_dims(height, width);
  if (!(value >= 0.0 && value <= 1.0)) throw InvalidArgument("pixel value outside [0, 1]");
}

Image::Image(int height, int width, std::vector<double> planar)
    : height_(height), width_(width), data_(std::move(planar)) {
  check_dims(height, width);
  if (data_.size() != static_cast<std::size_t>(height) * width * kChannels) {
    throw InvalidArgument("pixel array size does not match dimensions");
  }
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("pixel value outside [0, 1]");
  }
}

Image Image::clamped(const PixelDelta& values) {
  return clamped(values.height, values.width, values.data);
}

Image Image::clamped(int height, int width, std::vector<double> planar) {
  for (auto& v : planar) v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
  return Image(height, width, std::move(planar));
}

PixelDelta difference(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw InvalidArgument("shape mismatch in difference");
  PixelDelta d(a.height(), a.width());
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] = da[i] - db[i];
  return d;
}

Image apply_delta(const Image& base, const PixelDelta& delta) {
  if (!base.same_shape(delta)) throw InvalidArgument("shape mismatch in apply_delta");
  std::vector<double> v(base.data().begin(), base.data().end());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += delta.data[i];
  return Image::clamped(base.height(), base.width(), std::move(v));
}

unsigned char quantize_sample(double v) {
  const double scaled = std::round(v * 255.0);  // half away from zero
  return static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0));
}

Image quantize(const Image& img) {
  std::vector<double> v(img.data().begin(), img.data().end());
  for (auto& x : v) x = quantize_sample(x) / 255.0;
  return Image(img.height(), img.width(), std::move(v));
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open '" + path.string() + "'");
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  const auto got = probe.gcount();
  probe.close();
  if (got == 8 && png_sig_cmp(sig, 0, 8) == 0) return load_png(path);
  if (got >= 2 && sig[0] == 'P' && (sig[1] == '6' || sig[1] == '5')) return load_ppm(path);
  throw FormatError("unsupported format: '" + path.string() + "'");
}

void save_image(const Image& img, const std::filesystem::path& path) {
  if (img.empty()) throw InvalidArgument("cannot save an empty image");
  const auto ext = lower_extension(path);
  if (ext == ".ppm" || ext == ".pnm") {
    save_ppm(img, path);
  } else if (ext == ".png") {
    write_png(path, img.height(), img.width(), kChannels, to_interleaved_u8(img));
  } else {
    throw InvalidArgument("unsupported output extension '" + ext + "' (use .png or .ppm)");
  }
}

void save_heatmap_png(std::span<const double> values, int height, int width,
                      const std::filesystem::path& path) {
  if (values.size() != static_cast<std::size_t>(height) * width) {
    throw InvalidArgument("heatmap size does not match dimensions");
  }
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, v);
  std::vector<unsigned char> bytes(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    bytes[i] = quantize_sample(peak > 0.0 ? values[i] / peak : 0.0);
  }
  write_png(path, height, width, 1, bytes);
}

double mse(const PixelDelta& delta) {
  if (delta.data.empty()) throw InvalidArgument("mse of empty array");
  double s = 0.0;
  for (double v : delta.data) s += v * v;
  return 255.0 * 255.0 * s / static_cast<double>(delta.data.size());
}

double mse(const Image& a, const Image& b) { return mse(difference(a, b)); }

double psnr(const PixelDelta& delta) {
  const double m = mse(delta);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

double psnr(const Image& a, const Image& b) { return psnr(difference(a, b)); }

}  // namespace latentmark
