#include "latentmark/attacks.hpp"

#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdlib>
#include <numbers>

#include "latentmark/error.hpp"
#include "latentmark/resample.hpp"

namespace latentmark {
namespace {

struct KindName {
  AttackKind kind;
  const char* name;
};

constexpr std::array<KindName, 9> kNames = {{{AttackKind::kIdentity, "identity"},
                                             {AttackKind::kRotation, "rotation"},
                                             {AttackKind::kCrop, "crop"},
                                             {AttackKind::kResize, "resize"},
                                             {AttackKind::kBlur, "blur"},
                                             {AttackKind::kJpeg, "jpeg"},
                                             {AttackKind::kBrightness, "brightness"},
                                             {AttackKind::kContrast, "contrast"},
                                             {AttackKind::kHue, "hue"}}};

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Image linear_attack(const Image& img, const LinearMap& map) {
  return Image::clamped(map.apply(img.as_delta()));
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double c = mx - mn;
  v = mx;
  s = mx > 0.0 ? c / mx : 0.0;
  if (c == 0.0) {
    h = 0.0;
  } else if (mx == r) {
    h = std::fmod((g - b) / c, 6.0);
  } else if (mx == g) {
    h = (b - r) / c + 2.0;
  } else {
    h = (r - g) / c + 4.0;
  }
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = h * 6.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

}  // namespace

AttackSpec AttackSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  AttackSpec spec;
  bool found = false;
  for (const auto& [kind, n] : kNames) {
    if (name == n) {
      spec.kind = kind;
      found = true;
    }
  }
  if (!found) throw InvalidArgument("unknown attack '" + name + "'");
  if (spec.kind == AttackKind::kIdentity) {
    spec.param = 0.0;
  } else {
    if (colon == std::string::npos) throw InvalidArgument("attack '" + name + "' needs a parameter");
    try {
      std::size_t used = 0;
      const std::string value = text.substr(colon + 1);
      spec.param = std::stod(value, &used);
      if (used != value.size()) throw InvalidArgument("trailing characters");
    } catch (const std::exception&) {
      throw InvalidArgument("bad attack parameter in '" + text + "'");
    }
  }
  spec.validate();
  return spec;
}

std::string AttackSpec::name() const {
  for (const auto& [k, n] : kNames) {
    if (k == kind) return n;
  }
  return "unknown";
}

std::string AttackSpec::to_string() const {
  if (kind == AttackKind::kIdentity) return "identity";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s:%g", name().c_str(), param);
  return buf;
}

void AttackSpec::validate() const {
  auto fail = [&](const char* range) {
    throw InvalidArgument("attack " + name() + " parameter must be " + range);
  };
  if (!std::isfinite(param)) fail("finite");
  switch (kind) {
    case AttackKind::kIdentity: break;
    case AttackKind::kRotation: if (std::fabs(param) > 180.0) fail("in [-180, 180] degrees"); break;
    case AttackKind::kCrop: if (!(param > 0.0 && param <= 1.0)) fail("in (0, 1]"); break;
    case AttackKind::kResize: if (!(param > 0.0 && param <= 1.0)) fail("in (0, 1]"); break;
    case AttackKind::kBlur: if (!(param > 0.0)) fail("positive"); break;
    case AttackKind::kJpeg:
      if (!(param >= 1.0 && param <= 100.0) || param != std::floor(param)) fail("an integer in [1, 100]");
      break;
    case AttackKind::kBrightness: if (!(param >= 0.0)) fail("non-negative"); break;
    case AttackKind::kContrast: if (!(param >= 0.0)) fail("non-negative"); break;
    case AttackKind::kHue: if (!(param >= -0.5 && param <= 0.5)) fail("in [-0.5, 0.5]"); break;
  }
}

int blur_kernel_for_sigma(double sigma) {
  const double target = (sigma - 0.35) / 0.15;
  int k = static_cast<int>(std::lround((target - 1.0) / 2.0)) * 2 + 1;
  return std::max(1, k);
}

Image attack(const Image& img, const AttackSpec& spec) {
  spec.validate();
  const int h = img.height();
  const int w = img.width();
  switch (spec.kind) {
    case AttackKind::kIdentity:
      return img;
    case AttackKind::kRotation:
      return linear_attack(img, rotation(h, w, spec.param * std::numbers::pi / 180.0));
    case AttackKind::kCrop: {
      const double side = std::sqrt(spec.param);
      Window win;
      win.width = std::clamp(static_cast<int>(std::lround(w * side)), 1, w);
      win.height = std::clamp(static_cast<int>(std::lround(h * side)), 1, h);
      win.x = (w - win.width) / 2;
      win.y = (h - win.height) / 2;
      return linear_attack(img, crop_window(h, w, win));
    }
    case AttackKind::kResize: {
      const int rh = std::max(1, static_cast<int>(std::lround(h * spec.param)));
      const int rw = std::max(1, static_cast<int>(std::lround(w * spec.param)));
      return linear_attack(img, bilinear_resize(h, w, Window{0, 0, h, w}, rh, rw));
    }
    case AttackKind::kBlur: {
      const int k = blur_kernel_for_sigma(spec.param);
      LinearPipeline pipe(h, w);
      pipe.push(gaussian_blur_1d(h, w, k, spec.param, true));
      pipe.push(gaussian_blur_1d(h, w, k, spec.param, false));
      return Image::clamped(pipe.apply(img.as_delta()));
    }
    case AttackKind::kJpeg:
      return jpeg_roundtrip(img, static_cast<int>(spec.param));
    case AttackKind::kBrightness: {
      std::vector<double> v(img.data().begin(), img.data().end());
      for (auto& x : v) x *= spec.param;
      return Image::clamped(h, w, std::move(v));
    }
    case AttackKind::kContrast: {
      const std::size_t plane = img.plane_size();
      double gray = 0.0;
      for (std::size_t p = 0; p < plane; ++p) {
        gray += 0.299 * img.data()[p] + 0.587 * img.data()[plane + p] + 0.114 * img.data()[2 * plane + p];
      }
      gray /= static_cast<double>(plane);
      std::vector<double> v(img.data().begin(), img.data().end());
      for (auto& x : v) x = gray + spec.param * (x - gray);
      return Image::clamped(h, w, std::move(v));
    }
    case AttackKind::kHue: {
      const std::size_t plane = img.plane_size();
      auto d = img.data();
      std::vector<double> v(d.size());
      for (std::size_t p = 0; p < plane; ++p) {
        double hh, s, val;
        rgb_to_hsv(d[p], d[plane + p], d[2 * plane + p], hh, s, val);
        hh = std::fmod(hh + spec.param + 1.0, 1.0);
        hsv_to_rgb(hh, s, val, v[p], v[plane + p], v[2 * plane + p]);
      }
      return Image::clamped(h, w, std::move(v));
    }
  }
  throw InvalidArgument("unknown attack kind");
}

Image jpeg_roundtrip(const Image& img, int quality) {
  if (quality < 1 || quality > 100) throw InvalidArgument("JPEG quality must be in [1, 100]");
  const int h = img.height();
  const int w = img.width();
  const std::size_t plane = img.plane_size();
  std::vector<unsigned char> rgb(plane * 3);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) rgb[p * 3 + c] = quantize_sample(img.data()[c * plane + p]);
  }

  unsigned char* encoded = nullptr;
  unsigned long encoded_size = 0;
  std::vector<unsigned char> decoded(plane * 3);
  {
    jpeg_compress_struct cinfo{};
    JpegError err{};
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
      jpeg_destroy_compress(&cinfo);
      std::free(encoded);
      throw Error(std::string("JPEG encode failed: ") + err.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &encoded, &encoded_size);
    cinfo.image_width = static_cast<JDIMENSION>(w);
    cinfo.image_height = static_cast<JDIMENSION>(h);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    // 4:4:4: chroma is quantized but not subsampled.
    for (int c = 0; c < 3; ++c) {
      cinfo.comp_info[c].h_samp_factor = 1;
      cinfo.comp_info[c].v_samp_factor = 1;
    }
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
      JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * w * 3;
      jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
  }
  {
    jpeg_decompress_struct dinfo{};
    JpegError err{};
    dinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
      jpeg_destroy_decompress(&dinfo);
      std::free(encoded);
      throw Error(std::string("JPEG decode failed: ") + err.message);
    }
    jpeg_create_decompress(&dinfo);
    jpeg_mem_src(&dinfo, encoded, encoded_size);
    jpeg_read_header(&dinfo, TRUE);
    dinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&dinfo);
    while (dinfo.output_scanline < dinfo.output_height) {
      JSAMPROW row = decoded.data() + static_cast<std::size_t>(dinfo.output_scanline) * w * 3;
      jpeg_read_scanlines(&dinfo, &row, 1);
    }
    jpeg_finish_decompress(&dinfo);
    jpeg_destroy_decompress(&dinfo);
  }
  std::free(encoded);

  std::vector<double> v(plane * 3);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) v[c * plane + p] = decoded[p * 3 + c] / 255.0;
  }
  return Image(h, w, std::move(v));
}

}  // namespace latentmark
