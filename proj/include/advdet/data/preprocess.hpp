#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "advdet/core/error.hpp"
#include "advdet/core/types.hpp"
#include "advdet/data/image.hpp"

namespace advdet {

enum class FaceBoxSource { kManifestBox, kFullImage };

struct PreprocessSpec {
  double crop_enlarge_factor = 1.3;
  int output_size = 299;
  FaceBoxSource face_box_source = FaceBoxSource::kManifestBox;
  float norm_mean = 0.5f;  // backbone convention: (x - mean) / std
  float norm_std = 0.5f;
};

/// Face box by corners, pixels, x1 > x0 and y1 > y0.
struct CornerBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  static CornerBox from(const FaceBox& b) { return {b.x, b.y, b.x + b.w, b.y + b.h}; }
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }
};

/// Half-open integer pixel rectangle.
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const PixelRect&) const = default;
};

/// Box scaled by `factor` about its centre, then clamped to the image.
inline PixelRect enlarged_crop(const CornerBox& box, double factor, int image_w, int image_h) {
  if (!(box.width() > 0) || !(box.height() > 0)) throw DataError("face box is empty or inverted");
  if (factor < 1.0) throw ConfigError("crop_enlarge_factor must be >= 1");
  const double w = box.width() * factor;
  const double h = box.height() * factor;
  PixelRect r;
  r.x0 = static_cast<int>(std::lround(box.cx() - 0.5 * w));
  r.y0 = static_cast<int>(std::lround(box.cy() - 0.5 * h));
  r.x1 = r.x0 + static_cast<int>(std::lround(w));
  r.y1 = r.y0 + static_cast<int>(std::lround(h));
  r.x0 = std::clamp(r.x0, 0, image_w);
  r.x1 = std::clamp(r.x1, 0, image_w);
  r.y0 = std::clamp(r.y0, 0, image_h);
  r.y1 = std::clamp(r.y1, 0, image_h);
  if (r.width() <= 0 || r.height() <= 0) throw DataError("face box lies outside the image");
  return r;
}

inline Image crop(const Image& img, const PixelRect& r) {
  Image out(r.width(), r.height(), img.channels);
  for (int y = 0; y < r.height(); ++y) {
    for (int x = 0; x < r.width(); ++x) {
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(r.y0 + y, r.x0 + x, c);
    }
  }
  return out;
}

/// Bilinear resampling with half-pixel centres; same-size input is returned unchanged.
inline Image resize_bilinear(const Image& img, int out_w, int out_h) {
  if (img.width == out_w && img.height == out_h) return img;
  Image out(out_w, out_h, img.channels);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = (1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        const double bot = (1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        out.at(y, x, c) = static_cast<float>((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

/// Crop (MANIFEST_BOX) or take the whole frame, resize to output_size, normalize.
inline Image preprocess(const Image& img, const std::optional<CornerBox>& face_box, const PreprocessSpec& spec) {
  if (spec.output_size <= 0) throw ConfigError("output_size must be positive");
  Image region;
  if (spec.face_box_source == FaceBoxSource::kManifestBox && face_box) {
    region = crop(img, enlarged_crop(*face_box, spec.crop_enlarge_factor, img.width, img.height));
  } else {
    region = img;
  }
  Image out = resize_bilinear(region, spec.output_size, spec.output_size);
  for (auto& v : out.data) v = (std::clamp(v, 0.0f, 1.0f) - spec.norm_mean) / spec.norm_std;
  return out;
}

}  // namespace advdet
