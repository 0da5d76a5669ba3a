#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "flowfields/core.hpp"

namespace flowfields {

// 8-bit interleaved image as loaded from disk (1 or 3 channels).
struct Rgb8Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;  // row-major, interleaved

  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Planar 3-channel float image in CIELab. After conversion from 8-bit
// sRGB, L is in [0, 100] and a, b in [-128, 127].
class LabImage {
 public:
  LabImage() = default;
  LabImage(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  float& at(int c, int x, int y) { return planes_[c][static_cast<std::size_t>(y) * width_ + x]; }
  float at(int c, int x, int y) const { return planes_[c][static_cast<std::size_t>(y) * width_ + x]; }

  const float* plane(int c) const { return planes_[c].data(); }
  float* plane(int c) { return planes_[c].data(); }

  // Pixel read with replicative border (out-of-range coordinates clamp
  // to the nearest visible pixel).
  float at_clamped(int c, int x, int y) const {
    return planes_[c][static_cast<std::size_t>(clamp_int(y, 0, height_ - 1)) * width_ +
                      clamp_int(x, 0, width_ - 1)];
  }

  Vec3f pixel(int x, int y) const {
    return {at_clamped(0, x, y), at_clamped(1, x, y), at_clamped(2, x, y)};
  }

  void fill(Vec3f value);
  bool same_samples(const LabImage& other) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> planes_[3];
};

// Single-plane bilinear sample with replicative border: coordinates are
// clamped into [0, w-1] x [0, h-1] before blending.
float sample_plane_bilinear(const float* plane, int w, int h, float x, float y);

// Bilinear Lab sample at an arbitrary finite position. Throws
// std::invalid_argument on non-finite coordinates.
Vec3f sample_bilinear(const LabImage& img, Vec2f pos);

// Standard sRGB (D65) to CIELab. Gray inputs are treated as R=G=B.
LabImage rgb_to_lab(const Rgb8Image& img);

enum class Upsampler { Lanczos3, Bilinear };

// Area-average downsample by integer factor n; partial blocks at the
// right/bottom edge average over the covered pixels only.
LabImage area_downsample(const LabImage& img, int n);

// Low-pass by area downsampling followed by upsampling back to the
// original size. n = 1 returns the input unchanged. The downsampled
// pixel (i, j) is treated as centered at (i*n + (n-1)/2, j*n + (n-1)/2)
// on the full-resolution grid.
LabImage lowpass(const LabImage& img, int n, Upsampler up = Upsampler::Lanczos3);

// Family of low-pass filtered versions of one image, all at full
// resolution, keyed by scale factor. Level 1 is the image itself.
class ScaleSpace {
 public:
  ScaleSpace() = default;

  const LabImage& base() const { return level(1); }
  const LabImage& level(int n) const;
  bool has_level(int n) const { return levels_.count(n) != 0; }
  std::vector<int> scales() const;

  int width() const { return base().width(); }
  int height() const { return base().height(); }

  friend ScaleSpace build_scale_space(const LabImage&, const std::vector<int>&, Upsampler);

 private:
  std::map<int, LabImage> levels_;
};

// Builds the requested levels (duplicates collapsed). The list must be
// non-empty and contain 1.
ScaleSpace build_scale_space(const LabImage& img, const std::vector<int>& scale_list,
                             Upsampler up = Upsampler::Lanczos3);

// Per-pixel fixed-dimension feature vectors.
struct FeatureMap {
  int width = 0;
  int height = 0;
  int dim = 0;
  std::vector<float> values;  // (y*width + x)*dim

  const float* at(int x, int y) const {
    return &values[(static_cast<std::size_t>(y) * width + x) * dim];
  }
  float* at(int x, int y) { return &values[(static_cast<std::size_t>(y) * width + x) * dim]; }

  // Bilinear sample with replicative border, written into out[0..dim).
  void sample(Vec2f pos, float* out) const;
};

// Maps a pixel neighborhood of the given image to `dim` values at `out`.
using FeatureExtractor = std::function<void(const LabImage& img, int x, int y, float* out)>;

enum class FeatureMode { F1, F2, F2F };

// F1: extract at full resolution, then low-pass the feature map by n.
// F2: area-downsample the image by n, extract on the small image, then
//     Lanczos-upsample the feature map back.
// F2F: like F2 with bilinear upsampling; at n = 1 features are computed
//      on a 2x2-strided grid and skipped pixels are interpolated.
FeatureMap feature_pipeline(const LabImage& img, int n, int dim, const FeatureExtractor& extract,
                            FeatureMode mode);

}  // namespace flowfields
