#include "flowfields/image.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace flowfields {

LabImage::LabImage(int width, int height) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw std::invalid_argument("LabImage: dimensions must be >= 1");
  for (auto& p : planes_) p.assign(pixel_count(), 0.f);
}

void LabImage::fill(Vec3f value) {
  for (int c = 0; c < 3; ++c) std::fill(planes_[c].begin(), planes_[c].end(), value[c]);
}

bool LabImage::same_samples(const LabImage& other) const {
  if (width_ != other.width_ || height_ != other.height_) return false;
  for (int c = 0; c < 3; ++c)
    if (planes_[c] != other.planes_[c]) return false;
  return true;
}

float sample_plane_bilinear(const float* plane, int w, int h, float x, float y) {
  if (x < 0.f) x = 0.f;
  if (y < 0.f) y = 0.f;
  if (x > static_cast<float>(w - 1)) x = static_cast<float>(w - 1);
  if (y > static_cast<float>(h - 1)) y = static_cast<float>(h - 1);
  int x0 = static_cast<int>(x);
  int y0 = static_cast<int>(y);
  if (x0 > w - 2) x0 = w - 2;
  if (y0 > h - 2) y0 = h - 2;
  if (x0 < 0) x0 = 0;  // w == 1
  if (y0 < 0) y0 = 0;  // h == 1
  float fx = x - static_cast<float>(x0);
  float fy = y - static_cast<float>(y0);
  int x1 = std::min(x0 + 1, w - 1);
  int y1 = std::min(y0 + 1, h - 1);
  const float* row0 = plane + static_cast<std::size_t>(y0) * w;
  const float* row1 = plane + static_cast<std::size_t>(y1) * w;
  float top = row0[x0] + fx * (row0[x1] - row0[x0]);
  float bot = row1[x0] + fx * (row1[x1] - row1[x0]);
  return top + fy * (bot - top);
}

Vec3f sample_bilinear(const LabImage& img, Vec2f pos) {
  if (!std::isfinite(pos.x) || !std::isfinite(pos.y))
    throw std::invalid_argument("sample_bilinear: non-finite position");
  Vec3f out;
  for (int c = 0; c < 3; ++c)
    out[c] = sample_plane_bilinear(img.plane(c), img.width(), img.height(), pos.x, pos.y);
  return out;
}

namespace {

inline float srgb_to_linear(float c) {
  return c <= 0.04045f ? c / 12.92f : std::pow((c + 0.055f) / 1.055f, 2.4f);
}

inline float lab_f(float t) {
  constexpr float kCube = 0.008856452f;  // (6/29)^3
  constexpr float kScale = 7.787037f;    // 1 / (3 (6/29)^2)
  return t > kCube ? std::cbrt(t) : kScale * t + 4.0f / 29.0f;
}

}  // namespace

LabImage rgb_to_lab(const Rgb8Image& img) {
  if (img.width < 1 || img.height < 1 || (img.channels != 1 && img.channels != 3))
    throw std::invalid_argument("rgb_to_lab: expected 1- or 3-channel 8-bit image");
  LabImage lab(img.width, img.height);
  constexpr float xn = 0.95047f, zn = 1.08883f;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      float r, g, b;
      if (img.channels == 3) {
        r = img.at(x, y, 0) / 255.f;
        g = img.at(x, y, 1) / 255.f;
        b = img.at(x, y, 2) / 255.f;
      } else {
        r = g = b = img.at(x, y, 0) / 255.f;
      }
      r = srgb_to_linear(r);
      g = srgb_to_linear(g);
      b = srgb_to_linear(b);
      float X = 0.4124564f * r + 0.3575761f * g + 0.1804375f * b;
      float Y = 0.2126729f * r + 0.7151522f * g + 0.0721750f * b;
      float Z = 0.0193339f * r + 0.1191920f * g + 0.9503041f * b;
      float fx = lab_f(X / xn);
      float fy = lab_f(Y);
      float fz = lab_f(Z / zn);
      lab.at(0, x, y) = 116.f * fy - 16.f;
      lab.at(1, x, y) = 500.f * (fx - fy);
      lab.at(2, x, y) = 200.f * (fy - fz);
    }
  }
  return lab;
}

namespace {

void downsample_plane(const float* src, int w, int h, int n, float* dst, int ow, int oh) {
  for (int oy = 0; oy < oh; ++oy) {
    int y0 = oy * n, y1 = std::min(y0 + n, h);
    for (int ox = 0; ox < ow; ++ox) {
      int x0 = ox * n, x1 = std::min(x0 + n, w);
      double sum = 0.0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) sum += src[static_cast<std::size_t>(y) * w + x];
      dst[static_cast<std::size_t>(oy) * ow + ox] =
          static_cast<float>(sum / ((y1 - y0) * (x1 - x0)));
    }
  }
}

inline double lanczos3(double t) {
  t = std::abs(t);
  if (t >= 3.0) return 0.0;
  if (t < 1e-8) return 1.0;
  double pt = M_PI * t;
  return 3.0 * std::sin(pt) * std::sin(pt / 3.0) / (pt * pt);
}

// Resamples one axis from `sn` samples back to `dn` full-resolution
// samples under the area-center convention: source index i sits at
// full-resolution coordinate i*n + (n-1)/2.
struct AxisTaps {
  std::vector<int> index;     // flattened taps * dn
  std::vector<double> weight;
  int taps = 0;
};

AxisTaps make_axis_taps(int dn, int sn, int n, Upsampler up) {
  AxisTaps a;
  a.taps = up == Upsampler::Lanczos3 ? 6 : 2;
  a.index.resize(static_cast<std::size_t>(dn) * a.taps);
  a.weight.resize(static_cast<std::size_t>(dn) * a.taps);
  double half = (n - 1) / 2.0;
  for (int d = 0; d < dn; ++d) {
    double s = (d - half) / n;
    int base = static_cast<int>(std::floor(s)) - (a.taps / 2 - 1);
    double wsum = 0.0;
    for (int t = 0; t < a.taps; ++t) {
      int i = base + t;
      double w = up == Upsampler::Lanczos3 ? lanczos3(s - i) : std::max(0.0, 1.0 - std::abs(s - i));
      a.index[static_cast<std::size_t>(d) * a.taps + t] = clamp_int(i, 0, sn - 1);
      a.weight[static_cast<std::size_t>(d) * a.taps + t] = w;
      wsum += w;
    }
    // normalize so constants are preserved exactly
    for (int t = 0; t < a.taps; ++t) a.weight[static_cast<std::size_t>(d) * a.taps + t] /= wsum;
  }
  return a;
}

void upsample_plane(const float* src, int sw, int sh, int n, Upsampler up, float* dst, int dw,
                    int dh) {
  AxisTaps xt = make_axis_taps(dw, sw, n, up);
  AxisTaps yt = make_axis_taps(dh, sh, n, up);
  std::vector<float> tmp(static_cast<std::size_t>(dw) * sh);
  for (int y = 0; y < sh; ++y) {
    const float* row = src + static_cast<std::size_t>(y) * sw;
    float* out = tmp.data() + static_cast<std::size_t>(y) * dw;
    for (int x = 0; x < dw; ++x) {
      double acc = 0.0;
      for (int t = 0; t < xt.taps; ++t)
        acc += xt.weight[static_cast<std::size_t>(x) * xt.taps + t] *
               row[xt.index[static_cast<std::size_t>(x) * xt.taps + t]];
      out[x] = static_cast<float>(acc);
    }
  }
  for (int y = 0; y < dh; ++y) {
    float* out = dst + static_cast<std::size_t>(y) * dw;
    for (int x = 0; x < dw; ++x) {
      double acc = 0.0;
      for (int t = 0; t < yt.taps; ++t)
        acc += yt.weight[static_cast<std::size_t>(y) * yt.taps + t] *
               tmp[static_cast<std::size_t>(yt.index[static_cast<std::size_t>(y) * yt.taps + t]) *
                       dw +
                   x];
      out[x] = static_cast<float>(acc);
    }
  }
}

}  // namespace

LabImage area_downsample(const LabImage& img, int n) {
  if (n < 1) throw std::invalid_argument("area_downsample: n must be >= 1");
  if (n == 1) return img;
  int ow = (img.width() + n - 1) / n;
  int oh = (img.height() + n - 1) / n;
  LabImage out(ow, oh);
  for (int c = 0; c < 3; ++c)
    downsample_plane(img.plane(c), img.width(), img.height(), n, out.plane(c), ow, oh);
  return out;
}

LabImage lowpass(const LabImage& img, int n, Upsampler up) {
  if (n < 1) throw std::invalid_argument("lowpass: n must be >= 1");
  if (n == 1) return img;
  LabImage small = area_downsample(img, n);
  LabImage out(img.width(), img.height());
  for (int c = 0; c < 3; ++c)
    upsample_plane(small.plane(c), small.width(), small.height(), n, up, out.plane(c),
                   img.width(), img.height());
  return out;
}

const LabImage& ScaleSpace::level(int n) const {
  auto it = levels_.find(n);
  if (it == levels_.end()) throw std::invalid_argument("ScaleSpace: missing level " + std::to_string(n));
  return it->second;
}

std::vector<int> ScaleSpace::scales() const {
  std::vector<int> out;
  for (const auto& [n, img] : levels_) out.push_back(n);
  return out;
}

ScaleSpace build_scale_space(const LabImage& img, const std::vector<int>& scale_list,
                             Upsampler up) {
  if (scale_list.empty()) throw std::invalid_argument("build_scale_space: empty scale list");
  std::set<int> wanted(scale_list.begin(), scale_list.end());
  if (!wanted.count(1)) throw std::invalid_argument("build_scale_space: scale list must contain 1");
  ScaleSpace ss;
  for (int n : wanted) ss.levels_.emplace(n, lowpass(img, n, up));
  return ss;
}

void FeatureMap::sample(Vec2f pos, float* out) const {
  float x = std::clamp(pos.x, 0.f, static_cast<float>(width - 1));
  float y = std::clamp(pos.y, 0.f, static_cast<float>(height - 1));
  int x0 = std::min(static_cast<int>(x), std::max(width - 2, 0));
  int y0 = std::min(static_cast<int>(y), std::max(height - 2, 0));
  float fx = x - static_cast<float>(x0);
  float fy = y - static_cast<float>(y0);
  int x1 = std::min(x0 + 1, width - 1);
  int y1 = std::min(y0 + 1, height - 1);
  const float* p00 = at(x0, y0);
  const float* p10 = at(x1, y0);
  const float* p01 = at(x0, y1);
  const float* p11 = at(x1, y1);
  for (int d = 0; d < dim; ++d) {
    float top = p00[d] + fx * (p10[d] - p00[d]);
    float bot = p01[d] + fx * (p11[d] - p01[d]);
    out[d] = top + fy * (bot - top);
  }
}

namespace {

FeatureMap extract_all(const LabImage& img, int dim, const FeatureExtractor& extract) {
  FeatureMap fm;
  fm.width = img.width();
  fm.height = img.height();
  fm.dim = dim;
  fm.values.assign(static_cast<std::size_t>(fm.width) * fm.height * dim, 0.f);
  for (int y = 0; y < fm.height; ++y)
    for (int x = 0; x < fm.width; ++x) extract(img, x, y, fm.at(x, y));
  return fm;
}

FeatureMap resample_feature_map(const FeatureMap& src, int out_w, int out_h, int n, Upsampler up,
                                bool downsample_first) {
  FeatureMap out;
  out.width = out_w;
  out.height = out_h;
  out.dim = src.dim;
  out.values.assign(static_cast<std::size_t>(out_w) * out_h * src.dim, 0.f);
  // per-channel planes keep the plane resamplers reusable
  std::vector<float> splane(static_cast<std::size_t>(src.width) * src.height);
  std::vector<float> dplane(static_cast<std::size_t>(out_w) * out_h);
  for (int d = 0; d < src.dim; ++d) {
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x)
        splane[static_cast<std::size_t>(y) * src.width + x] = src.at(x, y)[d];
    if (downsample_first) {
      int mw = (src.width + n - 1) / n, mh = (src.height + n - 1) / n;
      std::vector<float> mid(static_cast<std::size_t>(mw) * mh);
      downsample_plane(splane.data(), src.width, src.height, n, mid.data(), mw, mh);
      upsample_plane(mid.data(), mw, mh, n, up, dplane.data(), out_w, out_h);
    } else {
      upsample_plane(splane.data(), src.width, src.height, n, up, dplane.data(), out_w, out_h);
    }
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x)
        out.at(x, y)[d] = dplane[static_cast<std::size_t>(y) * out_w + x];
  }
  return out;
}

// F2F at n = 1: features on the 2x2-strided grid, in-between pixels
// linearly interpolated (grid point (i, j) sits at full-res (2i, 2j)).
FeatureMap extract_strided2(const LabImage& img, int dim, const FeatureExtractor& extract) {
  int gw = (img.width() + 1) / 2, gh = (img.height() + 1) / 2;
  FeatureMap grid;
  grid.width = gw;
  grid.height = gh;
  grid.dim = dim;
  grid.values.assign(static_cast<std::size_t>(gw) * gh * dim, 0.f);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) extract(img, 2 * gx, 2 * gy, grid.at(gx, gy));
  FeatureMap out;
  out.width = img.width();
  out.height = img.height();
  out.dim = dim;
  out.values.assign(static_cast<std::size_t>(out.width) * out.height * dim, 0.f);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      grid.sample({x / 2.f, y / 2.f}, out.at(x, y));
  return out;
}

}  // namespace

FeatureMap feature_pipeline(const LabImage& img, int n, int dim, const FeatureExtractor& extract,
                            FeatureMode mode) {
  if (n < 1) throw std::invalid_argument("feature_pipeline: n must be >= 1");
  if (dim < 1) throw std::invalid_argument("feature_pipeline: dim must be >= 1");
  switch (mode) {
    case FeatureMode::F1: {
      FeatureMap full = extract_all(img, dim, extract);
      if (n == 1) return full;
      return resample_feature_map(full, img.width(), img.height(), n, Upsampler::Lanczos3, true);
    }
    case FeatureMode::F2: {
      if (n == 1) return extract_all(img, dim, extract);
      FeatureMap small = extract_all(area_downsample(img, n), dim, extract);
      return resample_feature_map(small, img.width(), img.height(), n, Upsampler::Lanczos3, false);
    }
    case FeatureMode::F2F: {
      if (n == 1) return extract_strided2(img, dim, extract);
      FeatureMap small = extract_all(area_downsample(img, n), dim, extract);
      return resample_feature_map(small, img.width(), img.height(), n, Upsampler::Bilinear, false);
    }
  }
  throw std::invalid_argument("feature_pipeline: unknown mode");
}

}  // namespace flowfields
