#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "flowfields/image.hpp"

namespace flowfields {

// 9 Walsh-Hadamard bases per Lab channel, channel-major (L 0-8, a 0-8, b 0-8).
struct WhtVector {
  std::array<float, 27> v{};

  float operator[](int i) const { return v[i]; }
  float& operator[](int i) { return v[i]; }
};

// Sequency pair (horizontal, vertical sign changes) of the i-th basis.
// DC first, then zigzag over the 3x3 sequency grid.
constexpr std::array<std::array<int, 2>, 9> kWhtBasisOrder = {{
    {0, 0}, {1, 0}, {0, 1}, {0, 2}, {1, 1}, {2, 0}, {2, 1}, {1, 2}, {2, 2},
}};

// Sign of the sequency-s Walsh step function at axis offset d in [-r, r].
// The odd window splits into halves of size r and r+1; each half carries
// the dyadic pattern sampled at its own resolution.
int wht_axis_sign(int s, int d, int r);

// Patch signature around p (replicative border). Projections use the
// unfiltered image regardless of matching scale.
WhtVector wht_signature(const LabImage& img, Vec2i p, int r);

// Signatures for every pixel; separable passes, same values as
// wht_signature at each pixel.
std::vector<WhtVector> wht_signature_map(const LabImage& img, int r);

// Median-split kd-tree over 27-dim signatures. Splits on the dimension
// of maximal spread; entries <= median descend left. Equal-to-median
// entries fall back to index-parity splitting when the right side would
// otherwise be empty (heavy duplicates).
class KdTree {
 public:
  static KdTree build(const std::vector<WhtVector>& signatures,
                      const std::vector<Vec2i>& positions, int leaf_size);

  // Descends to the leaf the signature would be stored in; returns all
  // entry positions of that leaf (between 1 and leaf_size of them).
  const std::vector<Vec2i>& query_leaf(const WhtVector& sig) const;

  int leaf_size() const { return leaf_size_; }
  std::size_t size() const { return entry_count_; }
  int depth() const;
  std::size_t leaf_count() const;
  std::size_t max_leaf_occupancy() const;

 private:
  struct Node {
    int split_dim = -1;  // -1 marks a leaf
    float threshold = 0.f;
    int left = -1;
    int right = -1;
    int leaf_index = -1;
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<Vec2i>> leaves_;
  int leaf_size_ = 0;
  std::size_t entry_count_ = 0;
};

enum class DataTermKind { Census, Feature };

// Matching-cost configuration. The patch stride is supplied per call
// since it follows the (sub-)scale being matched.
struct DataTerm {
  DataTermKind kind = DataTermKind::Census;
  int radius = 4;
  Vec3f channel_weights{{1.f, 1.f, 1.f}};

  bool unit_weights() const {
    return channel_weights[0] == 1.f && channel_weights[1] == 1.f && channel_weights[2] == 1.f;
  }
};

inline constexpr double kNoCostBound = std::numeric_limits<double>::infinity();

// Census transform cost between the subsampled patch at integer p1 in
// ss1 and the subpixel patch at p2 in ss2, both on level n with member
// stride n. Hamming distance summed over the three Lab channels;
// maximum value 3*((2r+1)^2 - 1). Evaluation may stop early once the
// partial sum reaches `bound`.
double census_cost(const ScaleSpace& ss1, const ScaleSpace& ss2, Vec2i p1, Vec2f p2, int r, int n,
                   const Vec3f& channel_weights = {{1.f, 1.f, 1.f}},
                   double bound = kNoCostBound);

// Euclidean distance between fm1 at integer p1 and the bilinear sample
// of fm2 at p2. Throws on dimension mismatch.
double feature_cost(const FeatureMap& fm1, const FeatureMap& fm2, Vec2i p1, Vec2f p2);

// Per-pixel packed census bit signatures on the integer lattice of one
// level; lets exhaustive search run on XOR + popcount.
class PackedCensus {
 public:
  PackedCensus(const LabImage& level, int r, int n);

  int hamming(std::size_t pix_a, const PackedCensus& other, std::size_t pix_b) const;

  int words_per_pixel() const { return words_; }

 private:
  std::vector<std::uint64_t> bits_;
  int words_ = 0;
};

// Data-term evaluation bound to a concrete image pair; the matcher is
// written against this interface so other per-pixel feature costs can
// be plugged in without touching the search.
class MatchCost {
 public:
  virtual ~MatchCost() = default;

  // Cost of matching integer p1 to subpixel p2 on level n (the patch
  // stride equals the level). May return early with a value >= bound.
  double cost(Vec2i p1, Vec2f p2, int level, double bound = kNoCostBound) const {
    return do_cost(p1, p2, level, bound);
  }

  // Patch reach in pixels on the given level; match targets are kept
  // within the image extended by this amount.
  double reach(int level) const { return do_reach(level); }

 private:
  virtual double do_cost(Vec2i p1, Vec2f p2, int level, double bound) const = 0;
  virtual double do_reach(int level) const = 0;
};

class CensusMatchCost : public MatchCost {
 public:
  CensusMatchCost(const ScaleSpace& ss1, const ScaleSpace& ss2, const DataTerm& term)
      : ss1_(ss1), ss2_(ss2), term_(term) {}

 private:
  double do_cost(Vec2i p1, Vec2f p2, int level, double bound) const override {
    return census_cost(ss1_, ss2_, p1, p2, term_.radius, level, term_.channel_weights, bound);
  }
  double do_reach(int level) const override {
    return static_cast<double>(term_.radius) * level;
  }

  const ScaleSpace& ss1_;
  const ScaleSpace& ss2_;
  DataTerm term_;
};

// L2 feature-distance term over per-level feature maps.
class FeatureMatchCost : public MatchCost {
 public:
  FeatureMatchCost(std::map<int, FeatureMap> maps1, std::map<int, FeatureMap> maps2)
      : maps1_(std::move(maps1)), maps2_(std::move(maps2)) {}

 private:
  double do_cost(Vec2i p1, Vec2f p2, int level, double) const override {
    return feature_cost(maps1_.at(level), maps2_.at(level), p1, p2);
  }
  double do_reach(int) const override { return 0.0; }

  std::map<int, FeatureMap> maps1_;
  std::map<int, FeatureMap> maps2_;
};

}  // namespace flowfields
