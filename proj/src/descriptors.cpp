#include "flowfields/descriptors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace flowfields {

namespace {

// Dyadic Walsh step functions on [0, 1) in sequency order; only the
// first three are needed for the 9 low-frequency bases.
inline int walsh_step(int s, double t) {
  switch (s) {
    case 0:
      return 1;
    case 1:
      return t < 0.5 ? 1 : -1;
    case 2:
      return (t < 0.25 || t >= 0.75) ? 1 : -1;
    default:
      throw std::invalid_argument("walsh_step: sequency out of range");
  }
}

}  // namespace

int wht_axis_sign(int s, int d, int r) {
  // first half: offsets [-r, -1] (size r); second half: [0, r] (size r+1)
  int local, size;
  if (d < 0) {
    local = d + r;
    size = r;
  } else {
    local = d;
    size = r + 1;
  }
  return walsh_step(s, (local + 0.5) / size);
}

WhtVector wht_signature(const LabImage& img, Vec2i p, int r) {
  if (r < 1) throw std::invalid_argument("wht_signature: r must be >= 1");
  WhtVector out;
  const int w = img.width(), h = img.height();
  for (int c = 0; c < 3; ++c) {
    const float* plane = img.plane(c);
    double acc[9] = {};
    for (int dy = -r; dy <= r; ++dy) {
      int y = clamp_int(p.y + dy, 0, h - 1);
      const float* row = plane + static_cast<std::size_t>(y) * w;
      for (int dx = -r; dx <= r; ++dx) {
        float sample = row[clamp_int(p.x + dx, 0, w - 1)];
        for (int b = 0; b < 9; ++b) {
          int sign = wht_axis_sign(kWhtBasisOrder[b][0], dx, r) *
                     wht_axis_sign(kWhtBasisOrder[b][1], dy, r);
          acc[b] += sign * sample;
        }
      }
    }
    for (int b = 0; b < 9; ++b) out[c * 9 + b] = static_cast<float>(acc[b]);
  }
  return out;
}

std::vector<WhtVector> wht_signature_map(const LabImage& img, int r) {
  if (r < 1) throw std::invalid_argument("wht_signature_map: r must be >= 1");
  const int w = img.width(), h = img.height();
  const std::size_t count = img.pixel_count();
  std::vector<WhtVector> out(count);

  // horizontal pass per sequency, then vertical pass per basis
  std::vector<double> hpass(3 * count);
  std::vector<int> xsign(3 * (2 * r + 1)), ysign(3 * (2 * r + 1));
  for (int s = 0; s < 3; ++s)
    for (int d = -r; d <= r; ++d) {
      xsign[s * (2 * r + 1) + d + r] = wht_axis_sign(s, d, r);
      ysign[s * (2 * r + 1) + d + r] = wht_axis_sign(s, d, r);
    }

  for (int c = 0; c < 3; ++c) {
    const float* plane = img.plane(c);
    for (int s = 0; s < 3; ++s) {
      double* dst = hpass.data() + static_cast<std::size_t>(s) * count;
      const int* sg = xsign.data() + s * (2 * r + 1);
      for (int y = 0; y < h; ++y) {
        const float* row = plane + static_cast<std::size_t>(y) * w;
        double* orow = dst + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
          double acc = 0.0;
          for (int d = -r; d <= r; ++d) acc += sg[d + r] * row[clamp_int(x + d, 0, w - 1)];
          orow[x] = acc;
        }
      }
    }
    for (int b = 0; b < 9; ++b) {
      const double* src = hpass.data() + static_cast<std::size_t>(kWhtBasisOrder[b][0]) * count;
      const int* sg = ysign.data() + kWhtBasisOrder[b][1] * (2 * r + 1);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double acc = 0.0;
          for (int d = -r; d <= r; ++d)
            acc += sg[d + r] * src[static_cast<std::size_t>(clamp_int(y + d, 0, h - 1)) * w + x];
          out[static_cast<std::size_t>(y) * w + x][c * 9 + b] = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

namespace {

struct BuildRef {
  const WhtVector* sig;
  Vec2i pos;
  std::size_t index;  // original entry index, used for tie parity
};

}  // namespace

KdTree KdTree::build(const std::vector<WhtVector>& signatures, const std::vector<Vec2i>& positions,
                     int leaf_size) {
  if (signatures.empty() || signatures.size() != positions.size())
    throw std::invalid_argument("KdTree::build: need matching non-empty signature/position lists");
  if (leaf_size < 1) throw std::invalid_argument("KdTree::build: leaf size must be >= 1");

  KdTree tree;
  tree.leaf_size_ = leaf_size;
  tree.entry_count_ = signatures.size();

  std::vector<BuildRef> refs(signatures.size());
  for (std::size_t i = 0; i < signatures.size(); ++i) refs[i] = {&signatures[i], positions[i], i};

  struct Frame {
    std::size_t begin, end;
    int node;
  };
  tree.nodes_.emplace_back();
  std::vector<Frame> stack{{0, refs.size(), 0}};

  while (!stack.empty()) {
    auto [begin, end, node_idx] = stack.back();
    stack.pop_back();
    std::size_t count = end - begin;

    if (count <= static_cast<std::size_t>(leaf_size)) {
      std::vector<Vec2i> entries;
      entries.reserve(count);
      for (std::size_t i = begin; i < end; ++i) entries.push_back(refs[i].pos);
      tree.nodes_[node_idx].leaf_index = static_cast<int>(tree.leaves_.size());
      tree.leaves_.push_back(std::move(entries));
      continue;
    }

    // dimension of maximal spread
    int dim = 0;
    float best_spread = -1.f;
    for (int d = 0; d < 27; ++d) {
      float lo = (*refs[begin].sig)[d], hi = lo;
      for (std::size_t i = begin + 1; i < end; ++i) {
        float v = (*refs[i].sig)[d];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        dim = d;
      }
    }

    std::nth_element(refs.begin() + begin, refs.begin() + begin + (count - 1) / 2,
                     refs.begin() + end,
                     [dim](const BuildRef& a, const BuildRef& b) {
                       return (*a.sig)[dim] < (*b.sig)[dim];
                     });
    float median = (*refs[begin + (count - 1) / 2].sig)[dim];

    bool have_greater = false;
    for (std::size_t i = begin; i < end && !have_greater; ++i)
      have_greater = (*refs[i].sig)[dim] > median;

    auto mid_it = refs.begin() + begin;
    if (have_greater) {
      mid_it = std::stable_partition(refs.begin() + begin, refs.begin() + end,
                                     [dim, median](const BuildRef& a) {
                                       return (*a.sig)[dim] <= median;
                                     });
    } else {
      // median equals the maximum: route equal entries by index parity
      // so duplicate-heavy nodes still split
      mid_it = std::stable_partition(refs.begin() + begin, refs.begin() + end,
                                     [dim, median](const BuildRef& a) {
                                       return (*a.sig)[dim] < median || a.index % 2 == 0;
                                     });
      if (mid_it == refs.begin() + begin || mid_it == refs.begin() + end)
        mid_it = refs.begin() + begin + count / 2;  // uniform parity; positional fallback
    }
    std::size_t mid = static_cast<std::size_t>(mid_it - refs.begin());

    const int left = static_cast<int>(tree.nodes_.size());
    const int right = left + 1;
    tree.nodes_.emplace_back();
    tree.nodes_.emplace_back();
    Node& node = tree.nodes_[node_idx];
    node.split_dim = dim;
    node.threshold = median;
    node.left = left;
    node.right = right;
    stack.push_back({begin, mid, left});
    stack.push_back({mid, end, right});
  }
  return tree;
}

const std::vector<Vec2i>& KdTree::query_leaf(const WhtVector& sig) const {
  if (nodes_.empty()) throw std::logic_error("KdTree::query_leaf: empty tree");
  int idx = 0;
  while (nodes_[idx].split_dim >= 0)
    idx = sig[nodes_[idx].split_dim] <= nodes_[idx].threshold ? nodes_[idx].left
                                                              : nodes_[idx].right;
  return leaves_[nodes_[idx].leaf_index];
}

int KdTree::depth() const {
  // iterative depth over the explicit node array
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int depth = 0;
  while (!stack.empty()) {
    auto [idx, d] = stack.back();
    stack.pop_back();
    depth = std::max(depth, d);
    if (nodes_[idx].split_dim >= 0) {
      stack.push_back({nodes_[idx].left, d + 1});
      stack.push_back({nodes_[idx].right, d + 1});
    }
  }
  return depth;
}

std::size_t KdTree::leaf_count() const { return leaves_.size(); }

std::size_t KdTree::max_leaf_occupancy() const {
  std::size_t best = 0;
  for (const auto& leaf : leaves_) best = std::max(best, leaf.size());
  return best;
}

double census_cost(const ScaleSpace& ss1, const ScaleSpace& ss2, Vec2i p1, Vec2f p2, int r, int n,
                   const Vec3f& channel_weights, double bound) {
  if (r < 1) throw std::invalid_argument("census_cost: r must be >= 1");
  const LabImage& im1 = ss1.level(n);
  const LabImage& im2 = ss2.level(n);
  const int w1 = im1.width(), h1 = im1.height();
  const int w2 = im2.width(), h2 = im2.height();
  const bool unit =
      channel_weights[0] == 1.f && channel_weights[1] == 1.f && channel_weights[2] == 1.f;

  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    const float* pl1 = im1.plane(c);
    const float* pl2 = im2.plane(c);
    const float center1 = pl1[static_cast<std::size_t>(clamp_int(p1.y, 0, h1 - 1)) * w1 +
                              clamp_int(p1.x, 0, w1 - 1)];
    const float center2 = sample_plane_bilinear(pl2, w2, h2, p2.x, p2.y);
    int mismatches = 0;
    for (int dy = -r; dy <= r; ++dy) {
      const int y1 = clamp_int(p1.y + dy * n, 0, h1 - 1);
      const float* row1 = pl1 + static_cast<std::size_t>(y1) * w1;
      const float sy2 = p2.y + static_cast<float>(dy * n);
      for (int dx = -r; dx <= r; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const bool bit1 = row1[clamp_int(p1.x + dx * n, 0, w1 - 1)] > center1;
        const bool bit2 =
            sample_plane_bilinear(pl2, w2, h2, p2.x + static_cast<float>(dx * n), sy2) > center2;
        mismatches += bit1 != bit2;
      }
      if (unit && total + mismatches >= bound) return total + mismatches;
    }
    total += unit ? mismatches : channel_weights[c] * mismatches;
    if (total >= bound) return total;
  }
  return total;
}

double feature_cost(const FeatureMap& fm1, const FeatureMap& fm2, Vec2i p1, Vec2f p2) {
  if (fm1.dim != fm2.dim) throw std::invalid_argument("feature_cost: dimension mismatch");
  const float* a = fm1.at(clamp_int(p1.x, 0, fm1.width - 1), clamp_int(p1.y, 0, fm1.height - 1));
  std::vector<float> b(fm2.dim);
  fm2.sample(p2, b.data());
  double acc = 0.0;
  for (int d = 0; d < fm1.dim; ++d) {
    double diff = static_cast<double>(a[d]) - b[d];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

PackedCensus::PackedCensus(const LabImage& level, int r, int n) {
  const int w = level.width(), h = level.height();
  const int members = (2 * r + 1) * (2 * r + 1) - 1;
  words_ = (members * 3 + 63) / 64;
  bits_.assign(static_cast<std::size_t>(w) * h * words_, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint64_t* dst = bits_.data() + (static_cast<std::size_t>(y) * w + x) * words_;
      int bit = 0;
      for (int c = 0; c < 3; ++c) {
        const float* pl = level.plane(c);
        const float center = pl[static_cast<std::size_t>(y) * w + x];
        for (int dy = -r; dy <= r; ++dy) {
          const float* row = pl + static_cast<std::size_t>(clamp_int(y + dy * n, 0, h - 1)) * w;
          for (int dx = -r; dx <= r; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (row[clamp_int(x + dx * n, 0, w - 1)] > center)
              dst[bit >> 6] |= 1ULL << (bit & 63);
            ++bit;
          }
        }
      }
    }
  }
}

int PackedCensus::hamming(std::size_t pix_a, const PackedCensus& other, std::size_t pix_b) const {
  const std::uint64_t* a = bits_.data() + pix_a * words_;
  const std::uint64_t* b = other.bits_.data() + pix_b * words_;
  int total = 0;
  for (int i = 0; i < words_; ++i) total += std::popcount(a[i] ^ b[i]);
  return total;
}

}  // namespace flowfields
