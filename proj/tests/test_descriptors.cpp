#include <stdexcept>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "flowfields/descriptors.hpp"
#include "testutil.hpp"

using namespace flowfields;

namespace {

// Independent basis construction in integer arithmetic: the sequency-s
// dyadic step of a half of size m is +1 at index i iff
//   s=0: always; s=1: 2i+1 < m; s=2: 4i+2 < m or 4i+2 >= 3m.
int oracle_axis_sign(int s, int d, int r) {
  int i = d < 0 ? d + r : d;
  int m = d < 0 ? r : r + 1;
  if (s == 0) return 1;
  if (s == 1) return 2 * i + 1 < m ? 1 : -1;
  return (4 * i + 2 < m || 4 * i + 2 >= 3 * m) ? 1 : -1;
}

// Brute-force projection of the replicated patch onto the 27 explicit
// +-1 basis images.
WhtVector oracle_signature(const LabImage& img, Vec2i p, int r) {
  WhtVector out;
  for (int c = 0; c < 3; ++c)
    for (int b = 0; b < 9; ++b) {
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          int sign = oracle_axis_sign(kWhtBasisOrder[b][0], dx, r) *
                     oracle_axis_sign(kWhtBasisOrder[b][1], dy, r);
          acc += sign * img.at_clamped(c, p.x + dx, p.y + dy);
        }
      out[c * 9 + b] = static_cast<float>(acc);
    }
  return out;
}

bool close_rel(float a, double b, double tol = 1e-6) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(static_cast<double>(a)), std::abs(b)});
}

}  // namespace

TEST_CASE("wht_signature equals the brute-force basis projection") {
  for (int r : {1, 2, 4, 8}) {
    LabImage img = testutil::noise_image(2 * r + 7, 2 * r + 5, 100 + r);
    SplitMix64 rng(r);
    for (int trial = 0; trial < 25; ++trial) {
      Vec2i p{static_cast<int>(rng.uniform() * img.width()),
              static_cast<int>(rng.uniform() * img.height())};
      WhtVector got = wht_signature(img, p, r);
      WhtVector want = oracle_signature(img, p, r);
      for (int i = 0; i < 27; ++i) CHECK(close_rel(got[i], want[i]));
    }
  }
  LabImage img = testutil::noise_image(8, 8, 1);
  CHECK_THROWS_AS(wht_signature(img, {0, 0}, 0), std::invalid_argument);
}

TEST_CASE("wht_signature_map matches the per-pixel path everywhere") {
  for (int r : {1, 4}) {
    LabImage img = testutil::noise_image(14, 9, 7 + r);
    std::vector<WhtVector> map = wht_signature_map(img, r);
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        WhtVector direct = wht_signature(img, {x, y}, r);
        for (int i = 0; i < 27; ++i)
          CHECK(close_rel(map[static_cast<std::size_t>(y) * img.width() + x][i], direct[i]));
      }
  }
}

TEST_CASE("constant patches project to the computed axis-sum products") {
  // the DC component carries (2r+1)^2 * c; other bases keep the small
  // residue of the odd window (a +-1 pattern over an odd count cannot
  // sum to zero)
  const int r = 4;
  const float c0 = 70.f;
  LabImage flat(2 * r + 3, 2 * r + 3);
  flat.fill({c0, 0.f, 0.f});
  Vec2i p{r + 1, r + 1};
  WhtVector got = wht_signature(flat, p, r);

  double axis_sum[3] = {};
  for (int s = 0; s < 3; ++s)
    for (int d = -r; d <= r; ++d) axis_sum[s] += oracle_axis_sign(s, d, r);
  CHECK(axis_sum[0] == doctest::Approx(2 * r + 1));

  for (int b = 0; b < 9; ++b) {
    double expected = c0 * axis_sum[kWhtBasisOrder[b][0]] * axis_sum[kWhtBasisOrder[b][1]];
    CHECK(close_rel(got[b], expected));
    CHECK(close_rel(got[9 + b], 0.0));  // a and b planes are zero
    CHECK(close_rel(got[18 + b], 0.0));
  }
  CHECK(got[0] == doctest::Approx((2 * r + 1) * (2 * r + 1) * c0));
  // DC dominates every other component by an order of magnitude
  for (int b = 1; b < 9; ++b) CHECK(std::abs(got[b]) < std::abs(got[0]) / 8);
}

TEST_CASE("wht halves split into r and r+1 samples") {
  // r=4: the 9-wide axis splits 4 | 5; sequency 1 flips once per half
  const int r = 4;
  std::vector<int> signs;
  for (int d = -r; d <= r; ++d) signs.push_back(wht_axis_sign(1, d, r));
  CHECK(signs == std::vector<int>{1, 1, -1, -1, 1, 1, -1, -1, -1});
  for (int d = -r; d <= r; ++d) CHECK(wht_axis_sign(0, d, r) == 1);
}

// --- kd-tree ---------------------------------------------------------------

namespace {

std::pair<std::vector<WhtVector>, std::vector<Vec2i>> random_signatures(int count,
                                                                        std::uint64_t seed) {
  std::vector<WhtVector> sigs(count);
  std::vector<Vec2i> pos(count);
  SplitMix64 rng(seed);
  for (int i = 0; i < count; ++i) {
    for (int d = 0; d < 27; ++d) sigs[i][d] = static_cast<float>(rng.uniform() * 200.0 - 100.0);
    pos[i] = {i % 97, i / 97};
  }
  return {sigs, pos};
}

}  // namespace

TEST_CASE("kd-tree keeps everything in one leaf when it fits") {
  auto [sigs, pos] = random_signatures(8, 1);
  KdTree tree = KdTree::build(sigs, pos, 8);
  CHECK(tree.leaf_count() == 1);
  CHECK(tree.query_leaf(sigs[3]).size() == 8);
}

TEST_CASE("kd-tree splits 16 distinct signatures into two leaves of 8") {
  auto [sigs, pos] = random_signatures(16, 2);
  KdTree tree = KdTree::build(sigs, pos, 8);
  CHECK(tree.leaf_count() == 2);
  CHECK(tree.depth() == 1);
  CHECK(tree.query_leaf(sigs[0]).size() == 8);
}

TEST_CASE("kd-tree descent finds every inserted signature") {
  auto [sigs, pos] = random_signatures(1000, 3);
  KdTree tree = KdTree::build(sigs, pos, 8);
  for (int i = 0; i < 1000; ++i) {
    const auto& leaf = tree.query_leaf(sigs[i]);
    CHECK(leaf.size() >= 1);
    CHECK(leaf.size() <= 8);
    bool found = false;
    for (const Vec2i& e : leaf) found |= e == pos[i];
    CHECK(found);
  }
  // depth bound for distinct values
  int bound = static_cast<int>(std::ceil(std::log2(1000.0 / 8.0))) + 1;
  CHECK(tree.depth() <= bound);
  CHECK(tree.max_leaf_occupancy() <= 8);
}

TEST_CASE("kd-tree survives heavy duplicates within the leaf bound") {
  std::vector<WhtVector> sigs(64);
  std::vector<Vec2i> pos(64);
  for (int i = 0; i < 64; ++i) {
    for (int d = 0; d < 27; ++d) sigs[i][d] = 5.f;  // all identical
    pos[i] = {i, 0};
  }
  KdTree tree = KdTree::build(sigs, pos, 4);
  CHECK(tree.max_leaf_occupancy() <= 4);
  CHECK(tree.query_leaf(sigs[0]).size() >= 1);
  CHECK_THROWS_AS(KdTree::build({}, {}, 4), std::invalid_argument);
}

// --- census ------------------------------------------------------------

TEST_CASE("census cost is zero on identical content and maximal on inversion") {
  LabImage img = testutil::noise_image(12, 12, 9);
  ScaleSpace ss = build_scale_space(img, {1, 2});
  CHECK(census_cost(ss, ss, {5, 5}, {5.f, 5.f}, 3, 1) == 0.0);
  CHECK(census_cost(ss, ss, {5, 6}, {5.f, 6.f}, 2, 2) == 0.0);

  // negate both images around zero: every strict comparison flips
  LabImage neg(12, 12);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x) neg.at(c, x, y) = -img.at(c, x, y);
  ScaleSpace ssn = build_scale_space(neg, {1});
  // strict ties are impossible on this noise image away from the border
  const int r = 2;
  double cost = census_cost(ss, ssn, {5, 5}, {5.f, 5.f}, r, 1);
  CHECK(cost == 3 * ((2 * r + 1) * (2 * r + 1) - 1));
}

TEST_CASE("census cost equals a hand-computed 3x3 example") {
  // L planes:   img1        img2          bits (member > center=5):
  //  1 2 3     9 2 3      img1: 0 0 0 / 0 _ 1 / 1 1 1
  //  4 5 6     4 5 1      img2: 1 0 0 / 0 _ 0 / 1 1 1
  //  7 8 9     7 8 9      mismatches at members (-1,-1) and (1,0): cost 2
  LabImage a(3, 3), b(3, 3);
  const float v1[9] = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  const float v2[9] = {9, 2, 3, 4, 5, 1, 7, 8, 9};
  for (int i = 0; i < 9; ++i) {
    a.at(0, i % 3, i / 3) = v1[i];
    b.at(0, i % 3, i / 3) = v2[i];
  }
  ScaleSpace sa = build_scale_space(a, {1});
  ScaleSpace sb = build_scale_space(b, {1});
  CHECK(census_cost(sa, sb, {1, 1}, {1.f, 1.f}, 1, 1) == 2.0);
  CHECK_THROWS_AS(census_cost(sa, sb, {1, 1}, {1.f, 1.f}, 0, 1), std::invalid_argument);
}

TEST_CASE("census cost is invariant under monotone intensity transforms") {
  LabImage img1 = testutil::noise_image(16, 16, 21);
  LabImage img2 = testutil::noise_image(16, 16, 22);
  auto transform = [](const LabImage& src) {
    LabImage out(src.width(), src.height());
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x) {
          float v = src.at(c, x, y);
          out.at(c, x, y) = v * v * v * 0.001f + 2.f * v;  // strictly increasing
        }
    return out;
  };
  ScaleSpace s1 = build_scale_space(img1, {1});
  ScaleSpace s2 = build_scale_space(img2, {1});
  ScaleSpace t1 = build_scale_space(transform(img1), {1});
  ScaleSpace t2 = build_scale_space(transform(img2), {1});

  SplitMix64 rng(5);
  for (int i = 0; i < 50; ++i) {
    Vec2i p1{static_cast<int>(rng.uniform() * 16), static_cast<int>(rng.uniform() * 16)};
    Vec2f p2{static_cast<float>(static_cast<int>(rng.uniform() * 16)),
             static_cast<float>(static_cast<int>(rng.uniform() * 16))};
    CHECK(census_cost(s1, s2, p1, p2, 2, 1) == census_cost(t1, t2, p1, p2, 2, 1));
  }
}

TEST_CASE("census early-out never returns less than the bound when cut short") {
  LabImage img1 = testutil::noise_image(10, 10, 31);
  LabImage img2 = testutil::noise_image(10, 10, 32);
  ScaleSpace s1 = build_scale_space(img1, {1});
  ScaleSpace s2 = build_scale_space(img2, {1});
  double full = census_cost(s1, s2, {4, 4}, {6.2f, 3.7f}, 3, 1);
  double cut = census_cost(s1, s2, {4, 4}, {6.2f, 3.7f}, 3, 1, {{1, 1, 1}}, full / 2);
  CHECK(cut >= full / 2);
  double uncut = census_cost(s1, s2, {4, 4}, {6.2f, 3.7f}, 3, 1, {{1, 1, 1}}, full + 1);
  CHECK(uncut == full);
}

TEST_CASE("packed census hamming equals census_cost on the integer lattice") {
  LabImage img1 = testutil::noise_image(9, 8, 41);
  LabImage img2 = testutil::noise_image(9, 8, 42);
  ScaleSpace s1 = build_scale_space(img1, {1, 2});
  ScaleSpace s2 = build_scale_space(img2, {1, 2});
  for (int n : {1, 2}) {
    PackedCensus c1(s1.level(n), 2, n);
    PackedCensus c2(s2.level(n), 2, n);
    for (int y1 = 0; y1 < 8; ++y1)
      for (int x1 = 0; x1 < 9; ++x1)
        for (int i = 0; i < 6; ++i) {
          SplitMix64 rng(static_cast<std::uint64_t>(y1 * 100 + x1 * 10 + i));
          int x2 = static_cast<int>(rng.uniform() * 9);
          int y2 = static_cast<int>(rng.uniform() * 8);
          double direct = census_cost(s1, s2, {x1, y1},
                                      {static_cast<float>(x2), static_cast<float>(y2)}, 2, n);
          CHECK(c1.hamming(static_cast<std::size_t>(y1) * 9 + x1, c2,
                           static_cast<std::size_t>(y2) * 9 + x2) == direct);
        }
  }
}

// --- feature cost ------------------------------------------------------

TEST_CASE("feature cost is the L2 distance with bilinear target lookup") {
  FeatureMap a, b;
  a.width = b.width = 2;
  a.height = b.height = 1;
  a.dim = b.dim = 1;
  a.values = {3.f, 3.f};
  b.values = {7.f, 7.f};
  CHECK(feature_cost(a, b, {0, 0}, {0.f, 0.f}) == doctest::Approx(4.0));
  CHECK(feature_cost(a, a, {1, 0}, {1.f, 0.f}) == 0.0);

  FeatureMap c = b;
  c.dim = 2;  // mismatched dimensionality
  CHECK_THROWS_AS(feature_cost(a, c, {0, 0}, {0.f, 0.f}), std::invalid_argument);

  // random maps against a direct recomputation
  FeatureMap m1, m2;
  m1.width = m2.width = 6;
  m1.height = m2.height = 5;
  m1.dim = m2.dim = 4;
  SplitMix64 rng(77);
  m1.values.resize(6 * 5 * 4);
  m2.values.resize(6 * 5 * 4);
  for (auto& v : m1.values) v = static_cast<float>(rng.uniform());
  for (auto& v : m2.values) v = static_cast<float>(rng.uniform());
  Vec2i p1{3, 2};
  Vec2f p2{1.25f, 3.5f};
  std::vector<float> interp(4);
  m2.sample(p2, interp.data());
  double expect = 0.0;
  for (int d = 0; d < 4; ++d) {
    double diff = m1.at(3, 2)[d] - interp[d];
    expect += diff * diff;
  }
  CHECK(feature_cost(m1, m2, p1, p2) == doctest::Approx(std::sqrt(expect)));
}
