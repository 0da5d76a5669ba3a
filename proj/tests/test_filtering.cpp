#include <stdexcept>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "flowfields/filtering.hpp"
#include "testutil.hpp"

using namespace flowfields;

namespace {

FlowField uniform_field(int w, int h, Vec2f flow) {
  FlowField f(w, h);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f.flow[i] = flow;
    f.valid[i] = 1;
  }
  return f;
}

}  // namespace

TEST_CASE("consistency check passes exact inverses and rejects same-sign flows") {
  const Vec2f t{3.f, 2.f};
  FlowField fwd = uniform_field(20, 20, t);
  FlowField bwd = uniform_field(20, 20, {-t.x, -t.y});

  ConsistencyResult cr = consistency_check(fwd, bwd, &bwd, 1.5);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) {
      std::size_t i = cr.index(x, y);
      bool target_inside = x + t.x <= 19 && y + t.y <= 19;
      if (target_inside) {
        CHECK(cr.valid[i]);
        CHECK(cr.err1[i] == 0.f);
        CHECK(cr.err2[i] == 0.f);
      } else {
        CHECK(!cr.valid[i]);  // nothing to verify against
      }
    }

  // same-sign backward flow: residual 2|t| >> epsilon
  FlowField bad = uniform_field(20, 20, t);
  ConsistencyResult cr2 = consistency_check(fwd, bad, &bad, 1.5);
  for (std::size_t i = 0; i < cr2.valid.size(); ++i) CHECK(!cr2.valid[i]);

  FlowField small(4, 4);
  CHECK_THROWS_AS(consistency_check(fwd, small, nullptr, 1.5), std::invalid_argument);
}

TEST_CASE("one-way mode ignores the second backward field") {
  FlowField fwd = uniform_field(8, 8, {1.f, 0.f});
  FlowField good = uniform_field(8, 8, {-1.f, 0.f});
  ConsistencyResult cr = consistency_check(fwd, good, nullptr, 0.5);
  CHECK(cr.valid[cr.index(2, 2)]);
  CHECK(cr.err2[cr.index(2, 2)] == 0.f);
}

TEST_CASE("epsilon-monotonicity: survivors at a tighter epsilon are a subset") {
  SplitMix64 rng(123);
  FlowField fwd(16, 16), bwd(16, 16);
  for (std::size_t i = 0; i < fwd.size(); ++i) {
    fwd.flow[i] = {static_cast<float>(rng.uniform() * 4 - 2),
                   static_cast<float>(rng.uniform() * 4 - 2)};
    bwd.flow[i] = {static_cast<float>(rng.uniform() * 4 - 2),
                   static_cast<float>(rng.uniform() * 4 - 2)};
    fwd.valid[i] = bwd.valid[i] = 1;
  }
  ConsistencyResult tight = consistency_check(fwd, bwd, &bwd, 0.7);
  ConsistencyResult loose = consistency_check(fwd, bwd, &bwd, 2.1);
  for (std::size_t i = 0; i < tight.valid.size(); ++i) {
    if (tight.valid[i]) CHECK(loose.valid[i]);
    if (tight.valid[i]) CHECK(fwd.valid[i]);  // filtering only removes
  }
}

TEST_CASE("matcher-driven occlusion filtering removes most occluded pixels") {
  const int W = 64, H = 64;
  testutil::SceneSpec spec;
  spec.bg_flow = {-4.f, 0.f};
  spec.bg_tex = {testutil::TexKind::Noise, 600, 16.0, 1.0};
  testutil::SceneLayer fg;
  fg.shape = testutil::SceneLayer::Shape::Disk;
  fg.cx = 28;
  fg.cy = 32;
  fg.w = 24;
  fg.flow = {9.f, 0.f};
  fg.tex = {testutil::TexKind::Noise, 601, 12.0, 1.0};
  spec.layers.push_back(fg);
  testutil::RenderedPair pair = testutil::render_scene(W, H, spec);

  MatchParams pf;
  pf.variant = Variant::Plus;
  pf.k = 2;
  pf.rng_seed = 1;
  auto [s1, s2] = testutil::make_scale_spaces(pair.im1, pair.im2, pf);

  FlowField fwd = run_variant(s1, s2, pf);
  MatchParams pb1 = pf;
  pb1.rng_seed = 2;
  MatchParams pb2 = pf;
  pb2.rng_seed = 3;
  pb2.data_term.radius = 3;
  FlowField bwd1 = run_variant(s2, s1, pb1);
  FlowField bwd2 = run_variant(s2, s1, pb2);

  ConsistencyResult cr = consistency_check(fwd, bwd1, &bwd2, 1.5);
  std::size_t occluded = 0, removed = 0;
  for (std::size_t i = 0; i < cr.valid.size(); ++i) {
    if (pair.gt.nocc[i]) continue;
    ++occluded;
    removed += !cr.valid[i];
  }
  REQUIRE(occluded > 50);
  CHECK(static_cast<double>(removed) / occluded >= 0.90);
}

TEST_CASE("region labeling groups by flow similarity") {
  FlowField f = uniform_field(10, 10, {0.f, 0.f});
  FlowRegionLabels one = label_flow_regions(f, f.valid);
  CHECK(one.sizes.size() == 1);
  CHECK(one.sizes[0] == 100);

  // two flow plateaus differing by more than 3 px split apart
  for (int y = 0; y < 10; ++y)
    for (int x = 5; x < 10; ++x) f.flow[f.index(x, y)] = {10.f, 0.f};
  FlowRegionLabels two = label_flow_regions(f, f.valid);
  CHECK(two.sizes.size() == 2);
}

namespace {

struct BlobSetup {
  FlowField f{10, 10};
  ConsistencyResult cr;

  BlobSetup(bool attach_removed_outlier) {
    f = uniform_field(10, 10, {0.f, 0.f});
    cr.width = 10;
    cr.height = 10;
    cr.valid.assign(100, 1);
    cr.err1.assign(100, 0.f);
    cr.err2.assign(100, 0.f);
    const Vec2i blob[5] = {{5, 4}, {4, 5}, {5, 5}, {6, 5}, {5, 6}};
    for (const Vec2i& b : blob) f.flow[f.index(b.x, b.y)] = {10.f, 10.f};
    if (attach_removed_outlier) {
      // a consistency-removed pixel with nearly the blob's flow
      std::size_t i = f.index(5, 3);
      f.flow[i] = {10.5f, 10.f};
      cr.valid[i] = 0;
    }
  }
};

}  // namespace

TEST_CASE("region filter removes small regions attached to removed outliers") {
  BlobSetup with(true);
  region_filter(with.f, with.cr, 50);
  CHECK(!with.cr.valid[with.f.index(5, 5)]);
  CHECK(!with.cr.valid[with.f.index(4, 5)]);
  CHECK(with.cr.valid[with.f.index(0, 0)]);  // the big region stays

  BlobSetup without(false);
  region_filter(without.f, without.cr, 50);
  CHECK(without.cr.valid[without.f.index(5, 5)]);  // no attachable outlier: kept

  // smooth flow with no removals: nothing happens
  FlowField smooth = uniform_field(12, 12, {1.f, 1.f});
  ConsistencyResult cr;
  cr.width = cr.height = 12;
  cr.valid.assign(144, 1);
  cr.err1.assign(144, 0.f);
  cr.err2.assign(144, 0.f);
  region_filter(smooth, cr, 100);
  for (auto v : cr.valid) CHECK(v);
}

TEST_CASE("sparsify keeps one best match per block") {
  FlowField f = uniform_field(9, 9, {1.f, 2.f});
  ConsistencyResult cr;
  cr.width = cr.height = 9;
  cr.valid.assign(81, 1);
  cr.err1.assign(81, 1.f);
  cr.err2.assign(81, 1.f);

  SparseMatches all = sparsify(f, cr, 3, 1);
  CHECK(all.matches.size() == 9);  // ceil(9/3)^2 blocks
  // all scores tie: the smallest row-major index of each block wins
  CHECK(all.matches[0].p1 == Vec2i{0, 0});
  CHECK(all.matches[1].p1 == Vec2i{3, 0});

  // a lower-score pixel wins its block
  cr.err1[f.index(4, 4)] = 0.1f;
  cr.err2[f.index(4, 4)] = 0.f;
  SparseMatches best = sparsify(f, cr, 3, 1);
  CHECK(best.matches[4].p1 == Vec2i{4, 4});
  CHECK(best.matches[4].score == doctest::Approx(0.1));

  // blocks below the survivor threshold emit nothing
  ConsistencyResult sparse = cr;
  sparse.valid.assign(81, 0);
  sparse.valid[f.index(0, 0)] = 1;
  sparse.valid[f.index(1, 1)] = 1;
  CHECK(sparsify(f, sparse, 3, 3).matches.empty());
  CHECK(sparsify(f, sparse, 3, 2).matches.size() == 1);
  CHECK_THROWS_AS(sparsify(f, sparse, 0, 1), std::invalid_argument);
}

TEST_CASE("sparse match files round-trip through the text format") {
  SparseMatches m;
  m.width = 20;
  m.height = 10;
  m.matches.push_back({{3, 4}, {1.5f, -2.25f}, 0.1});
  m.matches.push_back({{10, 9}, {-3.f, 0.5f}, 0.2});
  std::string path =
      (std::filesystem::temp_directory_path() / "ff_matches.txt").string();
  write_sparse_matches(path, m);
  SparseMatches back = read_sparse_matches(path, 20, 10);
  REQUIRE(back.matches.size() == 2);
  CHECK(back.matches[0].p1 == Vec2i{3, 4});
  CHECK(back.matches[0].flow.x == doctest::Approx(1.5f));
  CHECK(back.matches[1].flow.y == doctest::Approx(0.5f));
  std::remove(path.c_str());
}
