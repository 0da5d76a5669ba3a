#include "flowfields/filtering.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace flowfields {

namespace {

constexpr float kRegionFlowDiff = 3.0f;  // region membership threshold in pixels

inline float flow_diff(Vec2f a, Vec2f b) { return norm(a - b); }

// Samples the backward field at a subpixel target from its valid
// pixels only; returns false when no valid pixel supports the target.
bool sample_backward(const FlowField& fb, Vec2f target, BackwardLookup lookup, Vec2f* out) {
  // the backward field exists on the pixel lattice only; targets
  // outside it have nothing to test against
  if (target.x < 0.f || target.y < 0.f || target.x > fb.width - 1 || target.y > fb.height - 1)
    return false;
  if (lookup == BackwardLookup::Nearest) {
    int x = clamp_int(static_cast<int>(std::lround(target.x)), 0, fb.width - 1);
    int y = clamp_int(static_cast<int>(std::lround(target.y)), 0, fb.height - 1);
    std::size_t idx = fb.index(x, y);
    if (!fb.valid[idx]) return false;
    *out = fb.flow[idx];
    return true;
  }
  int x0 = clamp_int(static_cast<int>(target.x), 0, fb.width - 1);
  int y0 = clamp_int(static_cast<int>(target.y), 0, fb.height - 1);
  int x1 = std::min(x0 + 1, fb.width - 1);
  int y1 = std::min(y0 + 1, fb.height - 1);
  float fx = target.x - static_cast<float>(x0);
  float fy = target.y - static_cast<float>(y0);
  const Vec2i corners[4] = {{x0, y0}, {x1, y0}, {x0, y1}, {x1, y1}};
  const float weights[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  float wsum = 0.f;
  Vec2f acc{0.f, 0.f};
  for (int i = 0; i < 4; ++i) {
    std::size_t idx = fb.index(corners[i].x, corners[i].y);
    if (!fb.valid[idx] || weights[i] <= 0.f) continue;
    acc.x += weights[i] * fb.flow[idx].x;
    acc.y += weights[i] * fb.flow[idx].y;
    wsum += weights[i];
  }
  if (wsum < 1e-9f) return false;
  *out = {acc.x / wsum, acc.y / wsum};
  return true;
}

}  // namespace

ConsistencyResult consistency_check(const FlowField& f, const FlowField& fb1,
                                    const FlowField* fb2, double epsilon,
                                    BackwardLookup lookup) {
  if (f.width != fb1.width || f.height != fb1.height ||
      (fb2 && (f.width != fb2->width || f.height != fb2->height)))
    throw std::invalid_argument("consistency_check: field dimensions differ");

  ConsistencyResult cr;
  cr.width = f.width;
  cr.height = f.height;
  cr.valid.assign(f.size(), 0);
  cr.err1.assign(f.size(), 0.f);
  cr.err2.assign(f.size(), 0.f);

  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      std::size_t idx = f.index(x, y);
      if (!f.valid[idx]) continue;
      Vec2f target = Vec2i{x, y} + f.flow[idx];
      Vec2f back;
      if (!sample_backward(fb1, target, lookup, &back)) continue;
      float e1 = norm(f.flow[idx] + back);
      cr.err1[idx] = e1;
      float e2 = 0.f;
      if (fb2) {
        if (!sample_backward(*fb2, target, lookup, &back)) continue;
        e2 = norm(f.flow[idx] + back);
        cr.err2[idx] = e2;
      }
      cr.valid[idx] = e1 < epsilon && e2 < epsilon;
    }
  }
  return cr;
}

FlowRegionLabels label_flow_regions(const FlowField& f, const std::vector<std::uint8_t>& valid) {
  FlowRegionLabels out;
  out.width = f.width;
  out.height = f.height;
  out.label.assign(f.size(), -1);

  // union-find over surviving pixels
  std::vector<int> parent(f.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[b] = a;
  };

  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      std::size_t idx = f.index(x, y);
      if (!valid[idx]) continue;
      if (x > 0 && valid[idx - 1] && flow_diff(f.flow[idx], f.flow[idx - 1]) < kRegionFlowDiff)
        unite(static_cast<int>(idx), static_cast<int>(idx - 1));
      if (y > 0 && valid[idx - f.width] &&
          flow_diff(f.flow[idx], f.flow[idx - f.width]) < kRegionFlowDiff)
        unite(static_cast<int>(idx), static_cast<int>(idx - f.width));
    }
  }

  std::vector<int> root_to_label(f.size(), -1);
  for (std::size_t idx = 0; idx < f.size(); ++idx) {
    if (!valid[idx]) continue;
    int root = find(static_cast<int>(idx));
    if (root_to_label[root] < 0) {
      root_to_label[root] = static_cast<int>(out.sizes.size());
      out.sizes.push_back(0);
    }
    out.label[idx] = root_to_label[root];
    ++out.sizes[root_to_label[root]];
  }
  return out;
}

void region_filter(const FlowField& f, ConsistencyResult& cr, std::size_t min_region_size) {
  if (f.width != cr.width || f.height != cr.height)
    throw std::invalid_argument("region_filter: dimensions differ");
  FlowRegionLabels regions = label_flow_regions(f, cr.valid);

  // a region dies if any of its boundary pixels could absorb a
  // consistency-removed neighbor under the same flow-difference rule
  std::vector<std::uint8_t> region_removed(regions.sizes.size(), 0);
  const int dx[4] = {1, -1, 0, 0};
  const int dy[4] = {0, 0, 1, -1};
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      std::size_t idx = f.index(x, y);
      int lab = regions.label[idx];
      if (lab < 0 || regions.sizes[lab] >= min_region_size || region_removed[lab]) continue;
      for (int d = 0; d < 4; ++d) {
        int nx = x + dx[d], ny = y + dy[d];
        if (nx < 0 || nx >= f.width || ny < 0 || ny >= f.height) continue;
        std::size_t nidx = f.index(nx, ny);
        bool removed_by_check = f.valid[nidx] && !cr.valid[nidx];
        if (removed_by_check && flow_diff(f.flow[idx], f.flow[nidx]) < kRegionFlowDiff) {
          region_removed[lab] = 1;
          break;
        }
      }
    }
  }

  for (std::size_t idx = 0; idx < f.size(); ++idx)
    if (regions.label[idx] >= 0 && region_removed[regions.label[idx]]) cr.valid[idx] = 0;
}

SparseMatches sparsify(const FlowField& f, const ConsistencyResult& cr, int q, int min_count) {
  if (q < 1 || min_count < 1) throw std::invalid_argument("sparsify: q and e must be >= 1");
  if (f.width != cr.width || f.height != cr.height)
    throw std::invalid_argument("sparsify: dimensions differ");

  SparseMatches out;
  out.width = f.width;
  out.height = f.height;
  for (int by = 0; by < f.height; by += q) {
    for (int bx = 0; bx < f.width; bx += q) {
      int count = 0;
      double best_score = 0.0;
      std::size_t best_idx = 0;
      bool have = false;
      for (int y = by; y < std::min(by + q, f.height); ++y) {
        for (int x = bx; x < std::min(bx + q, f.width); ++x) {
          std::size_t idx = f.index(x, y);
          if (!cr.valid[idx]) continue;
          ++count;
          double score = static_cast<double>(cr.err1[idx]) + cr.err2[idx];
          if (!have || score < best_score) {  // ties keep the first (smallest row-major index)
            have = true;
            best_score = score;
            best_idx = idx;
          }
        }
      }
      if (count >= min_count && have) {
        int x = static_cast<int>(best_idx % f.width);
        int y = static_cast<int>(best_idx / f.width);
        out.matches.push_back({{x, y}, f.flow[best_idx], best_score});
      }
    }
  }
  return out;
}

void write_sparse_matches(const std::string& path, const SparseMatches& matches) {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);
  for (const SparseMatch& m : matches.matches)
    std::fprintf(fp, "%g %g %g %g\n", static_cast<double>(m.p1.x), static_cast<double>(m.p1.y),
                 m.p1.x + static_cast<double>(m.flow.x), m.p1.y + static_cast<double>(m.flow.y));
  std::fclose(fp);
}

SparseMatches read_sparse_matches(const std::string& path, int width, int height) {
  std::FILE* fp = std::fopen(path.c_str(), "r");
  if (!fp) throw std::runtime_error("cannot open: " + path);
  SparseMatches out;
  out.width = width;
  out.height = height;
  double x1, y1, x2, y2;
  while (std::fscanf(fp, "%lf %lf %lf %lf", &x1, &y1, &x2, &y2) == 4) {
    SparseMatch m;
    m.p1 = {static_cast<int>(std::lround(x1)), static_cast<int>(std::lround(y1))};
    m.flow = {static_cast<float>(x2 - x1), static_cast<float>(y2 - y1)};
    out.matches.push_back(m);
  }
  std::fclose(fp);
  return out;
}

}  // namespace flowfields
