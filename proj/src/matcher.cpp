#include "flowfields/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>

namespace flowfields {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Variant variant_from_string(const std::string& name) {
  if (name == "basic") return Variant::Basic;
  if (name == "multiscale") return Variant::Multiscale;
  if (name == "plus") return Variant::Plus;
  if (name == "fast") return Variant::Fast;
  if (name == "fastx2") return Variant::FastX2;
  throw std::invalid_argument("unknown variant: " + name);
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Basic: return "basic";
    case Variant::Multiscale: return "multiscale";
    case Variant::Plus: return "plus";
    case Variant::Fast: return "fast";
    case Variant::FastX2: return "fastx2";
  }
  return "?";
}

std::vector<ScaleStage> default_scale_table(Variant variant, int k) {
  if (variant == Variant::Basic) return {{1, 1}};
  if (variant == Variant::FastX2 && k < 1)
    throw std::invalid_argument("fastx2 requires k >= 1 (finest executed stride is 2)");
  std::vector<ScaleStage> table;
  int finest = variant == Variant::FastX2 ? 2 : 1;
  for (int n = 1 << k; n >= finest; n /= 2) {
    // the improved schedule inserts a 1.5x sub-scale ahead of each even
    // stride below the coarsest
    if (variant == Variant::Plus && n != (1 << k) && n % 2 == 0)
      table.push_back({n, n + n / 2});
    table.push_back({n, n});
    if (n == 1) break;
  }
  return table;
}

std::vector<std::vector<SchedulePhase>> default_schedule(Variant variant,
                                                         const std::vector<ScaleStage>& table) {
  std::vector<std::vector<SchedulePhase>> schedule;
  for (std::size_t i = 0; i < table.size(); ++i) {
    bool finest_stage = i + 1 == table.size();
    switch (variant) {
      case Variant::Basic:
      case Variant::Multiscale:
        schedule.push_back({{4, 1.0}});
        break;
      case Variant::Plus:
        schedule.push_back({{4, 2.0}, {8, 1.0}});
        break;
      case Variant::Fast:
      case Variant::FastX2:
        if (finest_stage)
          schedule.push_back({{4, 1.0}});
        else
          schedule.push_back({{4, 2.0}, {8, 1.0}});
        break;
    }
  }
  return schedule;
}

void MatchParams::finalize() {
  if (data_term.radius < 1) throw std::invalid_argument("MatchParams: r must be >= 1");
  if (r2 < 1) throw std::invalid_argument("MatchParams: r2 must be >= 1");
  if (l < 1) throw std::invalid_argument("MatchParams: l must be >= 1");
  if (k < 0) throw std::invalid_argument("MatchParams: k must be >= 0");
  if (!(R > 0.0)) throw std::invalid_argument("MatchParams: R must be > 0");
  if (scale_table.empty()) scale_table = default_scale_table(variant, k);
  if (schedule.empty()) schedule = default_schedule(variant, scale_table);

  if (schedule.size() != scale_table.size())
    throw std::invalid_argument("MatchParams: schedule and scale table lengths differ");
  int finest = variant == Variant::FastX2 ? 2 : 1;
  if (scale_table.back().n != finest)
    throw std::invalid_argument("MatchParams: scale table must end at stride " +
                                std::to_string(finest));
  for (std::size_t i = 0; i < scale_table.size(); ++i) {
    const ScaleStage& s = scale_table[i];
    if (s.n < 1 || s.n_star < 1 || (s.n & (s.n - 1)) != 0)
      throw std::invalid_argument("MatchParams: lattice strides must be powers of two");
    if (i > 0) {
      if (s.n > scale_table[i - 1].n || s.n_star >= scale_table[i - 1].n_star)
        throw std::invalid_argument("MatchParams: scale table must be descending");
    }
    if (schedule[i].empty())
      throw std::invalid_argument("MatchParams: empty schedule for a stage");
    for (const SchedulePhase& ph : schedule[i])
      if (ph.propagations < 1 || !(ph.distance_multiplier > 0.0))
        throw std::invalid_argument("MatchParams: bad schedule phase");
  }
}

std::vector<int> MatchParams::levels_needed() const {
  std::vector<ScaleStage> table =
      scale_table.empty() ? default_scale_table(variant, k) : scale_table;
  std::set<int> levels{1};
  for (const ScaleStage& s : table) levels.insert(s.n_star);
  return {levels.begin(), levels.end()};
}

namespace {

// Target positions are kept inside the image extended by the patch
// reach so replicative sampling stays meaningful.
struct TargetBox {
  double xmin, xmax, ymin, ymax;

  TargetBox(int w, int h, double reach)
      : xmin(-reach), xmax(w - 1 + reach), ymin(-reach), ymax(h - 1 + reach) {}

  bool contains(Vec2f p) const {
    return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
  }
};

}  // namespace

FlowField seed_from_kdtree(const LabImage& img1, const KdTree& tree, const MatchCost& cost, int n,
                           int level, int wht_radius) {
  const int w = img1.width(), h = img1.height();
  FlowField ff(w, h);

  // per-pixel signatures pay off when the seed lattice is dense
  std::vector<WhtVector> map;
  if (n <= 2) map = wht_signature_map(img1, wht_radius);

  for (int y = 0; y < h; y += n) {
    for (int x = 0; x < w; x += n) {
      WhtVector sig = map.empty() ? wht_signature(img1, {x, y}, wht_radius)
                                  : map[static_cast<std::size_t>(y) * w + x];
      const std::vector<Vec2i>& leaf = tree.query_leaf(sig);
      double best = kInf;
      Vec2f best_flow;
      for (const Vec2i& cand : leaf) {
        double c = cost.cost({x, y}, {static_cast<float>(cand.x), static_cast<float>(cand.y)},
                             level, best);
        if (c < best) {
          best = c;
          best_flow = {static_cast<float>(cand.x - x), static_cast<float>(cand.y - y)};
        }
      }
      if (best < kInf) {
        std::size_t idx = ff.index(x, y);
        ff.flow[idx] = best_flow;
        ff.cost[idx] = static_cast<float>(best);
        ff.valid[idx] = 1;
      }
    }
  }
  return ff;
}

void propagate_pass(FlowField& ff, const MatchCost& cost, int n, int level, int direction) {
  const int w = ff.width, h = ff.height;
  const TargetBox box(w, h, cost.reach(level));

  // scan orders finalize both source neighbors before their target
  const int last_x = ((w - 1) / n) * n;
  const int last_y = ((h - 1) / n) * n;
  const bool x_asc = direction == 0 || direction == 3;
  const bool y_asc = direction == 0 || direction == 2;
  const int nb_dx = x_asc ? -n : n;  // pull from the side already scanned
  const int nb_dy = y_asc ? -n : n;

  const int x_begin = x_asc ? 0 : last_x, x_step = x_asc ? n : -n;
  const int y_begin = y_asc ? 0 : last_y, y_step = y_asc ? n : -n;

  for (int y = y_begin; y >= 0 && y <= last_y; y += y_step) {
    for (int x = x_begin; x >= 0 && x <= last_x; x += x_step) {
      const std::size_t idx = ff.index(x, y);
      double best = ff.valid[idx] ? ff.cost[idx] : kInf;
      Vec2f best_flow = ff.flow[idx];
      bool updated = false;

      const Vec2i neighbors[2] = {{x + nb_dx, y}, {x, y + nb_dy}};
      Vec2f prev_cand{};
      bool have_prev = false;
      for (const Vec2i& nb : neighbors) {
        if (nb.x < 0 || nb.x >= w || nb.y < 0 || nb.y >= h) continue;
        const std::size_t nidx = ff.index(nb.x, nb.y);
        if (!ff.valid[nidx]) continue;
        const Vec2f cand = ff.flow[nidx];
        if (ff.valid[idx] && cand == ff.flow[idx]) continue;
        if (have_prev && cand == prev_cand) continue;
        prev_cand = cand;
        have_prev = true;
        const Vec2f p2 = Vec2i{x, y} + cand;
        if (!box.contains(p2)) continue;
        double c = cost.cost({x, y}, p2, level, best);
        if (c < best) {
          best = c;
          best_flow = cand;
          updated = true;
        }
      }
      if (updated) {
        ff.flow[idx] = best_flow;
        ff.cost[idx] = static_cast<float>(best);
        ff.valid[idx] = 1;
      }
    }
  }
}

void random_search_pass(FlowField& ff, const MatchCost& cost, int n, int level, double max_dist,
                        std::uint64_t seed, std::uint64_t pass_id) {
  if (!(max_dist > 0.0)) throw std::invalid_argument("random_search_pass: distance must be > 0");
  const int w = ff.width, h = ff.height;
  const TargetBox box(w, h, cost.reach(level));

  for (int y = 0; y < h; y += n) {
    for (int x = 0; x < w; x += n) {
      const std::size_t idx = ff.index(x, y);
      if (!ff.valid[idx]) continue;
      SplitMix64 rng = pixel_rng(seed, pass_id, idx);
      const float ox = static_cast<float>(rng.uniform_symmetric(max_dist));
      const float oy = static_cast<float>(rng.uniform_symmetric(max_dist));
      const Vec2f cand{ff.flow[idx].x + ox, ff.flow[idx].y + oy};
      const Vec2f p2 = Vec2i{x, y} + cand;
      if (!box.contains(p2)) continue;
      const double current = ff.cost[idx];
      double c = cost.cost({x, y}, p2, level, current);
      if (c < current) {
        ff.flow[idx] = cand;
        ff.cost[idx] = static_cast<float>(c);
      }
    }
  }
}

FlowField run_variant(const ScaleSpace& ss1, const ScaleSpace& ss2, const MatchParams& params,
                      const PassObserver& observer) {
  CensusMatchCost cost(ss1, ss2, params.data_term);
  return run_variant(ss1, ss2, params, cost, observer);
}

FlowField run_variant(const ScaleSpace& ss1, const ScaleSpace& ss2, const MatchParams& params_in,
                      const MatchCost& cost, const PassObserver& observer) {
  MatchParams params = params_in;
  params.finalize();
  if (ss1.width() != ss2.width() || ss1.height() != ss2.height())
    throw std::invalid_argument("run_variant: image dimensions differ");

  const LabImage& base2 = ss2.base();
  const int w = base2.width(), h = base2.height();

  std::vector<WhtVector> sigs;
  std::vector<Vec2i> positions;
  {
    std::vector<WhtVector> full = wht_signature_map(base2, params.r());
    if (params.variant == Variant::FastX2) {
      // one entry per 2x2 block (top-left pixel)
      for (int y = 0; y < h; y += 2)
        for (int x = 0; x < w; x += 2) {
          sigs.push_back(full[static_cast<std::size_t>(y) * w + x]);
          positions.push_back({x, y});
        }
    } else {
      sigs = std::move(full);
      positions.reserve(sigs.size());
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) positions.push_back({x, y});
    }
  }
  KdTree tree = KdTree::build(sigs, positions, params.l);
  sigs.clear();
  sigs.shrink_to_fit();

  const ScaleStage& first = params.scale_table.front();
  FlowField ff = seed_from_kdtree(ss1.base(), tree, cost, first.n, first.n_star, params.r());
  if (observer)
    observer({PassEvent::Kind::Seed, 0, first.n, first.n_star, -1, 0.0, &ff});

  std::uint64_t pass_id = 0;
  for (std::size_t stage = 0; stage < params.scale_table.size(); ++stage) {
    const ScaleStage& sc = params.scale_table[stage];
    if (stage > 0) {
      // flows carried from the coarser stage get their cost re-evaluated
      // under this stage's blur level before any comparison
      for (int y = 0; y < h; y += sc.n)
        for (int x = 0; x < w; x += sc.n) {
          const std::size_t idx = ff.index(x, y);
          if (!ff.valid[idx]) continue;
          ff.cost[idx] = static_cast<float>(cost.cost({x, y}, Vec2i{x, y} + ff.flow[idx],
                                                      sc.n_star));
        }
      if (observer)
        observer({PassEvent::Kind::CarryOver, static_cast<int>(stage), sc.n, sc.n_star, -1, 0.0,
                  &ff});
    }

    int direction = 0;
    for (const SchedulePhase& phase : params.schedule[stage]) {
      const double dist = params.R * phase.distance_multiplier * sc.n_star;
      for (int i = 0; i < phase.propagations; ++i) {
        if (i > 0) {
          random_search_pass(ff, cost, sc.n, sc.n_star, dist, params.rng_seed, pass_id++);
          if (observer)
            observer({PassEvent::Kind::RandomSearch, static_cast<int>(stage), sc.n, sc.n_star, -1,
                      dist, &ff});
        }
        propagate_pass(ff, cost, sc.n, sc.n_star, direction % 4);
        ++direction;
        if (observer)
          observer({PassEvent::Kind::Propagation, static_cast<int>(stage), sc.n, sc.n_star,
                    (direction - 1) % 4, 0.0, &ff});
      }
    }
  }
  return ff;
}

}  // namespace flowfields
