#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flowfields/descriptors.hpp"
#include "flowfields/image.hpp"

namespace flowfields {

// Per-pixel displacement map with the current matching cost and a
// validity flag. Wherever valid, cost holds the data-term cost of
// (p, p + flow(p)) under the scale it was last evaluated at.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<Vec2f> flow;
  std::vector<float> cost;
  std::vector<std::uint8_t> valid;

  FlowField() = default;
  FlowField(int w, int h)
      : width(w),
        height(h),
        flow(static_cast<std::size_t>(w) * h),
        cost(static_cast<std::size_t>(w) * h, 0.f),
        valid(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  std::size_t size() const { return flow.size(); }
};

enum class Variant { Basic, Multiscale, Plus, Fast, FastX2 };

Variant variant_from_string(const std::string& name);
const char* variant_name(Variant v);

// One matching stage: propagation/random-search lattice stride n and
// the (sub-)scale n* governing patch stride, blur level and search
// distance.
struct ScaleStage {
  int n = 1;
  int n_star = 1;
};

// A block of propagation passes with interleaved random searches
// (`propagations` passes contain `propagations - 1` searches). The
// search distance is R * distance_multiplier * n_star.
struct SchedulePhase {
  int propagations = 4;
  double distance_multiplier = 1.0;
};

struct MatchParams {
  DataTerm data_term;  // data_term.radius is the forward patch radius r
  int r2 = 3;          // radius of the second backward flow
  int l = 8;           // kd-tree leaf size
  int k = 3;           // scale count; coarsest stride is 2^k
  double R = 1.0;      // base random search distance in pixels
  Variant variant = Variant::Plus;
  std::vector<ScaleStage> scale_table;               // derived from variant/k when empty
  std::vector<std::vector<SchedulePhase>> schedule;  // per stage; derived when empty
  std::uint64_t rng_seed = 0;

  int r() const { return data_term.radius; }

  // Fills the scale table / schedule defaults and validates the
  // combination; throws std::invalid_argument on inconsistency.
  void finalize();

  // Blur levels required of the scale spaces (always includes 1).
  std::vector<int> levels_needed() const;
};

std::vector<ScaleStage> default_scale_table(Variant variant, int k);
std::vector<std::vector<SchedulePhase>> default_schedule(Variant variant,
                                                         const std::vector<ScaleStage>& table);

// Emitted after seeding, after carry-over to a new stage, and after
// every propagation / random-search pass. Used for instrumentation.
struct PassEvent {
  enum class Kind { Seed, CarryOver, Propagation, RandomSearch };
  Kind kind;
  int stage = 0;
  int n = 1;
  int level = 1;
  int direction = -1;      // propagation only
  double distance = 0.0;   // random search only
  const FlowField* field = nullptr;
};
using PassObserver = std::function<void(const PassEvent&)>;

// Initializes every stride-n lattice pixel from its kd-tree leaf
// candidates, keeping the candidate with the lowest matching error on
// `level`. All other pixels stay invalid.
FlowField seed_from_kdtree(const LabImage& img1, const KdTree& tree, const MatchCost& cost, int n,
                           int level, int wht_radius);

// One propagation pass over the stride-n lattice in the scan order of
// `direction` (0..3); each pixel takes the argmin of its own flow and
// the two direction-appropriate neighbor flows.
void propagate_pass(FlowField& ff, const MatchCost& cost, int n, int level, int direction);

// One bounded random-search pass: a single uniform offset in
// [-max_dist, max_dist]^2 per lattice pixel, accepted only on strict
// cost decrease.
void random_search_pass(FlowField& ff, const MatchCost& cost, int n, int level, double max_dist,
                        std::uint64_t seed, std::uint64_t pass_id);

// Full pipeline: kd-tree seeding at the coarsest stride, then the
// variant's schedule per stage, carrying flows to finer lattices.
FlowField run_variant(const ScaleSpace& ss1, const ScaleSpace& ss2, const MatchParams& params,
                      const PassObserver& observer = {});

// Same, with a caller-supplied data term.
FlowField run_variant(const ScaleSpace& ss1, const ScaleSpace& ss2, const MatchParams& params,
                      const MatchCost& cost, const PassObserver& observer = {});

}  // namespace flowfields
