#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowfields/filtering.hpp"
#include "flowfields/image_io.hpp"
#include "flowfields/matcher.hpp"

namespace flowfields {

struct GroundTruth {
  int width = 0;
  int height = 0;
  std::vector<Vec2f> flow;
  std::vector<std::uint8_t> valid;
  std::vector<std::uint8_t> nocc;  // non-occluded mask

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

GroundTruth ground_truth_from_field(const FlowField& f);

struct MetricsReport {
  double pct_le3 = 0.0;  // fraction of evaluated pixels with EPE <= 3
  double pct_le1 = 0.0;
  double epe10 = 0.0;    // mean EPE with each contribution capped at 10
  double epe = 0.0;      // mean EPE over pixels with a valid prediction
  std::size_t n_evaluated = 0;
  std::size_t n_invalid_prediction = 0;
};

// Aggregates endpoint errors over valid non-occluded ground-truth
// pixels. Invalid predictions count as failures for the rate metrics
// and respect the cap for EPE10. Throws when nothing is evaluable.
MetricsReport compute_metrics(const FlowField& f, const GroundTruth& gt);

// Middlebury .flo: float tag 202021.25, int32 width/height, then
// row-major interleaved (u, v) float pairs, all little-endian.
// Magnitudes above 1e9 mark invalid pixels.
FlowField read_flo(const std::string& path);
void write_flo(const std::string& path, const FlowField& f);

// KITTI 16-bit PNG: u = (ch1 - 2^15)/64, v = (ch2 - 2^15)/64,
// ch3 = validity.
FlowField read_kitti_png(const std::string& path);
void write_kitti_png(const std::string& path, const FlowField& f);

// Middlebury-style color wheel rendering; zero flow is white, invalid
// pixels black. max_mag <= 0 selects the 99th magnitude percentile.
Rgb8Image flow_to_color(const FlowField& f, double max_mag = 0.0);

// Exhaustive integer-lattice nearest neighbor field on level n. Guarded
// against large inputs unless allow_large is set.
FlowField brute_force_nnf(const ScaleSpace& ss1, const ScaleSpace& ss2, const DataTerm& term,
                          int n, bool allow_large = false);

// --- outlier sieve analysis -------------------------------------------

struct SieveConfig {
  enum class Kind { Single, Conjunction, Sum, FlowFields };
  Kind kind = Kind::Single;
  std::vector<int> scales;  // participating scales, e.g. {1,2,4,8}
  std::string name;
};

// Parses "1", "1&2&4", "1+2", or "ff"/"flowfields".
SieveConfig parse_sieve_config(const std::string& text);

struct SieveBin {
  double d_f = 0.0;
  double p = 0.0;      // estimated resistance probability
  double p_rel = 0.0;  // relative to single-scale 1
  std::size_t samples = 0;
};

struct SieveCurve {
  SieveConfig config;
  std::vector<SieveBin> bins;
};

struct SieveParams {
  std::vector<double> distance_bins{1, 2, 5, 10, 20, 50, 100, 200};
  std::size_t samples_per_bin = 10000;
  double R = 1.0;  // random search base distance used by the ff curve
  DataTerm term;
  std::uint64_t seed = 0;
};

// Estimates the probability that a point p2 at distance d_f from the
// ground-truth match beats the ground truth under each configuration.
// All configurations share the same sample draws per bin.
std::vector<SieveCurve> sieve_analysis(const ScaleSpace& ss1, const ScaleSpace& ss2,
                                       const GroundTruth& gt,
                                       const std::vector<SieveConfig>& configs,
                                       const SieveParams& params);

void write_sieve_csv(const std::string& path, const std::vector<SieveCurve>& curves);

// Inverse-distance-weighted fill over the 16 nearest matches
// (squared-distance weights, exact pass-through at match positions).
FlowField fill_dense(const SparseMatches& matches, int width, int height);

}  // namespace flowfields
