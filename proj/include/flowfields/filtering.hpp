#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowfields/matcher.hpp"

namespace flowfields {

// Outcome of the two-way forward/backward consistency check.
struct ConsistencyResult {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> valid;
  std::vector<float> err1;  // |F(p) + Fb1(p + F(p))|
  std::vector<float> err2;

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

enum class BackwardLookup { Bilinear, Nearest };

// Checks every valid forward pixel against one or two backward flows.
// The backward field is sampled at the subpixel target from its valid
// pixels; targets with no valid backward support are removed. Pass
// fb2 = nullptr for the one-way check (err2 stays 0).
ConsistencyResult consistency_check(const FlowField& f, const FlowField& fb1,
                                    const FlowField* fb2, double epsilon,
                                    BackwardLookup lookup = BackwardLookup::Bilinear);

// Connected regions of surviving pixels; 4-neighbors join a region iff
// their flow difference is below 3 pixels.
struct FlowRegionLabels {
  int width = 0;
  int height = 0;
  std::vector<int> label;  // -1 for non-surviving pixels
  std::vector<std::size_t> sizes;
};

FlowRegionLabels label_flow_regions(const FlowField& f, const std::vector<std::uint8_t>& valid);

// Removes every surviving region smaller than min_region_size that
// could attach (by the same flow-difference rule) at least one pixel
// the consistency check removed. Updates cr.valid in place.
void region_filter(const FlowField& f, ConsistencyResult& cr, std::size_t min_region_size);

struct SparseMatch {
  Vec2i p1;
  Vec2f flow;
  double score = 0.0;  // err1 + err2 at the selected pixel
};

struct SparseMatches {
  int width = 0;
  int height = 0;
  std::vector<SparseMatch> matches;
};

// Keeps at most one surviving pixel per q x q block: the one with the
// smallest err1 + err2, and only if the block holds at least
// min_count survivors.
SparseMatches sparsify(const FlowField& f, const ConsistencyResult& cr, int q, int min_count);

// Text interchange: one match per line, "x1 y1 x2 y2".
void write_sparse_matches(const std::string& path, const SparseMatches& matches);
SparseMatches read_sparse_matches(const std::string& path, int width, int height);

}  // namespace flowfields
