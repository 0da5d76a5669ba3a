#include "flowfields/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>

namespace flowfields {

namespace {
constexpr float kFloMagic = 202021.25f;
constexpr float kFloInvalid = 1e10f;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

GroundTruth ground_truth_from_field(const FlowField& f) {
  GroundTruth gt;
  gt.width = f.width;
  gt.height = f.height;
  gt.flow = f.flow;
  gt.valid = f.valid;
  gt.nocc.assign(f.size(), 1);
  return gt;
}

MetricsReport compute_metrics(const FlowField& f, const GroundTruth& gt) {
  if (f.width != gt.width || f.height != gt.height)
    throw std::invalid_argument("compute_metrics: dimensions differ");
  MetricsReport rep;
  std::size_t le3 = 0, le1 = 0, n_valid_pred = 0;
  double sum_epe = 0.0, sum_epe10 = 0.0;
  for (std::size_t idx = 0; idx < gt.flow.size(); ++idx) {
    if (!gt.valid[idx] || !gt.nocc[idx]) continue;
    ++rep.n_evaluated;
    if (!f.valid[idx]) {
      ++rep.n_invalid_prediction;
      sum_epe10 += 10.0;
      continue;
    }
    double epe = norm(f.flow[idx] - gt.flow[idx]);
    le3 += epe <= 3.0;
    le1 += epe <= 1.0;
    sum_epe10 += std::min(epe, 10.0);
    sum_epe += epe;
    ++n_valid_pred;
  }
  if (rep.n_evaluated == 0)
    throw std::invalid_argument("compute_metrics: empty evaluation set");
  rep.pct_le3 = static_cast<double>(le3) / rep.n_evaluated;
  rep.pct_le1 = static_cast<double>(le1) / rep.n_evaluated;
  rep.epe10 = sum_epe10 / rep.n_evaluated;
  rep.epe = n_valid_pred ? sum_epe / n_valid_pred : 0.0;
  return rep;
}

// --- flow file formats --------------------------------------------------

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

FlowField read_flo(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open: " + path);
  float magic = 0.f;
  std::int32_t w = 0, h = 0;
  if (std::fread(&magic, 4, 1, f.get()) != 1 || magic != kFloMagic)
    throw std::runtime_error(path + ": not a .flo file (bad magic)");
  if (std::fread(&w, 4, 1, f.get()) != 1 || std::fread(&h, 4, 1, f.get()) != 1 || w < 1 || h < 1)
    throw std::runtime_error(path + ": bad .flo header");
  FlowField ff(w, h);
  std::vector<float> row(static_cast<std::size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    if (std::fread(row.data(), 4, row.size(), f.get()) != row.size())
      throw std::runtime_error(path + ": truncated .flo payload");
    for (int x = 0; x < w; ++x) {
      float u = row[2 * x], v = row[2 * x + 1];
      std::size_t idx = ff.index(x, y);
      if (std::abs(u) > 1e9f || std::abs(v) > 1e9f || !std::isfinite(u) || !std::isfinite(v)) {
        ff.valid[idx] = 0;
      } else {
        ff.flow[idx] = {u, v};
        ff.valid[idx] = 1;
      }
    }
  }
  return ff;
}

void write_flo(const std::string& path, const FlowField& f) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);
  std::int32_t w = f.width, h = f.height;
  if (std::fwrite(&kFloMagic, 4, 1, fp.get()) != 1 || std::fwrite(&w, 4, 1, fp.get()) != 1 ||
      std::fwrite(&h, 4, 1, fp.get()) != 1)
    throw std::runtime_error(path + ": short write");
  std::vector<float> row(static_cast<std::size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::size_t idx = f.index(x, y);
      row[2 * x] = f.valid[idx] ? f.flow[idx].x : kFloInvalid;
      row[2 * x + 1] = f.valid[idx] ? f.flow[idx].y : kFloInvalid;
    }
    if (std::fwrite(row.data(), 4, row.size(), fp.get()) != row.size())
      throw std::runtime_error(path + ": short write");
  }
}

FlowField read_kitti_png(const std::string& path) {
  Image16 img = load_png16(path);
  if (img.channels != 3) throw std::runtime_error(path + ": KITTI flow PNG needs 3 channels");
  FlowField ff(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      std::size_t idx = ff.index(x, y);
      if (img.at(x, y, 2) == 0) continue;
      ff.flow[idx] = {(static_cast<float>(img.at(x, y, 0)) - 32768.f) / 64.f,
                      (static_cast<float>(img.at(x, y, 1)) - 32768.f) / 64.f};
      ff.valid[idx] = 1;
    }
  return ff;
}

void write_kitti_png(const std::string& path, const FlowField& f) {
  Image16 img;
  img.width = f.width;
  img.height = f.height;
  img.channels = 3;
  img.data.assign(static_cast<std::size_t>(f.width) * f.height * 3, 0);
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      std::size_t idx = f.index(x, y);
      if (!f.valid[idx]) continue;
      double u = std::round(f.flow[idx].x * 64.0 + 32768.0);
      double v = std::round(f.flow[idx].y * 64.0 + 32768.0);
      std::size_t base = idx * 3;
      img.data[base + 0] = static_cast<std::uint16_t>(std::clamp(u, 0.0, 65535.0));
      img.data[base + 1] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
      img.data[base + 2] = 1;
    }
  write_png16(path, img);
}

// --- color wheel --------------------------------------------------------

namespace {

// Middlebury benchmark wheel: 55 hues with perceptually chosen segment
// lengths.
struct ColorWheel {
  std::vector<std::array<int, 3>> colors;

  ColorWheel() {
    const int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    auto add = [this](int r, int g, int b) { colors.push_back({r, g, b}); };
    for (int i = 0; i < RY; ++i) add(255, 255 * i / RY, 0);
    for (int i = 0; i < YG; ++i) add(255 - 255 * i / YG, 255, 0);
    for (int i = 0; i < GC; ++i) add(0, 255, 255 * i / GC);
    for (int i = 0; i < CB; ++i) add(0, 255 - 255 * i / CB, 255);
    for (int i = 0; i < BM; ++i) add(255 * i / BM, 0, 255);
    for (int i = 0; i < MR; ++i) add(255, 0, 255 - 255 * i / MR);
  }
};

}  // namespace

Rgb8Image flow_to_color(const FlowField& f, double max_mag) {
  static const ColorWheel wheel;
  const int ncols = static_cast<int>(wheel.colors.size());

  if (max_mag <= 0.0) {
    std::vector<float> mags;
    mags.reserve(f.size());
    for (std::size_t i = 0; i < f.size(); ++i)
      if (f.valid[i]) mags.push_back(norm(f.flow[i]));
    if (mags.empty()) {
      max_mag = 1.0;
    } else {
      std::size_t k = static_cast<std::size_t>(0.99 * (mags.size() - 1));
      std::nth_element(mags.begin(), mags.begin() + k, mags.end());
      max_mag = std::max(1e-6f, mags[k]);
    }
  }

  Rgb8Image out;
  out.width = f.width;
  out.height = f.height;
  out.channels = 3;
  out.data.assign(static_cast<std::size_t>(f.width) * f.height * 3, 0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!f.valid[i]) continue;  // invalid stays black
    double fx = f.flow[i].x / max_mag;
    double fy = f.flow[i].y / max_mag;
    double rad = std::min(1.0, std::sqrt(fx * fx + fy * fy));
    double a = std::atan2(-fy, -fx) / M_PI;
    double fk = (a + 1.0) / 2.0 * (ncols - 1);
    int k0 = static_cast<int>(fk);
    int k1 = (k0 + 1) % ncols;
    double t = fk - k0;
    for (int c = 0; c < 3; ++c) {
      double col0 = wheel.colors[k0][c] / 255.0;
      double col1 = wheel.colors[k1][c] / 255.0;
      double col = (1 - t) * col0 + t * col1;
      col = 1 - rad * (1 - col);  // white center, saturation grows with magnitude
      out.data[i * 3 + c] = static_cast<std::uint8_t>(std::lround(col * 255.0));
    }
  }
  return out;
}

// --- brute-force NNF -----------------------------------------------------

FlowField brute_force_nnf(const ScaleSpace& ss1, const ScaleSpace& ss2, const DataTerm& term,
                          int n, bool allow_large) {
  const int w = ss1.width(), h = ss1.height();
  if (w != ss2.width() || h != ss2.height())
    throw std::invalid_argument("brute_force_nnf: dimensions differ");
  if (!allow_large && static_cast<long>(w) * h > 64 * 64)
    throw std::invalid_argument(
        "brute_force_nnf: image exceeds the 64x64 guard (pass allow_large to override)");

  FlowField ff(w, h);
  if (term.kind == DataTermKind::Census && term.unit_weights()) {
    // integer-lattice census bits pack into words; exhaustive search is
    // then XOR + popcount
    PackedCensus c1(ss1.level(n), term.radius, n);
    PackedCensus c2(ss2.level(n), term.radius, n);
    for (std::size_t p1 = 0; p1 < static_cast<std::size_t>(w) * h; ++p1) {
      int best = std::numeric_limits<int>::max();
      std::size_t best_p2 = 0;
      for (std::size_t p2 = 0; p2 < static_cast<std::size_t>(w) * h; ++p2) {
        int c = c1.hamming(p1, c2, p2);
        if (c < best) {
          best = c;
          best_p2 = p2;
        }
      }
      ff.flow[p1] = {static_cast<float>(best_p2 % w) - static_cast<float>(p1 % w),
                     static_cast<float>(best_p2 / w) - static_cast<float>(p1 / w)};
      ff.cost[p1] = static_cast<float>(best);
      ff.valid[p1] = 1;
    }
    return ff;
  }

  CensusMatchCost census(ss1, ss2, term);
  for (int y1 = 0; y1 < h; ++y1)
    for (int x1 = 0; x1 < w; ++x1) {
      double best = kInf;
      Vec2i best_p2{0, 0};
      for (int y2 = 0; y2 < h; ++y2)
        for (int x2 = 0; x2 < w; ++x2) {
          double c = census.cost({x1, y1}, {static_cast<float>(x2), static_cast<float>(y2)}, n,
                                 best);
          if (c < best) {
            best = c;
            best_p2 = {x2, y2};
          }
        }
      std::size_t idx = ff.index(x1, y1);
      ff.flow[idx] = {static_cast<float>(best_p2.x - x1), static_cast<float>(best_p2.y - y1)};
      ff.cost[idx] = static_cast<float>(best);
      ff.valid[idx] = 1;
    }
  return ff;
}

// --- sieve analysis -------------------------------------------------------

SieveConfig parse_sieve_config(const std::string& text) {
  SieveConfig cfg;
  cfg.name = text;
  if (text == "ff" || text == "flowfields") {
    cfg.kind = SieveConfig::Kind::FlowFields;
    cfg.scales = {1, 2, 4, 8};
    return cfg;
  }
  char sep = 0;
  if (text.find('&') != std::string::npos) sep = '&';
  if (text.find('+') != std::string::npos) {
    if (sep) throw std::invalid_argument("sieve config mixes & and +: " + text);
    sep = '+';
  }
  cfg.kind = sep == '&' ? SieveConfig::Kind::Conjunction
                        : (sep == '+' ? SieveConfig::Kind::Sum : SieveConfig::Kind::Single);
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep ? sep : ',')) {
    if (item.empty()) throw std::invalid_argument("bad sieve config: " + text);
    cfg.scales.push_back(std::stoi(item));
  }
  if (cfg.scales.empty()) throw std::invalid_argument("bad sieve config: " + text);
  if (cfg.kind == SieveConfig::Kind::Single && cfg.scales.size() != 1)
    throw std::invalid_argument("bad sieve config: " + text);
  return cfg;
}

std::vector<SieveCurve> sieve_analysis(const ScaleSpace& ss1, const ScaleSpace& ss2,
                                       const GroundTruth& gt,
                                       const std::vector<SieveConfig>& configs,
                                       const SieveParams& params) {
  if (params.samples_per_bin < 1) throw std::invalid_argument("sieve: samples must be >= 1");
  if (params.term.kind != DataTermKind::Census)
    throw std::invalid_argument("sieve: census data term required");

  // pixels the ground truth can vouch for
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < gt.flow.size(); ++i)
    if (gt.valid[i] && gt.nocc[i]) usable.push_back(i);
  if (usable.empty()) throw std::invalid_argument("sieve: no usable ground-truth pixels");

  std::set<int> scale_set{1};  // scale 1 is the normalization reference
  bool need_ff = false;
  for (const SieveConfig& c : configs) {
    scale_set.insert(c.scales.begin(), c.scales.end());
    need_ff |= c.kind == SieveConfig::Kind::FlowFields;
  }
  const std::vector<int> scales(scale_set.begin(), scale_set.end());

  std::vector<SieveCurve> curves(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) curves[i].config = configs[i];

  const int w = gt.width;
  const int r = params.term.radius;

  for (std::size_t bin = 0; bin < params.distance_bins.size(); ++bin) {
    const double d_f = params.distance_bins[bin];
    std::vector<std::size_t> hits(configs.size(), 0);
    std::size_t hits_scale1 = 0;

    for (std::size_t s = 0; s < params.samples_per_bin; ++s) {
      SplitMix64 rng = pixel_rng(params.seed, bin, s);
      const std::size_t pick = static_cast<std::size_t>(rng.uniform() * usable.size());
      const std::size_t gidx = usable[std::min(pick, usable.size() - 1)];
      const Vec2i p1{static_cast<int>(gidx % w), static_cast<int>(gidx / w)};
      const Vec2f p2_star = p1 + gt.flow[gidx];
      const double theta = rng.uniform() * 2.0 * M_PI;
      const Vec2f p2{p2_star.x + static_cast<float>(d_f * std::cos(theta)),
                     p2_star.y + static_cast<float>(d_f * std::sin(theta))};

      // shared per-scale costs; replicative sampling covers positions
      // outside the image
      std::vector<double> cost_p2(scales.size()), cost_ref(scales.size());
      std::vector<bool> resist(scales.size());
      for (std::size_t xi = 0; xi < scales.size(); ++xi) {
        const int x = scales[xi];
        cost_p2[xi] = census_cost(ss1, ss2, p1, p2, r, x, params.term.channel_weights);
        cost_ref[xi] = census_cost(ss1, ss2, p1, p2_star, r, x, params.term.channel_weights);
        resist[xi] = cost_p2[xi] < cost_ref[xi];
      }

      // for the flow-fields curve: does a finer scale hold a resistant
      // outlier on the lattice within its search range around the inlier?
      std::vector<bool> nearby_resistant(scales.size(), false);
      if (need_ff) {
        for (std::size_t xi = 0; xi < scales.size(); ++xi) {
          const int x = scales[xi];
          const int range = std::max(1, static_cast<int>(std::lround(params.R * x)));
          bool found = false;
          for (int dy = -range; dy <= range && !found; ++dy)
            for (int dx = -range; dx <= range && !found; ++dx) {
              if (dx == 0 && dy == 0) continue;
              Vec2f q{p2_star.x + dx, p2_star.y + dy};
              found = census_cost(ss1, ss2, p1, q, r, x, params.term.channel_weights,
                                  cost_ref[xi]) < cost_ref[xi];
            }
          nearby_resistant[xi] = found;
        }
      }

      auto scale_index = [&scales](int x) {
        return static_cast<std::size_t>(
            std::lower_bound(scales.begin(), scales.end(), x) - scales.begin());
      };
      hits_scale1 += resist[scale_index(1)];

      for (std::size_t ci = 0; ci < configs.size(); ++ci) {
        const SieveConfig& cfg = configs[ci];
        bool outlier_prevails = false;
        switch (cfg.kind) {
          case SieveConfig::Kind::Single:
            outlier_prevails = resist[scale_index(cfg.scales[0])];
            break;
          case SieveConfig::Kind::Conjunction: {
            outlier_prevails = true;
            for (int x : cfg.scales) outlier_prevails &= resist[scale_index(x)];
            break;
          }
          case SieveConfig::Kind::Sum: {
            double sum_p2 = 0.0, sum_ref = 0.0;
            for (int x : cfg.scales) {
              sum_p2 += cost_p2[scale_index(x)];
              sum_ref += cost_ref[scale_index(x)];
            }
            outlier_prevails = sum_p2 < sum_ref;
            break;
          }
          case SieveConfig::Kind::FlowFields: {
            // a scale's kill is discounted when a finer scale could undo
            // it with a resistant outlier inside its random search range
            outlier_prevails = true;
            for (int x : cfg.scales) {
              if (resist[scale_index(x)]) continue;
              bool kill_voided = false;
              for (int y : cfg.scales)
                if (y < x && nearby_resistant[scale_index(y)]) kill_voided = true;
              if (!kill_voided) {
                outlier_prevails = false;
                break;
              }
            }
            break;
          }
        }
        hits[ci] += outlier_prevails;
      }
    }

    const double p1_rate = static_cast<double>(hits_scale1) / params.samples_per_bin;
    for (std::size_t ci = 0; ci < configs.size(); ++ci) {
      SieveBin b;
      b.d_f = d_f;
      b.samples = params.samples_per_bin;
      b.p = static_cast<double>(hits[ci]) / params.samples_per_bin;
      b.p_rel = p1_rate > 0.0 ? b.p / p1_rate : 0.0;
      curves[ci].bins.push_back(b);
    }
  }
  return curves;
}

void write_sieve_csv(const std::string& path, const std::vector<SieveCurve>& curves) {
  FilePtr fp(std::fopen(path.c_str(), "w"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);
  std::fprintf(fp.get(), "d_f,config,P,P_rel,samples\n");
  for (const SieveCurve& curve : curves) {
    std::string name = curve.config.name;
    if (curve.config.kind == SieveConfig::Kind::FlowFields)
      name += " (approx)";  // the discounting rule is a lattice approximation
    for (const SieveBin& b : curve.bins)
      std::fprintf(fp.get(), "%g,%s,%.8g,%.8g,%zu\n", b.d_f, name.c_str(), b.p, b.p_rel,
                   b.samples);
  }
}

// --- dense fill -----------------------------------------------------------

namespace {

// Bucket grid for nearest-match queries.
struct MatchGrid {
  int cell = 1;
  int cols = 0, rows = 0;
  std::vector<std::vector<int>> buckets;

  MatchGrid(const SparseMatches& m) {
    double density = static_cast<double>(m.width) * m.height / std::max<std::size_t>(1, m.matches.size());
    cell = std::max(1, static_cast<int>(std::sqrt(density)));
    cols = (m.width + cell - 1) / cell;
    rows = (m.height + cell - 1) / cell;
    buckets.resize(static_cast<std::size_t>(cols) * rows);
    for (std::size_t i = 0; i < m.matches.size(); ++i) {
      int cx = clamp_int(m.matches[i].p1.x / cell, 0, cols - 1);
      int cy = clamp_int(m.matches[i].p1.y / cell, 0, rows - 1);
      buckets[static_cast<std::size_t>(cy) * cols + cx].push_back(static_cast<int>(i));
    }
  }
};

}  // namespace

FlowField fill_dense(const SparseMatches& matches, int width, int height) {
  if (matches.matches.empty()) throw std::invalid_argument("fill_dense: no matches");
  constexpr int kNeighbors = 16;
  FlowField out(width, height);
  MatchGrid grid(matches);

  std::vector<std::pair<double, int>> knn;  // (squared distance, match index)
  knn.reserve(64);

  const int max_ring = grid.cols + grid.rows;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      knn.clear();
      const int cx = clamp_int(x / grid.cell, 0, grid.cols - 1);
      const int cy = clamp_int(y / grid.cell, 0, grid.rows - 1);
      for (int ring = 0; ring <= max_ring; ++ring) {
        // candidates in ring r sit at least (r-1)*cell away; once the
        // k nearest are all closer, remaining rings cannot improve
        if (knn.size() >= kNeighbors) {
          std::partial_sort(knn.begin(), knn.begin() + kNeighbors, knn.end());
          knn.resize(kNeighbors);
          double dmin = static_cast<double>(ring - 1) * grid.cell;
          if (dmin > 0 && dmin * dmin > knn.back().first) break;
        }
        for (int gy = cy - ring; gy <= cy + ring; ++gy) {
          for (int gx = cx - ring; gx <= cx + ring; ++gx) {
            if (std::max(std::abs(gx - cx), std::abs(gy - cy)) != ring) continue;
            if (gx < 0 || gx >= grid.cols || gy < 0 || gy >= grid.rows) continue;
            for (int mi : grid.buckets[static_cast<std::size_t>(gy) * grid.cols + gx]) {
              const SparseMatch& m = matches.matches[mi];
              double dx = m.p1.x - x, dy = m.p1.y - y;
              knn.emplace_back(dx * dx + dy * dy, mi);
            }
          }
        }
      }
      std::size_t keep = std::min<std::size_t>(kNeighbors, knn.size());
      std::partial_sort(knn.begin(), knn.begin() + keep, knn.end());
      knn.resize(keep);

      std::size_t idx = out.index(x, y);
      if (knn.front().first < 1e-12) {
        out.flow[idx] = matches.matches[knn.front().second].flow;
      } else {
        double wsum = 0.0, u = 0.0, v = 0.0;
        for (const auto& [d2, mi] : knn) {
          double wgt = 1.0 / d2;
          wsum += wgt;
          u += wgt * matches.matches[mi].flow.x;
          v += wgt * matches.matches[mi].flow.y;
        }
        out.flow[idx] = {static_cast<float>(u / wsum), static_cast<float>(v / wsum)};
      }
      out.valid[idx] = 1;
    }
  }
  return out;
}

}  // namespace flowfields
