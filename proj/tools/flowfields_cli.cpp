// Command-line frontend: match -> filter -> sparsify -> fill -> evaluate,
// plus sieve analysis and the brute-force NNF benchmark.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <future>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "flowfields/evaluation.hpp"
#include "flowfields/filtering.hpp"
#include "flowfields/image_io.hpp"
#include "flowfields/matcher.hpp"
#include "json.hpp"

using namespace flowfields;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct StageTimer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  void lap(const char* stage) {
    std::printf("%-14s %7.2f s\n", stage, seconds_since(t0));
    t0 = std::chrono::steady_clock::now();
  }
};

int thread_budget() {
  if (const char* env = std::getenv("FLOWFIELDS_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

struct MatchOptions {
  std::string variant = "plus";
  int k = 3;
  double R = 1.0;
  int r = 4;
  int r2 = 3;
  int l = 8;
  std::uint64_t seed = 0;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--variant", variant, "basic|multiscale|plus|fast|fastx2")
        ->check(CLI::IsMember({"basic", "multiscale", "plus", "fast", "fastx2"}));
    cmd->add_option("--k", k, "scale count (coarsest stride 2^k)");
    cmd->add_option("--R", R, "base random search distance in pixels");
    cmd->add_option("--r", r, "census patch radius");
    cmd->add_option("--r2", r2, "patch radius of the second backward flow");
    cmd->add_option("--l", l, "kd-tree leaf size");
    cmd->add_option("--seed", seed, "random seed");
  }

  MatchParams params() const {
    MatchParams p;
    p.variant = variant_from_string(variant);
    p.k = variant == "basic" ? 0 : k;
    p.R = R;
    p.data_term.radius = r;
    p.r2 = r2;
    p.l = l;
    p.rng_seed = seed;
    p.finalize();
    return p;
  }
};

LabImage load_lab(const std::string& path) { return rgb_to_lab(load_rgb(path)); }

bool wants_kitti(const std::string& format, const std::string& path) {
  if (format == "kitti") return true;
  if (format == "flo") return false;
  return path.size() > 4 && path.substr(path.size() - 4) == ".png";
}

void write_flow_file(const std::string& path, const std::string& format, const FlowField& f) {
  if (wants_kitti(format, path))
    write_kitti_png(path, f);
  else
    write_flo(path, f);
}

FlowField read_flow_file(const std::string& path) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".png") return read_kitti_png(path);
  return read_flo(path);
}

std::vector<std::uint8_t> load_occlusion_mask(const std::string& path, int w, int h) {
  Rgb8Image mask = load_rgb(path);
  if (mask.width != w || mask.height != h)
    throw std::runtime_error("occlusion mask dimensions do not match the flow");
  std::vector<std::uint8_t> nocc(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) nocc[static_cast<std::size_t>(y) * w + x] = mask.at(x, y, 0) == 0;
  return nocc;
}

GroundTruth load_ground_truth(const std::string& flow_path, const std::string& nocc_path) {
  FlowField f = read_flow_file(flow_path);
  GroundTruth gt = ground_truth_from_field(f);
  if (!nocc_path.empty()) gt.nocc = load_occlusion_mask(nocc_path, f.width, f.height);
  return gt;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  if (out.empty()) throw CLI::ValidationError("empty list: " + text);
  return out;
}

// --- subcommands -----------------------------------------------------------

struct MatchCmd {
  MatchOptions match;
  std::string image1, image2, output, format = "auto", viz;

  int run() {
    MatchParams params = match.params();
    StageTimer timer;
    LabImage im1 = load_lab(image1);
    LabImage im2 = load_lab(image2);
    if (im1.width() != im2.width() || im1.height() != im2.height())
      throw std::runtime_error("input images have different dimensions");
    timer.lap("load");

    std::vector<int> levels = params.levels_needed();
    ScaleSpace s1 = build_scale_space(im1, levels);
    ScaleSpace s2 = build_scale_space(im2, levels);
    timer.lap("scale-space");

    FlowField flow = run_variant(s1, s2, params);
    timer.lap("matching");

    write_flow_file(output, format, flow);
    if (!viz.empty()) write_png8(viz, flow_to_color(flow));
    timer.lap("output");
    return 0;
  }
};

struct FilterCmd {
  MatchOptions match;
  std::string image1, image2, output, mask_path, dense_path, viz;
  double eps = 1.5;
  std::size_t min_region = 100;
  int min_count = 3;
  int q = 3;
  bool one_way = false;
  bool nearest_lookup = false;

  int run() {
    MatchParams fwd_params = match.params();
    if (q < 1 || min_count < 1 || eps <= 0)
      throw std::runtime_error("filter parameters must be positive");

    StageTimer timer;
    LabImage im1 = load_lab(image1);
    LabImage im2 = load_lab(image2);
    if (im1.width() != im2.width() || im1.height() != im2.height())
      throw std::runtime_error("input images have different dimensions");
    timer.lap("load");

    std::vector<int> levels = fwd_params.levels_needed();
    ScaleSpace s1 = build_scale_space(im1, levels);
    ScaleSpace s2 = build_scale_space(im2, levels);
    timer.lap("scale-space");

    // backward flows use distinct seeds; the second also a distinct radius
    MatchParams bwd1 = fwd_params;
    bwd1.rng_seed = fwd_params.rng_seed + 1;
    MatchParams bwd2 = fwd_params;
    bwd2.rng_seed = fwd_params.rng_seed + 2;
    bwd2.data_term.radius = fwd_params.r2;

    FlowField fwd, back1, back2;
    if (thread_budget() >= 2) {
      auto f1 = std::async(std::launch::async, [&] { return run_variant(s1, s2, fwd_params); });
      auto f2 = std::async(std::launch::async, [&] { return run_variant(s2, s1, bwd1); });
      if (!one_way) {
        auto f3 = std::async(std::launch::async, [&] { return run_variant(s2, s1, bwd2); });
        back2 = f3.get();
      }
      fwd = f1.get();
      back1 = f2.get();
    } else {
      fwd = run_variant(s1, s2, fwd_params);
      back1 = run_variant(s2, s1, bwd1);
      if (!one_way) back2 = run_variant(s2, s1, bwd2);
    }
    timer.lap("matching");

    BackwardLookup lookup = nearest_lookup ? BackwardLookup::Nearest : BackwardLookup::Bilinear;
    ConsistencyResult cr =
        consistency_check(fwd, back1, one_way ? nullptr : &back2, eps, lookup);
    region_filter(fwd, cr, min_region);
    SparseMatches matches = sparsify(fwd, cr, q, min_count);
    timer.lap("filtering");

    write_sparse_matches(output, matches);
    if (!mask_path.empty()) {
      Rgb8Image mask;
      mask.width = cr.width;
      mask.height = cr.height;
      mask.channels = 1;
      mask.data.resize(cr.valid.size());
      for (std::size_t i = 0; i < cr.valid.size(); ++i) mask.data[i] = cr.valid[i] ? 255 : 0;
      write_png8(mask_path, mask);
    }
    if (!dense_path.empty()) {
      FlowField dense = fill_dense(matches, fwd.width, fwd.height);
      write_flow_file(dense_path, "auto", dense);
      if (!viz.empty()) write_png8(viz, flow_to_color(dense));
    } else if (!viz.empty()) {
      FlowField masked = fwd;
      for (std::size_t i = 0; i < masked.size(); ++i) masked.valid[i] &= cr.valid[i];
      write_png8(viz, flow_to_color(masked));
    }
    timer.lap("output");
    std::printf("matches: %zu\n", matches.matches.size());
    return 0;
  }
};

struct EvalCmd {
  std::string prediction, truth, nocc_path, json_path;
  double fail_epe = -1.0;
  double fail_pct3 = -1.0;

  int run() {
    FlowField pred = read_flow_file(prediction);
    GroundTruth gt = load_ground_truth(truth, nocc_path);
    MetricsReport rep = compute_metrics(pred, gt);

    std::printf("pct<=3px   %.4f\n", rep.pct_le3);
    std::printf("pct<=1px   %.4f\n", rep.pct_le1);
    std::printf("EPE10      %.4f\n", rep.epe10);
    std::printf("EPE        %.4f\n", rep.epe);
    std::printf("evaluated  %zu\n", rep.n_evaluated);
    std::printf("no-pred    %zu\n", rep.n_invalid_prediction);

    if (!json_path.empty()) {
      nlohmann::json j{{"pct_le3", rep.pct_le3},
                       {"pct_le1", rep.pct_le1},
                       {"epe10", rep.epe10},
                       {"epe", rep.epe},
                       {"n_evaluated", rep.n_evaluated},
                       {"n_invalid_prediction", rep.n_invalid_prediction}};
      std::FILE* f = std::fopen(json_path.c_str(), "w");
      if (!f) throw std::runtime_error("cannot write " + json_path);
      std::string text = j.dump(2);
      std::fwrite(text.data(), 1, text.size(), f);
      std::fclose(f);
    }

    int rc = 0;
    if (fail_epe >= 0 && rep.epe > fail_epe) {
      std::fprintf(stderr, "FAIL: EPE %.4f above threshold %.4f\n", rep.epe, fail_epe);
      rc = 1;
    }
    if (fail_pct3 >= 0 && rep.pct_le3 < fail_pct3) {
      std::fprintf(stderr, "FAIL: pct<=3px %.4f below threshold %.4f\n", rep.pct_le3, fail_pct3);
      rc = 1;
    }
    return rc;
  }
};

struct SieveCmd {
  std::string image1, image2, truth, nocc_path, output;
  std::string configs = "1,2,4,8,1&2,1&2&4&8,ff";
  std::string bins = "1,2,5,10,20,50,100,200";
  std::size_t samples = 10000;
  double R = 1.0;
  int r = 4;
  std::uint64_t seed = 0;

  int run() {
    LabImage im1 = load_lab(image1);
    LabImage im2 = load_lab(image2);
    GroundTruth gt = load_ground_truth(truth, nocc_path);
    if (gt.width != im1.width() || gt.height != im1.height())
      throw std::runtime_error("ground truth dimensions do not match the images");

    std::vector<SieveConfig> parsed;
    {
      std::stringstream ss(configs);
      std::string item;
      while (std::getline(ss, item, ',')) parsed.push_back(parse_sieve_config(item));
    }
    SieveParams params;
    params.samples_per_bin = samples;
    params.R = R;
    params.term.radius = r;
    params.seed = seed;
    params.distance_bins.clear();
    for (int b : parse_int_list(bins)) params.distance_bins.push_back(b);

    std::set<int> levels{1};
    for (const SieveConfig& c : parsed) levels.insert(c.scales.begin(), c.scales.end());
    std::vector<int> level_list(levels.begin(), levels.end());
    ScaleSpace s1 = build_scale_space(im1, level_list);
    ScaleSpace s2 = build_scale_space(im2, level_list);

    auto curves = sieve_analysis(s1, s2, gt, parsed, params);
    write_sieve_csv(output, curves);
    std::printf("wrote %zu curves x %zu bins to %s\n", curves.size(),
                params.distance_bins.size(), output.c_str());
    return 0;
  }
};

struct BenchNnfCmd {
  MatchOptions match;
  std::string image1, image2, truth, nocc_path;
  std::string crop = "64x64";
  int crop_x = -1, crop_y = -1;
  bool allow_large = false;

  int run() {
    LabImage full1 = load_lab(image1);
    LabImage full2 = load_lab(image2);

    int cw, ch;
    if (std::sscanf(crop.c_str(), "%dx%d", &cw, &ch) != 2 || cw < 8 || ch < 8)
      throw std::runtime_error("bad --crop (expected e.g. 64x64)");
    cw = std::min(cw, full1.width());
    ch = std::min(ch, full1.height());
    int x0 = crop_x >= 0 ? crop_x : (full1.width() - cw) / 2;
    int y0 = crop_y >= 0 ? crop_y : (full1.height() - ch) / 2;
    x0 = clamp_int(x0, 0, full1.width() - cw);
    y0 = clamp_int(y0, 0, full1.height() - ch);

    LabImage c1(cw, ch), c2(cw, ch);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) {
          c1.at(c, x, y) = full1.at(c, x0 + x, y0 + y);
          c2.at(c, x, y) = full2.at(c, x0 + x, y0 + y);
        }

    MatchParams params = match.params();
    std::vector<int> levels = params.levels_needed();
    ScaleSpace s1 = build_scale_space(c1, levels);
    ScaleSpace s2 = build_scale_space(c2, levels);

    FlowField nnf = brute_force_nnf(s1, s2, params.data_term, 1, allow_large);
    FlowField ff = run_variant(s1, s2, params);

    std::size_t dominated = 0, compared = 0;
    for (std::size_t i = 0; i < ff.size(); ++i) {
      if (!ff.valid[i]) continue;
      ++compared;
      dominated += nnf.cost[i] <= ff.cost[i];
    }
    std::printf("crop %dx%d at (%d,%d)\n", cw, ch, x0, y0);
    std::printf("oracle cost <= matcher cost: %zu / %zu pixels\n", dominated, compared);

    if (!truth.empty()) {
      GroundTruth gt = load_ground_truth(truth, nocc_path);
      GroundTruth crop_gt;
      crop_gt.width = cw;
      crop_gt.height = ch;
      crop_gt.flow.resize(static_cast<std::size_t>(cw) * ch);
      crop_gt.valid.resize(crop_gt.flow.size());
      crop_gt.nocc.resize(crop_gt.flow.size());
      for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) {
          std::size_t src = gt.index(x0 + x, y0 + y);
          std::size_t dst = crop_gt.index(x, y);
          crop_gt.flow[dst] = gt.flow[src];
          crop_gt.valid[dst] = gt.valid[src];
          crop_gt.nocc[dst] = gt.nocc[src];
        }
      MetricsReport mn = compute_metrics(nnf, crop_gt);
      MetricsReport mf = compute_metrics(ff, crop_gt);
      std::printf("%-12s %8s %8s %8s\n", "method", "<=3px", "EPE10", "EPE");
      std::printf("%-12s %7.2f%% %8.3f %8.3f\n", "nnf", 100 * mn.pct_le3, mn.epe10, mn.epe);
      std::printf("%-12s %7.2f%% %8.3f %8.3f\n", variant_name(params.variant),
                  100 * mf.pct_le3, mf.epe10, mf.epe);
    }
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowfields: dense correspondence fields for large-displacement optical flow"};
  app.require_subcommand(1);

  MatchCmd match_cmd;
  CLI::App* m = app.add_subcommand("match", "compute a dense flow field between two images");
  m->add_option("image1", match_cmd.image1)->required();
  m->add_option("image2", match_cmd.image2)->required();
  m->add_option("-o,--output", match_cmd.output, "output flow file (.flo or KITTI .png)")
      ->required();
  m->add_option("--format", match_cmd.format, "flo|kitti|auto (by extension)")
      ->check(CLI::IsMember({"flo", "kitti", "auto"}));
  m->add_option("--viz", match_cmd.viz, "write a color-wheel rendering to this PNG");
  match_cmd.match.add_flags(m);

  FilterCmd filter_cmd;
  CLI::App* f = app.add_subcommand(
      "filter", "match forward and two backward flows, filter outliers, sparsify");
  f->add_option("image1", filter_cmd.image1)->required();
  f->add_option("image2", filter_cmd.image2)->required();
  f->add_option("-o,--output", filter_cmd.output, "sparse matches text file")->required();
  f->add_option("--mask", filter_cmd.mask_path, "write the survivor mask to this PNG");
  f->add_option("--dense", filter_cmd.dense_path, "fill the sparse matches into a dense file");
  f->add_option("--viz", filter_cmd.viz, "color rendering of the filtered/filled flow");
  f->add_option("--eps", filter_cmd.eps, "consistency threshold in pixels");
  f->add_option("--s", filter_cmd.min_region, "minimum surviving region size");
  f->add_option("--e", filter_cmd.min_count, "minimum survivors per block");
  f->add_option("--q", filter_cmd.q, "sparsification block size");
  f->add_flag("--one-way", filter_cmd.one_way, "skip the second backward flow");
  f->add_flag("--nearest-lookup", filter_cmd.nearest_lookup,
              "nearest-neighbor backward lookup instead of bilinear");
  filter_cmd.match.add_flags(f);

  EvalCmd eval_cmd;
  CLI::App* e = app.add_subcommand("eval", "compare a flow file against ground truth");
  e->add_option("prediction", eval_cmd.prediction)->required();
  e->add_option("truth", eval_cmd.truth)->required();
  e->add_option("--nocc", eval_cmd.nocc_path,
                "occlusion mask PNG (nonzero pixels are occluded)");
  e->add_option("--json", eval_cmd.json_path, "also write the report as JSON");
  e->add_option("--fail-if-epe-above", eval_cmd.fail_epe, "exit nonzero when EPE exceeds this");
  e->add_option("--fail-if-pct3-below", eval_cmd.fail_pct3,
                "exit nonzero when the <=3px rate falls below this");

  SieveCmd sieve_cmd;
  CLI::App* s = app.add_subcommand("sieve", "resistant-outlier probability curves");
  s->add_option("image1", sieve_cmd.image1)->required();
  s->add_option("image2", sieve_cmd.image2)->required();
  s->add_option("truth", sieve_cmd.truth)->required();
  s->add_option("-o,--output", sieve_cmd.output, "CSV output path")->required();
  s->add_option("--nocc", sieve_cmd.nocc_path, "occlusion mask PNG");
  s->add_option("--configs,--scales", sieve_cmd.configs,
                "comma list of configurations, e.g. 1,2,1&2,1+2,ff");
  s->add_option("--bins", sieve_cmd.bins, "comma list of d_f distances");
  s->add_option("--samples", sieve_cmd.samples, "samples per distance bin");
  s->add_option("--R", sieve_cmd.R, "random search distance for the ff curve");
  s->add_option("--r", sieve_cmd.r, "census patch radius");
  s->add_option("--seed", sieve_cmd.seed, "random seed");

  BenchNnfCmd bench_cmd;
  CLI::App* b = app.add_subcommand("bench-nnf",
                                   "compare the exhaustive NNF oracle against the matcher");
  b->add_option("image1", bench_cmd.image1)->required();
  b->add_option("image2", bench_cmd.image2)->required();
  b->add_option("--gt", bench_cmd.truth, "ground-truth flow for rate metrics");
  b->add_option("--nocc", bench_cmd.nocc_path, "occlusion mask PNG");
  b->add_option("--crop", bench_cmd.crop, "crop size, e.g. 64x64");
  b->add_option("--crop-x", bench_cmd.crop_x, "crop origin x (default: centered)");
  b->add_option("--crop-y", bench_cmd.crop_y, "crop origin y (default: centered)");
  b->add_flag("--allow-large", bench_cmd.allow_large, "lift the 64x64 oracle guard");
  bench_cmd.match.add_flags(b);

  // flags > config file > built-in defaults, per subcommand
  for (CLI::App* sub : {m, f, e, s, b})
    sub->set_config("--config", "", "read defaults from a TOML-style config file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (m->parsed()) return match_cmd.run();
    if (f->parsed()) return filter_cmd.run();
    if (e->parsed()) return eval_cmd.run();
    if (s->parsed()) return sieve_cmd.run();
    if (b->parsed()) return bench_cmd.run();
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 2;
  }
  return 0;
}
