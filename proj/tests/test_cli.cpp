#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "flowfields/evaluation.hpp"
#include "flowfields/image_io.hpp"
#include "testutil.hpp"

using namespace flowfields;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "flowfields_cli_test";

std::string path(const char* name) { return (kDir / name).string(); }

int run_cli(const std::string& args) {
  std::string cmd = std::string(FLOWFIELDS_CLI_PATH) + " " + args + " > " + path("stdout.txt") +
                    " 2> " + path("stderr.txt");
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string read_file(const std::string& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Rgb8Image noise_rgb(int w, int h, std::uint64_t seed) {
  Rgb8Image img;
  img.width = w;
  img.height = h;
  img.channels = 3;
  img.data.resize(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = testutil::value_noise(x, y, seed + 37 * c, 4);
        img.data[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<std::uint8_t>(30 + v * 200);
      }
  return img;
}

Rgb8Image translate_rgb(const Rgb8Image& img, int tx, int ty) {
  Rgb8Image out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.data[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
            img.at(clamp_int(x - tx, 0, img.width - 1), clamp_int(y - ty, 0, img.height - 1), c);
  return out;
}

struct Fixture {
  Fixture() {
    fs::create_directories(kDir);
    Rgb8Image im1 = noise_rgb(64, 48, 9001);
    Rgb8Image im2 = translate_rgb(im1, 5, 3);
    write_png8(path("a.png"), im1);
    write_png8(path("b.png"), im2);

    FlowField gt(64, 48);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      gt.flow[i] = {5.f, 3.f};
      gt.valid[i] = 1;
    }
    write_flo(path("gt.flo"), gt);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("match writes a flow file recovering the translation") {
  fixture();
  int rc = run_cli("match " + path("a.png") + " " + path("b.png") + " -o " + path("out.flo") +
                   " --variant fast --k 2 --seed 1 --viz " + path("viz.png"));
  CHECK(rc == 0);
  FlowField f = read_flo(path("out.flo"));
  CHECK(f.width == 64);
  CHECK(f.height == 48);
  std::size_t good = 0, total = 0;
  for (int y = 8; y < 40; ++y)
    for (int x = 8; x < 56; ++x) {
      ++total;
      std::size_t i = f.index(x, y);
      good += f.valid[i] && norm(f.flow[i] - Vec2f{5.f, 3.f}) < 1.f;
    }
  CHECK(static_cast<double>(good) / total > 0.9);
  CHECK(load_rgb(path("viz.png")).width == 64);
  // stage timings are reported
  CHECK(read_file(path("stdout.txt")).find("matching") != std::string::npos);
}

TEST_CASE("match --format kitti emits a readable 16-bit png") {
  fixture();
  int rc = run_cli("match " + path("a.png") + " " + path("b.png") + " -o " + path("out_k.png") +
                   " --format kitti --variant fast --k 2 --seed 1");
  CHECK(rc == 0);
  FlowField f = read_kitti_png(path("out_k.png"));
  CHECK(f.width == 64);
}

TEST_CASE("identical runs with one seed produce identical bytes") {
  fixture();
  REQUIRE(run_cli("match " + path("a.png") + " " + path("b.png") + " -o " + path("d1.flo") +
                  " --variant plus --k 2 --seed 42") == 0);
  REQUIRE(run_cli("match " + path("a.png") + " " + path("b.png") + " -o " + path("d2.flo") +
                  " --variant plus --k 2 --seed 42") == 0);
  CHECK(read_file(path("d1.flo")) == read_file(path("d2.flo")));
}

TEST_CASE("eval prints metrics and gates the exit code") {
  fixture();
  REQUIRE(run_cli("match " + path("a.png") + " " + path("b.png") + " -o " + path("out.flo") +
                  " --variant fast --k 2 --seed 1") == 0);
  int rc = run_cli("eval " + path("out.flo") + " " + path("gt.flo") + " --json " +
                   path("report.json"));
  CHECK(rc == 0);
  std::string report = read_file(path("report.json"));
  CHECK(report.find("\"epe\"") != std::string::npos);
  CHECK(read_file(path("stdout.txt")).find("EPE") != std::string::npos);

  CHECK(run_cli("eval " + path("gt.flo") + " " + path("gt.flo") +
                " --fail-if-epe-above 0.001") == 0);
  CHECK(run_cli("eval " + path("out.flo") + " " + path("gt.flo") +
                " --fail-if-pct3-below 1.01") == 1);
}

TEST_CASE("filter emits sparse matches, a mask and a dense fill") {
  fixture();
  int rc = run_cli("filter " + path("a.png") + " " + path("b.png") + " -o " +
                   path("matches.txt") + " --variant fast --k 2 --seed 1 --mask " +
                   path("mask.png") + " --dense " + path("dense.flo") + " --eps 1.5 --q 3 --e 3");
  CHECK(rc == 0);
  SparseMatches m = read_sparse_matches(path("matches.txt"), 64, 48);
  CHECK(m.matches.size() > 50);
  for (const SparseMatch& sm : m.matches) CHECK(norm(sm.flow - Vec2f{5.f, 3.f}) < 2.f);
  CHECK(load_rgb(path("mask.png")).channels == 1);
  FlowField dense = read_flo(path("dense.flo"));
  for (std::size_t i = 0; i < dense.size(); ++i) CHECK(dense.valid[i]);

  // one-way mode also runs
  CHECK(run_cli("filter " + path("a.png") + " " + path("b.png") + " -o " + path("m1.txt") +
                " --variant fast --k 2 --seed 1 --one-way") == 0);
}

TEST_CASE("sieve writes the requested CSV curves") {
  fixture();
  int rc = run_cli("sieve " + path("a.png") + " " + path("b.png") + " " + path("gt.flo") +
                   " -o " + path("curves.csv") +
                   " '--configs=1,2,1&2,1+2' --bins 1,5 --samples 150 --seed 3");
  CHECK(rc == 0);
  std::string csv = read_file(path("curves.csv"));
  CHECK(csv.find("d_f,config,P,P_rel,samples") != std::string::npos);
  int lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 1 + 4 * 2);  // header + configs x bins
}

TEST_CASE("bench-nnf reports oracle dominance and rates") {
  fixture();
  int rc = run_cli("bench-nnf " + path("a.png") + " " + path("b.png") + " --gt " +
                   path("gt.flo") + " --crop 24x24 --variant multiscale --k 2 --seed 1");
  CHECK(rc == 0);
  std::string out = read_file(path("stdout.txt"));
  CHECK(out.find("oracle cost <= matcher cost") != std::string::npos);
  CHECK(out.find("nnf") != std::string::npos);
}

TEST_CASE("a config file supplies defaults that flags override") {
  fixture();
  {
    std::ofstream cfg(path("cfg.toml"));
    cfg << "variant = \"fast\"\nk = 2\nseed = 7\n";
  }
  CHECK(run_cli("match " + path("a.png") + " " + path("b.png") + " -o " + path("cfg_out.flo") +
                " --config " + path("cfg.toml")) == 0);
  // flag wins over the file
  CHECK(run_cli("match " + path("a.png") + " " + path("b.png") + " -o " + path("cfg_out2.flo") +
                " --config " + path("cfg.toml") + " --k 1") == 0);
}

TEST_CASE("mismatched inputs and bad flags exit nonzero") {
  fixture();
  Rgb8Image small = noise_rgb(32, 20, 5);
  write_png8(path("small.png"), small);
  CHECK(run_cli("match " + path("a.png") + " " + path("small.png") + " -o " +
                path("bad.flo")) == 2);
  CHECK(run_cli("match " + path("a.png") + " " + path("b.png") + " -o " + path("bad.flo") +
                " --R 0") == 2);
  CHECK(run_cli("match missing_file.png " + path("b.png") + " -o " + path("bad.flo")) == 2);

  // the exhaustive-search guard rejects crops above 64x64
  Rgb8Image big = noise_rgb(96, 80, 6);
  write_png8(path("big.png"), big);
  CHECK(run_cli("bench-nnf " + path("big.png") + " " + path("big.png") + " --crop 96x80") == 2);
}
