// Drives the affalign binary end to end. AFFALIGN_CLI is the binary's path.
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "affalign/io/binary.hpp"
#include "affalign/model/checkpoint.hpp"
#include "affalign/train/trainer.hpp"
#include "affalign/world/dataset.hpp"
#include "affalign/world/world.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace affalign;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "affalign_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run cli(const std::string& args) {
  const fs::path capture = scratch() / "last.out";
  const std::string cmd = std::string("'") + AFFALIGN_CLI + "' " + args + " > '" + capture.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(capture);
  std::ostringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string path(const std::string& name) { return (scratch() / name).string(); }
std::string q(const std::string& name) { return "'" + path(name) + "'"; }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::istringstream in(line);
  std::string c;
  while (std::getline(in, c, ',')) cells.push_back(c);
  return cells;
}

// Shared small dataset and a short training config.
const std::string& demos() {
  static const std::string p = [] {
    REQUIRE(cli("gen-data --out " + q("small.avl") + " --episodes 6 --seed 100").code == 0);
    return path("small.avl");
  }();
  return p;
}

const std::string& short_config() {
  static const std::string p = [] {
    io::write_file(path("short.cfg"), "total_steps = 8\nwarmup_steps = 2\nbatch_size = 2\nseed = 4\n");
    return path("short.cfg");
  }();
  return p;
}

const std::string& trained() {
  static const std::string p = [] {
    REQUIRE(cli("train --data '" + demos() + "' --config '" + short_config() + "' --out " + q("model.avck"))
                .code == 0);
    return path("model.avck");
  }();
  return p;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("gen-data defaults to 50 EASY demonstrations") {
  const Run r = cli("gen-data --out " + q("default.avl"));
  CHECK(r.code == 0);
  CHECK(r.out.find("easy: 50 demonstrations") != std::string::npos);
  const auto d = world::read_dataset(path("default.avl"));
  REQUIRE(d.size() == 50);
  for (const auto& demo : d) CHECK(demo.scene.difficulty == world::Difficulty::kEasy);
  CHECK(cli("gen-data --out " + q("default2.avl")).code == 0);
  CHECK(io::read_file(path("default.avl")) == io::read_file(path("default2.avl")));
}

TEST_CASE("usage errors exit 1") {
  CHECK(cli("gen-data --out " + q("x.avl") + " --episodes 0").code == 1);
  CHECK(cli("gen-data --out " + q("x.avl") + " --difficulty medium").code == 1);
  CHECK(cli("gen-data --out " + q("x.avl") + " --no-such-flag").code == 1);
  CHECK(cli("").code == 1);
  CHECK(cli("fly").code == 1);
  CHECK(cli("eval").code == 1);
  CHECK(cli("--help").code == 0);
}

TEST_CASE("train --no-align logs a zero alignment column") {
  const Run r = cli("train --data '" + demos() + "' --config '" + short_config() + "' --out " +
                    q("noalign.avck") + " --no-align");
  REQUIRE(r.code == 0);
  const auto log = lines(io::read_file(path("noalign.avck") + ".log.csv"));
  REQUIRE(log.size() == 9);
  CHECK(log[0] == train::kLogHeader);
  for (std::size_t i = 1; i < log.size(); ++i) {
    const auto cells = split(log[i]);
    REQUIRE(cells.size() == 6);
    CHECK(cells[0] == std::to_string(i));
    CHECK(cells[2] == "0");
    CHECK(cells[5] == "0");
  }
  CHECK_FALSE(train::load_checkpoint(path("noalign.avck")).train.align_enabled);
}

TEST_CASE("train uses lambda 0.5 unless the config overrides it") {
  CHECK(train::load_checkpoint(trained()).train.lambda == 0.5);
  const auto log = lines(io::read_file(trained() + ".log.csv"));
  for (std::size_t i = 1; i < log.size(); ++i) {
    const auto cells = split(log[i]);
    const double action = std::stod(cells[1]), align = std::stod(cells[2]), combined = std::stod(cells[3]);
    CHECK(align < 0.0);
    // Log values are printed with limited digits.
    CHECK(std::abs(combined - (action + 0.5 * align)) <= 1e-8 * (1.0 + std::abs(combined)));
  }
}

TEST_CASE("interrupted and resumed training reproduces the uninterrupted run") {
  const std::string base = "train --data '" + demos() + "' --config '" + short_config() + "'";
  REQUIRE(cli(base + " --out " + q("part.avck") + " --until 3").code == 0);
  REQUIRE(cli("train --data '" + demos() + "' --resume " + q("part.avck") + " --out " + q("resumed.avck")).code == 0);
  CHECK(io::read_file(path("resumed.avck")) == io::read_file(trained()));
  const auto full = lines(io::read_file(trained() + ".log.csv"));
  auto pieced = lines(io::read_file(path("part.avck") + ".log.csv"));
  const auto rest = lines(io::read_file(path("resumed.avck") + ".log.csv"));
  pieced.insert(pieced.end(), rest.begin() + 1, rest.end());
  CHECK(pieced == full);
  CHECK(cli(base + " --out " + q("bad.avck") + " --until 99").code == 1);
}

TEST_CASE("divergence exits 3 and names the step") {
  auto state = train::load_checkpoint(trained());
  state.train.total_steps = 20;
  state.params.value("act.out.b")[0] = std::nan("");
  train::save_checkpoint(state, path("nan.avck"));
  const Run r = cli("train --data '" + demos() + "' --resume " + q("nan.avck") + " --out " + q("never.avck"));
  CHECK(r.code == 3);
  CHECK(r.out.find("step 9") != std::string::npos);
}

TEST_CASE("eval reports are deterministic and cover both settings") {
  const std::string args = "eval --checkpoint '" + trained() + "' --trials 4 --report ";
  REQUIRE(cli(args + q("e1.csv")).code == 0);
  REQUIRE(cli(args + q("e2.csv")).code == 0);
  const std::string report = io::read_file(path("e1.csv"));
  CHECK(report == io::read_file(path("e2.csv")));
  const auto rows = lines(report);
  CHECK(rows[0] == "task,difficulty,trials,successes,rate");
  CHECK(rows[rows.size() - 2].rfind("all,easy,4,", 0) == 0);
  CHECK(rows.back().rfind("all,hard,4,", 0) == 0);

  REQUIRE(cli("eval --checkpoint '" + trained() + "' --trials 3 --difficulty hard --report " + q("h.csv")).code == 0);
  CHECK(lines(io::read_file(path("h.csv"))).back().rfind("all,hard,3,", 0) == 0);
}

TEST_CASE("eval defaults to 100 trials") {
  REQUIRE(cli("eval --checkpoint '" + trained() + "' --difficulty easy --report " + q("d.csv")).code == 0);
  CHECK(lines(io::read_file(path("d.csv"))).back().rfind("all,easy,100,", 0) == 0);
}

TEST_CASE("bad checkpoints exit 2") {
  io::write_file(path("junk.avck"), "JUNKJUNKJUNK");
  CHECK(cli("eval --checkpoint " + q("junk.avck")).code == 2);
  CHECK(cli("eval --checkpoint " + q("missing.avck")).code == 2);
  CHECK(cli("visualize --checkpoint " + q("junk.avck") + " --out-dir " + q("v")).code == 2);
}

TEST_CASE("grad-check lists the four losses in order and fails at a round-off tolerance") {
  const Run ok = cli("grad-check --seeds 2");
  CHECK(ok.code == 0);
  const auto out = lines(ok.out);
  REQUIRE(out.size() == 4);
  const char* names[] = {"action ", "align ", "projection ", "combined "};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(out[i].rfind(names[i], 0) == 0);
    CHECK(out[i].find("PASS") != std::string::npos);
  }
  const Run strict = cli("grad-check --seeds 1 --tolerance 1e-12");
  CHECK(strict.code == 3);
  CHECK(strict.out.find("FAIL") != std::string::npos);
}

TEST_CASE("visualize writes three heatmaps and one CSV per scene") {
  const std::string args = "visualize --checkpoint '" + trained() + "' --scene-seed 21 --out-dir ";
  REQUIRE(cli(args + q("vis1")).code == 0);
  REQUIRE(cli(args + q("vis2")).code == 0);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(path("vis1"))) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  CHECK(names == std::vector<std::string>{"scene_21_diff.pgm", "scene_21_model.pgm", "scene_21_scores.csv",
                                          "scene_21_teacher.pgm"});
  for (const auto& n : names) {
    CHECK(io::read_file(path("vis1/" + n)) == io::read_file(path("vis2/" + n)));
  }

  // Teacher heatmap peaks (255) at the cell holding the target part's centroid.
  std::istringstream pgm(io::read_file(path("vis1/scene_21_teacher.pgm")));
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  pgm >> magic >> w >> h >> maxval;
  REQUIRE(magic == "P2");
  REQUIRE(w == world::kGrid);
  std::vector<int> px(w * h);
  for (int& p : px) pgm >> p;
  CHECK(*std::max_element(px.begin(), px.end()) == 255);
  const world::Scene scene = world::generate_scene_from(21, world::Difficulty::kHard);
  const world::Vec2 c = scene.success_target();
  const auto col = static_cast<std::size_t>(c.x * static_cast<double>(w));
  const auto row = static_cast<std::size_t>(c.y * static_cast<double>(h));
  CHECK(px[row * w + col] == 255);
}

TEST_CASE("teacher-eval report columns and the noise-free identity") {
  REQUIRE(cli("teacher-eval --scenes 12 --noise 0 --report " + q("t0.csv")).code == 0);
  const auto rows = lines(io::read_file(path("t0.csv")));
  REQUIRE(rows.size() == 13);
  CHECK(rows[0] == "scene_seed,kld,sim,nss");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cells = split(rows[i]);
    CHECK(std::stod(cells[1]) <= 1e-9);
    CHECK(std::stod(cells[2]) >= 1.0 - 1e-9);
  }
  CHECK(cli("teacher-eval --scenes 0").code == 1);
  CHECK(cli("teacher-eval --noise -1").code == 1);
}

}  // TEST_SUITE
