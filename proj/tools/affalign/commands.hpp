#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

namespace affalign::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

// Evaluation scenes start far above the demo seeds so a model is never
// scored on the scenes it was trained on.
inline constexpr std::uint64_t kDefaultEvalSeed = 1'000'000;

struct GenDataOptions {
  std::string out;
  std::size_t episodes = 50;
  std::string difficulty = "easy";
  std::uint64_t seed = 0;
  std::size_t horizon = 8;
};

struct TrainOptions {
  std::string data;
  std::optional<std::string> config;
  std::string out;
  std::optional<std::string> log;  // default: <out>.log.csv
  bool no_align = false;
  bool log_timing = false;
  std::optional<std::string> resume;
  std::optional<std::size_t> until;  // stop after this many updates
};

struct EvalOptions {
  std::string checkpoint;
  std::size_t trials = 100;
  std::string difficulty = "both";
  std::uint64_t seed = kDefaultEvalSeed;
  std::optional<std::string> report;
};

struct GradCheckOptions {
  std::uint64_t seed = 0;
  std::size_t seeds = 20;
  double tolerance = 1e-4;
};

struct VisualizeOptions {
  std::string checkpoint;
  std::uint64_t scene_seed = 0;
  std::string difficulty = "hard";
  std::string out_dir;
};

struct TeacherEvalOptions {
  std::size_t scenes = 100;
  double noise = 0.0;
  std::optional<std::string> report;
  std::uint64_t seed = 0;
  std::string difficulty = "hard";
};

// Each command prints its summary to stdout and throws affalign errors;
// exit_code maps them.
void gen_data(const GenDataOptions& o);
void train(const TrainOptions& o);
void eval(const EvalOptions& o);
// Returns false when a loss exceeds the tolerance.
bool grad_check(const GradCheckOptions& o);
void visualize(const VisualizeOptions& o);
void teacher_eval(const TeacherEvalOptions& o);

// Error -> exit code; prints the message to stderr.
int report_failure(const std::exception& e);

}  // namespace affalign::cli
