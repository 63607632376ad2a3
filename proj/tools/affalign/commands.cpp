#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "affalign/common/error.hpp"
#include "affalign/eval/concentration.hpp"
#include "affalign/eval/episode.hpp"
#include "affalign/io/binary.hpp"
#include "affalign/teacher/teacher.hpp"
#include "affalign/train/gradient_check.hpp"
#include "affalign/train/trainer.hpp"
#include "affalign/world/dataset.hpp"
#include "affalign/world/world.hpp"

namespace affalign::cli {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

world::Difficulty difficulty_flag(const std::string& s) {
  const auto d = world::parse_difficulty(s);
  if (!d) throw UsageError("--difficulty must be easy or hard, got '" + s + "'");
  return *d;
}

std::vector<world::Difficulty> difficulties_flag(const std::string& s) {
  if (s == "both") return {world::Difficulty::kEasy, world::Difficulty::kHard};
  return {difficulty_flag(s)};
}

class LogFile {
 public:
  explicit LogFile(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
    write(train::kLogHeader);
  }
  void write(const std::string& line) {
    out_ << line << '\n';
    if (!out_) throw IoError("write to '" + path_ + "' failed");
  }

 private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace

void gen_data(const GenDataOptions& o) {
  if (o.episodes == 0) throw UsageError("--episodes must be positive");
  if (o.horizon == 0) throw UsageError("--horizon must be positive");
  const world::Difficulty d = difficulty_flag(o.difficulty);
  std::vector<world::Demonstration> demos;
  demos.reserve(o.episodes);
  std::size_t steps = 0;
  for (std::size_t i = 0; i < o.episodes; ++i) {
    demos.push_back(world::make_demonstration(world::generate_scene_from(o.seed + i, d), o.horizon));
    steps += demos.back().observations.size();
  }
  world::write_dataset(demos, o.out);
  std::cout << world::name(d) << ": " << demos.size() << " demonstrations, " << steps
            << " steps -> " << o.out << '\n';
}

void train(const TrainOptions& o) {
  const auto demos = world::read_dataset(o.data);
  train::TrainingState state;
  if (o.resume) {
    if (o.config || o.no_align) throw UsageError("--resume takes its configuration from the checkpoint");
    state = train::load_checkpoint(*o.resume);
  } else {
    train::TrainConfig cfg = o.config ? train::load_config(*o.config) : train::TrainConfig{};
    if (o.no_align) cfg.align_enabled = false;
    state = train::initial_state(cfg, model::ModelConfig::desk());
  }
  for (const auto& d : demos) {
    if (!d.action_chunks.empty() && d.action_chunks.front().horizon() != state.model.horizon) {
      throw UsageError("dataset horizon " + std::to_string(d.action_chunks.front().horizon()) +
                       " does not match the model horizon " + std::to_string(state.model.horizon));
    }
  }
  const std::uint64_t until = o.until ? *o.until : state.train.total_steps;
  if (until > state.train.total_steps || until < state.opt.step) {
    throw UsageError("--until must lie in [" + std::to_string(state.opt.step) + ", " +
                     std::to_string(state.train.total_steps) + "]");
  }

  LogFile log(o.log ? *o.log : o.out + ".log.csv");
  train::RunOptions run;
  run.record_time = o.log_timing;
  run.on_step = [&log](const train::TrainLogRecord& r, const train::TrainingState&) {
    log.write(train::format_log_line(r));
  };
  const auto pool = train::flatten(demos);
  const auto records = train::run(state, pool, until, run);
  train::save_checkpoint(state, o.out);

  std::cout << "trained " << records.size() << " steps (align "
            << (state.train.align_enabled ? "on" : "off") << ")";
  if (!records.empty()) {
    const auto& last = records.back();
    std::cout << ", final l_action " << fmt(last.l_action) << " l_align " << fmt(last.l_align);
  }
  std::cout << " -> " << o.out << '\n';
}

void eval(const EvalOptions& o) {
  if (o.trials == 0) throw UsageError("--trials must be positive");
  const auto difficulties = difficulties_flag(o.difficulty);
  const train::TrainingState state = train::load_checkpoint(o.checkpoint);
  eval::ModelPolicy policy(state.params, state.model, o.seed);
  const eval::EvalReport report = eval::evaluate(policy, difficulties, o.trials, o.seed);
  if (o.report) io::write_file(*o.report, eval::report_csv(report));
  for (const auto& a : report.aggregates) {
    std::cout << world::name(a.difficulty) << ": " << a.successes << "/" << a.trials << " ("
              << fmt(100.0 * a.rate()) << "%)\n";
  }
}

bool grad_check(const GradCheckOptions& o) {
  if (o.seeds == 0) throw UsageError("--seeds must be positive");
  if (!(o.tolerance > 0.0)) throw UsageError("--tolerance must be positive");
  std::vector<train::LossGradientCheck> worst;
  for (std::size_t k = 0; k < o.seeds; ++k) {
    const auto checks = train::check_model_gradients(o.seed + k);
    if (worst.empty()) {
      worst = checks;
      continue;
    }
    for (std::size_t i = 0; i < checks.size(); ++i) {
      worst[i].coordinates += checks[i].coordinates;
      if (checks[i].max_relative_error > worst[i].max_relative_error) {
        worst[i].max_relative_error = checks[i].max_relative_error;
        worst[i].worst_parameter = checks[i].worst_parameter;
      }
    }
  }
  bool ok = true;
  for (const auto& w : worst) {
    const bool pass = w.max_relative_error <= o.tolerance;
    ok = ok && pass;
    std::cout << w.loss << " max_rel_err " << fmt(w.max_relative_error) << " at "
              << w.worst_parameter << " over " << w.coordinates << " coordinates "
              << (pass ? "PASS" : "FAIL") << '\n';
  }
  return ok;
}

void visualize(const VisualizeOptions& o) {
  const world::Difficulty d = difficulty_flag(o.difficulty);
  const train::TrainingState state = train::load_checkpoint(o.checkpoint);
  std::uint64_t used = 0;
  const world::Scene scene = world::generate_scene_from(o.scene_seed, d, &used);
  const world::RobotState start{scene.gripper_start.x, scene.gripper_start.y, 1.0};
  const Tensor teacher_heat =
      teacher::teach(world::render(scene, start), teacher::parse_task(scene.task), scene).m_aff;
  const eval::ConcentrationMap map = eval::concentration_map(state.params, state.model, scene);
  const Tensor mask = world::target_part_mask(scene);
  if (teacher_heat.shape() != map.mapped.shape()) {
    throw DimensionError("teacher grid " + to_string(teacher_heat.shape()) +
                         " differs from the concentration grid " + to_string(map.mapped.shape()));
  }
  Tensor diff(teacher_heat.shape());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = std::abs(teacher_heat[i] - map.mapped[i]);

  std::error_code ec;
  std::filesystem::create_directories(o.out_dir, ec);
  if (ec) throw IoError("cannot create '" + o.out_dir + "': " + ec.message());
  const std::string stem =
      (std::filesystem::path(o.out_dir) / ("scene_" + std::to_string(o.scene_seed))).string();
  eval::export_heatmap(teacher_heat, stem + "_teacher.pgm");
  eval::export_heatmap(map.mapped, stem + "_model.pgm");
  eval::export_heatmap(diff, stem + "_diff.pgm");

  std::ostringstream csv;
  csv << "row,col,teacher,similarity,mapped,target_part\n";
  const std::size_t cols = teacher_heat.cols();
  for (std::size_t i = 0; i < teacher_heat.size(); ++i) {
    csv << i / cols << ',' << i % cols << ',' << fmt(teacher_heat[i]) << ','
        << fmt(map.similarity[i]) << ',' << fmt(map.mapped[i]) << ',' << (mask[i] > 0 ? 1 : 0)
        << '\n';
  }
  io::write_file(stem + "_scores.csv", csv.str());
  std::cout << "scene " << used << " " << world::task_name(scene.task.verb, scene.task.object)
            << " (" << world::name(d) << "): concentration " << fmt(map.score) << " -> " << stem
            << "_*\n";
}

void teacher_eval(const TeacherEvalOptions& o) {
  if (o.scenes == 0) throw UsageError("--scenes must be positive");
  const auto rows = teacher::teacher_eval_scenes(o.scenes, o.noise, o.seed, difficulty_flag(o.difficulty));
  std::ostringstream csv;
  csv << "scene_seed,kld,sim,nss\n";
  eval::SaliencyScores mean;
  for (const auto& r : rows) {
    csv << r.scene_seed << ',' << fmt(r.scores.kld) << ',' << fmt(r.scores.sim) << ','
        << fmt(r.scores.nss) << '\n';
    mean.kld += r.scores.kld;
    mean.sim += r.scores.sim;
    mean.nss += r.scores.nss;
  }
  if (o.report) io::write_file(*o.report, csv.str());
  const auto n = static_cast<double>(rows.size());
  std::cout << "scenes " << rows.size() << " noise " << fmt(o.noise) << ": kld " << fmt(mean.kld / n)
            << " sim " << fmt(mean.sim / n) << " nss " << fmt(mean.nss / n) << '\n';
}

int report_failure(const std::exception& e) {
  std::cerr << "error: " << e.what() << '\n';
  if (const auto* div = dynamic_cast<const DivergenceError*>(&e)) {
    std::cerr << "diverged at step " << div->step() << '\n';
    return kExitNumerical;
  }
  if (dynamic_cast<const GradientCheckError*>(&e) || dynamic_cast<const DegenerateInputError*>(&e) ||
      dynamic_cast<const DeterminismError*>(&e)) {
    return kExitNumerical;
  }
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const IoError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const GenerationError*>(&e)) {
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace affalign::cli
