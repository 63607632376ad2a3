#include <malloc.h>

#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace affalign::cli;

int main(int argc, char** argv) {
  // Training allocates and frees the same large buffers every step; keep
  // them on the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Affordance-aligned vision-language-action policy on a synthetic tabletop"};
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate expert demonstrations");
  gen_cmd->add_option("--out", gen.out, "Dataset file")->required();
  gen_cmd->add_option("--episodes", gen.episodes, "Number of demonstrations")->capture_default_str();
  gen_cmd->add_option("--difficulty", gen.difficulty, "easy or hard")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "First scene seed")->capture_default_str();
  gen_cmd->add_option("--horizon", gen.horizon, "Action chunk length")->capture_default_str();

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train a policy on a dataset");
  train_cmd->add_option("--data", tr.data, "Dataset file")->required();
  train_cmd->add_option("--config", tr.config, "key = value training config");
  train_cmd->add_option("--out", tr.out, "Checkpoint file")->required();
  train_cmd->add_option("--log", tr.log, "CSV training log (default <out>.log.csv)");
  train_cmd->add_flag("--no-align", tr.no_align, "Train without the alignment loss");
  train_cmd->add_flag("--log-timing", tr.log_timing, "Record wall-clock ms per step in the log");
  train_cmd->add_option("--resume", tr.resume, "Continue from a checkpoint");
  train_cmd->add_option("--until", tr.until, "Stop once this many updates are done");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Closed-loop evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--trials", ev.trials, "Episodes per difficulty")->capture_default_str();
  eval_cmd->add_option("--difficulty", ev.difficulty, "easy, hard or both")->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed, "First scene seed and policy seed")->capture_default_str();
  eval_cmd->add_option("--report", ev.report, "CSV report file");

  GradCheckOptions gc;
  auto* gc_cmd = app.add_subcommand("grad-check", "Finite-difference check of every loss path");
  gc_cmd->add_option("--seed", gc.seed, "First seed")->capture_default_str();
  gc_cmd->add_option("--seeds", gc.seeds, "Number of seeds")->capture_default_str();
  gc_cmd->add_option("--tolerance", gc.tolerance, "Worst relative error allowed")->capture_default_str();

  VisualizeOptions vis;
  auto* vis_cmd = app.add_subcommand("visualize", "Export teacher and model heatmaps");
  vis_cmd->add_option("--checkpoint", vis.checkpoint, "Checkpoint file")->required();
  vis_cmd->add_option("--scene-seed", vis.scene_seed, "Scene seed")->capture_default_str();
  vis_cmd->add_option("--difficulty", vis.difficulty, "easy or hard")->capture_default_str();
  vis_cmd->add_option("--out-dir", vis.out_dir, "Output directory")->required();

  TeacherEvalOptions te;
  auto* te_cmd = app.add_subcommand("teacher-eval", "Score the teacher against ground truth");
  te_cmd->add_option("--scenes", te.scenes, "Number of scenes")->capture_default_str();
  te_cmd->add_option("--noise", te.noise, "Gaussian noise added to the teacher heat")->capture_default_str();
  te_cmd->add_option("--report", te.report, "Per-scene CSV file");
  te_cmd->add_option("--seed", te.seed, "First scene seed and noise seed")->capture_default_str();
  te_cmd->add_option("--difficulty", te.difficulty, "easy or hard")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) gen_data(gen);
    if (*train_cmd) train(tr);
    if (*eval_cmd) eval(ev);
    if (*gc_cmd && !grad_check(gc)) return kExitNumerical;
    if (*vis_cmd) visualize(vis);
    if (*te_cmd) teacher_eval(te);
  } catch (const std::exception& e) {
    return report_failure(e);
  }
  return kExitOk;
}
