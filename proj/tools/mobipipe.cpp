// Batch driver for the session processing chain. Verbs mirror the stages:
//
//   mobipipe simulate  --out DIR [--seed N] [--participants N]
//   mobipipe inspect   FILE.xdf
//   mobipipe align     FILES... --out DIR
//   mobipipe detect    FILES... --out DIR
//   mobipipe preprocess FILES... --out DIR
//   mobipipe ica       FILES... --out DIR
//   mobipipe analyze   FILES... --out DIR
//   mobipipe run       FILES... --out DIR
//   mobipipe config    [--out FILE]
//
// Exit codes: 0 all good, 1 nothing usable, 2 partial (some inputs failed).

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <mobipipe/mobipipe.hpp>

namespace {

struct CommonOpts {
  std::vector<std::string> inputs;
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
  std::string presence_test;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool wants_inputs) {
  if (wants_inputs)
    cmd->add_option("inputs", o.inputs, "input .xdf files or directories")
        ->required();
  cmd->add_option("--config", o.config_path, "key = value configuration file");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "master seed override")
      ->each([&o](const std::string&) { o.seed_set = true; });
  cmd->add_option("--workers", o.workers, "concurrent participants");
  cmd->add_option("--presence-test", o.presence_test,
                  "wilcoxon or t for the cohort presence table")
      ->check(CLI::IsMember({"wilcoxon", "t"}));
}

mobipipe::PipelineConfig resolve_config(const CommonOpts& o) {
  mobipipe::PipelineConfig cfg;
  if (!o.config_path.empty())
    cfg = mobipipe::load_pipeline_config(o.config_path);
  if (o.seed_set) {
    cfg.seed = o.seed;
    cfg.sim.seed = o.seed;
  }
  if (o.workers > 0) cfg.workers = o.workers;
  if (o.presence_test == "wilcoxon")
    cfg.presence_test = mobipipe::PresenceTest::Wilcoxon;
  else if (o.presence_test == "t")
    cfg.presence_test = mobipipe::PresenceTest::TTest;
  mobipipe::validate(cfg);
  return cfg;
}

int run_stage(const CommonOpts& o, mobipipe::Stage stage) {
  const mobipipe::PipelineConfig cfg = resolve_config(o);
  mobipipe::Log log;
  const mobipipe::PipelineOutcome out =
      mobipipe::run_pipeline(o.inputs, cfg, o.out_dir, &log, stage);
  for (const auto& line : log.lines) std::cerr << line << "\n";
  std::cout << out.n_ok << " ok, " << out.n_failed << " failed, "
            << out.written.size() << " files under " << o.out_dir << "\n";
  for (const auto& [id, err] : out.failures)
    std::cout << "  failed " << id << ": " << err << "\n";
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"movement-locked EEG and pose session pipeline"};
  app.require_subcommand(1);

  CommonOpts sim_o, align_o, detect_o, pre_o, ica_o, analyze_o, run_o;
  int sim_participants = 0;

  CLI::App* sim = app.add_subcommand(
      "simulate", "write a synthetic cohort with ground truth sidecars");
  add_common(sim, sim_o, false);
  sim->add_option("--participants", sim_participants,
                  "cohort size override");

  std::string inspect_path;
  CLI::App* inspect =
      app.add_subcommand("inspect", "print a container's stream table");
  inspect->add_option("file", inspect_path, "an .xdf file")->required();

  CLI::App* align_cmd = app.add_subcommand(
      "align", "dejitter, correct clocks, resample to the shared grid");
  add_common(align_cmd, align_o, true);
  CLI::App* detect = app.add_subcommand(
      "detect", "alignment plus set-point and movement-onset detection");
  add_common(detect, detect_o, true);
  CLI::App* pre = app.add_subcommand(
      "preprocess", "detection plus the two-pass cleaning chain");
  add_common(pre, pre_o, true);
  CLI::App* ica_cmd = app.add_subcommand(
      "ica", "preprocessing plus the unmixing model export");
  add_common(ica_cmd, ica_o, true);
  CLI::App* analyze = app.add_subcommand(
      "analyze", "full per-participant chain and cohort statistics");
  add_common(analyze, analyze_o, true);
  CLI::App* run = app.add_subcommand(
      "run", "alias for analyze: the whole batch in one go");
  add_common(run, run_o, true);

  std::string config_out;
  CLI::App* config_cmd = app.add_subcommand(
      "config", "print the default configuration with comments");
  config_cmd->add_option("--out", config_out, "write to a file instead");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      mobipipe::PipelineConfig cfg = resolve_config(sim_o);
      if (sim_participants > 0) cfg.sim_participants = sim_participants;
      mobipipe::validate(cfg);
      mobipipe::Log log;
      const auto out =
          mobipipe::simulate_cohort_files(cfg, sim_o.out_dir, &log);
      for (const auto& line : log.lines) std::cerr << line << "\n";
      std::printf("%d participants under %s, grand mean set-point latency %.1f ms\n",
                  out.n_participants, sim_o.out_dir.c_str(),
                  out.grand_mean_latency_s * 1000.0);
      return 0;
    }
    if (inspect->parsed()) {
      const std::string bytes = mobipipe::read_binary_file(inspect_path);
      const mobipipe::RecordingSet set = mobipipe::parse_xdf(bytes);
      std::cout << mobipipe::inspect_recording(set);
      return 0;
    }
    if (config_cmd->parsed()) {
      const std::string text =
          mobipipe::serialize_config(mobipipe::PipelineConfig{});
      if (config_out.empty())
        std::cout << text;
      else
        mobipipe::write_binary_file(config_out, text);
      return 0;
    }
    if (align_cmd->parsed()) return run_stage(align_o, mobipipe::Stage::Align);
    if (detect->parsed()) return run_stage(detect_o, mobipipe::Stage::Detect);
    if (pre->parsed()) return run_stage(pre_o, mobipipe::Stage::Preprocess);
    if (ica_cmd->parsed()) return run_stage(ica_o, mobipipe::Stage::Ica);
    if (analyze->parsed())
      return run_stage(analyze_o, mobipipe::Stage::Analyze);
    if (run->parsed()) return run_stage(run_o, mobipipe::Stage::Analyze);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
