// Command-line entry point: dataset generation, triple export, augmentation,
// training and evaluation. Every subcommand writes its resolved config next
// to its outputs.

#include "dmd/config.hpp"
#include "dmd/errors.hpp"
#include "dmd/report.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace dmd;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> backend;
  std::optional<int> k;
  std::optional<int> demos;
  std::optional<int> epochs;
  std::optional<int> threads;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON run config (relative paths resolve against its directory)");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--backend", f.backend, "synthesizer backend: oracle, homography, identity, remote");
  cmd->add_option("--k", f.k, "lookahead k");
  cmd->add_option("--demos", f.demos, "number of training demos");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--threads", f.threads, "augmentation worker threads");
  cmd->add_flag("--quiet", f.quiet, "only log warnings and errors");
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg = f.config.empty() ? parse_run_config("{}") : load_run_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = fs::absolute(*f.out);
  if (f.backend) {
    try {
      cfg.backend = parse_backend_kind(*f.backend);
    } catch (const Error& e) {
      throw ConfigError(std::string("--backend: ") + e.what());
    }
  }
  if (f.k) cfg.perturbation.lookahead_k = *f.k;
  if (f.demos) cfg.harness.demos = *f.demos;
  if (f.epochs) cfg.experiment.train.epochs = *f.epochs;
  if (f.threads) cfg.experiment.augment_threads = *f.threads;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const RunConfig& cfg) {
  // --out is made absolute against the working directory; a config-file
  // value is relative to the config's directory.
  const fs::path dir = cfg.resolve(cfg.out);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

void write_resolved(const fs::path& dir, const std::string& command, const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_hash"] = config_hash(cfg);
  j["config"] = nlohmann::ordered_json::parse(dump_run_config(cfg));
  write_text(dir / (command + ".config.json"), j.dump(2) + "\n");
}

fs::path input_path(const RunConfig& cfg, const std::string& given, const fs::path& fallback) {
  const fs::path p = given.empty() ? cfg.resolve(cfg.out) / fallback : fs::path(given);
  if (!fs::exists(p)) throw MissingInput("input not found: " + p.string());
  return p;
}

std::vector<Episode> test_episodes(const RunConfig& cfg, const std::string& input) {
  if (!input.empty()) return load_episodes(input_path(cfg, input, {}));
  return generate_demos(cfg.experiment.sim, static_cast<std::size_t>(cfg.harness.test_demos), cfg.harness.test_seed);
}

int cmd_gen_demos(const RunConfig& cfg, std::optional<int> n) {
  const auto dir = out_dir(cfg);
  const auto count = static_cast<std::size_t>(n.value_or(cfg.harness.demos));
  save_episodes(dir / "demos", generate_demos(cfg.experiment.sim, count, cfg.seed));
  write_resolved(dir, "gen-demos", cfg);
  spdlog::info("wrote {} demos to {}", count, (dir / "demos").string());
  return 0;
}

int cmd_gen_play(const RunConfig& cfg, std::optional<int> n, int steps) {
  const auto dir = out_dir(cfg);
  const auto count = static_cast<std::size_t>(n.value_or(cfg.harness.play_trajectories));
  save_episodes(dir / "play", generate_play(cfg.experiment.sim, count, cfg.seed, steps));
  write_resolved(dir, "gen-play", cfg);
  spdlog::info("wrote {} play trajectories to {}", count, (dir / "play").string());
  return 0;
}

int cmd_export_triples(const RunConfig& cfg, const std::string& input, std::optional<int> n) {
  const auto src = input_path(cfg, input, "play");
  const auto dir = out_dir(cfg);
  const auto per = static_cast<std::size_t>(n.value_or(100));
  std::ofstream f(dir / "triples.jsonl", std::ios::binary | std::ios::trunc);
  std::size_t total = 0;
  for (const auto& ep : load_episodes(src, false)) {
    const auto triples = export_finetune_triples(ep.trajectory, per, cfg.seed);
    write_finetune_triples(f, triples);
    total += triples.size();
  }
  write_resolved(dir, "export-triples", cfg);
  spdlog::info("wrote {} triples to {}", total, (dir / "triples.jsonl").string());
  return 0;
}

int cmd_augment(const RunConfig& cfg, const std::string& input) {
  const auto src = input_path(cfg, input, "demos");
  const auto dir = out_dir(cfg);
  const auto demos = load_episodes(src);
  const auto synth = make_synthesizer(cfg.backend, cfg.experiment);
  const auto samples = augment_episodes(demos, cfg.perturbation, *synth, cfg.seed, cfg.experiment.augment_threads);
  save_augmented(dir / "aug", cfg.perturbation, synth->id(), cfg.seed, samples);
  write_resolved(dir, "augment", cfg);
  spdlog::info("wrote {} augmented samples to {}", samples.size(), (dir / "aug").string());
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& input, const std::string& aug, const std::string& method_name,
              bool flip, bool jitter) {
  const auto src = input_path(cfg, input, "demos");
  const auto dir = out_dir(cfg);
  const auto demos = load_episodes(src);
  MethodSpec method = named_method(method_name, cfg);
  method.flip = method.flip || flip;
  method.jitter = method.jitter || jitter;

  std::vector<LabeledImage> set;
  if (!aug.empty()) {
    // Expert samples plus pre-computed D_aug from `augment`.
    set = expert_samples(demos);
    for (auto& s : load_augmented(input_path(cfg, aug, {}))) set.push_back({std::move(s.image), std::move(s.action)});
    append_flip_jitter(set, method.flip, method.jitter, cfg.seed);
  } else {
    set = build_training_set(demos, method, cfg.experiment, cfg.seed);
  }

  TrainConfig tc = cfg.experiment.train;
  tc.seed = cfg.seed;
  const auto result = train(set, cfg.experiment.arch, tc);
  fs::create_directories(dir / "policies");
  save_checkpoint(dir / "policies" / (method_name + ".ckpt"), result.net, tc);
  std::string csv = "epoch,loss\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "0,%.17g\n", result.initial_loss);
  csv += buf;
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, result.epoch_loss[e]);
    csv += buf;
  }
  write_text(dir / "policies" / (method_name + ".loss.csv"), csv);
  write_resolved(dir, "train", cfg);
  spdlog::info("trained '{}' on {} samples; final loss {:.4f}", method_name, set.size(),
               result.epoch_loss.empty() ? result.initial_loss : result.epoch_loss.back());
  return 0;
}

std::pair<std::string, fs::path> split_policy(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos) {
    fs::path p(arg);
    return {p.stem().string(), p};
  }
  return {arg.substr(0, eq), fs::path(arg.substr(eq + 1))};
}

int cmd_eval_offline(const RunConfig& cfg, const std::vector<std::string>& policies, const std::string& input) {
  if (policies.empty()) throw ConfigError("eval-offline needs at least one --policy");
  const auto dir = out_dir(cfg);
  const auto test = test_episodes(cfg, input);
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash(cfg);
  auto& res = j["methods"] = nlohmann::ordered_json::object();
  for (const auto& arg : policies) {
    const auto [name, path] = split_policy(arg);
    const auto net = load_checkpoint(input_path(cfg, path.string(), {}));
    const auto r = offline_eval(net, test);
    res[name] = {{"median_angle_error", r.median_angle_error}, {"test_frames", r.test_frames}};
    spdlog::info("{}: median angle error {:.4f} rad over {} frames", name, r.median_angle_error, r.test_frames);
  }
  write_text(dir / "offline.json", j.dump(2) + "\n");
  write_resolved(dir, "eval-offline", cfg);
  return 0;
}

int cmd_eval_online(const RunConfig& cfg, const std::vector<std::string>& policies, std::optional<int> trials) {
  if (policies.empty()) throw ConfigError("eval-online needs at least one --policy (or 'expert')");
  const auto dir = out_dir(cfg);
  std::map<std::string, Controller> controllers;
  std::vector<std::string> names;
  for (const auto& arg : policies) {
    const auto [name, path] = split_policy(arg);
    if (arg == "expert") {
      controllers[name] = expert_controller(cfg.experiment.sim);
    } else {
      controllers[name] = policy_controller(std::make_shared<PolicyNet>(load_checkpoint(input_path(cfg, path.string(), {}))));
    }
    if (std::find(names.begin(), names.end(), name) != names.end()) throw ConfigError("duplicate policy name " + name);
    names.push_back(name);
  }
  auto plan = ABTrialPlan::make(cfg.experiment.sim, names, trials.value_or(cfg.harness.trials_per_method), cfg.seed);
  auto report = run_ab(plan, controllers, cfg.experiment.sim);
  report.config_hash = config_hash(cfg);
  write_text(dir / "online.json", online_report_json(report) + "\n");
  write_text(dir / "online.csv", online_report_csv(report));
  write_resolved(dir, "eval-online", cfg);
  for (const auto& [name, s] : report.per_method) {
    spdlog::info("{}: {}/{} successes ({:.1f}%)", name, s.successes, s.trials, 100.0 * s.success_rate());
  }
  return 0;
}

int cmd_k_sweep(const RunConfig& cfg) {
  const auto dir = out_dir(cfg);
  const auto report = run_k_sweep(cfg);
  write_text(dir / "k_sweep.json", k_sweep_json(report));
  write_text(dir / "k_sweep.csv", k_sweep_csv(report));
  write_resolved(dir, "k-sweep", cfg);
  for (int k : report.ks) {
    spdlog::info("k={}: mean median error {:.4f} rad, overshoot {:.4f}", k, report.mean_error(k),
                 report.mean_overshoot(k));
  }
  return 0;
}

int cmd_report(const RunConfig& cfg, bool offline_only) {
  const auto dir = out_dir(cfg);
  const auto report = run_comparison(cfg, cfg.harness.methods, !offline_only);
  write_text(dir / "report.json", comparison_json(report));
  write_text(dir / "report.csv", comparison_csv(report));
  write_resolved(dir, "report", cfg);
  for (const auto& m : report.methods) {
    spdlog::info("{}: mean success {:.1f}%, mean offline error {:.4f} rad", m, 100.0 * report.mean_success(m),
                 report.mean_error(m));
  }
  return 0;
}

void print_error(const std::string& code, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = code;
  j["message"] = message;
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Off-trajectory augmentation pipeline for eye-in-hand imitation learning"};
  app.require_subcommand(1);

  CommonFlags common;
  std::optional<int> n;
  int play_steps = 120;
  std::string input, aug, method = "bc";
  std::vector<std::string> policies;
  bool flip = false, jitter = false, offline_only = false;

  auto* gen_demos = app.add_subcommand("gen-demos", "generate expert demos in the pushing simulator");
  gen_demos->add_option("--n", n, "number of demos");
  auto* gen_play = app.add_subcommand("gen-play", "generate random play trajectories");
  gen_play->add_option("--n", n, "number of trajectories");
  gen_play->add_option("--steps", play_steps, "steps per trajectory");
  auto* triples = app.add_subcommand("export-triples", "sample (I_a, I_b, a_T_b) finetuning triples from play data");
  triples->add_option("--input", input, "episode directory (default <out>/play)");
  triples->add_option("--n", n, "triples per trajectory");
  auto* augment = app.add_subcommand("augment", "synthesize perturbed views and k-step labels");
  augment->add_option("--input", input, "demo directory (default <out>/demos)");
  auto* train_cmd = app.add_subcommand("train", "train a policy");
  train_cmd->add_option("--input", input, "demo directory (default <out>/demos)");
  train_cmd->add_option("--aug", aug, "augmented-sample directory from `augment`");
  train_cmd->add_option("--method", method, "training recipe (bc, dmd, dmd_flip_jitter, ...)");
  train_cmd->add_flag("--flip", flip, "add mirrored copies");
  train_cmd->add_flag("--jitter", jitter, "add colour-jittered copies");
  auto* eval_off = app.add_subcommand("eval-offline", "median angle error on held-out demos");
  eval_off->add_option("--policy", policies, "[name=]checkpoint")->required();
  eval_off->add_option("--input", input, "test demo directory (default: generated from harness.test_seed)");
  auto* eval_on = app.add_subcommand("eval-online", "randomized A/B trials in the simulator");
  eval_on->add_option("--policy", policies, "[name=]checkpoint, or 'expert'")->required();
  eval_on->add_option("--n", n, "trials per method");
  auto* ksweep = app.add_subcommand("k-sweep", "offline error and overshoot fraction versus lookahead k");
  auto* report = app.add_subcommand("report", "multi-seed method comparison (offline + online)");
  report->add_flag("--offline-only", offline_only, "skip the A/B trials");

  for (auto* cmd : {gen_demos, gen_play, triples, augment, train_cmd, eval_off, eval_on, ksweep, report}) {
    add_common(cmd, common);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  spdlog::set_level(common.quiet ? spdlog::level::warn : spdlog::level::info);
  try {
    const RunConfig cfg = resolve_config(common);
    if (*gen_demos) return cmd_gen_demos(cfg, n);
    if (*gen_play) return cmd_gen_play(cfg, n, play_steps);
    if (*triples) return cmd_export_triples(cfg, input, n);
    if (*augment) return cmd_augment(cfg, input);
    if (*train_cmd) return cmd_train(cfg, input, aug, method, flip, jitter);
    if (*eval_off) return cmd_eval_offline(cfg, policies, input);
    if (*eval_on) return cmd_eval_online(cfg, policies, n);
    if (*ksweep) return cmd_k_sweep(cfg);
    if (*report) return cmd_report(cfg, offline_only);
  } catch (const SynthesizerError& e) {
    print_error(e.code(), e.what());
    return 3;
  } catch (const Error& e) {
    print_error(e.code(), e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error("InternalError", e.what());
    return 1;
  }
  return 0;
}
