#include "dmd/harness.hpp"

#include "dmd/errors.hpp"
#include "dmd/rng.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dmd {

double angle_error(const Vec3& pred, const Vec3& gt) {
  if (std::abs(pred.norm() - 1.0) > 1e-6 || std::abs(gt.norm() - 1.0) > 1e-6) {
    throw NotUnit("angle_error: inputs must be unit vectors");
  }
  return std::acos(std::clamp(pred.dot(gt), -1.0, 1.0));
}

double median(std::vector<double> values) {
  if (values.empty()) throw EmptyTestSet("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

OfflineReport offline_eval(const std::function<Vec3(const Image&)>& predict, std::span<const Episode> test) {
  std::vector<double> errors;
  for (const auto& ep : test) {
    for (std::size_t i = 0; i + 1 < ep.trajectory.frames.size(); ++i) {
      Vec3 gt = expert_action(ep.trajectory, i).translation;
      gt.normalize();
      errors.push_back(angle_error(predict(ep.images[i]), gt));
    }
  }
  if (errors.empty()) throw EmptyTestSet("offline_eval: no test frames");
  OfflineReport r;
  r.test_frames = errors.size();
  r.median_angle_error = median(std::move(errors));
  return r;
}

OfflineReport offline_eval(const PolicyNet& net, std::span<const Episode> test) {
  return offline_eval([&net](const Image& img) { return net.predict(img); }, test);
}

std::unique_ptr<Synthesizer> make_synthesizer(SynthesizerId::Kind kind, const ExperimentConfig& cfg) {
  switch (kind) {
    case SynthesizerId::Kind::Oracle:
      return std::make_unique<OracleSynthesizer>(cfg.sim);
    case SynthesizerId::Kind::Homography:
      return std::make_unique<HomographySynthesizer>(OrthoIntrinsics::from(cfg.sim), cfg.sim.camera_height);
    case SynthesizerId::Kind::Remote:
      return std::make_unique<RemoteSynthesizer>(cfg.remote);
    case SynthesizerId::Kind::Identity:
      return std::make_unique<IdentitySynthesizer>();
  }
  throw ConfigError("unknown synthesizer backend");
}

std::vector<LabeledImage> expert_samples(std::span<const Episode> demos) {
  std::vector<LabeledImage> out;
  for (const auto& ep : demos) {
    for (std::size_t i = 0; i + 1 < ep.trajectory.frames.size(); ++i) {
      const Action a = expert_action(ep.trajectory, i);
      if (a.translation.norm() < 1e-8) {
        spdlog::warn("'{}' frame {}: zero expert action skipped", ep.trajectory.id, i);
        continue;
      }
      out.push_back({ep.images[i], a});
    }
  }
  return out;
}

std::vector<AugmentedSample> augment_episodes(std::span<const Episode> demos, const PerturbationSpec& spec,
                                              const Synthesizer& synth, std::uint64_t seed, int threads) {
  std::vector<AugmentedSample> out;
  AugmentOptions opts;
  opts.master_seed = seed;
  opts.threads = threads;
  for (const auto& ep : demos) {
    if (static_cast<int>(ep.trajectory.frames.size()) < spec.lookahead_k + 1) {
      spdlog::warn("'{}' is too short for k={}; not augmented", ep.trajectory.id, spec.lookahead_k);
      continue;
    }
    std::vector<SimWorld> scenes;
    for (const auto& st : ep.log.steps) scenes.push_back(st.state);
    if (scenes.size() != ep.trajectory.frames.size()) scenes.clear();
    auto samples = augment_trajectory(ep.trajectory, ep.images, scenes, spec, synth, opts);
    std::move(samples.begin(), samples.end(), std::back_inserter(out));
  }
  return out;
}

void append_flip_jitter(std::vector<LabeledImage>& set, bool flip, bool jitter, std::uint64_t seed) {
  if (flip) {
    const std::size_t n = set.size();
    for (std::size_t i = 0; i < n; ++i) set.push_back(flip_augment(set[i]));
  }
  if (jitter) {
    const std::size_t n = set.size();
    for (std::size_t i = 0; i < n; ++i) {
      Engine rng = make_engine(seed, {0x6a6974ULL, i});
      set.push_back(jitter_augment(set[i], rng));
    }
  }
}

std::vector<LabeledImage> build_training_set(std::span<const Episode> demos, const MethodSpec& method,
                                             const ExperimentConfig& cfg, std::uint64_t seed) {
  std::vector<LabeledImage> set = expert_samples(demos);
  if (method.augment) {
    const auto synth = make_synthesizer(method.backend, cfg);
    for (auto& s : augment_episodes(demos, method.perturbation, *synth, seed, cfg.augment_threads)) {
      set.push_back({std::move(s.image), std::move(s.action)});
    }
  }
  append_flip_jitter(set, method.flip, method.jitter, seed);
  return set;
}

Controller policy_controller(std::shared_ptr<const PolicyNet> net) {
  return [net = std::move(net)](const Image& obs, const SimWorld&) { return net->predict(obs); };
}

Controller expert_controller(const SimConfig& cfg) {
  return [cfg](const Image&, const SimWorld& state) { return world_to_camera_direction(expert_policy(cfg, state)); };
}

ABTrialPlan ABTrialPlan::make(const SimConfig& cfg, std::vector<std::string> methods, int trials_per_method,
                              std::uint64_t seed) {
  if (methods.empty() && trials_per_method > 0) throw ConfigError("A/B plan needs at least one method");
  ABTrialPlan plan;
  plan.methods_ = std::move(methods);
  plan.start_seed_ = derive_seed(seed, {0x73746172ULL});
  plan.assignment_seed_ = derive_seed(seed, {0x61737369676eULL});
  const int total = trials_per_method * static_cast<int>(plan.methods_.size());

  // 1. Start configurations.
  for (int i = 0; i < total; ++i) {
    plan.trials_.push_back({i, sample_start(cfg, plan.start_seed_, static_cast<std::uint64_t>(i)), {}});
  }
  plan.draw_order_.push_back("start");

  // 2. Balanced method assignment, shuffled independently of the starts.
  std::vector<std::string> labels;
  for (int t = 0; t < trials_per_method; ++t) labels.insert(labels.end(), plan.methods_.begin(), plan.methods_.end());
  Engine rng(plan.assignment_seed_);
  for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[uniform_index(rng, i)]);
  for (int i = 0; i < total; ++i) plan.trials_[static_cast<std::size_t>(i)].method = labels[static_cast<std::size_t>(i)];
  plan.draw_order_.push_back("assignment");
  return plan;
}

void ABTrialPlan::begin_execution() {
  if (executed_) throw PlanReuse("this A/B plan has already been executed");
  executed_ = true;
}

EpisodeLog run_episode(const SimConfig& cfg, const StartConfig& start, const Controller& controller,
                       std::uint64_t seed) {
  EpisodeLog log;
  log.seed = seed;
  log.start = start;
  SimWorld w = SimWorld::from_start(start);
  w.outcome = classify(cfg, w);
  while (!w.terminal()) {
    const Image obs = render(cfg, w, camera_pose(cfg, w.gripper, FrameTag::camera(w.steps)));
    Vec2 dir = camera_to_world_direction(controller(obs, w));
    const double n = dir.norm();
    dir = n > 1e-12 ? Vec2(dir / n) : Vec2::UnitX();
    log.steps.push_back({w, dir, {}});
    w = step(cfg, w, dir);
  }
  log.steps.push_back({w, Vec2::Zero(), {}});
  log.outcome = w.outcome;
  log.steps_used = w.steps;
  return log;
}

OnlineReport run_ab(ABTrialPlan& plan, const std::map<std::string, Controller>& controllers, const SimConfig& cfg) {
  for (const auto& m : plan.methods()) {
    if (!controllers.count(m)) throw ConfigError("no controller for method '" + m + "'");
  }
  plan.begin_execution();
  OnlineReport report;
  for (const auto& m : plan.methods()) report.per_method[m];
  for (const auto& trial : plan.trials()) {
    TrialResult r;
    r.index = trial.index;
    r.method = trial.method;
    r.log = run_episode(cfg, trial.start, controllers.at(trial.method), plan.start_seed());
    r.outcome = r.log.outcome;
    r.steps = r.log.steps_used;
    auto& stats = report.per_method[trial.method];
    ++stats.trials;
    if (r.outcome == Outcome::Success) ++stats.successes;
    report.trials.push_back(std::move(r));
  }
  return report;
}

std::vector<KSweepRow> k_sweep(std::span<const Episode> train_set, std::span<const Episode> test, const std::vector<int>& ks,
                               const MethodSpec& base, const ExperimentConfig& cfg, std::uint64_t seed) {
  std::vector<KSweepRow> rows;
  for (int k : ks) {
    MethodSpec m = base;
    m.augment = true;
    m.perturbation.lookahead_k = k;

    const auto synth = make_synthesizer(m.backend, cfg);
    const auto aug = augment_episodes(train_set, m.perturbation, *synth, seed, cfg.augment_threads);
    // Overshoot is measured per trajectory against its own expert steps.
    std::size_t backward = 0;
    for (const auto& ep : train_set) {
      std::vector<AugmentedSample> mine;
      for (const auto& s : aug) {
        if (s.provenance.rng_path.trajectory_id == ep.trajectory.id) mine.push_back(s);
      }
      backward += static_cast<std::size_t>(std::llround(overshoot_fraction(mine, ep.trajectory) * mine.size()));
    }

    std::vector<LabeledImage> set = expert_samples(train_set);
    for (const auto& s : aug) set.push_back({s.image, s.action});
    append_flip_jitter(set, m.flip, m.jitter, seed);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const auto result = dmd::train(set, cfg.arch, tc);
    const auto report = offline_eval(result.net, test);
    rows.push_back({k, report.median_angle_error, aug.empty() ? 0.0 : double(backward) / double(aug.size())});
  }
  return rows;
}

std::string online_report_json(const OnlineReport& report) {
  nlohmann::ordered_json j;
  j["config_hash"] = report.config_hash;
  auto& methods = j["methods"] = nlohmann::ordered_json::object();
  for (const auto& [name, s] : report.per_method) {
    methods[name] = {{"trials", s.trials}, {"successes", s.successes}, {"success_rate", s.success_rate()}};
  }
  auto& trials = j["trials"] = nlohmann::ordered_json::array();
  for (const auto& t : report.trials) {
    trials.push_back({{"index", t.index},
                      {"method", t.method},
                      {"outcome", to_string(t.outcome)},
                      {"steps", t.steps},
                      {"log", nlohmann::ordered_json::parse(episode_log_json(t.log))}});
  }
  return j.dump(1);
}

std::string online_report_csv(const OnlineReport& report) {
  std::ostringstream out;
  out << "index,method,outcome,steps\n";
  for (const auto& t : report.trials) out << t.index << ',' << t.method << ',' << to_string(t.outcome) << ',' << t.steps << '\n';
  return out.str();
}

}  // namespace dmd
