#include "dmd/augmentor.hpp"

#include "dmd/errors.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numbers>
#include <thread>

namespace dmd {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kZeroAction = 1e-8;

using ordered_json = nlohmann::ordered_json;

}  // namespace

RotationRanges RotationRanges::defaults() {
  return {{-10 * kDeg, 10 * kDeg}, {-10 * kDeg, 10 * kDeg}, {-10 * kDeg, 15 * kDeg}};
}

PerturbationSpec PerturbationSpec::pushing() {
  PerturbationSpec s;
  s.lo = 0.02;
  s.hi = 0.04;
  s.direction_mode = DirectionMode::InPlane;
  s.plane_normal = Vec3::UnitZ();
  return s;
}

PerturbationSpec PerturbationSpec::reconstruction() {
  PerturbationSpec s;
  s.lo = 0.2;
  s.hi = 1.0;
  return s;
}

void PerturbationSpec::validate() const {
  if (!(lo > 0.0 && lo < hi)) throw InvalidSpec("perturbation range must satisfy 0 < lo < hi");
  if (samples_per_frame < 1) throw InvalidSpec("samples_per_frame must be >= 1");
  if (lookahead_k < 1) throw InvalidSpec("lookahead_k must be >= 1");
  if (direction_mode == DirectionMode::InPlane && !(plane_normal.norm() > 0.0)) {
    throw InvalidSpec("in-plane mode needs a non-zero plane normal");
  }
}

Perturbation sample_perturbation(const PerturbationSpec& spec, const Scale& scale, const Trajectory& t,
                                 const RngPath& path, std::uint64_t master_seed) {
  spec.validate();
  if (path.frame < 0 || static_cast<std::size_t>(path.frame) >= t.frames.size()) {
    throw IndexOutOfRange("sample_perturbation: frame " + std::to_string(path.frame) + " out of range");
  }
  const int frame_index = t.frames[path.frame].index;
  Perturbation p;
  p.source_frame_index = path.frame;
  p.sample_index = path.sample;
  p.rng_path = path;
  const FrameTag from = FrameTag::perturbed(frame_index, path.sample);
  const FrameTag to = FrameTag::camera(frame_index);
  if (spec.identity_perturbations) {
    p.t_from_tilde = RigidTransformd::Identity(from, to);
    return p;
  }

  double lo = spec.lo;
  double hi = spec.hi;
  if (!scale.is_metric()) {
    if (!(scale.s > 0.0)) throw MissingScale("non-metric trajectory '" + t.id + "' has no scale");
    lo *= scale.s;
    hi *= scale.s;
  }

  Engine rng = make_engine(master_seed, {hash_string(path.trajectory_id),
                                         static_cast<std::uint64_t>(path.frame),
                                         static_cast<std::uint64_t>(path.sample)});
  Vec3 dir;
  if (spec.direction_mode == PerturbationSpec::DirectionMode::Sphere) {
    const double z = uniform(rng, -1.0, 1.0);
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    dir = Vec3(r * std::cos(phi), r * std::sin(phi), z);
  } else {
    const Vec3 n = spec.plane_normal.normalized();
    const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 e1 = (helper - helper.dot(n) * n).normalized();
    const Vec3 e2 = n.cross(e1);
    const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    dir = std::cos(theta) * e1 + std::sin(theta) * e2;
  }
  const double magnitude = uniform(rng, lo, hi);

  Rotationd rot;
  if (spec.rotation) {
    const auto& rr = *spec.rotation;
    const double yaw = uniform(rng, rr.yaw.lo, rr.yaw.hi);
    const double pitch = uniform(rng, rr.pitch.lo, rr.pitch.hi);
    const double roll = uniform(rng, rr.roll.lo, rr.roll.hi);
    rot = euler_to_rotation(yaw, pitch, roll);
  }
  p.t_from_tilde = RigidTransformd(rot, magnitude * dir, from, to);
  return p;
}

Action compute_label(const Perturbation& p, const Trajectory& t, int k) {
  const std::size_t src = static_cast<std::size_t>(p.source_frame_index);
  if (k < 1 || src + static_cast<std::size_t>(k) >= t.frames.size()) {
    throw IndexOutOfRange("compute_label: frame " + std::to_string(src) + " + k=" + std::to_string(k) +
                          " exceeds " + std::to_string(t.frames.size()) + " frames of '" + t.id + "'");
  }
  const RigidTransformd& t_from_w = t.frames[src].cam_from_world;
  const RigidTransformd& tk_from_w = t.frames[src + k].cam_from_world;
  const RigidTransformd tilde_from_tk = compose(inverse(p.t_from_tilde), compose(t_from_w, inverse(tk_from_w)));

  Action a;
  a.translation = tilde_from_tk.translation();
  a.rotation = rotation_to_vector(tilde_from_tk.rotation());
  const double n = a.translation.norm();
  if (n < kZeroAction) {
    throw ZeroAction("label for frame " + std::to_string(src) + " sample " +
                     std::to_string(p.sample_index) + " of '" + t.id + "' has zero translation");
  }
  if (!t.scale.is_metric()) a.translation /= n;
  return a;
}

double overshoot_fraction(std::span<const AugmentedSample> samples, const Trajectory& t) {
  if (samples.empty()) return 0.0;
  std::size_t backward = 0;
  for (const auto& s : samples) {
    const Action expert = expert_action(t, static_cast<std::size_t>(s.provenance.source_frame_index));
    if (s.action.translation.dot(expert.translation) < 0.0) ++backward;
  }
  return static_cast<double>(backward) / static_cast<double>(samples.size());
}

std::vector<AugmentedSample> augment_trajectory(const Trajectory& t, std::span<const Image> images,
                                                std::span<const SimWorld> scenes,
                                                const PerturbationSpec& spec, const Synthesizer& synth,
                                                const AugmentOptions& options) {
  spec.validate();
  const int k = spec.lookahead_k;
  const int n_frames = static_cast<int>(t.frames.size());
  if (n_frames < k + 1) {
    throw IndexOutOfRange("augment: trajectory '" + t.id + "' has " + std::to_string(n_frames) +
                          " frames, needs at least k+1 = " + std::to_string(k + 1));
  }
  if (images.size() != t.frames.size()) {
    throw DimensionMismatch("augment: " + std::to_string(images.size()) + " images for " +
                            std::to_string(n_frames) + " frames");
  }
  if (!scenes.empty() && scenes.size() != t.frames.size()) {
    throw DimensionMismatch("augment: scene count does not match frame count");
  }

  const int eligible = n_frames - k;
  const int per_frame = spec.samples_per_frame;
  const std::size_t total = static_cast<std::size_t>(eligible) * per_frame;
  const SynthesizerId synth_id = synth.id();

  struct Slot {
    std::optional<AugmentedSample> sample;
    std::exception_ptr error;
    bool zero_action = false;
  };
  std::vector<Slot> slots(total);

  // Under Abort, a failure stops the remaining jobs from starting.
  const bool abort_on_error = options.on_failure == AugmentOptions::FailurePolicy::Abort;
  std::atomic<bool> failed{false};
  auto work = [&](std::size_t job) {
    if (abort_on_error && failed.load()) return;
    const int frame = static_cast<int>(job / per_frame);
    const int sample = static_cast<int>(job % per_frame);
    Slot& slot = slots[job];
    try {
      const RngPath path{t.id, frame, sample};
      Perturbation p = sample_perturbation(spec, t.scale, t, path, options.master_seed);
      Action label;
      try {
        label = compute_label(p, t, k);
      } catch (const ZeroAction&) {
        slot.zero_action = true;
        return;
      }
      SynthRequest req;
      req.image = images[frame];
      req.t_from_tilde = p.t_from_tilde;
      req.seed = derive_seed(options.master_seed, {hash_string(t.id), static_cast<std::uint64_t>(frame),
                                                   static_cast<std::uint64_t>(sample), 0x73796eULL});
      req.source_cam_from_world = t.frames[frame].cam_from_world;
      if (!scenes.empty()) req.scene = scenes[frame];
      req.provenance = t.id + "#" + std::to_string(frame) + "/" + std::to_string(sample);
      slot.sample = AugmentedSample{synth.synthesize(req), std::move(label), k, std::move(p), synth_id};
    } catch (...) {
      slot.error = std::current_exception();
      failed = true;
    }
  };

  const int threads = std::max(1, options.threads);
  if (threads == 1) {
    for (std::size_t j = 0; j < total; ++j) work(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (int i = 0; i < threads; ++i) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < total; j = next++) work(j);
      });
    }
  }

  if (abort_on_error && failed) {
    for (const Slot& slot : slots) {
      if (slot.error) std::rethrow_exception(slot.error);
    }
  }

  std::vector<AugmentedSample> out;
  out.reserve(total);
  std::size_t dropped_zero = 0;
  std::size_t dropped_overshoot = 0;
  for (std::size_t j = 0; j < total; ++j) {
    Slot& slot = slots[j];
    if (slot.error) {
      try {
        std::rethrow_exception(slot.error);
      } catch (const std::exception& e) {
        spdlog::warn("augment '{}': skipping sample {}: {}", t.id, j, e.what());
      }
      continue;
    }
    if (slot.zero_action) {
      ++dropped_zero;
      continue;
    }
    if (spec.filter_overshoot) {
      const Action expert = expert_action(t, static_cast<std::size_t>(slot.sample->provenance.source_frame_index));
      if (slot.sample->action.translation.dot(expert.translation) < 0.0) {
        ++dropped_overshoot;
        continue;
      }
    }
    out.push_back(std::move(*slot.sample));
  }
  if (dropped_zero > 0) spdlog::warn("augment '{}': dropped {} zero-translation label(s)", t.id, dropped_zero);
  if (dropped_overshoot > 0) spdlog::info("augment '{}': filtered {} overshooting sample(s)", t.id, dropped_overshoot);
  return out;
}

Image jitter_image(const Image& img, double gain, double bias) {
  Image out = img;
  for (auto& p : out.pixels) {
    const double v = gain * p + bias * 255.0;
    p = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
  }
  return out;
}

namespace {

ordered_json spec_json(const PerturbationSpec& s) {
  ordered_json j;
  j["lo"] = s.lo;
  j["hi"] = s.hi;
  j["direction_mode"] = s.direction_mode == PerturbationSpec::DirectionMode::Sphere ? "sphere" : "in_plane";
  j["plane_normal"] = {s.plane_normal.x(), s.plane_normal.y(), s.plane_normal.z()};
  if (s.rotation) {
    const auto& r = *s.rotation;
    j["rotation"] = {{"yaw", {r.yaw.lo, r.yaw.hi}}, {"pitch", {r.pitch.lo, r.pitch.hi}},
                     {"roll", {r.roll.lo, r.roll.hi}}};
  } else {
    j["rotation"] = nullptr;
  }
  j["samples_per_frame"] = s.samples_per_frame;
  j["lookahead_k"] = s.lookahead_k;
  j["identity_perturbations"] = s.identity_perturbations;
  j["filter_overshoot"] = s.filter_overshoot;
  return j;
}

ordered_json vec3_json(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const ordered_json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

std::string sample_ref(const AugmentedSample& s) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "/%06d_%02d.png", s.provenance.source_frame_index, s.provenance.sample_index);
  return s.provenance.rng_path.trajectory_id + buf;
}

}  // namespace

void save_augmented(const std::filesystem::path& dir, const PerturbationSpec& spec, const SynthesizerId& synth,
                    std::uint64_t master_seed, const std::vector<AugmentedSample>& samples) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "aug.jsonl");
  if (!out) throw std::runtime_error("cannot write " + (dir / "aug.jsonl").string());
  ordered_json header;
  header["v"] = 1;
  header["spec"] = spec_json(spec);
  header["synthesizer"] = {{"kind", to_string(synth.kind)}, {"version", synth.version}};
  header["seed"] = master_seed;
  out << header.dump() << '\n';
  for (const auto& s : samples) {
    const std::string ref = sample_ref(s);
    std::filesystem::create_directories((dir / ref).parent_path());
    write_png(dir / ref, s.image);
    const auto& p = s.provenance.t_from_tilde;
    ordered_json j;
    j["img"] = ref;
    j["action"] = {{"t", vec3_json(s.action.translation)},
                   {"r", s.action.rotation ? vec3_json(*s.action.rotation) : ordered_json(nullptr)}};
    j["k"] = s.k_used;
    j["traj"] = s.provenance.rng_path.trajectory_id;
    j["frame"] = s.provenance.source_frame_index;
    j["sample"] = s.provenance.sample_index;
    j["t_from_tilde"] = {{"q", {p.rotation().w(), p.rotation().x(), p.rotation().y(), p.rotation().z()}},
                         {"t", vec3_json(p.translation())},
                         {"from", p.from().str()},
                         {"to", p.to().str()}};
    out << j.dump() << '\n';
  }
}

std::vector<AugmentedSample> load_augmented(const std::filesystem::path& dir) {
  std::ifstream in(dir / "aug.jsonl");
  if (!in) throw MissingInput("no aug.jsonl in " + dir.string());
  std::vector<AugmentedSample> out;
  std::string line;
  std::size_t line_no = 0;
  SynthesizerId synth;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = ordered_json::parse(line);
      if (line_no == 1) {
        if (j.at("v").get<int>() != 1) throw VersionMismatch("unsupported aug.jsonl version");
        synth.kind = parse_backend_kind(j.at("synthesizer").at("kind").get<std::string>());
        synth.version = j.at("synthesizer").at("version").get<std::string>();
        continue;
      }
      AugmentedSample s;
      s.image = read_png(dir / j.at("img").get<std::string>());
      s.action.translation = vec3_from(j.at("action").at("t"));
      if (!j.at("action").at("r").is_null()) s.action.rotation = vec3_from(j.at("action").at("r"));
      s.k_used = j.at("k").get<int>();
      s.provenance.source_frame_index = j.at("frame").get<int>();
      s.provenance.sample_index = j.at("sample").get<int>();
      s.provenance.rng_path = {j.at("traj").get<std::string>(), s.provenance.source_frame_index,
                               s.provenance.sample_index};
      const auto& q = j.at("t_from_tilde").at("q");
      // Frame indices equal positions for every trajectory this pipeline writes.
      s.provenance.t_from_tilde = RigidTransformd(
          Rotationd::FromWxyz(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                              q.at(3).get<double>()),
          vec3_from(j.at("t_from_tilde").at("t")),
          FrameTag::perturbed(s.provenance.source_frame_index, s.provenance.sample_index),
          FrameTag::camera(s.provenance.source_frame_index));
      s.synthesizer = synth;
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

}  // namespace dmd
