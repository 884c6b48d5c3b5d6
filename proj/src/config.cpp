#include "dmd/config.hpp"

#include "dmd/errors.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace dmd {

using json = nlohmann::ordered_json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& field, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

json angle_json(const AngleRange& r) { return json::array({r.lo, r.hi}); }

AngleRange angle_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(where + ": expected [lo, hi] in radians");
  return {j[0].get<double>(), j[1].get<double>()};
}

json to_json(const RunConfig& c) {
  const auto& s = c.experiment.sim;
  const auto& p = c.perturbation;
  const auto& a = c.experiment.arch;
  const auto& t = c.experiment.train;
  const auto& h = c.harness;
  json j;
  j["seed"] = c.seed;
  j["out"] = c.out.generic_string();
  j["sim"] = {{"table_size", s.table_size},
              {"object_radius", s.object_radius},
              {"gripper_radius", s.gripper_radius},
              {"success_radius", s.success_radius},
              {"step_length", s.step_length},
              {"max_steps", s.max_steps},
              {"camera_height", s.camera_height},
              {"view_window", s.view_window},
              {"resolution", s.resolution},
              {"gripper_row_from_bottom", s.gripper_row_from_bottom},
              {"ring_half_width", s.ring_half_width},
              {"background_level", s.background_level},
              {"target_level", s.target_level},
              {"object_level", s.object_level},
              {"gripper_level", s.gripper_level},
              {"standoff", s.standoff}};
  json rot = nullptr;
  if (p.rotation) {
    rot = {{"yaw", angle_json(p.rotation->yaw)},
           {"pitch", angle_json(p.rotation->pitch)},
           {"roll", angle_json(p.rotation->roll)}};
  }
  j["perturbation"] = {
      {"range", json::array({p.lo, p.hi})},
      {"direction_mode", p.direction_mode == PerturbationSpec::DirectionMode::Sphere ? "sphere" : "in_plane"},
      {"plane_normal", json::array({p.plane_normal.x(), p.plane_normal.y(), p.plane_normal.z()})},
      {"rotation", rot},
      {"samples_per_frame", p.samples_per_frame},
      {"lookahead_k", p.lookahead_k},
      {"identity_perturbations", p.identity_perturbations},
      {"filter_overshoot", p.filter_overshoot}};
  j["synthesizer"] = {{"backend", to_string(c.backend)},
                      {"endpoint", c.remote.endpoint},
                      {"max_in_flight", c.remote.max_in_flight},
                      {"retries", c.remote.retries},
                      {"backoff_ms", c.remote.initial_backoff.count()},
                      {"timeout_s", c.remote.timeout.count()},
                      {"augment_threads", c.experiment.augment_threads}};
  j["policy"] = {{"input_dim", a.input_dim},
                 {"hidden", a.hidden},
                 {"translation_dims", a.translation_dims},
                 {"rotation_head", a.rotation_head}};
  j["train"] = {{"learning_rate", t.learning_rate},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"epsilon", t.epsilon},
                {"batch_size", t.batch_size},
                {"epochs", t.epochs}};
  j["harness"] = {{"demos", h.demos},
                  {"test_demos", h.test_demos},
                  {"play_trajectories", h.play_trajectories},
                  {"trials_per_method", h.trials_per_method},
                  {"seeds", h.seeds},
                  {"k_values", h.k_values},
                  {"methods", h.methods},
                  {"test_seed", h.test_seed}};
  return j;
}

void apply_json(const json& j, RunConfig& c) {
  check_keys(j, "config", {"seed", "out", "sim", "perturbation", "synthesizer", "policy", "train", "harness"});
  read(j, "seed", c.seed, "config");
  if (j.contains("out")) c.out = j.at("out").get<std::string>();

  if (j.contains("sim")) {
    const auto& s = j.at("sim");
    auto& d = c.experiment.sim;
    check_keys(s, "sim",
               {"table_size", "object_radius", "gripper_radius", "success_radius", "step_length", "max_steps",
                "camera_height", "view_window", "resolution", "gripper_row_from_bottom", "ring_half_width",
                "background_level", "target_level", "object_level", "gripper_level", "standoff"});
    read(s, "table_size", d.table_size, "sim");
    read(s, "object_radius", d.object_radius, "sim");
    read(s, "gripper_radius", d.gripper_radius, "sim");
    read(s, "success_radius", d.success_radius, "sim");
    read(s, "step_length", d.step_length, "sim");
    read(s, "max_steps", d.max_steps, "sim");
    read(s, "camera_height", d.camera_height, "sim");
    read(s, "view_window", d.view_window, "sim");
    read(s, "resolution", d.resolution, "sim");
    read(s, "gripper_row_from_bottom", d.gripper_row_from_bottom, "sim");
    read(s, "ring_half_width", d.ring_half_width, "sim");
    read(s, "background_level", d.background_level, "sim");
    read(s, "target_level", d.target_level, "sim");
    read(s, "object_level", d.object_level, "sim");
    read(s, "gripper_level", d.gripper_level, "sim");
    read(s, "standoff", d.standoff, "sim");
  }

  if (j.contains("perturbation")) {
    const auto& p = j.at("perturbation");
    auto& d = c.perturbation;
    check_keys(p, "perturbation",
               {"range", "direction_mode", "plane_normal", "rotation", "samples_per_frame", "lookahead_k",
                "identity_perturbations", "filter_overshoot"});
    if (p.contains("range")) {
      const auto& r = p.at("range");
      if (!r.is_array() || r.size() != 2) throw ConfigError("perturbation.range: expected [lo, hi]");
      d.lo = r[0].get<double>();
      d.hi = r[1].get<double>();
    }
    if (p.contains("direction_mode")) {
      const auto m = p.at("direction_mode").get<std::string>();
      if (m == "sphere") {
        d.direction_mode = PerturbationSpec::DirectionMode::Sphere;
      } else if (m == "in_plane") {
        d.direction_mode = PerturbationSpec::DirectionMode::InPlane;
      } else {
        throw ConfigError("perturbation.direction_mode: expected 'sphere' or 'in_plane', got '" + m + "'");
      }
    }
    if (p.contains("plane_normal")) {
      const auto& n = p.at("plane_normal");
      if (!n.is_array() || n.size() != 3) throw ConfigError("perturbation.plane_normal: expected 3 numbers");
      d.plane_normal = Vec3(n[0].get<double>(), n[1].get<double>(), n[2].get<double>());
    }
    if (p.contains("rotation")) {
      const auto& r = p.at("rotation");
      if (r.is_null()) {
        d.rotation.reset();
      } else if (r.is_string() && r.get<std::string>() == "default") {
        d.rotation = RotationRanges::defaults();
      } else {
        check_keys(r, "perturbation.rotation", {"yaw", "pitch", "roll"});
        RotationRanges rr;
        if (r.contains("yaw")) rr.yaw = angle_from(r.at("yaw"), "perturbation.rotation.yaw");
        if (r.contains("pitch")) rr.pitch = angle_from(r.at("pitch"), "perturbation.rotation.pitch");
        if (r.contains("roll")) rr.roll = angle_from(r.at("roll"), "perturbation.rotation.roll");
        d.rotation = rr;
      }
    }
    read(p, "samples_per_frame", d.samples_per_frame, "perturbation");
    read(p, "lookahead_k", d.lookahead_k, "perturbation");
    read(p, "identity_perturbations", d.identity_perturbations, "perturbation");
    read(p, "filter_overshoot", d.filter_overshoot, "perturbation");
  }

  if (j.contains("synthesizer")) {
    const auto& s = j.at("synthesizer");
    check_keys(s, "synthesizer",
               {"backend", "endpoint", "max_in_flight", "retries", "backoff_ms", "timeout_s", "augment_threads"});
    if (s.contains("backend")) {
      try {
        c.backend = parse_backend_kind(s.at("backend").get<std::string>());
      } catch (const Error& e) {
        throw ConfigError(std::string("synthesizer.backend: ") + e.what());
      }
    }
    read(s, "endpoint", c.remote.endpoint, "synthesizer");
    read(s, "max_in_flight", c.remote.max_in_flight, "synthesizer");
    read(s, "retries", c.remote.retries, "synthesizer");
    if (s.contains("backoff_ms")) c.remote.initial_backoff = std::chrono::milliseconds(s.at("backoff_ms").get<long>());
    if (s.contains("timeout_s")) c.remote.timeout = std::chrono::seconds(s.at("timeout_s").get<long>());
    read(s, "augment_threads", c.experiment.augment_threads, "synthesizer");
  }

  if (j.contains("policy")) {
    const auto& p = j.at("policy");
    auto& a = c.experiment.arch;
    check_keys(p, "policy", {"input_dim", "hidden", "translation_dims", "rotation_head"});
    read(p, "input_dim", a.input_dim, "policy");
    read(p, "hidden", a.hidden, "policy");
    read(p, "translation_dims", a.translation_dims, "policy");
    read(p, "rotation_head", a.rotation_head, "policy");
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    auto& d = c.experiment.train;
    check_keys(t, "train", {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "epochs"});
    read(t, "learning_rate", d.learning_rate, "train");
    read(t, "beta1", d.beta1, "train");
    read(t, "beta2", d.beta2, "train");
    read(t, "epsilon", d.epsilon, "train");
    read(t, "batch_size", d.batch_size, "train");
    read(t, "epochs", d.epochs, "train");
  }

  if (j.contains("harness")) {
    const auto& h = j.at("harness");
    auto& d = c.harness;
    check_keys(h, "harness",
               {"demos", "test_demos", "play_trajectories", "trials_per_method", "seeds", "k_values", "methods",
                "test_seed"});
    read(h, "demos", d.demos, "harness");
    read(h, "test_demos", d.test_demos, "harness");
    read(h, "play_trajectories", d.play_trajectories, "harness");
    read(h, "trials_per_method", d.trials_per_method, "harness");
    read(h, "seeds", d.seeds, "harness");
    read(h, "k_values", d.k_values, "harness");
    read(h, "methods", d.methods, "harness");
    read(h, "test_seed", d.test_seed, "harness");
  }
  c.experiment.remote = c.remote;
}

}  // namespace

PerturbationSpec RunConfig::default_pushing_perturbation() {
  // Scaled to the sim: the object is 3 cm in radius, so a 4 cm offset often
  // leaves it out of reach and the label points almost straight back.
  PerturbationSpec p = PerturbationSpec::pushing();
  p.lo = 0.01;
  p.hi = 0.03;
  p.samples_per_frame = 8;
  return p;
}

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

void RunConfig::validate() const {
  try {
    perturbation.validate();
    experiment.train.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const auto& s = experiment.sim;
  if (s.resolution <= 0 || s.view_window <= 0.0 || s.camera_height <= 0.0 || s.step_length <= 0.0) {
    throw ConfigError("sim: resolution, view_window, camera_height and step_length must be positive");
  }
  if (experiment.arch.input_dim != s.resolution * s.resolution) {
    throw ConfigError("policy.input_dim must equal sim.resolution squared");
  }
  if (experiment.arch.translation_dims != 2 && experiment.arch.translation_dims != 3) {
    throw ConfigError("policy.translation_dims must be 2 or 3");
  }
  if (experiment.augment_threads < 1) throw ConfigError("synthesizer.augment_threads must be >= 1");
  const auto& h = harness;
  if (h.demos < 1 || h.test_demos < 1 || h.seeds < 1 || h.trials_per_method < 0) {
    throw ConfigError("harness: demos, test_demos and seeds must be >= 1");
  }
  for (int k : h.k_values) {
    if (k < 1) throw ConfigError("harness.k_values must be >= 1");
  }
  for (const auto& m : h.methods) named_method(m, *this);
}

RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  c.base_dir = base_dir;
  try {
    apply_json(j, c);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  auto dir = path.parent_path();
  if (dir.empty()) dir = ".";
  return parse_run_config(buf.str(), dir);
}

std::string dump_run_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("out");
  return sha256_hex(j.dump());
}

MethodSpec named_method(const std::string& name, const RunConfig& cfg) {
  MethodSpec m;
  m.name = name;
  m.perturbation = cfg.perturbation;
  m.backend = cfg.backend;
  if (name == "bc") return m;
  m.augment = true;
  if (name == "dmd") return m;
  if (name == "dmd_flip") {
    m.flip = true;
  } else if (name == "dmd_jitter") {
    m.jitter = true;
  } else if (name == "dmd_flip_jitter") {
    m.flip = m.jitter = true;
  } else if (name == "dmd_oracle") {
    m.backend = SynthesizerId::Kind::Oracle;
  } else if (name == "dmd_homography") {
    m.backend = SynthesizerId::Kind::Homography;
  } else if (name == "dmd_identity") {
    m.backend = SynthesizerId::Kind::Identity;
  } else if (name == "dmd_remote") {
    m.backend = SynthesizerId::Kind::Remote;
  } else {
    throw ConfigError("unknown method '" + name + "'");
  }
  return m;
}

}  // namespace dmd
