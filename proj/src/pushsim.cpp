#include "dmd/pushsim.hpp"

#include "dmd/errors.hpp"
#include "dmd/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace dmd {

using ordered_json = nlohmann::ordered_json;

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Running:
      return "running";
    case Outcome::Success:
      return "success";
    case Outcome::OutOfBounds:
      return "out-of-bounds";
    case Outcome::Timeout:
      return "timeout";
  }
  return "running";
}

namespace {

bool on_table(const SimConfig& cfg, const Vec2& p) {
  return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= cfg.table_size && p.y() <= cfg.table_size;
}

Vec2 perp(const Vec2& v) { return {-v.y(), v.x()}; }

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

Outcome classify(const SimConfig& cfg, const SimWorld& world) {
  if ((world.object - world.target).norm() <= cfg.success_radius) return Outcome::Success;
  if (!on_table(cfg, world.gripper) || !on_table(cfg, world.object)) return Outcome::OutOfBounds;
  if (world.steps >= cfg.max_steps) return Outcome::Timeout;
  return Outcome::Running;
}

SimWorld step(const SimConfig& cfg, const SimWorld& world, const Vec2& direction) {
  if (world.terminal()) return world;
  SimWorld next = world;
  next.gripper = world.gripper + cfg.step_length * direction;

  // Projection push: move the object out along the centre line by the overlap.
  const double contact = cfg.object_radius + cfg.gripper_radius;
  const Vec2 gap = next.object - next.gripper;
  const double dist = gap.norm();
  if (dist < contact) {
    const Vec2 normal = dist > 0.0 ? Vec2(gap / dist) : direction;
    next.object = next.gripper + contact * normal;
  }
  next.steps = world.steps + 1;
  next.outcome = classify(cfg, next);
  return next;
}

RigidTransformd camera_pose(const SimConfig& cfg, const Vec2& gripper, FrameTag cam) {
  // 180 degrees about x: camera x = world x, camera y = -world y, camera z = -world z.
  const Rotationd r = Rotationd::FromWxyz(0.0, 1.0, 0.0, 0.0);
  const Vec3 t(-gripper.x(), gripper.y(), cfg.camera_height);
  return RigidTransformd(r, t, FrameTag::world(), cam);
}

Vec3 world_to_camera_direction(const Vec2& world_dir) { return {world_dir.x(), -world_dir.y(), 0.0}; }
Vec2 camera_to_world_direction(const Vec3& cam_dir) { return {cam_dir.x(), -cam_dir.y()}; }

Image render(const SimConfig& cfg, const SimWorld& world, const RigidTransformd& cam_from_world) {
  const int res = cfg.resolution;
  const double pitch = cfg.pixel_pitch();
  const double cx = res / 2.0;
  const double cy = res - cfg.gripper_row_from_bottom;

  const RigidTransformd world_from_cam = inverse(cam_from_world);
  const Matrix3<double> r_wc = world_from_cam.rotation().matrix();
  const Vec3 ray = r_wc.col(2);  // optical axis in world

  auto coverage = [pitch](double sdf) { return clamp01(0.5 - sdf / pitch); };

  Image img(res, res, 1);
  for (int v = 0; v < res; ++v) {
    const double y_cam = (v + 0.5 - cy) * pitch;
    for (int u = 0; u < res; ++u) {
      const double x_cam = (u + 0.5 - cx) * pitch;
      double value = cfg.background_level;

      // Orthographic ray through (x_cam, y_cam) hitting the table plane.
      if (ray.z() < 0.0) {
        const Vec3 origin = world_from_cam * Vec3(x_cam, y_cam, 0.0);
        const double lambda = -origin.z() / ray.z();
        const Vec2 p = (origin + lambda * ray).head<2>();

        const double ring_sdf =
            std::abs((p - world.target).norm() - cfg.success_radius) - cfg.ring_half_width;
        value += (cfg.target_level - value) * coverage(ring_sdf);
        const double object_sdf = (p - world.object).norm() - cfg.object_radius;
        value += (cfg.object_level - value) * coverage(object_sdf);
      }
      const double gripper_sdf = std::hypot(x_cam, y_cam) - cfg.gripper_radius;
      value += (cfg.gripper_level - value) * coverage(gripper_sdf);

      img.at(u, v) = static_cast<std::uint8_t>(std::lround(std::clamp(value, 0.0, 255.0)));
    }
  }
  return img;
}

Vec2 expert_policy(const SimConfig& cfg, const SimWorld& world) {
  const Vec2 to_target = world.target - world.object;
  const double dist_target = to_target.norm();
  const Vec2 u = dist_target > 1e-12 ? Vec2(to_target / dist_target) : Vec2(0.0, 1.0);
  const Vec2 n = perp(u);
  const double contact = cfg.object_radius + cfg.gripper_radius;

  const Vec2 rel = world.gripper - world.object;
  const double along = rel.dot(u);
  const double lateral = rel.dot(n);

  // Push: advance along u while steering back onto the line behind the object.
  Vec2 push = u - 30.0 * lateral * n;
  push.normalize();

  // Approach: head for the standoff point, skirting the object when the
  // straight path would clip it.
  const Vec2 standoff = world.object - cfg.standoff * u;
  Vec2 approach = standoff - world.gripper;
  const double clearance = contact + 0.005;
  const double seg_len = approach.norm();
  if (seg_len > 1e-12) {
    const Vec2 dir = approach / seg_len;
    const double s = std::clamp((world.object - world.gripper).dot(dir), 0.0, seg_len);
    const double miss = (world.gripper + s * dir - world.object).norm();
    const double r = rel.norm();
    if (miss < clearance && r > 1e-12) {
      const Vec2 radial = rel / r;
      Vec2 tangent = perp(radial);
      if (tangent.dot(dir) < 0.0) tangent = -tangent;
      approach = tangent + std::max(0.0, (clearance + 0.005 - r) / 0.005) * radial;
    }
  } else {
    approach = u;
  }
  approach.normalize();

  // Blend on how well the gripper sits on the push line behind the object.
  const double w = clamp01((0.02 - std::abs(lateral)) / 0.012) * clamp01((-0.03 - along) / 0.005);
  Vec2 action = w * push + (1.0 - w) * approach;
  const double norm = action.norm();
  if (norm < 1e-9) return approach;
  return action / norm;
}

StartConfig sample_start(const SimConfig& cfg, std::uint64_t seed, std::uint64_t index) {
  Engine rng = make_engine(seed, {0x7374617274ULL, index});
  StartConfig s;
  const double mid = cfg.table_size / 2.0;
  s.gripper = Vec2(mid + uniform(rng, -0.05, 0.05), 0.12 + uniform(rng, -0.03, 0.03));
  s.object = s.gripper + Vec2(uniform(rng, -0.04, 0.04), uniform(rng, 0.06, 0.09));
  const double heading = uniform(rng, -std::numbers::pi / 6.0, std::numbers::pi / 6.0);
  const double dist = uniform(rng, 0.07, 0.10);
  s.target = s.object + dist * Vec2(std::sin(heading), std::cos(heading));
  return s;
}

bool replay_matches(const SimConfig& cfg, const EpisodeLog& log) {
  if (log.steps.empty()) return false;
  SimWorld w = SimWorld::from_start(log.start);
  if (!(w == log.steps.front().state)) return false;
  for (std::size_t i = 0; i + 1 < log.steps.size(); ++i) {
    w = step(cfg, w, log.steps[i].action);
    if (!(w == log.steps[i + 1].state)) return false;
  }
  return w.outcome == log.outcome;
}

namespace {

std::string frame_ref(const std::string& id, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu.png", i);
  return id + "/" + buf;
}

}  // namespace

Episode episode_from_log(const SimConfig& cfg, std::string id, TrajectoryKind kind, EpisodeLog log) {
  Episode ep;
  ep.trajectory.id = id;
  ep.trajectory.kind = kind;
  ep.trajectory.scale = Scale::metric();
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    auto& st = log.steps[i];
    st.image_ref = frame_ref(id, i);
    Frame f;
    f.index = static_cast<int>(i);
    f.image_ref = st.image_ref;
    f.cam_from_world = camera_pose(cfg, st.state.gripper, FrameTag::camera(f.index));
    ep.images.push_back(render(cfg, st.state, f.cam_from_world));
    ep.trajectory.frames.push_back(std::move(f));
  }
  ep.log = std::move(log);
  return ep;
}

std::vector<Episode> generate_demos(const SimConfig& cfg, std::size_t n, std::uint64_t seed) {
  std::vector<Episode> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    EpisodeLog log;
    log.seed = seed;
    log.start = sample_start(cfg, seed, i);
    SimWorld w = SimWorld::from_start(log.start);
    while (!w.terminal()) {
      const Vec2 a = expert_policy(cfg, w);
      log.steps.push_back({w, a, {}});
      w = step(cfg, w, a);
    }
    log.steps.push_back({w, Vec2::Zero(), {}});
    log.outcome = w.outcome;
    log.steps_used = w.steps;
    if (w.outcome != Outcome::Success) {
      throw std::logic_error("expert failed on demo " + std::to_string(i) + " (seed " +
                             std::to_string(seed) + "): " + to_string(w.outcome));
    }
    char id[32];
    std::snprintf(id, sizeof(id), "demo_%04zu", i);
    out.push_back(episode_from_log(cfg, id, TrajectoryKind::Task, std::move(log)));
  }
  return out;
}

std::vector<Episode> generate_play(const SimConfig& cfg, std::size_t n, std::uint64_t seed,
                                   int steps_per_trajectory) {
  std::vector<Episode> out;
  out.reserve(n);
  const double margin = 0.05;
  for (std::size_t i = 0; i < n; ++i) {
    Engine rng = make_engine(seed, {0x706c6179ULL, i});
    EpisodeLog log;
    log.seed = seed;
    log.start = sample_start(cfg, seed ^ 0x706c6179ULL, i);
    SimWorld w = SimWorld::from_start(log.start);
    double heading = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    for (int k = 0; k < steps_per_trajectory && !w.terminal(); ++k) {
      // Random walk with persistence; every so often steer at the object so
      // the play data contains contacts.
      if (uniform(rng, 0.0, 1.0) < 0.15) {
        const Vec2 d = w.object - w.gripper;
        heading = std::atan2(d.y(), d.x()) + uniform(rng, -0.4, 0.4);
      } else {
        heading += uniform(rng, -0.5, 0.5);
      }
      Vec2 a(std::cos(heading), std::sin(heading));
      const Vec2 next = w.gripper + cfg.step_length * a;
      if (next.x() < margin || next.y() < margin || next.x() > cfg.table_size - margin ||
          next.y() > cfg.table_size - margin) {
        const Vec2 centre = Vec2::Constant(cfg.table_size / 2.0) - w.gripper;
        heading = std::atan2(centre.y(), centre.x());
        a = Vec2(std::cos(heading), std::sin(heading));
      }
      log.steps.push_back({w, a, {}});
      w = step(cfg, w, a);
      // Play data never ends on success; keep wandering past the target.
      if (w.outcome == Outcome::Success) w.outcome = Outcome::Running;
    }
    log.steps.push_back({w, Vec2::Zero(), {}});
    log.outcome = w.outcome;
    log.steps_used = w.steps;
    char id[32];
    std::snprintf(id, sizeof(id), "play_%04zu", i);
    out.push_back(episode_from_log(cfg, id, TrajectoryKind::Play, std::move(log)));
  }
  return out;
}

namespace {

ordered_json vec_json(const Vec2& v) { return ordered_json::array({v.x(), v.y()}); }

Vec2 vec_from(const ordered_json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

Outcome outcome_from(const std::string& s) {
  for (Outcome o : {Outcome::Running, Outcome::Success, Outcome::OutOfBounds, Outcome::Timeout}) {
    if (s == to_string(o)) return o;
  }
  throw ParseError(0, "unknown outcome '" + s + "'");
}

}  // namespace

std::string episode_log_json(const EpisodeLog& log) {
  ordered_json j;
  j["seed"] = log.seed;
  j["start"] = {{"gripper", vec_json(log.start.gripper)},
                {"object", vec_json(log.start.object)},
                {"target", vec_json(log.start.target)}};
  ordered_json steps = ordered_json::array();
  for (const auto& s : log.steps) {
    steps.push_back({{"gripper", vec_json(s.state.gripper)},
                     {"object", vec_json(s.state.object)},
                     {"target", vec_json(s.state.target)},
                     {"step", s.state.steps},
                     {"status", to_string(s.state.outcome)},
                     {"action", vec_json(s.action)},
                     {"img", s.image_ref}});
  }
  j["steps"] = std::move(steps);
  j["outcome"] = to_string(log.outcome);
  j["steps_used"] = log.steps_used;
  return j.dump();
}

EpisodeLog parse_episode_log(const std::string& text) {
  EpisodeLog log;
  try {
    const auto j = ordered_json::parse(text);
    log.seed = j.at("seed").get<std::uint64_t>();
    const auto& s = j.at("start");
    log.start = {vec_from(s.at("gripper")), vec_from(s.at("object")), vec_from(s.at("target"))};
    for (const auto& st : j.at("steps")) {
      EpisodeStep e;
      e.state.gripper = vec_from(st.at("gripper"));
      e.state.object = vec_from(st.at("object"));
      e.state.target = vec_from(st.at("target"));
      e.state.steps = st.at("step").get<int>();
      e.state.outcome = outcome_from(st.at("status").get<std::string>());
      e.action = vec_from(st.at("action"));
      e.image_ref = st.at("img").get<std::string>();
      log.steps.push_back(std::move(e));
    }
    log.outcome = outcome_from(j.at("outcome").get<std::string>());
    log.steps_used = j.at("steps_used").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("episode log: ") + e.what());
  }
  return log;
}

void save_episodes(const std::filesystem::path& dir, const std::vector<Episode>& episodes) {
  std::filesystem::create_directories(dir);
  ordered_json manifest = ordered_json::array();
  for (const auto& ep : episodes) {
    const auto& id = ep.trajectory.id;
    manifest.push_back(id);
    save_trajectory(dir / (id + ".traj.jsonl"), ep.trajectory);
    std::ofstream(dir / (id + ".episode.json")) << episode_log_json(ep.log) << '\n';
    std::filesystem::create_directories(dir / id);
    for (std::size_t i = 0; i < ep.images.size(); ++i) {
      write_png(dir / ep.trajectory.frames[i].image_ref, ep.images[i]);
    }
  }
  std::ofstream(dir / "manifest.json") << ordered_json{{"episodes", manifest}}.dump(2) << '\n';
}

std::vector<Episode> load_episodes(const std::filesystem::path& dir, bool with_images) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw MissingInput("no manifest.json in " + dir.string());
  std::vector<Episode> out;
  const auto manifest = ordered_json::parse(mf);
  for (const auto& idj : manifest.at("episodes")) {
    const auto id = idj.get<std::string>();
    Episode ep;
    ep.trajectory = load_trajectory(dir / (id + ".traj.jsonl"));
    std::ifstream lf(dir / (id + ".episode.json"));
    if (lf) {
      std::stringstream ss;
      ss << lf.rdbuf();
      ep.log = parse_episode_log(ss.str());
    }
    if (with_images) {
      for (const auto& f : ep.trajectory.frames) ep.images.push_back(read_png(dir / f.image_ref));
    }
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace dmd
