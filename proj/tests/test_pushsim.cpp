#include "dmd/errors.hpp"
#include "dmd/pushsim.hpp"

#include "support.hpp"

#include <doctest.h>

#include <filesystem>

using namespace dmd;

namespace {

SimWorld world_at(Vec2 gripper, Vec2 object, Vec2 target) {
  return SimWorld::from_start({gripper, object, target});
}

}  // namespace

TEST_CASE("free gripper motion leaves the object alone") {
  const SimConfig cfg;
  const auto w = world_at({0.3, 0.1}, {0.3, 0.3}, {0.3, 0.5});
  const auto n = step(cfg, w, {1, 0});
  CHECK(n.gripper.isApprox(Vec2(0.31, 0.1)));
  CHECK(n.object == w.object);
  CHECK(n.steps == 1);
  CHECK(n.outcome == Outcome::Running);
}

TEST_CASE("contact pushes the object out along the centre line") {
  const SimConfig cfg;
  const auto w = world_at({0.3, 0.1}, {0.3, 0.145}, {0.3, 0.5});
  const auto n = step(cfg, w, {0, 1});
  CHECK(n.gripper.isApprox(Vec2(0.3, 0.11)));
  CHECK(n.object.isApprox(Vec2(0.3, 0.15)));
  // Quasi-static: the object never outruns the gripper.
  CHECK((n.object - w.object).norm() <= cfg.step_length + 1e-12);
  // Off-centre contact deflects sideways but keeps the contact distance.
  const auto side = step(cfg, world_at({0.3, 0.1}, {0.31, 0.14}, {0.3, 0.5}), {0, 1});
  CHECK((side.object - side.gripper).norm() == doctest::Approx(0.04));
  CHECK(side.object.x() > 0.31);
}

TEST_CASE("outcomes") {
  const SimConfig cfg;
  CHECK(classify(cfg, world_at({0.3, 0.1}, {0.3, 0.3}, {0.3, 0.32})) == Outcome::Success);
  CHECK(classify(cfg, world_at({0.3, 0.1}, {0.3, 0.3}, {0.3, 0.34})) == Outcome::Running);
  CHECK(classify(cfg, world_at({-0.01, 0.1}, {0.3, 0.3}, {0.3, 0.5})) == Outcome::OutOfBounds);
  auto w = world_at({0.3, 0.1}, {0.3, 0.3}, {0.3, 0.5});
  w.steps = cfg.max_steps;
  CHECK(classify(cfg, w) == Outcome::Timeout);
  auto done = world_at({0.3, 0.1}, {0.3, 0.3}, {0.3, 0.3});
  done.outcome = Outcome::Success;
  CHECK(step(cfg, done, {1, 0}) == done);
}

TEST_CASE("camera pose places the gripper at the camera origin looking down") {
  const SimConfig cfg;
  const auto pose = camera_pose(cfg, {0.2, 0.4}, FrameTag::camera(3));
  CHECK(pose.to() == FrameTag::camera(3));
  CHECK((pose * Vec3(0.2, 0.4, 0.0)).isApprox(Vec3(0, 0, cfg.camera_height)));
  CHECK((pose.rotation() * Vec3(1, 0, 0)).isApprox(Vec3(1, 0, 0)));
  CHECK((pose.rotation() * Vec3(0, 1, 0)).isApprox(Vec3(0, -1, 0)));
  Engine e(3);
  for (int i = 0; i < 100; ++i) {
    const Vec2 d(uniform(e, -1, 1), uniform(e, -1, 1));
    CHECK(camera_to_world_direction(world_to_camera_direction(d)) == d);
    // The camera-frame direction is the world direction rotated into the camera.
    CHECK((pose.rotation() * Vec3(d.x(), d.y(), 0)).isApprox(world_to_camera_direction(d)));
  }
}

TEST_CASE("render draws the gripper, object and target ring") {
  const SimConfig cfg;
  const auto w = world_at({0.3, 0.1}, {0.3, 0.175}, {0.3, 0.25});
  const Image img = render(cfg, w, camera_pose(cfg, w.gripper, FrameTag::camera(0)));
  REQUIRE(img.width == 64);
  REQUIRE(img.height == 64);
  const double pitch = cfg.pixel_pitch();
  auto pixel_of = [&](Vec2 p) {
    // Camera x = world x, camera y = -world y; gripper at (32, 60).
    return std::pair<int, int>{int(std::floor(32 + (p.x() - w.gripper.x()) / pitch)),
                               int(std::floor(60 - (p.y() - w.gripper.y()) / pitch))};
  };
  auto [gu, gv] = pixel_of(w.gripper);
  CHECK(img.at(gu, gv) == cfg.gripper_level);
  auto [ou, ov] = pixel_of(w.object);
  CHECK(img.at(ou, ov) == cfg.object_level);
  auto [ru, rv] = pixel_of(w.target + Vec2(cfg.success_radius, 0));
  CHECK(img.at(ru, rv) >= 100);
  CHECK(img.at(1, 1) == cfg.background_level);
}

TEST_CASE("moving the camera by whole pixels shifts the table content") {
  const SimConfig cfg;
  const auto w = world_at({0.3, 0.1}, {0.31, 0.17}, {0.29, 0.26});
  const double pitch = cfg.pixel_pitch();
  const Image a = render(cfg, w, camera_pose(cfg, w.gripper, FrameTag::camera(0)));
  const Image b = render(cfg, w, camera_pose(cfg, w.gripper + Vec2(3 * pitch, 2 * pitch), FrameTag::camera(0)));
  int worst = 0;
  for (int v = 10; v < 50; ++v) {
    for (int u = 5; u < 55; ++u) worst = std::max(worst, std::abs(int(b.at(u, v)) - int(a.at(u + 3, v - 2))));
  }
  CHECK(worst <= 1);
}

TEST_CASE("expert solves seeded starts") {
  const SimConfig cfg;
  int max_steps = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    SimWorld w = SimWorld::from_start(sample_start(cfg, 123, i));
    while (!w.terminal()) w = step(cfg, w, expert_policy(cfg, w));
    REQUIRE(w.outcome == Outcome::Success);
    max_steps = std::max(max_steps, w.steps);
  }
  CHECK(max_steps < 40);
}

TEST_CASE("expert actions are unit length") {
  const SimConfig cfg;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const SimWorld w = SimWorld::from_start(sample_start(cfg, 5, i));
    CHECK(expert_policy(cfg, w).norm() == doctest::Approx(1.0));
  }
}

TEST_CASE("demos replay, are deterministic and carry consistent trajectories") {
  const SimConfig cfg;
  const auto a = generate_demos(cfg, 4, 7);
  const auto b = generate_demos(cfg, 4, 7);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(replay_matches(cfg, a[i].log));
    CHECK(a[i].log.outcome == Outcome::Success);
    CHECK(a[i].images == b[i].images);
    CHECK(a[i].trajectory.frames.size() == a[i].images.size());
    CHECK(a[i].trajectory.scale.is_metric());
    CHECK_NOTHROW(validate(a[i].trajectory));
    // Expert action in the camera frame equals the logged world action.
    for (std::size_t t = 0; t + 1 < a[i].trajectory.frames.size(); ++t) {
      const Vec3 cam = expert_action(a[i].trajectory, t).translation;
      const Vec3 expected = world_to_camera_direction(a[i].log.steps[t].action) * cfg.step_length;
      CHECK((cam - expected).norm() < 1e-12);
    }
  }
  auto tampered = a[0].log;
  tampered.steps[1].state.object.x() += 1e-3;
  CHECK_FALSE(replay_matches(cfg, tampered));
}

TEST_CASE("play data wanders without terminating early") {
  const SimConfig cfg;
  const auto play = generate_play(cfg, 3, 11, 60);
  REQUIRE(play.size() == 3);
  for (const auto& ep : play) {
    CHECK(ep.trajectory.kind == TrajectoryKind::Play);
    CHECK(ep.trajectory.frames.size() == 61);
    for (const auto& st : ep.log.steps) {
      CHECK(st.state.gripper.x() >= 0.0);
      CHECK(st.state.gripper.x() <= cfg.table_size);
    }
  }
}

TEST_CASE("episodes round-trip through disk") {
  const SimConfig cfg;
  const auto demos = generate_demos(cfg, 2, 3);
  const auto dir = std::filesystem::temp_directory_path() / "dmd_test_episodes";
  std::filesystem::remove_all(dir);
  save_episodes(dir, demos);
  const auto back = load_episodes(dir);
  REQUIRE(back.size() == demos.size());
  for (std::size_t i = 0; i < demos.size(); ++i) {
    CHECK(back[i].images == demos[i].images);
    CHECK(back[i].trajectory.id == demos[i].trajectory.id);
    CHECK(back[i].log.steps.size() == demos[i].log.steps.size());
    CHECK(back[i].log.start == demos[i].log.start);
    CHECK(replay_matches(cfg, back[i].log));
  }
  CHECK_THROWS_AS(load_episodes(dir / "nothing"), MissingInput);
  std::filesystem::remove_all(dir);
}
