#include "dmd/augmentor.hpp"
#include "dmd/errors.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>

using namespace dmd;

namespace {

std::vector<Image> blank_images(const Trajectory& t, int size = 8) {
  std::vector<Image> out;
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    Image img(size, size);
    img.pixels[i % img.pixels.size()] = static_cast<std::uint8_t>(10 + i);
    out.push_back(img);
  }
  return out;
}

/// Kolmogorov-Smirnov statistic of `xs` against U(lo, hi).
double ks_uniform(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = std::clamp((xs[i] - lo) / (hi - lo), 0.0, 1.0);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

Perturbation manual(const Vec3& offset, int frame, const Trajectory& t) {
  Perturbation p;
  p.source_frame_index = frame;
  p.t_from_tilde = RigidTransformd(Rotationd::Identity(), offset, FrameTag::perturbed(t.frames[frame].index, 0),
                                   FrameTag::camera(t.frames[frame].index));
  return p;
}

}  // namespace

TEST_CASE("compute_label matches the 4x4 oracle") {
  Engine e(31);
  for (int c = 0; c < 300; ++c) {
    const auto t = testutil::random_trajectory(e, 8);
    const int k = 1 + static_cast<int>(uniform_index(e, 4));
    const int frame = static_cast<int>(uniform_index(e, static_cast<std::uint64_t>(8 - k)));
    Perturbation p;
    p.source_frame_index = frame;
    p.t_from_tilde = testutil::random_transform(e, FrameTag::perturbed(frame, 0), FrameTag::camera(frame), 0.05);
    const Action a = compute_label(p, t, k);
    const testutil::Mat4 m = testutil::homogeneous(p.t_from_tilde).inverse() *
                             testutil::homogeneous(t.frames[frame].cam_from_world) *
                             testutil::homogeneous(t.frames[frame + k].cam_from_world).inverse();
    REQUIRE((a.translation - m.topRightCorner<3, 1>()).norm() < 1e-9);
    REQUIRE(a.rotation.has_value());
    REQUIRE(std::abs(a.rotation->norm() - testutil::matrix_angle(m.topLeftCorner<3, 3>())) < 1e-9);
  }
}

TEST_CASE("identity perturbation with k = 1 reproduces the expert action") {
  Engine e(32);
  const auto t = testutil::random_trajectory(e, 6);
  for (int i = 0; i + 1 < 6; ++i) {
    const auto a = compute_label(manual(Vec3::Zero(), i, t), t, 1);
    CHECK((a.translation - expert_action(t, static_cast<std::size_t>(i)).translation).norm() < 1e-12);
  }
}

TEST_CASE("collinear overshoot: k = 1 labels point backward, k = 3 forward") {
  const double step = 0.01;
  const auto t = testutil::straight_line(10, step);
  for (double ahead : {0.011, 0.015, 0.019, 0.025}) {
    CAPTURE(ahead);
    const auto p = manual(Vec3(0, 0, ahead), 2, t);
    const Vec3 progress = expert_action(t, 2).translation;
    const Action k1 = compute_label(p, t, 1);
    const Action k3 = compute_label(p, t, 3);
    CHECK(k1.translation.dot(progress) < 0.0);
    CHECK(k3.translation.dot(progress) > 0.0);
    CHECK(k1.translation.z() == doctest::Approx(step - ahead));
    CHECK(k3.translation.z() == doctest::Approx(3 * step - ahead));
  }
  // A perturbation within one step keeps the k = 1 label forward.
  CHECK(compute_label(manual(Vec3(0, 0, 0.005), 2, t), t, 1).translation.z() > 0.0);
}

TEST_CASE("compute_label errors") {
  const auto t = testutil::straight_line(5, 0.01);
  CHECK_THROWS_AS(compute_label(manual(Vec3::Zero(), 3, t), t, 2), IndexOutOfRange);
  CHECK_THROWS_AS(compute_label(manual(Vec3(0, 0, 0.02), 1, t), t, 2), ZeroAction);
}

TEST_CASE("non-metric labels are unit length") {
  auto t = testutil::straight_line(6, 0.3);
  t.scale = Scale::reconstruction(0.3);
  const auto a = compute_label(manual(Vec3(0.1, 0, 0), 0, t), t, 3);
  CHECK(a.translation.norm() == doctest::Approx(1.0));
}

TEST_CASE("perturbation magnitudes are uniform on the configured range") {
  const auto t = testutil::straight_line(4, 0.01);
  auto spec = PerturbationSpec::pushing();
  std::vector<double> mags, angles;
  for (int j = 0; j < 10000; ++j) {
    const auto p = sample_perturbation(spec, t.scale, t, {"u", 0, j}, 77);
    const Vec3 d = p.t_from_tilde.translation();
    REQUIRE(std::abs(d.z()) < 1e-15);
    REQUIRE(p.t_from_tilde.rotation().angle() == 0.0);
    mags.push_back(d.norm());
    angles.push_back(std::atan2(d.y(), d.x()) + std::numbers::pi);
  }
  CHECK(*std::min_element(mags.begin(), mags.end()) >= 0.02);
  CHECK(*std::max_element(mags.begin(), mags.end()) <= 0.04);
  // KS critical value, n = 10000, p = 0.001.
  CHECK(ks_uniform(mags, 0.02, 0.04) < 0.01948);
  CHECK(ks_uniform(angles, 0.0, 2 * std::numbers::pi) < 0.01948);
}

TEST_CASE("sphere directions are uniform and non-metric ranges scale with s") {
  auto t = testutil::straight_line(4, 0.5);
  t.scale = Scale::reconstruction(0.5);
  auto spec = PerturbationSpec::reconstruction();
  std::vector<double> zs, mags;
  for (int j = 0; j < 10000; ++j) {
    const Vec3 d = sample_perturbation(spec, t.scale, t, {"s", 1, j}, 3).t_from_tilde.translation();
    mags.push_back(d.norm());
    zs.push_back(d.z() / d.norm());
  }
  CHECK(ks_uniform(mags, 0.1, 0.5) < 0.01948);
  // Archimedes: the z coordinate of a uniform point on the sphere is U(-1, 1).
  CHECK(ks_uniform(zs, -1.0, 1.0) < 0.01948);

  t.scale = Scale::reconstruction(0.0);
  CHECK_THROWS_AS(sample_perturbation(spec, t.scale, t, {"s", 1, 0}, 3), MissingScale);
}

TEST_CASE("rotation perturbations stay inside their ranges") {
  const auto t = testutil::straight_line(4, 0.01);
  auto spec = PerturbationSpec::pushing();
  spec.rotation = RotationRanges::defaults();
  const double deg = std::numbers::pi / 180.0;
  for (int j = 0; j < 2000; ++j) {
    const auto p = sample_perturbation(spec, t.scale, t, {"r", 0, j}, 5);
    const Eigen::Matrix3d r = p.t_from_tilde.rotation().matrix();
    // Intrinsic z-y-x angles recovered from the matrix.
    const double yaw = std::atan2(r(1, 0), r(0, 0));
    const double pitch = std::asin(-r(2, 0));
    const double roll = std::atan2(r(2, 1), r(2, 2));
    REQUIRE(std::abs(yaw) <= 10 * deg + 1e-12);
    REQUIRE(std::abs(pitch) <= 10 * deg + 1e-12);
    REQUIRE(roll >= -10 * deg - 1e-12);
    REQUIRE(roll <= 15 * deg + 1e-12);
  }
}

TEST_CASE("perturbation specs are validated") {
  auto spec = PerturbationSpec::pushing();
  spec.lo = 0.05;
  CHECK_THROWS_AS(spec.validate(), InvalidSpec);
  spec = PerturbationSpec::pushing();
  spec.samples_per_frame = 0;
  CHECK_THROWS_AS(spec.validate(), InvalidSpec);
  spec = PerturbationSpec::pushing();
  spec.lookahead_k = 0;
  CHECK_THROWS_AS(spec.validate(), InvalidSpec);
}

TEST_CASE("augment produces frame-major samples for eligible frames") {
  const auto t = testutil::straight_line(10, 0.01);
  const auto images = blank_images(t);
  auto spec = PerturbationSpec::pushing();
  spec.samples_per_frame = 2;
  spec.lookahead_k = 3;
  IdentitySynthesizer synth;
  const auto out = augment_trajectory(t, images, {}, spec, synth, {});
  REQUIRE(out.size() == 14);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].provenance.source_frame_index == static_cast<int>(i / 2));
    CHECK(out[i].provenance.sample_index == static_cast<int>(i % 2));
    CHECK(out[i].k_used == 3);
    CHECK(out[i].image == images[i / 2]);
    CHECK(out[i].synthesizer.kind == SynthesizerId::Kind::Identity);
  }
  spec.lookahead_k = 10;
  CHECK_THROWS_AS(augment_trajectory(t, images, {}, spec, synth, {}), IndexOutOfRange);
}

TEST_CASE("null pipeline: zero perturbation and identity backend give expert labels") {
  const auto t = testutil::straight_line(8, 0.01);
  auto spec = PerturbationSpec::pushing();
  spec.identity_perturbations = true;
  spec.lookahead_k = 1;
  IdentitySynthesizer synth;
  const auto out = augment_trajectory(t, blank_images(t), {}, spec, synth, {});
  for (const auto& s : out) {
    const auto expert = expert_action(t, static_cast<std::size_t>(s.provenance.source_frame_index));
    CHECK((s.action.translation - expert.translation).norm() < 1e-15);
  }
}

TEST_CASE("augmentation is identical across thread counts") {
  Engine e(33);
  auto t = testutil::random_trajectory(e, 12, "par");
  const auto images = blank_images(t);
  auto spec = PerturbationSpec::pushing();
  spec.rotation = RotationRanges::defaults();
  spec.samples_per_frame = 3;
  IdentitySynthesizer synth;
  AugmentOptions one;
  one.master_seed = 99;
  AugmentOptions many = one;
  many.threads = 4;
  const auto a = augment_trajectory(t, images, {}, spec, synth, one);
  const auto b = augment_trajectory(t, images, {}, spec, synth, many);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].action.translation == b[i].action.translation);
    CHECK(*a[i].action.rotation == *b[i].action.rotation);
    CHECK(a[i].provenance.t_from_tilde.translation() == b[i].provenance.t_from_tilde.translation());
  }
}

TEST_CASE("flip mirrors the image and the camera-x component") {
  Image img(3, 2);
  img.pixels = {1, 2, 3, 4, 5, 6};
  struct S {
    Image image;
    Action action;
  } s{img, {Vec3(0.3, -0.4, 0.5), Vec3(0.1, 0.2, 0.3)}};
  const auto f = flip_augment(s);
  CHECK(f.image.pixels == std::vector<std::uint8_t>{3, 2, 1, 6, 5, 4});
  CHECK(f.action.translation == Vec3(-0.3, -0.4, 0.5));
  CHECK(*f.action.rotation == Vec3(0.1, -0.2, -0.3));
  const auto ff = flip_augment(f);
  CHECK(ff.image == img);
  CHECK(ff.action.translation == s.action.translation);
}

TEST_CASE("jitter applies gain and bias with clamping") {
  Image img(2, 2);
  img.pixels = {0, 100, 200, 255};
  CHECK(jitter_image(img, 1.0, 0.0) == img);
  const auto j = jitter_image(img, 1.2, 0.1);
  CHECK(j.pixels[0] == 26);   // 0 * 1.2 + 25.5
  CHECK(j.pixels[1] == 146);  // 120 + 25.5
  CHECK(j.pixels[3] == 255);
  Engine e(1);
  for (int i = 0; i < 100; ++i) {
    struct S {
      Image image;
      Action action;
    } s{img, {Vec3::UnitX(), std::nullopt}};
    const auto out = jitter_augment(s, e);
    CHECK(out.action.translation == Vec3::UnitX());
    CHECK(out.image.same_shape(img));
  }
}

TEST_CASE("augmented samples round-trip through disk") {
  Engine e(34);
  const auto t = testutil::random_trajectory(e, 6, "disk");
  auto spec = PerturbationSpec::pushing();
  IdentitySynthesizer synth;
  const auto a = augment_trajectory(t, blank_images(t), {}, spec, synth, {});
  const auto dir = std::filesystem::temp_directory_path() / "dmd_test_aug";
  std::filesystem::remove_all(dir);
  save_augmented(dir, spec, synth.id(), 0, a);
  const auto b = load_augmented(dir);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].action.translation == b[i].action.translation);
    CHECK(a[i].k_used == b[i].k_used);
    CHECK(a[i].provenance.rng_path.trajectory_id == b[i].provenance.rng_path.trajectory_id);
    CHECK(a[i].provenance.source_frame_index == b[i].provenance.source_frame_index);
    CHECK(a[i].synthesizer == b[i].synthesizer);
  }
  std::filesystem::remove_all(dir);
}
