// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include "dmd/augmentor.hpp"
#include "dmd/config.hpp"
#include "dmd/errors.hpp"
#include "dmd/harness.hpp"
#include "dmd/policy.hpp"
#include "dmd/pushsim.hpp"
#include "dmd/report.hpp"
#include "dmd/synthesis.hpp"
#include "dmd/trajectory.hpp"

#include "support.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

using namespace dmd;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Verdict label_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Engine e(1001);
  double worst = 0.0;
  for (int c = 0; c < 1000; ++c) {
    const int n = 6 + static_cast<int>(uniform_index(e, 6));
    const auto t = testutil::random_trajectory(e, n);
    const int k = 1 + static_cast<int>(uniform_index(e, 5));
    if (k >= n) continue;
    const int frame = static_cast<int>(uniform_index(e, static_cast<std::uint64_t>(n - k)));
    Perturbation p;
    p.source_frame_index = frame;
    p.t_from_tilde = testutil::random_transform(e, FrameTag::perturbed(frame, 0), FrameTag::camera(frame), 0.1);
    const Action a = compute_label(p, t, k);
    const testutil::Mat4 m = testutil::homogeneous(p.t_from_tilde).inverse() *
                             testutil::homogeneous(t.frames[frame].cam_from_world) *
                             testutil::homogeneous(t.frames[frame + k].cam_from_world).inverse();
    worst = std::max(worst, (a.translation - m.topRightCorner<3, 1>()).norm());
    worst = std::max(worst, std::abs(a.rotation->norm() - testutil::matrix_angle(m.topLeftCorner<3, 3>())));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-9 && secs < 5.0, fmt("max deviation %.3g over 1000 cases in %.2f s", worst, secs)};
}

Verdict overshooting() {
  const double step = 0.01;
  const auto line = testutil::straight_line(10, step);
  bool analytic = true;
  for (double ahead : {0.012, 0.015, 0.02, 0.025, 0.029}) {
    Perturbation p;
    p.source_frame_index = 2;
    p.t_from_tilde = RigidTransformd(Rotationd::Identity(), Vec3(0, 0, ahead), FrameTag::perturbed(2, 0),
                                     FrameTag::camera(2));
    const Vec3 progress = expert_action(line, 2).translation;
    analytic = analytic && compute_label(p, line, 1).translation.dot(progress) < 0.0 &&
               compute_label(p, line, 3).translation.dot(progress) > 0.0;
  }

  const SimConfig sim;
  const auto demos = generate_demos(sim, 8, 2024);
  const IdentitySynthesizer synth;
  std::vector<double> fractions;
  for (int k = 1; k <= 5; ++k) {
    auto spec = RunConfig::default_pushing_perturbation();
    spec.lookahead_k = k;
    double over = 0.0;
    std::size_t count = 0;
    for (const auto& ep : demos) {
      AugmentOptions opts;
      opts.master_seed = 7;
      const auto s = augment_trajectory(ep.trajectory, ep.images, {}, spec, synth, opts);
      over += overshoot_fraction(s, ep.trajectory) * static_cast<double>(s.size());
      count += s.size();
    }
    fractions.push_back(over / static_cast<double>(count));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < fractions.size(); ++i) monotone = monotone && fractions[i] <= fractions[i - 1];
  return {analytic && monotone, fmt("collinear %s; overshoot k=1..5: %.3f %.3f %.3f %.3f %.3f",
                                    analytic ? "ok" : "WRONG", fractions[0], fractions[1], fractions[2], fractions[3],
                                    fractions[4])};
}

Verdict k_sweep_shape() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg;
  const auto r = run_k_sweep(cfg);
  const double secs = seconds_since(t0);
  const double e1 = r.mean_error(1), e3 = r.mean_error(3), e5 = r.mean_error(5);
  std::string rows;
  for (int k : r.ks) rows += fmt(" k=%d:%.4f", k, r.mean_error(k));
  return {e3 <= e1 && std::abs(e3 - e5) <= 0.05 && secs < 20 * 60,
          fmt("mean error%s rad; |e3-e5|=%.4f; %.0f s", rows.c_str(), std::abs(e3 - e5), secs)};
}

struct Comparison {
  ComparisonReport report;
  double seconds = 0.0;
};

const Comparison& main_comparison() {
  static const Comparison c = [] {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg;
    Comparison out;
    out.report = run_comparison(cfg, {"bc", "dmd", "dmd_homography", "dmd_identity"}, true);
    out.seconds = seconds_since(t0);
    return out;
  }();
  return c;
}

Verdict bc_vs_dmd() {
  const auto& c = main_comparison();
  const double bc = c.report.mean_success("bc"), dmd = c.report.mean_success("dmd");
  return {dmd - bc >= 0.20 && dmd >= 0.60 && c.seconds < 30 * 60,
          fmt("success BC %.1f%%, DMD %.1f%% (gap %.1f pp); %.0f s", 100 * bc, 100 * dmd, 100 * (dmd - bc),
              c.seconds)};
}

Verdict stacking() {
  const auto& c = main_comparison();
  RunConfig cfg;
  const auto fj = run_comparison(cfg, {"dmd_flip_jitter"}, false);
  const double bc = c.report.mean_error("bc"), dmd = c.report.mean_error("dmd");
  const double stacked = fj.mean_error("dmd_flip_jitter");
  return {stacked <= dmd + 0.02 && dmd <= bc + 0.02,
          fmt("offline error DMD+flip+jitter %.4f, DMD %.4f, BC %.4f rad", stacked, dmd, bc)};
}

Verdict synthesizer_quality() {
  const auto& c = main_comparison();
  const double o = c.report.mean_success("dmd"), h = c.report.mean_success("dmd_homography"),
               i = c.report.mean_success("dmd_identity");
  return {o >= h && h >= i, fmt("success oracle %.1f%%, homography %.1f%%, identity %.1f%%", 100 * o, 100 * h, 100 * i)};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    // The recorded run configs carry the output path.
    if (rel.ends_with(".config.json")) continue;
    std::ifstream f(e.path(), std::ios::binary);
    std::ostringstream buf;
    buf << f.rdbuf();
    files[rel] = buf.str();
  }
  return files;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(DMD_CLI_PATH) + " " + args + " --quiet > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "dmd_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::map<std::string, std::string>> runs;
  for (int threads : {1, 4, 4}) {
    const fs::path out = root / std::to_string(runs.size());
    const std::string common = " --seed 11 --out " + out.string();
    const std::string policy = (out / "policies" / "bc.ckpt").string();
    if (cli("gen-demos --n 4" + common) || cli("augment --threads " + std::to_string(threads) + common) ||
        cli("train --method dmd --aug " + (out / "aug").string() + " --epochs 5" + common) || cli("train --method bc --epochs 5" + common) ||
        cli("eval-online --n 3 --policy " + policy + " --policy expert" + common)) {
      return {false, "a CLI command failed"};
    }
    runs.push_back(snapshot(out));
  }
  std::set<std::string> differing;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    for (const auto& [name, bytes] : runs[0]) {
      auto it = runs[r].find(name);
      if (it == runs[r].end() || it->second != bytes) differing.insert(name);
    }
    if (runs[r].size() != runs[0].size()) differing.insert("<file set>");
  }
  fs::remove_all(root);
  std::string list;
  for (const auto& d : differing) list += " " + d;
  return {differing.empty() && runs[0].size() > 10,
          differing.empty() ? fmt("%zu files identical across 3 runs (augment threads 1, 4, 4)", runs[0].size())
                            : "differs:" + list};
}

Verdict gradient() {
  const SimConfig sim;
  const auto demos = generate_demos(sim, 1, 5);
  const auto samples = expert_samples(demos);
  const PolicyArchitecture arch;
  PolicyNet net(arch, 3);
  const int n = static_cast<int>(std::min<std::size_t>(samples.size(), 8));
  Eigen::MatrixXd x(arch.input_dim, n), y(arch.output_dim(), n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < arch.input_dim; ++j) x(j, i) = samples[i].image.pixels[j] / 255.0;
    y.col(i) = make_target(arch, samples[i].action);
  }
  const auto r = gradient_check(net, x, y, 200, 1e-5, 17);
  return {r.checked == 200 && r.max_relative_error < 1e-4,
          fmt("max relative error %.3g on %d parameters (%d kink-adjacent draws resampled)", r.max_relative_error,
              r.checked, r.resampled)};
}

Verdict parser_fixtures() {
  const fs::path dir = fs::path(DMD_FIXTURE_DIR) / "colmap";
  double worst = 0.0;
  for (const char* name : {"orbit.txt", "spaces_and_empty_points.txt"}) {
    const auto a = read_colmap_images(dir / name);
    std::stringstream buf;
    write_colmap_images(buf, a);
    const auto b = parse_colmap_images(buf);
    if (a.size() != b.size()) return {false, std::string(name) + ": record count changed"};
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].name != b[i].name) return {false, std::string(name) + ": name changed"};
      worst = std::max(worst, (a[i].cam_from_world.translation() - b[i].cam_from_world.translation()).norm());
      worst = std::max(worst, rotation_distance(a[i].cam_from_world.rotation(), b[i].cam_from_world.rotation()));
    }
  }
  const std::map<std::string, std::size_t> expected{
      {"bad_field_count.txt", 9}, {"bad_number.txt", 11}, {"bad_zero_quaternion.txt", 7}};
  std::string lines;
  bool lines_ok = true;
  for (const auto& [name, line] : expected) {
    std::size_t got = 0;
    try {
      read_colmap_images(dir / name);
    } catch (const ParseError& e) {
      got = e.line();
    }
    lines_ok = lines_ok && got == line;
    lines += fmt(" %s:%zu", name.c_str(), got);
  }
  return {worst < 1e-9 && lines_ok, fmt("round-trip error %.3g; error lines%s", worst, lines.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
      {1, label_oracle}, {2, overshooting}, {3, k_sweep_shape}, {4, bc_vs_dmd},      {5, stacking},
      {6, synthesizer_quality}, {7, determinism}, {8, gradient}, {9, parser_fixtures}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& [id, run] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::printf("criterion %d: %s  %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  if (selected.empty() || selected.count(10)) {
    std::printf("criterion 10: N/A  secondary component (protocol stub) not built here; the remote client is "
                "covered by the unit tests against an in-process stub\n");
  }
  return failures == 0 ? 0 : 1;
}
