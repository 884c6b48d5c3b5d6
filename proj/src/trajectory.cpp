#include "dmd/trajectory.hpp"

#include "dmd/errors.hpp"
#include "dmd/rng.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace dmd {

using ordered_json = nlohmann::ordered_json;

const char* to_string(GripperState g) {
  switch (g) {
    case GripperState::Open:
      return "open";
    case GripperState::Closed:
      return "closed";
    case GripperState::None:
      return "none";
  }
  return "none";
}

const char* to_string(TrajectoryKind k) { return k == TrajectoryKind::Play ? "play" : "task"; }

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    if (i >= s.size()) break;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* what) {
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(line, std::string("malformed ") + what + " '" + std::string(field) + "'");
  }
  return value;
}

GripperState parse_gripper(const std::string& s, std::size_t line) {
  if (s == "open") return GripperState::Open;
  if (s == "closed") return GripperState::Closed;
  if (s == "none") return GripperState::None;
  throw ParseError(line, "unknown gripper state '" + s + "'");
}

}  // namespace

std::vector<ColmapImage> parse_colmap_images(std::istream& in, bool invert) {
  std::vector<ColmapImage> images;
  std::unordered_set<std::string> names;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;

    // IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME
    const auto fields = split_ws(line);
    if (fields.size() < 10) {
      throw ParseError(line_no, "expected 10 fields in image record, got " +
                                    std::to_string(fields.size()));
    }
    ColmapImage img;
    img.image_id = parse_number<long>(fields[0], line_no, "IMAGE_ID");
    double v[7];
    static const char* kNames[7] = {"QW", "QX", "QY", "QZ", "TX", "TY", "TZ"};
    for (int k = 0; k < 7; ++k) v[k] = parse_number<double>(fields[1 + k], line_no, kNames[k]);
    img.camera_id = parse_number<long>(fields[8], line_no, "CAMERA_ID");
    // NAME is the remainder of the line so file names may contain spaces.
    img.name = std::string(trim(line.substr(static_cast<std::size_t>(fields[9].data() - line.data()))));

    const Eigen::Quaterniond q(v[0], v[1], v[2], v[3]);
    if (!(q.norm() > 0.0) || !std::isfinite(q.norm())) {
      throw ParseError(line_no, "degenerate quaternion");
    }
    const int ordinal = static_cast<int>(images.size());
    RigidTransformd pose(Rotationd(q), Vec3(v[4], v[5], v[6]), FrameTag::world(),
                         FrameTag::camera(ordinal));
    if (invert) pose = inverse(pose.retagged(FrameTag::camera(ordinal), FrameTag::world()));
    img.cam_from_world = pose;

    if (!names.insert(img.name).second) {
      throw DuplicateImageName("line " + std::to_string(line_no) + ": duplicate image name '" +
                               img.name + "'");
    }
    images.push_back(std::move(img));

    // POINTS2D line, possibly empty.
    if (std::getline(in, raw)) ++line_no;
  }
  return images;
}

std::vector<ColmapImage> read_colmap_images(const std::filesystem::path& path, bool invert) {
  std::ifstream f(path);
  if (!f) throw MissingInput("cannot open " + path.string());
  return parse_colmap_images(f, invert);
}

void write_colmap_images(std::ostream& out, const std::vector<ColmapImage>& images) {
  out << "# Image list with two lines of data per image:\n"
      << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
      << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n"
      << "# Number of images: " << images.size() << "\n";
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& img : images) {
    const auto& q = img.cam_from_world.rotation();
    const auto& t = img.cam_from_world.translation();
    out << img.image_id << ' ' << q.w() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' '
        << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << img.camera_id << ' ' << img.name
        << "\n\n";
  }
  out.precision(old_precision);
}

Trajectory trajectory_from_colmap(std::string id, const std::vector<ColmapImage>& images,
                                  TrajectoryKind kind) {
  Trajectory t;
  t.id = std::move(id);
  t.kind = kind;
  t.scale = Scale::reconstruction(0.0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const int idx = static_cast<int>(i);
    Frame f;
    f.index = idx;
    f.image_ref = images[i].name;
    f.cam_from_world = images[i].cam_from_world.retagged(FrameTag::world(), FrameTag::camera(idx));
    t.frames.push_back(std::move(f));
  }
  if (const auto dropped = drop_stationary_frames(t)) {
    spdlog::warn("trajectory '{}': dropped {} frame(s) with zero displacement", t.id, dropped);
  }
  if (t.frames.size() < 2) {
    throw DegenerateTrajectory("trajectory '" + t.id + "' has fewer than 2 distinct frames");
  }
  t.scale.s = compute_scale(t);
  return t;
}

std::size_t drop_stationary_frames(Trajectory& t, double eps) {
  if (t.frames.empty()) return 0;
  std::vector<Frame> kept;
  kept.push_back(t.frames.front());
  for (std::size_t i = 1; i < t.frames.size(); ++i) {
    const auto rel = relative_pose(kept.back().cam_from_world, t.frames[i].cam_from_world);
    if (rel.translation().norm() >= eps) kept.push_back(t.frames[i]);
  }
  const std::size_t dropped = t.frames.size() - kept.size();
  t.frames = std::move(kept);
  return dropped;
}

void validate(const Trajectory& t) {
  if (t.frames.size() < 2) {
    throw DegenerateTrajectory("trajectory '" + t.id + "' needs at least 2 frames");
  }
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    const Frame& f = t.frames[i];
    if (f.image_ref.empty()) {
      throw IndexOutOfRange("frame " + std::to_string(f.index) + " has an empty image_ref");
    }
    if (i > 0 && f.index <= t.frames[i - 1].index) {
      throw IndexOutOfRange("frame indices must be strictly increasing at position " +
                            std::to_string(i));
    }
    if (!(f.cam_from_world.from() == FrameTag::world()) ||
        !(f.cam_from_world.to() == FrameTag::camera(f.index))) {
      throw FrameMismatch(f.cam_from_world.from(), FrameTag::world());
    }
  }
}

double compute_scale(const Trajectory& t) {
  if (t.frames.size() < 2) {
    throw DegenerateTrajectory("trajectory '" + t.id + "' needs at least 2 frames");
  }
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < t.frames.size(); ++i) {
    const auto rel = relative_pose(t.frames[i].cam_from_world, t.frames[i + 1].cam_from_world);
    s = std::max(s, rel.translation().norm());
  }
  if (!(s > 0.0)) throw DegenerateTrajectory("trajectory '" + t.id + "': all frames coincide");
  return s;
}

Action expert_action(const Trajectory& t, std::size_t i) {
  if (i + 1 >= t.frames.size()) {
    throw IndexOutOfRange("expert_action: index " + std::to_string(i) + " needs a successor in a " +
                          std::to_string(t.frames.size()) + "-frame trajectory");
  }
  const auto rel = relative_pose(t.frames[i].cam_from_world, t.frames[i + 1].cam_from_world);
  Action a;
  a.translation = rel.translation();
  a.rotation = rotation_to_vector(rel.rotation());
  if (!t.scale.is_metric()) {
    const double n = a.translation.norm();
    if (n < 1e-8) {
      throw ZeroAction("expert_action: zero displacement at frame " +
                       std::to_string(t.frames[i].index) + " of '" + t.id + "'");
    }
    a.translation /= n;
  }
  return a;
}

std::vector<FinetuneTriple> export_finetune_triples(const Trajectory& t, std::size_t n,
                                                    std::uint64_t seed) {
  const std::uint64_t frames = t.frames.size();
  if (frames < 2) throw DegenerateTrajectory("export_finetune_triples needs at least 2 frames");
  const std::uint64_t pairs = frames * (frames - 1);
  if (n > pairs) {
    spdlog::warn("trajectory '{}': requested {} triples but only {} distinct pairs exist", t.id, n,
                 pairs);
    n = pairs;
  }

  // Partial Fisher-Yates over the implicit array of pair codes; the sparse
  // map stores only displaced entries.
  Engine rng = make_engine(seed, {hash_string(t.id), 0x7472697073ULL});
  std::unordered_map<std::uint64_t, std::uint64_t> swapped;
  auto value_at = [&](std::uint64_t i) {
    const auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };

  std::vector<FinetuneTriple> out;
  out.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t j = i + uniform_index(rng, pairs - i);
    const std::uint64_t code = value_at(j);
    swapped[j] = value_at(i);

    const std::uint64_t a = code / (frames - 1);
    std::uint64_t b = code % (frames - 1);
    if (b >= a) ++b;
    const Frame& fa = t.frames[a];
    const Frame& fb = t.frames[b];
    out.push_back({fa.image_ref, fb.image_ref, relative_pose(fa.cam_from_world, fb.cam_from_world)});
  }
  return out;
}

void write_finetune_triples(std::ostream& out, const std::vector<FinetuneTriple>& triples) {
  for (const auto& tr : triples) {
    const auto& q = tr.a_from_b.rotation();
    const auto& p = tr.a_from_b.translation();
    ordered_json j;
    j["a"] = tr.image_a_ref;
    j["b"] = tr.image_b_ref;
    j["q"] = {q.w(), q.x(), q.y(), q.z()};
    j["t"] = {p.x(), p.y(), p.z()};
    out << j.dump() << '\n';
  }
}

void write_trajectory(std::ostream& out, const Trajectory& t) {
  ordered_json header;
  header["v"] = 1;
  header["id"] = t.id;
  header["scale"] = {{"kind", t.scale.is_metric() ? "metric" : "reconstruction"},
                     {"s", t.scale.is_metric() ? ordered_json(nullptr) : ordered_json(t.scale.s)}};
  header["kind"] = to_string(t.kind);
  out << header.dump() << '\n';
  for (const Frame& f : t.frames) {
    const auto& q = f.cam_from_world.rotation();
    const auto& p = f.cam_from_world.translation();
    ordered_json j;
    j["i"] = f.index;
    j["img"] = f.image_ref;
    j["q"] = {q.w(), q.x(), q.y(), q.z()};
    j["t"] = {p.x(), p.y(), p.z()};
    j["ts"] = f.timestamp ? ordered_json(*f.timestamp) : ordered_json(nullptr);
    j["grip"] = to_string(f.gripper);
    out << j.dump() << '\n';
  }
}

Trajectory read_trajectory(std::istream& in) {
  Trajectory t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    try {
      if (!have_header) {
        const int version = j.at("v").get<int>();
        if (version != 1) {
          throw VersionMismatch("unsupported trajectory format version " + std::to_string(version));
        }
        t.id = j.at("id").get<std::string>();
        const auto& scale = j.at("scale");
        const auto kind = scale.at("kind").get<std::string>();
        if (kind == "metric") {
          t.scale = Scale::metric();
        } else if (kind == "reconstruction") {
          t.scale = Scale::reconstruction(scale.at("s").get<double>());
        } else {
          throw ParseError(line_no, "unknown scale kind '" + kind + "'");
        }
        const auto tk = j.at("kind").get<std::string>();
        if (tk == "task") {
          t.kind = TrajectoryKind::Task;
        } else if (tk == "play") {
          t.kind = TrajectoryKind::Play;
        } else {
          throw ParseError(line_no, "unknown trajectory kind '" + tk + "'");
        }
        have_header = true;
        continue;
      }
      Frame f;
      f.index = j.at("i").get<int>();
      f.image_ref = j.at("img").get<std::string>();
      const auto q = j.at("q").get<std::vector<double>>();
      const auto p = j.at("t").get<std::vector<double>>();
      if (q.size() != 4 || p.size() != 3) throw ParseError(line_no, "q needs 4 and t needs 3 values");
      f.cam_from_world = RigidTransformd(Rotationd::FromWxyz(q[0], q[1], q[2], q[3]),
                                         Vec3(p[0], p[1], p[2]), FrameTag::world(),
                                         FrameTag::camera(f.index));
      if (!j.at("ts").is_null()) f.timestamp = j.at("ts").get<double>();
      f.gripper = parse_gripper(j.at("grip").get<std::string>(), line_no);
      t.frames.push_back(std::move(f));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (!have_header) throw ParseError(line_no, "missing header line");
  validate(t);
  if (!t.scale.is_metric()) {
    const double s = compute_scale(t);
    if (std::abs(s - t.scale.s) > 1e-9 * std::max(1.0, s)) {
      throw ParseError(1, "header scale " + std::to_string(t.scale.s) +
                              " disagrees with frame displacements (" + std::to_string(s) + ")");
    }
  }
  return t;
}

void save_trajectory(const std::filesystem::path& path, const Trajectory& t) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_trajectory(f, t);
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw MissingInput("cannot open " + path.string());
  return read_trajectory(f);
}

}  // namespace dmd
