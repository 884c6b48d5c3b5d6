#pragma once

// View-synthesis backends realizing f(I_t, t_T_t~): render an observation as
// seen from a camera displaced by t_from_tilde relative to the source camera.

#include "dmd/geometry.hpp"
#include "dmd/image.hpp"
#include "dmd/pushsim.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

namespace dmd {

struct SynthesizerId {
  enum class Kind : std::uint8_t { Oracle, Homography, Remote, Identity };
  Kind kind = Kind::Identity;
  std::string version;
  friend bool operator==(const SynthesizerId&, const SynthesizerId&) = default;
};

const char* to_string(SynthesizerId::Kind k);
SynthesizerId::Kind parse_backend_kind(const std::string& name);

struct SynthRequest {
  Image image;
  RigidTransformd t_from_tilde;  // maps perturbed-camera points into the source camera
  std::uint64_t seed = 0;
  std::optional<RigidTransformd> source_cam_from_world;  // oracle only
  std::optional<SimWorld> scene;                          // oracle only
  std::string provenance;                                 // for error messages
};

class Synthesizer {
 public:
  virtual ~Synthesizer() = default;
  virtual Image synthesize(const SynthRequest& req) const = 0;
  virtual SynthesizerId id() const = 0;
};

/// Returns the input unchanged; augmentation then only relabels.
class IdentitySynthesizer final : public Synthesizer {
 public:
  Image synthesize(const SynthRequest& req) const override { return req.image; }
  SynthesizerId id() const override { return {SynthesizerId::Kind::Identity, "1"}; }
};

/// Re-renders the simulator scene from the perturbed camera. Exact.
class OracleSynthesizer final : public Synthesizer {
 public:
  explicit OracleSynthesizer(SimConfig cfg) : cfg_(std::move(cfg)) {}
  Image synthesize(const SynthRequest& req) const override;
  SynthesizerId id() const override { return {SynthesizerId::Kind::Oracle, "1"}; }

 private:
  SimConfig cfg_;
};

/// Pixel grid of the orthographic camera: pixel (u, v) has its centre at
/// camera-frame ((u + 0.5 - cx) * pitch, (v + 0.5 - cy) * pitch).
struct OrthoIntrinsics {
  double pitch = 0.00375;
  double cx = 32.0;
  double cy = 60.0;

  static OrthoIntrinsics from(const SimConfig& cfg) {
    return {cfg.pixel_pitch(), cfg.resolution / 2.0,
            double(cfg.resolution - cfg.gripper_row_from_bottom)};
  }
};

/// Warps the source image assuming the whole scene is the plane z = depth in
/// the source camera frame (normal along the optical axis). Anything off that
/// plane, such as the gripper riding on the camera, is warped incorrectly.
/// Pixels that map outside the source image are filled with `fill`.
class HomographySynthesizer final : public Synthesizer {
 public:
  HomographySynthesizer(OrthoIntrinsics intrinsics, double depth, std::uint8_t fill = 0);
  Image synthesize(const SynthRequest& req) const override;
  SynthesizerId id() const override { return {SynthesizerId::Kind::Homography, "1"}; }

  /// Source-image continuous pixel coordinates (pixel centres at integers)
  /// for output pixel (u, v).
  Eigen::Vector2d source_coordinates(const RigidTransformd& t_from_tilde, int u, int v) const;

 private:
  OrthoIntrinsics k_;
  double depth_;
  std::uint8_t fill_;
};

/// Bilinear sample at continuous pixel coordinates, `fill` outside.
double sample_bilinear(const Image& img, double x, double y, int channel, std::uint8_t fill);

struct RemoteOptions {
  std::string endpoint = "http://127.0.0.1:8080";
  int max_in_flight = 8;
  int retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{30};
};

/// Client for the POST /v1/synthesize wire protocol.
class RemoteSynthesizer final : public Synthesizer {
 public:
  explicit RemoteSynthesizer(RemoteOptions options);
  ~RemoteSynthesizer() override;
  Image synthesize(const SynthRequest& req) const override;
  SynthesizerId id() const override { return {SynthesizerId::Kind::Remote, version_}; }

  /// GET /v1/health; returns the backend name the service reports.
  std::string health() const;

 private:
  struct State;
  RemoteOptions options_;
  std::unique_ptr<State> state_;
  std::string version_ = "v1";
};

/// Request body for the wire protocol (exposed for tests and servers).
std::string encode_synth_request(const SynthRequest& req);
/// Parses a response body; throws SynthesizerError(MalformedResponse).
Image decode_synth_response(const std::string& body);

}  // namespace dmd
