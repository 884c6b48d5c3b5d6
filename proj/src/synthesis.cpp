#include "dmd/synthesis.hpp"

#include "dmd/errors.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <semaphore>
#include <thread>

namespace dmd {

const char* to_string(SynthesizerId::Kind k) {
  switch (k) {
    case SynthesizerId::Kind::Oracle:
      return "oracle";
    case SynthesizerId::Kind::Homography:
      return "homography";
    case SynthesizerId::Kind::Remote:
      return "remote";
    case SynthesizerId::Kind::Identity:
      return "identity";
  }
  return "identity";
}

SynthesizerId::Kind parse_backend_kind(const std::string& name) {
  for (auto k : {SynthesizerId::Kind::Oracle, SynthesizerId::Kind::Homography,
                 SynthesizerId::Kind::Remote, SynthesizerId::Kind::Identity}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown synthesizer backend '" + name + "'");
}

Image OracleSynthesizer::synthesize(const SynthRequest& req) const {
  if (!req.scene || !req.source_cam_from_world) {
    throw SynthesizerError(SynthesizerError::Kind::Unavailable,
                           "oracle backend needs scene state and source pose (" + req.provenance + ")");
  }
  if (req.image.width != cfg_.resolution || req.image.height != cfg_.resolution) {
    throw SynthesizerError(SynthesizerError::Kind::DimensionMismatch,
                           "oracle backend renders " + std::to_string(cfg_.resolution) + "px (" +
                               req.provenance + ")");
  }
  // tilde_T_w = (t_T_tilde)^-1 * t_T_w
  const RigidTransformd tilde_from_world = compose(inverse(req.t_from_tilde), *req.source_cam_from_world);
  return render(cfg_, *req.scene, tilde_from_world);
}

HomographySynthesizer::HomographySynthesizer(OrthoIntrinsics intrinsics, double depth,
                                             std::uint8_t fill)
    : k_(intrinsics), depth_(depth), fill_(fill) {
  if (!(depth > 0.0)) throw ConfigError("homography depth must be positive");
}

Eigen::Vector2d HomographySynthesizer::source_coordinates(const RigidTransformd& t_from_tilde, int u,
                                                          int v) const {
  const Vec3 origin_tilde((u + 0.5 - k_.cx) * k_.pitch, (v + 0.5 - k_.cy) * k_.pitch, 0.0);
  const Vec3 origin = t_from_tilde * origin_tilde;
  const Vec3 ray = t_from_tilde.rotation() * Vec3::UnitZ();
  const double lambda = (depth_ - origin.z()) / ray.z();
  const Vec3 p = origin + lambda * ray;
  return {p.x() / k_.pitch + k_.cx - 0.5, p.y() / k_.pitch + k_.cy - 0.5};
}

double sample_bilinear(const Image& img, double x, double y, int channel, std::uint8_t fill) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  auto px = [&](int xi, int yi) -> double {
    if (xi < 0 || yi < 0 || xi >= img.width || yi >= img.height) return fill;
    return img.at(xi, yi, channel);
  };
  return (1 - ay) * ((1 - ax) * px(x0, y0) + ax * px(x0 + 1, y0)) +
         ay * ((1 - ax) * px(x0, y0 + 1) + ax * px(x0 + 1, y0 + 1));
}

Image HomographySynthesizer::synthesize(const SynthRequest& req) const {
  const auto& q = req.t_from_tilde.rotation().quaternion();
  if (q.w() == 1.0 && req.t_from_tilde.translation().isZero(0.0)) return req.image;
  const Vec3 ray = req.t_from_tilde.rotation() * Vec3::UnitZ();
  if (!(ray.z() > 1e-6)) {
    throw SynthesizerError(SynthesizerError::Kind::MalformedResponse,
                           "homography: perturbed camera does not face the plane (" + req.provenance + ")");
  }

  Image out(req.image.width, req.image.height, req.image.channels);
  for (int v = 0; v < out.height; ++v) {
    for (int u = 0; u < out.width; ++u) {
      const Eigen::Vector2d src = source_coordinates(req.t_from_tilde, u, v);
      for (int c = 0; c < out.channels; ++c) {
        const double value = sample_bilinear(req.image, src.x(), src.y(), c, fill_);
        out.at(u, v, c) = static_cast<std::uint8_t>(std::lround(std::clamp(value, 0.0, 255.0)));
      }
    }
  }
  return out;
}

std::string encode_synth_request(const SynthRequest& req) {
  const Matrix4<double> m = req.t_from_tilde.matrix();
  nlohmann::ordered_json j;
  j["image_png_b64"] = base64_encode(encode_png(req.image));
  auto& arr = j["t_from_tilde"] = nlohmann::ordered_json::array();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) arr.push_back(m(r, c));
  }
  j["seed"] = req.seed;
  return j.dump();
}

Image decode_synth_response(const std::string& body) {
  try {
    const auto j = nlohmann::json::parse(body);
    return decode_png(base64_decode(j.at("image_png_b64").get<std::string>()));
  } catch (const std::exception& e) {
    throw SynthesizerError(SynthesizerError::Kind::MalformedResponse, e.what());
  }
}

struct RemoteSynthesizer::State {
  explicit State(int n) : in_flight(n) {}
  mutable std::counting_semaphore<1024> in_flight;
};

RemoteSynthesizer::RemoteSynthesizer(RemoteOptions options)
    : options_(std::move(options)),
      state_(std::make_unique<State>(std::clamp(options_.max_in_flight, 1, 1024))) {}

RemoteSynthesizer::~RemoteSynthesizer() = default;

namespace {

std::string server_error(const httplib::Result& res) {
  try {
    return nlohmann::json::parse(res->body).at("error").get<std::string>();
  } catch (...) {
    return res->body;
  }
}

}  // namespace

Image RemoteSynthesizer::synthesize(const SynthRequest& req) const {
  const std::string body = encode_synth_request(req);
  state_->in_flight.acquire();
  struct Release {
    State& s;
    ~Release() { s.in_flight.release(); }
  } release{*state_};

  auto backoff = options_.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    httplib::Client client(options_.endpoint);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    auto res = client.Post("/v1/synthesize", body, "application/json");
    if (!res) {
      if (attempt >= options_.retries) {
        throw SynthesizerError(SynthesizerError::Kind::Unavailable,
                               options_.endpoint + ": " + httplib::to_string(res.error()) + " after " +
                                   std::to_string(attempt + 1) + " attempts (" + req.provenance + ")");
      }
      spdlog::warn("synthesize {}: transport error ({}), retrying in {} ms", req.provenance,
                   httplib::to_string(res.error()), backoff.count());
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
      continue;
    }
    if (res->status >= 500) {
      throw SynthesizerError(SynthesizerError::Kind::Unavailable,
                             "HTTP " + std::to_string(res->status) + ": " + server_error(res) + " (" +
                                 req.provenance + ")");
    }
    if (res->status != 200) {
      throw SynthesizerError(SynthesizerError::Kind::MalformedResponse,
                             "HTTP " + std::to_string(res->status) + ": " + server_error(res) + " (" +
                                 req.provenance + ")");
    }
    Image out = decode_synth_response(res->body);
    if (!out.same_shape(req.image)) {
      throw SynthesizerError(SynthesizerError::Kind::DimensionMismatch,
                             "response is " + std::to_string(out.width) + "x" + std::to_string(out.height) +
                                 "x" + std::to_string(out.channels) + ", request was " +
                                 std::to_string(req.image.width) + "x" + std::to_string(req.image.height) +
                                 "x" + std::to_string(req.image.channels) + " (" + req.provenance + ")");
    }
    return out;
  }
}

std::string RemoteSynthesizer::health() const {
  httplib::Client client(options_.endpoint);
  client.set_connection_timeout(options_.timeout);
  auto res = client.Get("/v1/health");
  if (!res || res->status != 200) {
    throw SynthesizerError(SynthesizerError::Kind::Unavailable, options_.endpoint + ": health check failed");
  }
  try {
    const auto j = nlohmann::json::parse(res->body);
    if (j.at("status").get<std::string>() != "ok") {
      throw SynthesizerError(SynthesizerError::Kind::Unavailable, "service reports not ok");
    }
    return j.at("backend").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw SynthesizerError(SynthesizerError::Kind::MalformedResponse, e.what());
  }
}

}  // namespace dmd
