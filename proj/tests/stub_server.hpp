#pragma once

// In-process HTTP server speaking the view-synthesis wire protocol, for
// exercising the remote client without the external service.

#include "dmd/image.hpp"
#include "dmd/synthesis.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <memory>
#include <string>
#include <thread>

namespace testutil {

class StubServer {
 public:
  enum class Mode { Identity, Homography, WrongSize, ServerError, Garbage };

  StubServer(Mode mode, dmd::OrthoIntrinsics k = {}, double depth = 0.3) : mode_(mode), warp_(k, depth) {
    server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      const char* backend = mode_ == Mode::Homography ? "homography" : "identity";
      res.set_content(nlohmann::json{{"status", "ok"}, {"backend", backend}}.dump(), "application/json");
    });
    server_.Post("/v1/synthesize", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight_;
      int seen = max_in_flight_.load();
      while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
      }
      ++requests_;
      handle(req, res);
      // Keep requests overlapping long enough to observe concurrency.
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
      --in_flight_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int max_in_flight() const { return max_in_flight_.load(); }
  int requests() const { return requests_.load(); }

 private:
  static void error(httplib::Response& res, int status, const std::string& msg) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
  }

  void handle(const httplib::Request& req, httplib::Response& res) {
    if (mode_ == Mode::ServerError) return error(res, 500, "internal");
    if (mode_ == Mode::Garbage) {
      res.set_content("{\"nope\": 1}", "application/json");
      return;
    }
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const std::exception&) {
      return error(res, 400, "body is not JSON");
    }
    if (!body.contains("image_png_b64") || !body["image_png_b64"].is_string()) {
      return error(res, 400, "image_png_b64 missing");
    }
    if (!body.contains("t_from_tilde") || !body["t_from_tilde"].is_array() || body["t_from_tilde"].size() != 16) {
      return error(res, 400, "t_from_tilde must hold 16 numbers");
    }
    if (!body.contains("seed") || !body["seed"].is_number_integer()) return error(res, 400, "seed missing");

    dmd::Image img;
    try {
      img = dmd::decode_png(dmd::base64_decode(body["image_png_b64"].get<std::string>()));
    } catch (const std::exception& e) {
      return error(res, 400, std::string("bad image: ") + e.what());
    }
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) m(r, c) = body["t_from_tilde"][static_cast<std::size_t>(r * 4 + c)].get<double>();
    }
    const Eigen::Matrix3d rot = m.topLeftCorner<3, 3>();
    if ((rot * rot.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
        m.row(3) != Eigen::RowVector4d(0, 0, 0, 1)) {
      return error(res, 422, "transform is not rigid");
    }

    dmd::Image out = img;
    if (mode_ == Mode::Homography) {
      dmd::SynthRequest sreq;
      sreq.image = img;
      sreq.t_from_tilde = dmd::RigidTransformd(dmd::Rotationd(rot), m.topRightCorner<3, 1>(),
                                               dmd::FrameTag::perturbed(0, 0), dmd::FrameTag::camera(0));
      out = warp_.synthesize(sreq);
    } else if (mode_ == Mode::WrongSize) {
      out = dmd::Image(img.width + 1, img.height, img.channels);
    }
    res.set_content(nlohmann::json{{"image_png_b64", dmd::base64_encode(dmd::encode_png(out))}}.dump(),
                    "application/json");
  }

  Mode mode_;
  dmd::HomographySynthesizer warp_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
  std::atomic<int> requests_{0};
};

}  // namespace testutil
