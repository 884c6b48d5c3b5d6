#pragma once

// Feed-forward image-to-action policy: ReLU MLP over raw pixels, trained with
// L1 regression on unit translation directions (plus rotation vectors when
// the rotation head is enabled) using Adam.

#include "dmd/geometry.hpp"
#include "dmd/image.hpp"
#include "dmd/trajectory.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace dmd {

struct PolicyArchitecture {
  int input_dim = 64 * 64;
  std::vector<int> hidden{256, 64};
  int translation_dims = 2;  // 2 = planar (camera x, y), 3 = full
  bool rotation_head = false;

  int output_dim() const { return translation_dims + (rotation_head ? 3 : 0); }
  friend bool operator==(const PolicyArchitecture&, const PolicyArchitecture&) = default;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 64;
  int epochs = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Dense parameters of every layer; layer i maps dims[i] -> dims[i+1].
struct Parameters {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  Eigen::Index size() const;
  /// Flat views for the optimizer and the gradient checker.
  double& at(Eigen::Index flat);
  double at(Eigen::Index flat) const;
  Parameters zeros_like() const;
};

class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(PolicyArchitecture arch, std::uint64_t seed);

  const PolicyArchitecture& architecture() const { return arch_; }
  const Parameters& parameters() const { return params_; }
  Parameters& parameters() { return params_; }

  /// Raw outputs, one column per input column.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;
  Eigen::VectorXd forward(const Image& image) const;

  /// Unit translation direction in the camera frame (z = 0 for planar
  /// heads). A zero raw output falls back to +x.
  Vec3 predict(const Image& image) const;

  /// Mean over columns of the summed absolute error.
  double loss(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) const;
  /// Loss and its analytic gradient.
  double loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                           Parameters& gradient) const;

  friend bool operator==(const PolicyNet& a, const PolicyNet& b);

 private:
  PolicyArchitecture arch_;
  Parameters params_;
};

struct LabeledImage {
  Image image;
  Action action;
};

/// Target vector for the architecture: unit translation (first
/// translation_dims components) then rotation vector. Throws ZeroAction.
Eigen::VectorXd make_target(const PolicyArchitecture& arch, const Action& action);

struct TrainResult {
  PolicyNet net;
  std::vector<double> epoch_loss;  // mean L1 per epoch, after each epoch's updates
  double initial_loss = 0.0;       // before any update
};

/// Deterministic given cfg.seed and the sample order.
TrainResult train(std::span<const LabeledImage> dataset, const PolicyArchitecture& arch,
                  const TrainConfig& cfg);

struct GradientCheckReport {
  double max_relative_error = 0.0;
  int checked = 0;
  int resampled = 0;  // draws rejected as kink-adjacent
};

/// Central differences on `samples` randomly drawn parameters. A draw is
/// rejected and redrawn when perturbing it by +-h changes any ReLU or L1
/// sign pattern, i.e. when the loss is not smooth over the stencil.
GradientCheckReport gradient_check(const PolicyNet& net, const Eigen::MatrixXd& inputs,
                                   const Eigen::MatrixXd& targets, int samples = 200, double h = 1e-5,
                                   std::uint64_t seed = 0);

void save_checkpoint(const std::filesystem::path& path, const PolicyNet& net, const TrainConfig& cfg);
PolicyNet load_checkpoint(const std::filesystem::path& path, TrainConfig* cfg = nullptr);

}  // namespace dmd
