#include "dmd/policy.hpp"

#include "dmd/errors.hpp"
#include "dmd/rng.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace dmd {

void TrainConfig::validate() const {
  if (!(learning_rate > 0 && beta1 > 0 && beta2 > 0 && epsilon > 0 && batch_size > 0 && epochs > 0)) {
    throw ConfigError("train config values must be positive");
  }
}

Eigen::Index Parameters::size() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

double& Parameters::at(Eigen::Index flat) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (flat < weights[l].size()) return weights[l].data()[flat];
    flat -= weights[l].size();
    if (flat < biases[l].size()) return biases[l][flat];
    flat -= biases[l].size();
  }
  throw IndexOutOfRange("parameter index out of range");
}

double Parameters::at(Eigen::Index flat) const { return const_cast<Parameters*>(this)->at(flat); }

Parameters Parameters::zeros_like() const {
  Parameters z;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    z.weights.push_back(Eigen::MatrixXd::Zero(weights[l].rows(), weights[l].cols()));
    z.biases.push_back(Eigen::VectorXd::Zero(biases[l].size()));
  }
  return z;
}

PolicyNet::PolicyNet(PolicyArchitecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
  std::vector<int> dims{arch_.input_dim};
  dims.insert(dims.end(), arch_.hidden.begin(), arch_.hidden.end());
  dims.push_back(arch_.output_dim());
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const bool output_layer = l + 2 == dims.size();
    // He-uniform for ReLU layers, LeCun-uniform for the linear head.
    const double bound = std::sqrt((output_layer ? 3.0 : 6.0) / fan_in);
    Engine rng = make_engine(seed, {0x696e6974ULL, l});
    Eigen::MatrixXd w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng, -bound, bound);
    params_.weights.push_back(std::move(w));
    params_.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
}

Eigen::MatrixXd PolicyNet::forward(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != arch_.input_dim) {
    throw DimensionMismatch("policy expects " + std::to_string(arch_.input_dim) + " inputs, got " +
                            std::to_string(inputs.rows()));
  }
  Eigen::MatrixXd a = inputs;
  const std::size_t layers = params_.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = params_.weights[l] * a;
    z.colwise() += params_.biases[l];
    a = l + 1 < layers ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return a;
}

Eigen::VectorXd PolicyNet::forward(const Image& image) const { return forward(Eigen::MatrixXd(to_features(image))).col(0); }

Vec3 PolicyNet::predict(const Image& image) const {
  const Eigen::VectorXd out = forward(image);
  Vec3 t = Vec3::Zero();
  t.head(arch_.translation_dims) = out.head(arch_.translation_dims);
  const double n = t.norm();
  if (!(n > 1e-12)) {
    spdlog::warn("policy produced a zero translation; falling back to +x");
    return Vec3::UnitX();
  }
  return t / n;
}

double PolicyNet::loss(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) const {
  return (forward(inputs) - targets).cwiseAbs().sum() / static_cast<double>(inputs.cols());
}

double PolicyNet::loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                                    Parameters& gradient) const {
  const std::size_t layers = params_.weights.size();
  const double batch = static_cast<double>(inputs.cols());
  std::vector<Eigen::MatrixXd> acts;  // acts[l] is the input to layer l
  acts.reserve(layers + 1);
  acts.push_back(inputs);
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = params_.weights[l] * acts.back();
    z.colwise() += params_.biases[l];
    acts.push_back(l + 1 < layers ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z);
  }
  const Eigen::MatrixXd diff = acts.back() - targets;
  const double loss = diff.cwiseAbs().sum() / batch;

  if (gradient.weights.size() != layers) gradient = params_.zeros_like();
  Eigen::MatrixXd delta = diff.unaryExpr([batch](double d) { return (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0) / batch; });
  for (std::size_t l = layers; l-- > 0;) {
    gradient.weights[l].noalias() = delta * acts[l].transpose();
    gradient.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = params_.weights[l].transpose() * delta;
      // ReLU derivative: acts[l] > 0 exactly where the pre-activation was positive.
      delta = (acts[l].array() > 0.0).select(back, 0.0);
    }
  }
  return loss;
}

bool operator==(const PolicyNet& a, const PolicyNet& b) {
  if (!(a.arch_ == b.arch_)) return false;
  for (std::size_t l = 0; l < a.params_.weights.size(); ++l) {
    if (a.params_.weights[l] != b.params_.weights[l] || a.params_.biases[l] != b.params_.biases[l]) return false;
  }
  return true;
}

Eigen::VectorXd make_target(const PolicyArchitecture& arch, const Action& action) {
  Eigen::VectorXd y(arch.output_dim());
  const Eigen::VectorXd t = action.translation.head(arch.translation_dims);
  const double n = t.norm();
  if (!(n > 1e-12)) throw ZeroAction("training target has zero translation");
  y.head(arch.translation_dims) = t / n;
  if (arch.rotation_head) y.tail(3) = action.rotation.value_or(Vec3::Zero());
  return y;
}

TrainResult train(std::span<const LabeledImage> dataset, const PolicyArchitecture& arch, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw EmptyDataset("train: dataset is empty");
  const bool has_rotation = dataset.front().action.rotation.has_value();
  for (const auto& s : dataset) {
    if (arch.rotation_head && s.action.rotation.has_value() != has_rotation) {
      throw MixedActionDims("train: samples disagree on whether they carry a rotation label");
    }
    if (static_cast<int>(s.image.pixels.size()) != arch.input_dim) {
      throw DimensionMismatch("train: image has " + std::to_string(s.image.pixels.size()) +
                              " values, policy expects " + std::to_string(arch.input_dim));
    }
  }
  if (arch.rotation_head && !has_rotation) throw MixedActionDims("train: rotation head without rotation labels");

  const Eigen::Index n = static_cast<Eigen::Index>(dataset.size());
  Eigen::MatrixXd inputs(arch.input_dim, n);
  Eigen::MatrixXd targets(arch.output_dim(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    inputs.col(i) = to_features(dataset[i].image);
    targets.col(i) = make_target(arch, dataset[i].action);
  }

  TrainResult result{PolicyNet(arch, cfg.seed), {}, 0.0};
  PolicyNet& net = result.net;
  result.initial_loss = net.loss(inputs, targets);

  Parameters grad = net.parameters().zeros_like();
  Parameters m = grad;
  Parameters v = grad;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::int64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Engine rng = make_engine(cfg.seed, {0x65706f6368ULL, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    double epoch_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Eigen::MatrixXd xb(arch.input_dim, count);
      Eigen::MatrixXd yb(arch.output_dim(), count);
      for (Eigen::Index j = 0; j < count; ++j) {
        xb.col(j) = inputs.col(order[static_cast<std::size_t>(start + j)]);
        yb.col(j) = targets.col(order[static_cast<std::size_t>(start + j)]);
      }
      epoch_sum += net.loss_and_gradient(xb, yb, grad) * static_cast<double>(count);

      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      auto adam = [&](auto& p, auto& g, auto& mm, auto& vv) {
        mm = cfg.beta1 * mm + (1.0 - cfg.beta1) * g;
        vv = cfg.beta2 * vv + (1.0 - cfg.beta2) * g.cwiseAbs2();
        p.array() -= cfg.learning_rate * (mm.array() / c1) / ((vv.array() / c2).sqrt() + cfg.epsilon);
      };
      auto& params = net.parameters();
      for (std::size_t l = 0; l < params.weights.size(); ++l) {
        adam(params.weights[l], grad.weights[l], m.weights[l], v.weights[l]);
        adam(params.biases[l], grad.biases[l], m.biases[l], v.biases[l]);
      }
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(n));
  }
  return result;
}

namespace {

/// Activation and loss sign pattern, used to detect kinks inside the stencil.
std::vector<signed char> smooth_pattern(const PolicyNet& net, const Eigen::MatrixXd& inputs,
                                        const Eigen::MatrixXd& targets) {
  std::vector<signed char> pattern;
  const auto& p = net.parameters();
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    Eigen::MatrixXd z = p.weights[l] * a;
    z.colwise() += p.biases[l];
    if (l + 1 < p.weights.size()) {
      for (Eigen::Index i = 0; i < z.size(); ++i) pattern.push_back(z.data()[i] > 0.0 ? 1 : z.data()[i] < 0.0 ? -1 : 0);
      a = z.cwiseMax(0.0);
    } else {
      const Eigen::MatrixXd d = z - targets;
      for (Eigen::Index i = 0; i < d.size(); ++i) pattern.push_back(d.data()[i] > 0.0 ? 1 : d.data()[i] < 0.0 ? -1 : 0);
    }
  }
  return pattern;
}

}  // namespace

GradientCheckReport gradient_check(const PolicyNet& net, const Eigen::MatrixXd& inputs,
                                   const Eigen::MatrixXd& targets, int samples, double h, std::uint64_t seed) {
  GradientCheckReport report;
  Parameters analytic;
  net.loss_and_gradient(inputs, targets, analytic);
  const auto base_pattern = smooth_pattern(net, inputs, targets);
  const bool base_smooth = std::find(base_pattern.begin(), base_pattern.end(), 0) == base_pattern.end();

  PolicyNet probe = net;
  Engine rng = make_engine(seed, {0x67726164ULL});
  const auto total = static_cast<std::uint64_t>(net.parameters().size());
  const int max_draws = samples * 50;
  int draws = 0;
  while (report.checked < samples && draws < max_draws) {
    ++draws;
    const auto idx = static_cast<Eigen::Index>(uniform_index(rng, total));
    double& param = probe.parameters().at(idx);
    const double original = param;

    param = original + h;
    const double up = probe.loss(inputs, targets);
    const bool up_same = smooth_pattern(probe, inputs, targets) == base_pattern;
    param = original - h;
    const double down = probe.loss(inputs, targets);
    const bool down_same = smooth_pattern(probe, inputs, targets) == base_pattern;
    param = original;

    if (!base_smooth || !up_same || !down_same) {
      ++report.resampled;
      continue;
    }
    const double numeric = (up - down) / (2.0 * h);
    const double exact = analytic.at(idx);
    const double denom = std::max(std::abs(numeric) + std::abs(exact), 1e-8);
    report.max_relative_error = std::max(report.max_relative_error, std::abs(numeric - exact) / denom);
    ++report.checked;
  }
  return report;
}

namespace {

constexpr char kMagic[8] = {'D', 'M', 'D', 'P', 'O', 'L', 'v', '1'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PolicyNet& net, const TrainConfig& cfg) {
  const auto& arch = net.architecture();
  nlohmann::ordered_json header;
  header["architecture"] = {{"input_dim", arch.input_dim},
                            {"hidden", arch.hidden},
                            {"translation_dims", arch.translation_dims},
                            {"rotation_head", arch.rotation_head}};
  header["train"] = {{"learning_rate", cfg.learning_rate}, {"beta1", cfg.beta1}, {"beta2", cfg.beta2},
                     {"epsilon", cfg.epsilon},             {"batch_size", cfg.batch_size},
                     {"epochs", cfg.epochs},               {"seed", cfg.seed}};
  const std::string text = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path.string());
  f.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto& p = net.parameters();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    f.write(reinterpret_cast<const char*>(p.weights[l].data()), static_cast<std::streamsize>(p.weights[l].size() * sizeof(double)));
    f.write(reinterpret_cast<const char*>(p.biases[l].data()), static_cast<std::streamsize>(p.biases[l].size() * sizeof(double)));
  }
}

PolicyNet load_checkpoint(const std::filesystem::path& path, TrainConfig* cfg) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingInput("cannot open checkpoint " + path.string());
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw VersionMismatch("not a v1 policy checkpoint: " + path.string());
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  f.read(text.data(), static_cast<std::streamsize>(len));
  const auto header = nlohmann::json::parse(text);
  PolicyArchitecture arch;
  const auto& a = header.at("architecture");
  arch.input_dim = a.at("input_dim").get<int>();
  arch.hidden = a.at("hidden").get<std::vector<int>>();
  arch.translation_dims = a.at("translation_dims").get<int>();
  arch.rotation_head = a.at("rotation_head").get<bool>();
  if (cfg) {
    const auto& t = header.at("train");
    cfg->learning_rate = t.at("learning_rate").get<double>();
    cfg->beta1 = t.at("beta1").get<double>();
    cfg->beta2 = t.at("beta2").get<double>();
    cfg->epsilon = t.at("epsilon").get<double>();
    cfg->batch_size = t.at("batch_size").get<int>();
    cfg->epochs = t.at("epochs").get<int>();
    cfg->seed = t.at("seed").get<std::uint64_t>();
  }
  PolicyNet net(arch, 0);
  auto& p = net.parameters();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    f.read(reinterpret_cast<char*>(p.weights[l].data()), static_cast<std::streamsize>(p.weights[l].size() * sizeof(double)));
    f.read(reinterpret_cast<char*>(p.biases[l].data()), static_cast<std::streamsize>(p.biases[l].size() * sizeof(double)));
  }
  if (!f) throw ParseError(0, "truncated checkpoint " + path.string());
  return net;
}

}  // namespace dmd
