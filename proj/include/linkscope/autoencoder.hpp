#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "linkscope/linalg.hpp"
#include "linkscope/representations.hpp"

namespace linkscope {

namespace nn {

struct Dense {
  Matrix weights;  // in x out
  Matrix bias;     // 1 x out
};

struct BatchNorm {
  Matrix gamma;  // 1 x dim
  Matrix beta;
  Matrix running_mean;
  Matrix running_var;
  double momentum = 0.9;
  static constexpr double kEpsilon = 1e-5;
};

struct LeakyRelu {
  double alpha = 0.2;
};

using Layer = std::variant<Dense, BatchNorm, LeakyRelu>;

// Plain feed-forward stack with a mean-squared-error head. The autoencoder is one
// instance; tests build smaller ones to check the calculus.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers) : layers_(std::move(layers)) {}

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  // Inference (frozen BN statistics) through layers [0, end).
  Matrix infer(const Matrix& x, std::size_t end) const;
  Matrix infer(const Matrix& x) const { return infer(x, layers_.size()); }

  // Train-mode forward + backward of mean((f(x) - target)^2). Fills gradients
  // (same order as parameters()) and, if update_running_stats, moves the BN
  // running statistics toward the batch statistics.
  double loss_and_gradients(const Matrix& x, const Matrix& target, std::vector<Matrix>& gradients,
                            bool update_running_stats);

  // Train-mode loss only. If signs is given, it receives the sign (x >= 0) of
  // every LeakyReLU input, which tells whether a perturbation crossed a kink.
  double loss(const Matrix& x, const Matrix& target, std::vector<bool>* signs = nullptr) const;

  // Trainable tensors in a fixed order: per Dense (weights, bias), per BN (gamma, beta).
  std::vector<Matrix*> parameters();

 private:
  std::vector<Layer> layers_;
};

}  // namespace nn

struct AutoencoderConfig {
  static constexpr std::array<std::size_t, 3> kHiddenDims{128, 64, 32};
  static constexpr std::size_t kCodeDim = 4;

  std::size_t input_dim = 0;
  double leaky_alpha = 0.2;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t patience = 20;
  double bn_momentum = 0.9;
  std::uint64_t seed = 0;
};

// Dense(128)-BN-LReLU-Dense(64)-BN-LReLU-Dense(32)-BN-LReLU-Dense(4) encoder and the
// mirrored decoder. Inputs are standardised per feature with statistics of the
// training vectors, which are stored in the model.
class AutoencoderModel {
 public:
  AutoencoderModel() = default;

  // Freshly initialised (untrained) model.
  static AutoencoderModel initialise(const AutoencoderConfig& cfg);

  const AutoencoderConfig& config() const { return config_; }
  const nn::Network& network() const { return network_; }
  nn::Network& network() { return network_; }
  const Vector& input_center() const { return center_; }
  const Vector& input_scale() const { return scale_; }
  const std::vector<double>& loss_history() const { return loss_history_; }
  std::vector<double> smoothed_loss_history() const;  // running minimum
  std::size_t best_epoch() const { return best_epoch_; }
  const std::string& data_checksum() const { return data_checksum_; }
  bool trained() const { return trained_; }

  Matrix encode(const Matrix& x) const;       // rows -> 4-d codes
  Matrix decode(const Matrix& codes) const;   // codes -> reconstructions (input units)
  Matrix reconstruct(const Matrix& x) const;  // decode(encode(x))
  FeatureVector encode(const FeatureVector& v) const;

  void save(const std::filesystem::path& path) const;
  static AutoencoderModel load(const std::filesystem::path& path);

  friend bool operator==(const AutoencoderModel& a, const AutoencoderModel& b);

 private:
  friend AutoencoderModel train_autoencoder(const AutoencoderConfig& cfg, const Matrix& training);

  void require_trained(Eigen::Index dims) const;
  Matrix normalise(const Matrix& x) const;
  std::size_t code_layer_end() const;

  AutoencoderConfig config_;
  nn::Network network_;
  Vector center_;
  Vector scale_;
  std::vector<double> loss_history_;
  std::size_t best_epoch_ = 0;
  std::string data_checksum_;
  bool trained_ = false;
};

// Adam on minibatches; keeps the weights of the epoch with the lowest training loss
// and stops after `patience` epochs without improvement.
AutoencoderModel train_autoencoder(const AutoencoderConfig& cfg, const Matrix& training);

FeatureVector encode(const AutoencoderModel& model, const FeatureVector& v);

// Largest relative difference between backprop gradients and central finite
// differences (step 1e-4) over every trainable parameter of an initialised
// network on `data` (train-mode BN).
double gradient_check(const AutoencoderConfig& cfg, const Matrix& data);
double gradient_check(nn::Network& network, const Matrix& x, const Matrix& target, double step = 1e-4);

}  // namespace linkscope
