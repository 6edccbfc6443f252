#include "linkscope/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "linkscope/checksum.hpp"
#include "linkscope/error.hpp"

namespace linkscope {

namespace nn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Matrix leaky(const Matrix& x, double alpha) {
  return x.unaryExpr([alpha](double v) { return v >= 0.0 ? v : alpha * v; });
}

struct BnCache {
  Matrix xhat;
  RowVector inv_std;
};

}  // namespace

Matrix Network::infer(const Matrix& x, std::size_t end) const {
  Matrix h = x;
  for (std::size_t i = 0; i < end && i < layers_.size(); ++i) {
    std::visit(Overloaded{[&](const Dense& d) {
                            Matrix y = h * d.weights;
                            y.rowwise() += d.bias.row(0);
                            h = std::move(y);
                          },
                          [&](const BatchNorm& bn) {
                            const RowVector inv =
                                (bn.running_var.row(0).array() + BatchNorm::kEpsilon).rsqrt().matrix();
                            h.rowwise() -= bn.running_mean.row(0);
                            h.array().rowwise() *= (inv.array() * bn.gamma.row(0).array());
                            h.rowwise() += bn.beta.row(0);
                          },
                          [&](const LeakyRelu& a) { h = leaky(h, a.alpha); }},
               layers_[i]);
  }
  return h;
}

std::vector<Matrix*> Network::parameters() {
  std::vector<Matrix*> out;
  for (auto& layer : layers_) {
    if (auto* d = std::get_if<Dense>(&layer)) {
      out.push_back(&d->weights);
      out.push_back(&d->bias);
    } else if (auto* bn = std::get_if<BatchNorm>(&layer)) {
      out.push_back(&bn->gamma);
      out.push_back(&bn->beta);
    }
  }
  return out;
}

double Network::loss(const Matrix& x, const Matrix& target, std::vector<bool>* signs) const {
  if (signs) signs->clear();
  Matrix h = x;
  for (const auto& layer : layers_) {
    std::visit(Overloaded{[&](const Dense& d) {
                            Matrix y = h * d.weights;
                            y.rowwise() += d.bias.row(0);
                            h = std::move(y);
                          },
                          [&](const BatchNorm& bn) {
                            const RowVector mean = h.colwise().mean();
                            h.rowwise() -= mean;
                            const RowVector var = h.array().square().colwise().mean().matrix();
                            const RowVector inv = (var.array() + BatchNorm::kEpsilon).rsqrt().matrix();
                            h.array().rowwise() *= (inv.array() * bn.gamma.row(0).array());
                            h.rowwise() += bn.beta.row(0);
                          },
                          [&](const LeakyRelu& a) {
                            if (signs)
                              for (Eigen::Index i = 0; i < h.size(); ++i) signs->push_back(h.data()[i] >= 0.0);
                            h = leaky(h, a.alpha);
                          }},
               layer);
  }
  return (h - target).array().square().mean();
}

double Network::loss_and_gradients(const Matrix& x, const Matrix& target, std::vector<Matrix>& gradients,
                                   bool update_running_stats) {
  const auto batch = static_cast<double>(x.rows());
  std::vector<Matrix> inputs;  // input of every layer
  std::vector<BnCache> bn_caches(layers_.size());
  inputs.reserve(layers_.size());
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    inputs.push_back(h);
    std::visit(Overloaded{[&](const Dense& d) {
                            Matrix y = h * d.weights;
                            y.rowwise() += d.bias.row(0);
                            h = std::move(y);
                          },
                          [&](BatchNorm& bn) {
                            const RowVector mean = h.colwise().mean();
                            h.rowwise() -= mean;
                            const RowVector var = h.array().square().colwise().mean().matrix();
                            auto& c = bn_caches[i];
                            c.inv_std = (var.array() + BatchNorm::kEpsilon).rsqrt().matrix();
                            h.array().rowwise() *= c.inv_std.array();
                            c.xhat = h;
                            h.array().rowwise() *= bn.gamma.row(0).array();
                            h.rowwise() += bn.beta.row(0);
                            if (update_running_stats) {
                              bn.running_mean = bn.momentum * bn.running_mean + (1.0 - bn.momentum) * mean;
                              bn.running_var = bn.momentum * bn.running_var + (1.0 - bn.momentum) * var;
                            }
                          },
                          [&](const LeakyRelu& a) { h = leaky(h, a.alpha); }},
               layers_[i]);
  }
  const Matrix diff = h - target;
  const double loss = diff.array().square().mean();
  Matrix grad = diff * (2.0 / static_cast<double>(diff.size()));

  // Walk backwards; parameter gradients are collected in reverse and flipped.
  std::vector<Matrix> reversed;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Matrix& in = inputs[k];
    std::visit(Overloaded{[&](const Dense& d) {
                            reversed.push_back(grad.colwise().sum());  // bias
                            reversed.push_back(in.transpose() * grad);  // weights
                            grad = grad * d.weights.transpose();
                          },
                          [&](const BatchNorm& bn) {
                            const auto& c = bn_caches[k];
                            reversed.push_back(grad.colwise().sum());                                  // beta
                            reversed.push_back((grad.array() * c.xhat.array()).colwise().sum().matrix());  // gamma
                            Matrix dxhat = grad;
                            dxhat.array().rowwise() *= bn.gamma.row(0).array();
                            const RowVector sum_d = dxhat.colwise().sum();
                            const RowVector sum_dx = (dxhat.array() * c.xhat.array()).colwise().sum().matrix();
                            Matrix dx = dxhat * batch;
                            dx.rowwise() -= sum_d;
                            dx.array() -= c.xhat.array().rowwise() * sum_dx.array();
                            dx.array().rowwise() *= (c.inv_std.array() / batch);
                            grad = std::move(dx);
                          },
                          [&](const LeakyRelu& a) {
                            grad.array() *= in.array().unaryExpr([&](double v) { return v >= 0.0 ? 1.0 : a.alpha; });
                          }},
               layers_[k]);
  }
  gradients.assign(reversed.rbegin(), reversed.rend());
  return loss;
}

}  // namespace nn

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> layer_widths(const AutoencoderConfig& cfg) {
  std::vector<std::size_t> w{cfg.input_dim};
  for (auto d : AutoencoderConfig::kHiddenDims) w.push_back(d);
  w.push_back(AutoencoderConfig::kCodeDim);
  for (auto it = AutoencoderConfig::kHiddenDims.rbegin(); it != AutoencoderConfig::kHiddenDims.rend(); ++it)
    w.push_back(*it);
  w.push_back(cfg.input_dim);
  return w;
}

nn::Network build_network(const AutoencoderConfig& cfg, std::mt19937_64& rng) {
  const auto widths = layer_widths(cfg);
  const std::size_t dense_count = widths.size() - 1;
  const std::size_t code_dense = AutoencoderConfig::kHiddenDims.size();  // 0-based index of Dense(4)
  std::vector<nn::Layer> layers;
  for (std::size_t i = 0; i < dense_count; ++i) {
    const auto in = static_cast<Eigen::Index>(widths[i]);
    const auto out = static_cast<Eigen::Index>(widths[i + 1]);
    const double limit = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-limit, limit);
    nn::Dense d{Matrix(in, out), Matrix::Zero(1, out)};
    for (Eigen::Index r = 0; r < in; ++r)
      for (Eigen::Index c = 0; c < out; ++c) d.weights(r, c) = u(rng);
    layers.emplace_back(std::move(d));
    const bool activated = i != code_dense && i != dense_count - 1;
    if (activated) {
      nn::BatchNorm bn{Matrix::Ones(1, out), Matrix::Zero(1, out), Matrix::Zero(1, out), Matrix::Ones(1, out),
                       cfg.bn_momentum};
      layers.emplace_back(std::move(bn));
      layers.emplace_back(nn::LeakyRelu{cfg.leaky_alpha});
    }
  }
  return nn::Network(std::move(layers));
}

void validate(const AutoencoderConfig& cfg) {
  if (cfg.input_dim == 0) throw ArgumentError("autoencoder input_dim must be positive");
  if (cfg.batch_size < 2) throw ArgumentError("autoencoder batch_size must be at least 2");
  if (cfg.epochs == 0) throw ArgumentError("autoencoder epochs must be positive");
  if (!(cfg.learning_rate > 0.0)) throw ArgumentError("autoencoder learning_rate must be positive");
}

}  // namespace

AutoencoderModel AutoencoderModel::initialise(const AutoencoderConfig& cfg) {
  validate(cfg);
  AutoencoderModel m;
  m.config_ = cfg;
  std::mt19937_64 rng(cfg.seed);
  m.network_ = build_network(cfg, rng);
  m.center_ = Vector::Zero(static_cast<Eigen::Index>(cfg.input_dim));
  m.scale_ = Vector::Ones(static_cast<Eigen::Index>(cfg.input_dim));
  return m;
}

std::vector<double> AutoencoderModel::smoothed_loss_history() const {
  std::vector<double> out(loss_history_.size());
  std::partial_sum(loss_history_.begin(), loss_history_.end(), out.begin(),
                   [](double a, double b) { return std::min(a, b); });
  return out;
}

void AutoencoderModel::require_trained(Eigen::Index dims) const {
  if (!trained_) throw StateError("autoencoder used before training");
  if (dims != static_cast<Eigen::Index>(config_.input_dim))
    throw ArgumentError("autoencoder expects " + std::to_string(config_.input_dim) + " features, got " +
                        std::to_string(dims));
}

Matrix AutoencoderModel::normalise(const Matrix& x) const {
  Matrix out = x;
  out.rowwise() -= center_.transpose();
  out.array().rowwise() /= scale_.transpose().array();
  return out;
}

std::size_t AutoencoderModel::code_layer_end() const {
  // Three (Dense, BN, LReLU) blocks followed by Dense(4).
  return 3 * AutoencoderConfig::kHiddenDims.size() + 1;
}

Matrix AutoencoderModel::encode(const Matrix& x) const {
  require_trained(x.cols());
  return network_.infer(normalise(x), code_layer_end());
}

Matrix AutoencoderModel::decode(const Matrix& codes) const {
  if (!trained_) throw StateError("autoencoder used before training");
  if (codes.cols() != static_cast<Eigen::Index>(AutoencoderConfig::kCodeDim))
    throw ArgumentError("decode expects 4-dimensional codes");
  Matrix h = codes;
  const auto& layers = network_.layers();
  nn::Network tail(std::vector<nn::Layer>(layers.begin() + static_cast<std::ptrdiff_t>(code_layer_end()), layers.end()));
  Matrix out = tail.infer(h);
  out.array().rowwise() *= scale_.transpose().array();
  out.rowwise() += center_.transpose();
  return out;
}

Matrix AutoencoderModel::reconstruct(const Matrix& x) const { return decode(encode(x)); }

FeatureVector AutoencoderModel::encode(const FeatureVector& v) const {
  const Matrix row = Eigen::Map<const Matrix>(v.values.data(), 1, static_cast<Eigen::Index>(v.values.size()));
  const Matrix code = encode(row);
  return {std::vector<double>(code.data(), code.data() + code.size()), Representation::Encoded, ScalerKind::None};
}

FeatureVector encode(const AutoencoderModel& model, const FeatureVector& v) { return model.encode(v); }

AutoencoderModel train_autoencoder(const AutoencoderConfig& cfg, const Matrix& training) {
  validate(cfg);
  if (training.cols() != static_cast<Eigen::Index>(cfg.input_dim))
    throw ArgumentError("training vectors have " + std::to_string(training.cols()) + " features, config says " +
                        std::to_string(cfg.input_dim));
  if (training.rows() < static_cast<Eigen::Index>(cfg.batch_size))
    throw ArgumentError("autoencoder needs at least batch_size (" + std::to_string(cfg.batch_size) +
                        ") training vectors, got " + std::to_string(training.rows()));

  AutoencoderModel model;
  model.config_ = cfg;
  std::mt19937_64 rng(cfg.seed);
  model.network_ = build_network(cfg, rng);

  const auto n = training.rows();
  model.center_ = training.colwise().mean().transpose();
  model.scale_ = ((training.rowwise() - model.center_.transpose()).array().square().colwise().mean().sqrt()).transpose();
  for (auto& s : model.scale_)
    if (!(s > 0.0) || !std::isfinite(s)) s = 1.0;
  const Matrix data = model.normalise(training);
  Fnv1a h;
  h.update(std::span<const double>(training.data(), static_cast<std::size_t>(training.size())));
  model.data_checksum_ = h.hex();

  auto params = model.network_.parameters();
  std::vector<Matrix> m1, m2;
  for (auto* p : params) {
    m1.push_back(Matrix::Zero(p->rows(), p->cols()));
    m2.push_back(Matrix::Zero(p->rows(), p->cols()));
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<Eigen::Index>(cfg.batch_size);
  double best = std::numeric_limits<double>::infinity();
  nn::Network best_network = model.network_;
  std::size_t since_best = 0;
  std::size_t step = 0;
  std::vector<Matrix> grads;
  Matrix batch;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (Eigen::Index start = 0; start < n;) {
      Eigen::Index end = std::min(n, start + bs);
      if (n - end < 2) end = n;  // fold a 1-row tail into this batch; BN needs >= 2 rows
      batch.resize(end - start, data.cols());
      for (Eigen::Index r = start; r < end; ++r) batch.row(r - start) = data.row(order[static_cast<std::size_t>(r)]);
      const double loss = model.network_.loss_and_gradients(batch, batch, grads, true);
      total += loss * static_cast<double>(end - start);
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t p = 0; p < params.size(); ++p) {
        m1[p] = cfg.beta1 * m1[p] + (1.0 - cfg.beta1) * grads[p];
        m2[p] = cfg.beta2 * m2[p] + (1.0 - cfg.beta2) * grads[p].cwiseAbs2();
        params[p]->array() -=
            cfg.learning_rate * (m1[p].array() / c1) / ((m2[p].array() / c2).sqrt() + 1e-8);
      }
      start = end;
    }
    const double epoch_loss = total / static_cast<double>(n);
    model.loss_history_.push_back(epoch_loss);
    if (epoch_loss < best) {
      best = epoch_loss;
      best_network = model.network_;
      model.best_epoch_ = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  model.network_ = std::move(best_network);
  model.trained_ = true;
  return model;
}

// ---------------------------------------------------------------------------
// Gradient check

double gradient_check(nn::Network& network, const Matrix& x, const Matrix& target, double step) {
  std::vector<Matrix> analytic;
  network.loss_and_gradients(x, target, analytic, false);
  auto params = network.parameters();
  std::vector<bool> base, up_signs, down_signs;
  network.loss(x, target, &base);
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& w = *params[p];
    double diff2 = 0.0, analytic2 = 0.0, numeric2 = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double saved = w.data()[i];
      w.data()[i] = saved + step;
      const double up = network.loss(x, target, &up_signs);
      w.data()[i] = saved - step;
      const double down = network.loss(x, target, &down_signs);
      w.data()[i] = saved;
      // The loss is not differentiable across a LeakyReLU kink; such probes say
      // nothing about the backward pass.
      if (up_signs != base || down_signs != base) continue;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p].data()[i];
      diff2 += (a - numeric) * (a - numeric);
      analytic2 += a * a;
      numeric2 += numeric * numeric;
    }
    // Relative error of the whole tensor: |a - n| / (|a| + |n|). Tensors whose
    // gradient vanishes analytically (a bias feeding a batch-norm) are compared
    // against an absolute floor instead.
    const double denom = std::max(std::sqrt(analytic2) + std::sqrt(numeric2), 1e-6);
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

double gradient_check(const AutoencoderConfig& cfg, const Matrix& data) {
  auto model = AutoencoderModel::initialise(cfg);
  if (data.cols() != static_cast<Eigen::Index>(cfg.input_dim)) throw ArgumentError("gradient_check: arity mismatch");
  return gradient_check(model.network(), data, data);
}

// ---------------------------------------------------------------------------
// Serialisation

namespace {

nlohmann::json tensor_json(const Matrix& m) {
  return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()},
                        {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix tensor_from(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw FormatError("tensor size mismatch in model file");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::equal(a.data(), a.data() + a.size(), b.data(),
                    [](double x, double y) { return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y); });
}

}  // namespace

void AutoencoderModel::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["format"] = "linkscope-autoencoder";
  j["version"] = 1;
  j["config"] = {{"input_dim", config_.input_dim},     {"hidden_dims", AutoencoderConfig::kHiddenDims},
                 {"code_dim", AutoencoderConfig::kCodeDim}, {"leaky_alpha", config_.leaky_alpha},
                 {"epochs", config_.epochs},           {"batch_size", config_.batch_size},
                 {"learning_rate", config_.learning_rate}, {"beta1", config_.beta1},
                 {"beta2", config_.beta2},             {"patience", config_.patience},
                 {"bn_momentum", config_.bn_momentum}, {"seed", config_.seed}};
  j["data_checksum"] = data_checksum_;
  j["trained"] = trained_;
  j["best_epoch"] = best_epoch_;
  j["loss_history"] = loss_history_;
  j["input_center"] = std::vector<double>(center_.data(), center_.data() + center_.size());
  j["input_scale"] = std::vector<double>(scale_.data(), scale_.data() + scale_.size());
  auto& layers = j["layers"] = nlohmann::ordered_json::array();
  for (const auto& layer : network_.layers()) {
    std::visit(nn::Overloaded{[&](const nn::Dense& d) {
                                layers.push_back({{"type", "dense"}, {"weights", tensor_json(d.weights)},
                                                  {"bias", tensor_json(d.bias)}});
                              },
                              [&](const nn::BatchNorm& bn) {
                                layers.push_back({{"type", "batchnorm"},
                                                  {"momentum", bn.momentum},
                                                  {"gamma", tensor_json(bn.gamma)},
                                                  {"beta", tensor_json(bn.beta)},
                                                  {"running_mean", tensor_json(bn.running_mean)},
                                                  {"running_var", tensor_json(bn.running_var)}});
                              },
                              [&](const nn::LeakyRelu& a) {
                                layers.push_back({{"type", "leaky_relu"}, {"alpha", a.alpha}});
                              }},
               layer);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + path.string());
  out << j.dump() << '\n';
}

AutoencoderModel AutoencoderModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    if (j.at("format") != "linkscope-autoencoder" || j.at("version") != 1)
      throw FormatError("unsupported autoencoder model file " + path.string());
    AutoencoderModel m;
    const auto& c = j.at("config");
    m.config_.input_dim = c.at("input_dim");
    m.config_.leaky_alpha = c.at("leaky_alpha");
    m.config_.epochs = c.at("epochs");
    m.config_.batch_size = c.at("batch_size");
    m.config_.learning_rate = c.at("learning_rate");
    m.config_.beta1 = c.at("beta1");
    m.config_.beta2 = c.at("beta2");
    m.config_.patience = c.at("patience");
    m.config_.bn_momentum = c.at("bn_momentum");
    m.config_.seed = c.at("seed");
    m.data_checksum_ = j.at("data_checksum");
    m.trained_ = j.at("trained");
    m.best_epoch_ = j.at("best_epoch");
    m.loss_history_ = j.at("loss_history").get<std::vector<double>>();
    const auto center = j.at("input_center").get<std::vector<double>>();
    const auto scale = j.at("input_scale").get<std::vector<double>>();
    m.center_ = Eigen::Map<const Vector>(center.data(), static_cast<Eigen::Index>(center.size()));
    m.scale_ = Eigen::Map<const Vector>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    std::vector<nn::Layer> layers;
    for (const auto& l : j.at("layers")) {
      const auto type = l.at("type").get<std::string>();
      if (type == "dense") {
        layers.emplace_back(nn::Dense{tensor_from(l.at("weights")), tensor_from(l.at("bias"))});
      } else if (type == "batchnorm") {
        layers.emplace_back(nn::BatchNorm{tensor_from(l.at("gamma")), tensor_from(l.at("beta")),
                                          tensor_from(l.at("running_mean")), tensor_from(l.at("running_var")),
                                          l.at("momentum").get<double>()});
      } else if (type == "leaky_relu") {
        layers.emplace_back(nn::LeakyRelu{l.at("alpha").get<double>()});
      } else {
        throw FormatError("unknown layer type '" + type + "' in " + path.string());
      }
    }
    m.network_ = nn::Network(std::move(layers));
    if (m.network_.layers().size() != 3 * 2 * AutoencoderConfig::kHiddenDims.size() + 2)
      throw FormatError("autoencoder layer stack does not match the fixed architecture");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid autoencoder model file " + path.string() + ": " + e.what());
  }
}

bool operator==(const AutoencoderModel& a, const AutoencoderModel& b) {
  if (a.trained_ != b.trained_ || a.best_epoch_ != b.best_epoch_ || a.data_checksum_ != b.data_checksum_ ||
      a.loss_history_ != b.loss_history_ || a.config_.input_dim != b.config_.input_dim ||
      a.config_.seed != b.config_.seed || a.center_ != b.center_ || a.scale_ != b.scale_)
    return false;
  const auto& la = a.network_.layers();
  const auto& lb = b.network_.layers();
  if (la.size() != lb.size()) return false;
  for (std::size_t i = 0; i < la.size(); ++i) {
    if (la[i].index() != lb[i].index()) return false;
    if (const auto* d = std::get_if<nn::Dense>(&la[i])) {
      const auto& e = std::get<nn::Dense>(lb[i]);
      if (!same_bits(d->weights, e.weights) || !same_bits(d->bias, e.bias)) return false;
    } else if (const auto* bn = std::get_if<nn::BatchNorm>(&la[i])) {
      const auto& c = std::get<nn::BatchNorm>(lb[i]);
      if (!same_bits(bn->gamma, c.gamma) || !same_bits(bn->beta, c.beta) ||
          !same_bits(bn->running_mean, c.running_mean) || !same_bits(bn->running_var, c.running_var))
        return false;
    } else if (std::get<nn::LeakyRelu>(la[i]).alpha != std::get<nn::LeakyRelu>(lb[i]).alpha) {
      return false;
    }
  }
  return true;
}

}  // namespace linkscope
