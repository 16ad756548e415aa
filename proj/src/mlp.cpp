#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

#include "binary_io.hpp"
#include "evcoord/errors.hpp"
#include "evcoord/regressor.hpp"

namespace evcoord {

namespace {

constexpr std::uint32_t kMlpFormatVersion = 1;
constexpr Eigen::Index kPredictChunk = 4096;

double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_slope(double r, double delta) {
  if (r > delta) return delta;
  if (r < -delta) return -delta;
  return r;
}

}  // namespace

Mlp::Mlp(MlpConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.hidden.empty()) throw ConfigError("mlp needs at least one hidden layer");
  for (int h : cfg_.hidden)
    if (h < 1) throw ConfigError("mlp hidden layer width must be >= 1");
  if (!(cfg_.learning_rate > 0.0)) throw ConfigError("mlp learning rate must be > 0");
  if (cfg_.epochs < 1) throw ConfigError("mlp epochs must be >= 1");
  if (cfg_.batch_size < 1) throw ConfigError("mlp batch size must be >= 1");
  if (!(cfg_.huber_delta > 0.0)) throw ConfigError("huber delta must be > 0");
}

void Mlp::initialize(std::size_t input_dim) {
  std::mt19937_64 rng(cfg_.seed);
  layers_.clear();
  std::size_t fan_in = input_dim;
  std::vector<int> widths = cfg_.hidden;
  widths.push_back(1);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const bool output = l + 1 == widths.size();
    // He-uniform before ReLU, LeCun-uniform on the linear output.
    const double limit = std::sqrt((output ? 3.0 : 6.0) / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer layer{Eigen::MatrixXd(widths[l], static_cast<Eigen::Index>(fan_in)),
                Eigen::VectorXd::Zero(widths[l])};
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c) layer.w(r, c) = dist(rng);
    layers_.push_back(std::move(layer));
    fan_in = static_cast<std::size_t>(widths[l]);
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.w.size() + layer.b.size());
  return n;
}

std::vector<double> Mlp::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c) flat.push_back(layer.w(r, c));
    for (Eigen::Index r = 0; r < layer.b.size(); ++r) flat.push_back(layer.b(r));
  }
  return flat;
}

void Mlp::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("set_parameters: size mismatch");
  std::size_t k = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c) layer.w(r, c) = flat[k++];
    for (Eigen::Index r = 0; r < layer.b.size(); ++r) layer.b(r) = flat[k++];
  }
}

Eigen::VectorXd Mlp::forward(const FeatureMatrix& x) const {
  if (layers_.empty()) throw std::logic_error("mlp used before fit or initialize");
  if (x.cols() != layers_.front().w.cols())
    throw std::invalid_argument("mlp input width " + std::to_string(x.cols()) + ", expected " +
                                std::to_string(layers_.front().w.cols()));
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = h * layers_[l].w.transpose();
    z.rowwise() += layers_[l].b.transpose();
    if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h.col(0);
}

double Mlp::objective(const FeatureMatrix& x, std::span<const double> y) const {
  const Eigen::VectorXd out = forward(x);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < out.size(); ++r)
    loss += huber(out(r) - y[static_cast<std::size_t>(r)], cfg_.huber_delta);
  return loss / static_cast<double>(out.size());
}

double Mlp::backprop(const FeatureMatrix& x, std::span<const double> y, Grads& g) const {
  const std::size_t depth = layers_.size();
  const auto batch = static_cast<double>(x.rows());
  // acts[0] is the input, acts[l + 1] the output of layer l (post-ReLU for hidden layers).
  std::vector<Eigen::MatrixXd> acts(depth + 1);
  acts[0] = x;
  for (std::size_t l = 0; l < depth; ++l) {
    acts[l + 1] = acts[l] * layers_[l].w.transpose();
    acts[l + 1].rowwise() += layers_[l].b.transpose();
    if (l + 1 < depth) acts[l + 1] = acts[l + 1].cwiseMax(0.0);
  }

  double loss = 0.0;
  Eigen::MatrixXd delta(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double resid = acts[depth](r, 0) - y[static_cast<std::size_t>(r)];
    loss += huber(resid, cfg_.huber_delta);
    delta(r, 0) = huber_slope(resid, cfg_.huber_delta) / batch;
  }

  g.w.resize(depth);
  g.b.resize(depth);
  for (std::size_t l = depth; l-- > 0;) {
    g.w[l].noalias() = delta.transpose() * acts[l];
    g.b[l] = delta.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::MatrixXd upstream = delta * layers_[l].w;
    // ReLU gate: acts[l] > 0 exactly where the pre-activation was positive.
    delta = upstream.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
  }
  return loss / batch;
}

std::vector<double> Mlp::gradient(const FeatureMatrix& x, std::span<const double> y) const {
  Grads g;
  backprop(x, y, g);
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (Eigen::Index r = 0; r < g.w[l].rows(); ++r)
      for (Eigen::Index c = 0; c < g.w[l].cols(); ++c) flat.push_back(g.w[l](r, c));
    for (Eigen::Index r = 0; r < g.b[l].size(); ++r) flat.push_back(g.b[l](r));
  }
  return flat;
}

void Mlp::fit(const FeatureMatrix& x, std::span<const double> y) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n != y.size()) throw std::invalid_argument("Mlp::fit: row count does not match targets");
  if (n == 0) throw std::invalid_argument("Mlp::fit: no training rows");
  initialize(static_cast<std::size_t>(x.cols()));

  target_mean_ = 0.0;
  target_scale_ = 1.0;
  if (cfg_.standardize_targets) {
    target_mean_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : y) var += (v - target_mean_) * (v - target_mean_);
    const double sd = std::sqrt(var / static_cast<double>(n));
    target_scale_ = sd > 1e-12 ? sd : 1.0;
  }
  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) scaled[i] = (y[i] - target_mean_) / target_scale_;

  struct Moments {
    Eigen::MatrixXd mw, vw;
    Eigen::VectorXd mb, vb;
  };
  std::vector<Moments> adam;
  for (const auto& layer : layers_)
    adam.push_back({Eigen::MatrixXd::Zero(layer.w.rows(), layer.w.cols()),
                    Eigen::MatrixXd::Zero(layer.w.rows(), layer.w.cols()),
                    Eigen::VectorXd::Zero(layer.b.size()), Eigen::VectorXd::Zero(layer.b.size())});
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  double beta1_t = 1.0, beta2_t = 1.0;

  std::mt19937_64 rng(cfg_.seed ^ 0x5eed5eed5eedULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg_.batch_size);
  FeatureMatrix xb(static_cast<Eigen::Index>(std::min(bs, n)), x.cols());
  std::vector<double> yb;
  Grads g;

  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t len = std::min(bs, n - start);
      xb.resize(static_cast<Eigen::Index>(len), x.cols());
      yb.resize(len);
      for (std::size_t k = 0; k < len; ++k) {
        xb.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(order[start + k]));
        yb[k] = scaled[order[start + k]];
      }
      const double loss = backprop(xb, yb, g);
      if (!std::isfinite(loss))
        throw DivergenceError("mlp loss became non-finite in epoch " + std::to_string(epoch + 1) +
                              " at row " + std::to_string(start));
      epoch_loss += loss * static_cast<double>(len);

      beta1_t *= kBeta1;
      beta2_t *= kBeta2;
      const double step = cfg_.learning_rate * std::sqrt(1.0 - beta2_t) / (1.0 - beta1_t);
      for (std::size_t l = 0; l < layers_.size(); ++l) {
        auto& m = adam[l];
        m.mw = kBeta1 * m.mw + (1.0 - kBeta1) * g.w[l];
        m.vw = kBeta2 * m.vw + (1.0 - kBeta2) * g.w[l].cwiseAbs2();
        m.mb = kBeta1 * m.mb + (1.0 - kBeta1) * g.b[l];
        m.vb = kBeta2 * m.vb + (1.0 - kBeta2) * g.b[l].cwiseAbs2();
        layers_[l].w.array() -= step * m.mw.array() / (m.vw.array().sqrt() + kEps);
        layers_[l].b.array() -= step * m.mb.array() / (m.vb.array().sqrt() + kEps);
      }
    }
    last_loss_ = epoch_loss / static_cast<double>(n);
  }
}

void Mlp::predict(const FeatureMatrix& x, std::span<double> out) const {
  if (static_cast<std::size_t>(x.rows()) != out.size())
    throw std::invalid_argument("Mlp::predict: output size mismatch");
  for (Eigen::Index start = 0; start < x.rows(); start += kPredictChunk) {
    const Eigen::Index len = std::min(kPredictChunk, x.rows() - start);
    const Eigen::VectorXd raw = forward(x.middleRows(start, len));
    for (Eigen::Index r = 0; r < len; ++r)
      out[static_cast<std::size_t>(start + r)] = raw(r) * target_scale_ + target_mean_;
  }
}

void Mlp::save(std::ostream& out) const {
  if (layers_.empty()) throw std::logic_error("cannot save an untrained mlp");
  out.write(binary::kRegressorMagic.data(), static_cast<std::streamsize>(binary::kRegressorMagic.size()));
  binary::write_string(out, kind());
  binary::write<std::uint32_t>(out, kMlpFormatVersion);
  binary::write<double>(out, cfg_.learning_rate);
  binary::write<std::int32_t>(out, cfg_.epochs);
  binary::write<std::int32_t>(out, cfg_.batch_size);
  binary::write<double>(out, cfg_.huber_delta);
  binary::write<std::uint64_t>(out, cfg_.seed);
  binary::write<std::uint8_t>(out, cfg_.standardize_targets ? 1 : 0);
  binary::write<double>(out, target_mean_);
  binary::write<double>(out, target_scale_);
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(layers_.size()));
  for (const auto& layer : layers_) {
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(layer.w.rows()));
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(layer.w.cols()));
  }
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c) binary::write<double>(out, layer.w(r, c));
    for (Eigen::Index r = 0; r < layer.b.size(); ++r) binary::write<double>(out, layer.b(r));
  }
}

std::unique_ptr<Mlp> Mlp::load_body(std::istream& in) {
  const auto version = binary::read<std::uint32_t>(in);
  if (version != kMlpFormatVersion)
    throw ParseError("unsupported mlp format version " + std::to_string(version), 0);
  MlpConfig cfg;
  cfg.learning_rate = binary::read<double>(in);
  cfg.epochs = binary::read<std::int32_t>(in);
  cfg.batch_size = binary::read<std::int32_t>(in);
  cfg.huber_delta = binary::read<double>(in);
  cfg.seed = binary::read<std::uint64_t>(in);
  cfg.standardize_targets = binary::read<std::uint8_t>(in) != 0;
  const double mean = binary::read<double>(in);
  const double scale = binary::read<double>(in);
  const auto depth = binary::read<std::uint32_t>(in);
  if (depth < 2 || depth > 64) throw ParseError("implausible mlp depth", 0);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(depth);
  for (auto& [rows, cols] : shapes) {
    rows = binary::read<std::uint32_t>(in);
    cols = binary::read<std::uint32_t>(in);
    if (rows == 0 || cols == 0 || rows > (1U << 20) || cols > (1U << 20))
      throw ParseError("implausible mlp layer shape", 0);
  }
  if (shapes.back().first != 1) throw ParseError("mlp output layer must have width 1", 0);
  cfg.hidden.clear();
  for (std::uint32_t l = 0; l + 1 < depth; ++l) {
    if (shapes[l + 1].second != shapes[l].first) throw ParseError("mlp layer shapes do not chain", 0);
    cfg.hidden.push_back(static_cast<int>(shapes[l].first));
  }
  auto net = std::make_unique<Mlp>(cfg);
  net->target_mean_ = mean;
  net->target_scale_ = scale;
  for (const auto& [rows, cols] : shapes) {
    Layer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c) layer.w(r, c) = binary::read<double>(in);
    for (Eigen::Index r = 0; r < layer.b.size(); ++r) layer.b(r) = binary::read<double>(in);
    net->layers_.push_back(std::move(layer));
  }
  return net;
}

}  // namespace evcoord
