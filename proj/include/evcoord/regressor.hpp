#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace evcoord {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Q-function approximator: one feature row per state-action pair.
class Regressor {
 public:
  virtual ~Regressor() = default;

  /// Fits from scratch; earlier fits leave no trace.
  virtual void fit(const FeatureMatrix& x, std::span<const double> y) = 0;
  virtual void predict(const FeatureMatrix& x, std::span<double> out) const = 0;
  virtual std::string kind() const = 0;
  virtual void save(std::ostream& out) const = 0;
};

/// Reads any regressor written by Regressor::save.
std::unique_ptr<Regressor> load_regressor(std::istream& in);

/// Lookup table keyed on the exact feature row. Duplicate rows are averaged;
/// rows never seen predict `unseen_value`. Only sensible for tiny instances.
class ExactTable final : public Regressor {
 public:
  explicit ExactTable(double unseen_value = 0.0) : unseen_value_(unseen_value) {}

  void fit(const FeatureMatrix& x, std::span<const double> y) override;
  void predict(const FeatureMatrix& x, std::span<double> out) const override;
  std::string kind() const override { return "exact_table"; }
  void save(std::ostream& out) const override;
  static std::unique_ptr<ExactTable> load_body(std::istream& in);

  std::size_t size() const { return table_.size(); }

 private:
  struct RowHash {
    std::size_t operator()(const std::vector<double>& row) const;
  };
  double unseen_value_;
  std::unordered_map<std::vector<double>, double, RowHash> table_;
};

struct MlpConfig {
  std::vector<int> hidden{128, 64};
  double learning_rate = 1e-3;
  int epochs = 20;
  int batch_size = 64;
  double huber_delta = 1.0;
  std::uint64_t seed = 1;
  /// Fit against (y - mean) / std and undo the scaling in predict().
  bool standardize_targets = true;
};

/// Dense ReLU network with a single linear output, trained on the Huber loss
/// with Adam over shuffled minibatches.
class Mlp final : public Regressor {
 public:
  explicit Mlp(MlpConfig cfg = {});

  void fit(const FeatureMatrix& x, std::span<const double> y) override;
  void predict(const FeatureMatrix& x, std::span<double> out) const override;
  std::string kind() const override { return "mlp"; }
  void save(std::ostream& out) const override;
  static std::unique_ptr<Mlp> load_body(std::istream& in);

  const MlpConfig& config() const { return cfg_; }
  /// Mean Huber loss of the final training epoch.
  double last_loss() const { return last_loss_; }

  /// Fresh random weights for the given input width.
  void initialize(std::size_t input_dim);
  std::size_t parameter_count() const;
  /// Flat parameters: per layer, weights row-major (out x in) then biases.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);
  /// Raw network output, without target scaling.
  Eigen::VectorXd forward(const FeatureMatrix& x) const;
  /// Mean Huber loss of forward(x) against y.
  double objective(const FeatureMatrix& x, std::span<const double> y) const;
  /// Analytic gradient of objective() in parameters() order.
  std::vector<double> gradient(const FeatureMatrix& x, std::span<const double> y) const;

 private:
  struct Layer {
    Eigen::MatrixXd w;  // out x in
    Eigen::VectorXd b;
  };
  struct Grads {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
  };
  double backprop(const FeatureMatrix& x, std::span<const double> y, Grads& g) const;

  MlpConfig cfg_;
  std::vector<Layer> layers_;
  double target_mean_ = 0.0;
  double target_scale_ = 1.0;
  double last_loss_ = 0.0;
};

}  // namespace evcoord
