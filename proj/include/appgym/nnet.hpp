#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace appgym::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Row-compressed batch of input rows.
struct SparseBatch {
  int dim = 0;
  std::vector<int> row_start{0};
  std::vector<int> indices;
  std::vector<double> values;

  int rows() const { return static_cast<int>(row_start.size()) - 1; }
  void clear(int new_dim);
  void push(int index, double value) {
    indices.push_back(index);
    values.push_back(value);
  }
  void end_row() { row_start.push_back(static_cast<int>(indices.size())); }
  void append_row_from(const SparseBatch& other, int row);

  static SparseBatch from_dense(const Matrix& dense);
  Matrix to_dense() const;
};

struct NetSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int num_actions = 0;

  bool operator==(const NetSpec&) const = default;
};

// Dense layer y = x W + b with W stored input-major (in x out).
struct Layer {
  Matrix W;
  Vector b;

  bool operator==(const Layer&) const = default;
};

// Shared tanh trunk (at least one hidden layer) with a linear policy head
// (logits) and a linear value head.
struct PolicyParams {
  NetSpec spec;
  std::vector<Layer> trunk;
  Layer policy_head;
  Layer value_head;

  std::size_t parameter_count() const;
  bool all_finite() const;
  bool operator==(const PolicyParams&) const = default;

  // Visits every layer in a fixed order: trunk, policy head, value head.
  template <typename F>
  void for_each_layer(F&& f) {
    for (auto& layer : trunk) f(layer);
    f(policy_head);
    f(value_head);
  }
  template <typename F>
  void for_each_layer(F&& f) const {
    for (const auto& layer : trunk) f(layer);
    f(policy_head);
    f(value_head);
  }
};

struct InitOptions {
  double trunk_gain = 1.0;
  double policy_gain = 0.01;
  double value_gain = 1.0;
};

// Gaussian weights scaled by gain * sqrt(2 / fan_in) (policy/value heads by
// gain / sqrt(fan_in)); zero biases. A pure function of the seed.
PolicyParams init_params(const NetSpec& spec, std::uint64_t seed, const InitOptions& opts = {});

struct ForwardCache {
  std::vector<Matrix> activations;  // post-tanh output of each trunk layer
  Matrix logits;
  Vector values;
};

ForwardCache forward(const PolicyParams& params, const SparseBatch& input);

// Gradient container shaped like PolicyParams. Rows of the first layer
// that received gradient are tracked so zeroing and the optimizer can skip
// the (typically huge) untouched part of the input layer.
struct Gradients {
  PolicyParams grads;
  std::vector<int> touched_rows;
  std::vector<char> touched_mask;

  static Gradients zeros_like(const PolicyParams& params);
  void zero();
  void scale(double factor);
  double squared_norm() const;
  // Returns the pre-clipping norm.
  double clip_global_norm(double max_norm);
  void mark_row(int row) {
    if (!touched_mask[row]) {
      touched_mask[row] = 1;
      touched_rows.push_back(row);
    }
  }
};

// Accumulates into `out` the gradients of sum_b(dlogits_b . logits_b +
// dvalues_b * value_b), i.e. backpropagates the given upstream gradients.
void backward(const PolicyParams& params, const SparseBatch& input, const ForwardCache& cache,
              const Matrix& dlogits, const Vector& dvalues, Gradients& out);

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

struct OptState {
  AdamConfig config;
  std::int64_t step = 0;
  PolicyParams m;
  PolicyParams v;
  // First-layer rows whose moments are nonzero; the rest are exactly zero,
  // so skipping them leaves the update identical to a dense one.
  std::vector<int> active_rows;
  std::vector<char> active_mask;

  static OptState for_params(const PolicyParams& params, AdamConfig config = {});
  bool operator==(const OptState&) const = default;
};

void optimizer_step(PolicyParams& params, const Gradients& grads, OptState& state);

// Bit-exact binary checkpoint of params and optimizer state.
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params,
                     const OptState& state);
void load_checkpoint(const std::filesystem::path& path, PolicyParams& params, OptState& state);

// Loss callback for gradient checking: returns the loss and, when `grads`
// is non-null, accumulates its analytic gradient there.
using LossFn = std::function<double(const PolicyParams&, Gradients*)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

// Central differences with step h on every parameter coordinate. Relative
// error is |a - f| / max(|a|, |f|, denominator_floor).
GradCheckResult grad_check(const PolicyParams& params, const LossFn& loss, double h = 1e-4,
                           double denominator_floor = 1e-6);

// Row-wise log-softmax, stable for large logits.
Matrix log_softmax(const Matrix& logits);

}  // namespace appgym::nn
