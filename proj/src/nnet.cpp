#include "appgym/nnet.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include "appgym/rng.hpp"

namespace appgym::nn {

void SparseBatch::clear(int new_dim) {
  dim = new_dim;
  row_start.assign(1, 0);
  indices.clear();
  values.clear();
}

void SparseBatch::append_row_from(const SparseBatch& other, int row) {
  for (int k = other.row_start[row]; k < other.row_start[row + 1]; ++k) {
    push(other.indices[k], other.values[k]);
  }
  end_row();
}

SparseBatch SparseBatch::from_dense(const Matrix& dense) {
  SparseBatch out;
  out.clear(static_cast<int>(dense.cols()));
  for (Eigen::Index r = 0; r < dense.rows(); ++r) {
    for (Eigen::Index c = 0; c < dense.cols(); ++c) {
      if (dense(r, c) != 0.0) out.push(static_cast<int>(c), dense(r, c));
    }
    out.end_row();
  }
  return out;
}

Matrix SparseBatch::to_dense() const {
  Matrix out = Matrix::Zero(rows(), dim);
  for (int r = 0; r < rows(); ++r) {
    for (int k = row_start[r]; k < row_start[r + 1]; ++k) out(r, indices[k]) += values[k];
  }
  return out;
}

std::size_t PolicyParams::parameter_count() const {
  std::size_t count = 0;
  for_each_layer([&](const Layer& l) { count += l.W.size() + l.b.size(); });
  return count;
}

bool PolicyParams::all_finite() const {
  bool finite = true;
  for_each_layer([&](const Layer& l) { finite = finite && l.W.allFinite() && l.b.allFinite(); });
  return finite;
}

namespace {

Layer make_layer(int in, int out, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Layer layer{Matrix(in, out), Vector::Zero(out)};
  for (Eigen::Index i = 0; i < layer.W.size(); ++i) layer.W.data()[i] = scale * normal(rng);
  return layer;
}

Layer zero_layer_like(const Layer& layer) {
  return Layer{Matrix::Zero(layer.W.rows(), layer.W.cols()), Vector::Zero(layer.b.size())};
}

PolicyParams zeros_like_params(const PolicyParams& params) {
  PolicyParams out;
  out.spec = params.spec;
  for (const auto& layer : params.trunk) out.trunk.push_back(zero_layer_like(layer));
  out.policy_head = zero_layer_like(params.policy_head);
  out.value_head = zero_layer_like(params.value_head);
  return out;
}

void check_input(const PolicyParams& params, const SparseBatch& input) {
  if (input.dim != params.spec.input_dim) {
    throw ShapeMismatch("input width " + std::to_string(input.dim) + " != network input " +
                        std::to_string(params.spec.input_dim));
  }
}

// out = input * W (no bias), input sparse.
void sparse_times(const SparseBatch& input, const Matrix& W, Matrix& out) {
  out.setZero(input.rows(), W.cols());
  for (int r = 0; r < input.rows(); ++r) {
    for (int k = input.row_start[r]; k < input.row_start[r + 1]; ++k) {
      out.row(r).noalias() += input.values[k] * W.row(input.indices[k]);
    }
  }
}

}  // namespace

PolicyParams init_params(const NetSpec& spec, std::uint64_t seed, const InitOptions& opts) {
  if (spec.hidden.empty()) throw ShapeMismatch("network needs at least one hidden layer");
  if (spec.input_dim <= 0 || spec.num_actions <= 0) throw ShapeMismatch("empty network spec");
  Rng rng(seed);
  PolicyParams params;
  params.spec = spec;
  int fan_in = spec.input_dim;
  for (int width : spec.hidden) {
    if (width <= 0) throw ShapeMismatch("hidden width must be positive");
    params.trunk.push_back(
        make_layer(fan_in, width, opts.trunk_gain * std::sqrt(2.0 / fan_in), rng));
    fan_in = width;
  }
  params.policy_head =
      make_layer(fan_in, spec.num_actions, opts.policy_gain / std::sqrt(fan_in), rng);
  params.value_head = make_layer(fan_in, 1, opts.value_gain / std::sqrt(fan_in), rng);
  return params;
}

ForwardCache forward(const PolicyParams& params, const SparseBatch& input) {
  check_input(params, input);
  ForwardCache cache;
  cache.activations.resize(params.trunk.size());
  Matrix z;
  sparse_times(input, params.trunk[0].W, z);
  z.rowwise() += params.trunk[0].b.transpose();
  cache.activations[0] = z.array().tanh().matrix();
  for (std::size_t l = 1; l < params.trunk.size(); ++l) {
    z.noalias() = cache.activations[l - 1] * params.trunk[l].W;
    z.rowwise() += params.trunk[l].b.transpose();
    cache.activations[l] = z.array().tanh().matrix();
  }
  const Matrix& top = cache.activations.back();
  cache.logits.noalias() = top * params.policy_head.W;
  cache.logits.rowwise() += params.policy_head.b.transpose();
  cache.values.noalias() = top * params.value_head.W.col(0);
  cache.values.array() += params.value_head.b[0];
  return cache;
}

Gradients Gradients::zeros_like(const PolicyParams& params) {
  Gradients g;
  g.grads = zeros_like_params(params);
  g.touched_mask.assign(static_cast<std::size_t>(params.spec.input_dim), 0);
  return g;
}

void Gradients::zero() {
  Matrix& first = grads.trunk[0].W;
  for (int row : touched_rows) {
    first.row(row).setZero();
    touched_mask[row] = 0;
  }
  touched_rows.clear();
  grads.trunk[0].b.setZero();
  for (std::size_t l = 1; l < grads.trunk.size(); ++l) {
    grads.trunk[l].W.setZero();
    grads.trunk[l].b.setZero();
  }
  for (Layer* head : {&grads.policy_head, &grads.value_head}) {
    head->W.setZero();
    head->b.setZero();
  }
}

void Gradients::scale(double factor) {
  Matrix& first = grads.trunk[0].W;
  for (int row : touched_rows) first.row(row) *= factor;
  grads.trunk[0].b *= factor;
  for (std::size_t l = 1; l < grads.trunk.size(); ++l) {
    grads.trunk[l].W *= factor;
    grads.trunk[l].b *= factor;
  }
  for (Layer* head : {&grads.policy_head, &grads.value_head}) {
    head->W *= factor;
    head->b *= factor;
  }
}

double Gradients::squared_norm() const {
  double total = 0.0;
  const Matrix& first = grads.trunk[0].W;
  for (int row : touched_rows) total += first.row(row).squaredNorm();
  total += grads.trunk[0].b.squaredNorm();
  for (std::size_t l = 1; l < grads.trunk.size(); ++l) {
    total += grads.trunk[l].W.squaredNorm() + grads.trunk[l].b.squaredNorm();
  }
  for (const Layer* head : {&grads.policy_head, &grads.value_head}) {
    total += head->W.squaredNorm() + head->b.squaredNorm();
  }
  return total;
}

double Gradients::clip_global_norm(double max_norm) {
  const double norm = std::sqrt(squared_norm());
  if (norm > max_norm) scale(max_norm / norm);
  return norm;
}

void backward(const PolicyParams& params, const SparseBatch& input, const ForwardCache& cache,
              const Matrix& dlogits, const Vector& dvalues, Gradients& out) {
  check_input(params, input);
  const Eigen::Index batch = input.rows();
  if (dlogits.rows() != batch || dlogits.cols() != params.spec.num_actions ||
      dvalues.size() != batch) {
    throw ShapeMismatch("upstream gradient shape does not match batch");
  }
  const Matrix& top = cache.activations.back();
  out.grads.policy_head.W.noalias() += top.transpose() * dlogits;
  out.grads.policy_head.b += dlogits.colwise().sum().transpose();
  out.grads.value_head.W.col(0).noalias() += top.transpose() * dvalues;
  out.grads.value_head.b[0] += dvalues.sum();

  Matrix dh = dlogits * params.policy_head.W.transpose();
  dh.noalias() += dvalues * params.value_head.W.col(0).transpose();
  for (std::size_t l = params.trunk.size(); l-- > 0;) {
    const Matrix& h = cache.activations[l];
    const Matrix dz = (dh.array() * (1.0 - h.array().square())).matrix();
    out.grads.trunk[l].b += dz.colwise().sum().transpose();
    if (l > 0) {
      out.grads.trunk[l].W.noalias() += cache.activations[l - 1].transpose() * dz;
      dh.noalias() = dz * params.trunk[l].W.transpose();
    } else {
      Matrix& gw = out.grads.trunk[0].W;
      for (int r = 0; r < batch; ++r) {
        for (int k = input.row_start[r]; k < input.row_start[r + 1]; ++k) {
          const int row = input.indices[k];
          out.mark_row(row);
          gw.row(row).noalias() += input.values[k] * dz.row(r);
        }
      }
    }
  }
}

OptState OptState::for_params(const PolicyParams& params, AdamConfig config) {
  OptState state;
  state.config = config;
  state.m = zeros_like_params(params);
  state.v = zeros_like_params(params);
  state.active_mask.assign(static_cast<std::size_t>(params.spec.input_dim), 0);
  return state;
}

namespace {

template <typename P, typename G, typename M>
void adam_block(P&& p, const G& g, M&& m, M&& v, const AdamConfig& c, double bc1, double bc2) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g.square();
  p -= c.learning_rate * (m / bc1) / ((v / bc2).sqrt() + c.epsilon);
}

}  // namespace

void optimizer_step(PolicyParams& params, const Gradients& grads, OptState& state) {
  if (!(grads.grads.spec == params.spec) || !(state.m.spec == params.spec)) {
    throw ShapeMismatch("optimizer state does not match parameters");
  }
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

  for (int row : grads.touched_rows) {
    if (!state.active_mask[row]) {
      state.active_mask[row] = 1;
      state.active_rows.push_back(row);
    }
  }
  {
    auto& p = params.trunk[0].W;
    const auto& g = grads.grads.trunk[0].W;
    auto& m = state.m.trunk[0].W;
    auto& v = state.v.trunk[0].W;
    for (int row : state.active_rows) {
      auto mr = m.row(row).array();
      auto vr = v.row(row).array();
      adam_block(p.row(row).array(), g.row(row).array(), mr, vr, c, bc1, bc2);
    }
  }
  const auto dense_update = [&](Layer& p, const Layer& g, Layer& m, Layer& v, bool with_weights) {
    if (with_weights) {
      auto mw = m.W.array();
      auto vw = v.W.array();
      adam_block(p.W.array(), g.W.array(), mw, vw, c, bc1, bc2);
    }
    auto mb = m.b.array();
    auto vb = v.b.array();
    adam_block(p.b.array(), g.b.array(), mb, vb, c, bc1, bc2);
  };
  dense_update(params.trunk[0], grads.grads.trunk[0], state.m.trunk[0], state.v.trunk[0], false);
  for (std::size_t l = 1; l < params.trunk.size(); ++l) {
    dense_update(params.trunk[l], grads.grads.trunk[l], state.m.trunk[l], state.v.trunk[l], true);
  }
  dense_update(params.policy_head, grads.grads.policy_head, state.m.policy_head,
               state.v.policy_head, true);
  dense_update(params.value_head, grads.grads.value_head, state.m.value_head, state.v.value_head,
               true);
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write checkpoint " + path.string());
  }
  template <typename T>
  void put(T value) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
    out_.write(reinterpret_cast<const char*>(&value), sizeof value);
  }
  void put_doubles(const double* data, std::size_t count) {
    out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
  }
  void put_params(const PolicyParams& p) {
    p.for_each_layer([&](const Layer& l) {
      put_doubles(l.W.data(), l.W.size());
      put_doubles(l.b.data(), l.b.size());
    });
  }
  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("checkpoint write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot read checkpoint " + path.string());
  }
  template <typename T>
  T get() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof value);
    if (!in_) throw std::runtime_error("truncated checkpoint");
    return value;
  }
  void get_doubles(double* data, std::size_t count) {
    in_.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 8));
    if (!in_) throw std::runtime_error("truncated checkpoint");
  }
  void get_params(PolicyParams& p) {
    p.for_each_layer([&](Layer& l) {
      get_doubles(l.W.data(), l.W.size());
      get_doubles(l.b.data(), l.b.size());
    });
  }

 private:
  std::ifstream in_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params,
                     const OptState& state) {
  Writer w(path);
  w.put<std::uint32_t>(0x4b434741);  // "AGCK"
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.spec.input_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.spec.hidden.size()));
  for (int width : params.spec.hidden) w.put<std::uint32_t>(static_cast<std::uint32_t>(width));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.spec.num_actions));
  w.put_params(params);
  w.put<double>(state.config.learning_rate);
  w.put<double>(state.config.beta1);
  w.put<double>(state.config.beta2);
  w.put<double>(state.config.epsilon);
  w.put<std::int64_t>(state.step);
  w.put_params(state.m);
  w.put_params(state.v);
  w.put<std::uint64_t>(state.active_rows.size());
  for (int row : state.active_rows) w.put<std::int32_t>(row);
  w.finish();
}

void load_checkpoint(const std::filesystem::path& path, PolicyParams& params, OptState& state) {
  Reader r(path);
  if (r.get<std::uint32_t>() != 0x4b434741) throw std::runtime_error("not a checkpoint file");
  if (const auto version = r.get<std::uint32_t>(); version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  NetSpec spec;
  spec.input_dim = static_cast<int>(r.get<std::uint32_t>());
  const auto depth = r.get<std::uint32_t>();
  if (depth == 0 || depth > 64) throw std::runtime_error("corrupt checkpoint header");
  for (std::uint32_t i = 0; i < depth; ++i) spec.hidden.push_back(static_cast<int>(r.get<std::uint32_t>()));
  spec.num_actions = static_cast<int>(r.get<std::uint32_t>());
  params = init_params(spec, 0, InitOptions{0.0, 0.0, 0.0});
  r.get_params(params);
  AdamConfig config;
  config.learning_rate = r.get<double>();
  config.beta1 = r.get<double>();
  config.beta2 = r.get<double>();
  config.epsilon = r.get<double>();
  state = OptState::for_params(params, config);
  state.step = r.get<std::int64_t>();
  r.get_params(state.m);
  r.get_params(state.v);
  const auto active = r.get<std::uint64_t>();
  if (active > static_cast<std::uint64_t>(spec.input_dim)) {
    throw std::runtime_error("corrupt checkpoint active rows");
  }
  for (std::uint64_t i = 0; i < active; ++i) {
    const int row = r.get<std::int32_t>();
    if (row < 0 || row >= spec.input_dim) throw std::runtime_error("corrupt checkpoint row");
    state.active_rows.push_back(row);
    state.active_mask[row] = 1;
  }
}

GradCheckResult grad_check(const PolicyParams& params, const LossFn& loss, double h,
                           double denominator_floor) {
  Gradients analytic = Gradients::zeros_like(params);
  loss(params, &analytic);

  PolicyParams probe = params;
  std::vector<double*> coords;
  std::vector<const double*> grads;
  probe.for_each_layer([&](Layer& l) {
    for (Eigen::Index i = 0; i < l.W.size(); ++i) coords.push_back(l.W.data() + i);
    for (Eigen::Index i = 0; i < l.b.size(); ++i) coords.push_back(l.b.data() + i);
  });
  analytic.grads.for_each_layer([&](const Layer& l) {
    for (Eigen::Index i = 0; i < l.W.size(); ++i) grads.push_back(l.W.data() + i);
    for (Eigen::Index i = 0; i < l.b.size(); ++i) grads.push_back(l.b.data() + i);
  });

  GradCheckResult result;
  result.coordinates = coords.size();
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double saved = *coords[i];
    *coords[i] = saved + h;
    const double plus = loss(probe, nullptr);
    *coords[i] = saved - h;
    const double minus = loss(probe, nullptr);
    *coords[i] = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    const double a = *grads[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), denominator_floor});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
  }
  return result;
}

Matrix log_softmax(const Matrix& logits) {
  Matrix out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double max = out.row(r).maxCoeff();
    const double lse = max + std::log((out.row(r).array() - max).exp().sum());
    out.row(r).array() -= lse;
  }
  return out;
}

}  // namespace appgym::nn
