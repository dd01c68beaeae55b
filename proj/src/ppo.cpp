#include "appgym/ppo.hpp"

#include <chrono>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>

namespace appgym::ppo {

void PPOConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid ppo config: ") + what);
  };
  require(epochs > 0, "epochs must be positive");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(minibatch_size >= 0, "minibatch_size must be non-negative");
  require(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
  require(vf_coef >= 0.0, "vf_coef must be non-negative");
  require(clip_eps > 0.0 && clip_eps < 1.0, "clip_eps must be in (0, 1)");
  require(ent_coef >= 0.0, "ent_coef must be non-negative");
  require(n_steps > 0, "n_steps must be positive");
  require(num_envs > 0, "num_envs must be positive");
  require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "gae_lambda must be in [0, 1]");
  require(max_grad_norm > 0.0, "max_grad_norm must be positive");
}

void append_observation(nn::SparseBatch& batch, const feat::FeatureMatrix& obs) {
  for (int r = 0; r < obs.n; ++r) {
    const auto& row = obs.rows[r];
    const int offset = r * obs.m;
    for (std::size_t k = 0; k < row.indices.size(); ++k) {
      batch.push(offset + row.indices[k], row.values[k]);
    }
  }
  batch.end_row();
}

nn::SparseBatch observations_to_batch(const std::vector<feat::FeatureMatrix>& obs) {
  nn::SparseBatch batch;
  batch.clear(obs.empty() ? 0 : obs.front().n * obs.front().m);
  for (const auto& o : obs) append_observation(batch, o);
  return batch;
}

Targets compute_targets(const RolloutBuffer& buffer, double gamma, bool use_gae, double lambda,
                        bool bootstrap_on_timeout) {
  Targets out;
  out.returns.assign(buffer.size(), 0.0);
  out.advantages.assign(buffer.size(), 0.0);
  for (int e = 0; e < buffer.num_envs; ++e) {
    double next_return = buffer.last_values[e];
    double next_value = buffer.last_values[e];
    double next_advantage = 0.0;
    for (int t = buffer.n_steps - 1; t >= 0; --t) {
      const std::size_t i = buffer.index(t, e);
      const bool done = buffer.dones[i] != 0;
      double bootstrap = 0.0;
      if (done && !buffer.goal_dones[i] && bootstrap_on_timeout) {
        bootstrap = buffer.terminal_values[i];
      }
      if (use_gae) {
        const double v_next = done ? bootstrap : next_value;
        const double delta = buffer.rewards[i] + gamma * v_next - buffer.values[i];
        const double advantage = delta + gamma * lambda * (done ? 0.0 : next_advantage);
        out.advantages[i] = advantage;
        out.returns[i] = advantage + buffer.values[i];
        next_advantage = advantage;
        next_value = buffer.values[i];
      } else {
        const double target = buffer.rewards[i] + gamma * (done ? bootstrap : next_return);
        out.returns[i] = target;
        out.advantages[i] = target - buffer.values[i];
        next_return = target;
      }
    }
  }
  return out;
}

LossTerms ppo_loss(const nn::Matrix& logits, const nn::Vector& values,
                   const std::vector<int>& actions, const std::vector<double>& old_log_probs,
                   const std::vector<double>& advantages, const std::vector<double>& returns,
                   double clip_eps, double vf_coef, double ent_coef) {
  const Eigen::Index batch = logits.rows();
  const auto n = static_cast<std::size_t>(batch);
  if (batch == 0 || values.size() != batch || actions.size() != n || old_log_probs.size() != n ||
      advantages.size() != n || returns.size() != n) {
    throw nn::ShapeMismatch("ppo_loss inputs disagree on batch size");
  }
  const double inv = 1.0 / static_cast<double>(batch);
  const nn::Matrix log_p = nn::log_softmax(logits);
  const nn::Matrix p = log_p.array().exp().matrix();

  LossTerms out;
  out.dlogits = nn::Matrix::Zero(batch, logits.cols());
  out.dvalues = nn::Vector::Zero(batch);
  int clipped = 0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int a = actions[b];
    if (a < 0 || a >= logits.cols()) throw nn::ShapeMismatch("action outside logits");
    const double log_ratio = log_p(b, a) - old_log_probs[b];
    const double ratio = std::exp(log_ratio);
    const double adv = advantages[b];
    const double unclipped = ratio * adv;
    const double bounded = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv;
    out.policy_loss -= std::min(unclipped, bounded) * inv;
    if (unclipped <= bounded) {
      // d(-rho A)/dz = -A rho (onehot - p)
      out.dlogits.row(b) += (adv * ratio * inv) * p.row(b);
      out.dlogits(b, a) -= adv * ratio * inv;
    }
    if (std::abs(ratio - 1.0) > clip_eps) ++clipped;
    out.max_ratio_deviation = std::max(out.max_ratio_deviation, std::abs(ratio - 1.0));
    out.approx_kl -= log_ratio * inv;

    const double entropy = -(p.row(b).array() * log_p.row(b).array()).sum();
    out.entropy += entropy * inv;
    out.dlogits.row(b).array() +=
        (ent_coef * inv) * p.row(b).array() * (log_p.row(b).array() + entropy);

    const double err = values[b] - returns[b];
    out.value_loss += err * err * inv;
    out.dvalues[b] = vf_coef * 2.0 * err * inv;
  }
  out.clip_fraction = clipped * inv;
  out.loss = out.policy_loss + vf_coef * out.value_loss - ent_coef * out.entropy;
  if (!std::isfinite(out.loss) || !out.dlogits.allFinite() || !out.dvalues.allFinite()) {
    throw NonFiniteLoss("non-finite PPO loss");
  }
  return out;
}

Policy make_policy(const nn::NetSpec& spec, const PPOConfig& cfg) {
  Policy policy;
  policy.params = nn::init_params(spec, derive_seed(cfg.seed, 0));
  nn::AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  policy.opt = nn::OptState::for_params(policy.params, adam);
  return policy;
}

int sample_action(const double* logits, int count, Rng& rng, bool greedy) {
  int best = 0;
  for (int i = 1; i < count; ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  if (greedy) return best;
  const double max = logits[best];
  double total = 0.0;
  for (int i = 0; i < count; ++i) total += std::exp(logits[i] - max);
  const double u = uniform_unit(rng) * total;
  double cumulative = 0.0;
  for (int i = 0; i < count; ++i) {
    cumulative += std::exp(logits[i] - max);
    if (u < cumulative) return i;
  }
  return count - 1;
}

RolloutCollector::RolloutCollector(env::VecEnv& venv, std::uint64_t seed)
    : venv_(venv),
      rng_(seed),
      running_return_(venv.size(), 0.0),
      running_length_(venv.size(), 0) {}

RolloutBuffer RolloutCollector::collect(const nn::PolicyParams& params, int n_steps,
                                        EpisodeStats& stats) {
  if (venv_.observations().size() != venv_.size()) venv_.reset();
  const int num_envs = static_cast<int>(venv_.size());
  const auto& first_env = venv_.at(0).config();
  const int n = first_env.n();
  const int k_tok = first_env.k_tok();
  const int num_actions = n * k_tok;
  if (params.spec.num_actions != num_actions) {
    throw nn::ShapeMismatch("policy head size does not match env action space");
  }

  RolloutBuffer buffer;
  buffer.num_envs = num_envs;
  buffer.n_steps = n_steps;
  buffer.observations.clear(params.spec.input_dim);
  const std::size_t total = static_cast<std::size_t>(num_envs) * n_steps;
  buffer.actions.reserve(total);
  buffer.rewards.reserve(total);
  buffer.values.reserve(total);
  buffer.log_probs.reserve(total);
  buffer.dones.reserve(total);
  buffer.goal_dones.reserve(total);
  buffer.terminal_values.assign(total, 0.0);

  for (int t = 0; t < n_steps; ++t) {
    const nn::SparseBatch batch = observations_to_batch(venv_.observations());
    const nn::ForwardCache out = nn::forward(params, batch);
    const nn::Matrix log_p = nn::log_softmax(out.logits);
    std::vector<env::Action> actions;
    actions.reserve(num_envs);
    for (int e = 0; e < num_envs; ++e) {
      const int a = sample_action(out.logits.row(e).data(), num_actions, rng_);
      actions.push_back(env::Action::from_flat(a, n, k_tok));
      buffer.observations.append_row_from(batch, e);
      buffer.actions.push_back(a);
      buffer.values.push_back(out.values[e]);
      buffer.log_probs.push_back(log_p(e, a));
    }
    const auto results = venv_.step(actions);

    nn::SparseBatch terminal;
    terminal.clear(params.spec.input_dim);
    std::vector<std::size_t> terminal_slots;
    for (int e = 0; e < num_envs; ++e) {
      const auto& result = results[e];
      buffer.rewards.push_back(result.reward);
      buffer.dones.push_back(result.done ? 1 : 0);
      buffer.goal_dones.push_back(result.info.goal_reached ? 1 : 0);
      running_return_[e] += result.reward;
      ++running_length_[e];
      if (result.done) {
        stats.returns.push_back(running_return_[e]);
        stats.lengths.push_back(running_length_[e]);
        stats.successes.push_back(result.info.goal_reached ? 1 : 0);
        running_return_[e] = 0.0;
        running_length_[e] = 0;
        if (result.info.timed_out) {
          append_observation(terminal, *result.info.terminal_observation);
          terminal_slots.push_back(buffer.index(t, e));
        }
      }
    }
    if (!terminal_slots.empty()) {
      const auto values = nn::forward(params, terminal).values;
      for (std::size_t k = 0; k < terminal_slots.size(); ++k) {
        buffer.terminal_values[terminal_slots[k]] = values[static_cast<Eigen::Index>(k)];
      }
    }
  }
  const auto last = nn::forward(params, observations_to_batch(venv_.observations())).values;
  buffer.last_values.assign(last.data(), last.data() + last.size());
  return buffer;
}

UpdateStats update(Policy& policy, const RolloutBuffer& buffer, const Targets& targets,
                   const PPOConfig& cfg, Rng& rng) {
  const std::size_t total = buffer.size();
  const std::size_t mb = static_cast<std::size_t>(cfg.effective_minibatch());
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  nn::Gradients grads = nn::Gradients::zeros_like(policy.params);

  UpdateStats stats;
  nn::SparseBatch batch;
  std::vector<int> actions;
  std::vector<double> old_log_probs, advantages, returns;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    for (std::size_t start = 0; start < total; start += mb) {
      const std::size_t end = std::min(total, start + mb);
      batch.clear(buffer.observations.dim);
      actions.clear();
      old_log_probs.clear();
      advantages.clear();
      returns.clear();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        batch.append_row_from(buffer.observations, static_cast<int>(i));
        actions.push_back(buffer.actions[i]);
        old_log_probs.push_back(buffer.log_probs[i]);
        advantages.push_back(targets.advantages[i]);
        returns.push_back(targets.returns[i]);
      }
      if (cfg.normalize_advantages && advantages.size() > 1) {
        const double count = static_cast<double>(advantages.size());
        const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / count;
        double var = 0.0;
        for (double a : advantages) var += (a - mean) * (a - mean);
        const double stddev = std::sqrt(var / count);
        for (double& a : advantages) a = (a - mean) / (stddev + 1e-8);
      }

      const nn::ForwardCache cache = nn::forward(policy.params, batch);
      const LossTerms terms = ppo_loss(cache.logits, cache.values, actions, old_log_probs,
                                       advantages, returns, cfg.clip_eps, cfg.vf_coef,
                                       cfg.ent_coef);
      if (stats.minibatches == 0) stats.first_minibatch_max_ratio_error = terms.max_ratio_deviation;
      grads.zero();
      nn::backward(policy.params, batch, cache, terms.dlogits, terms.dvalues, grads);
      stats.grad_norm += grads.clip_global_norm(cfg.max_grad_norm);
      nn::optimizer_step(policy.params, grads, policy.opt);

      stats.policy_loss += terms.policy_loss;
      stats.value_loss += terms.value_loss;
      stats.entropy += terms.entropy;
      stats.clip_fraction += terms.clip_fraction;
      stats.approx_kl += terms.approx_kl;
      ++stats.minibatches;
    }
  }
  if (stats.minibatches > 0) {
    const double inv = 1.0 / stats.minibatches;
    stats.policy_loss *= inv;
    stats.value_loss *= inv;
    stats.entropy *= inv;
    stats.clip_fraction *= inv;
    stats.approx_kl *= inv;
    stats.grad_norm *= inv;
  }
  if (!policy.params.all_finite()) throw NonFiniteLoss("parameters became non-finite");
  return stats;
}

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> columns = {
      "update",       "env_steps",        "episodes",     "mean_episode_reward",
      "mean_episode_length", "train_success", "eval_success", "eval_half_width",
      "policy_loss",  "value_loss",       "entropy",      "clip_fraction",
      "approx_kl",    "grad_norm"};
  return columns;
}

namespace {

void put_number(std::ostream& out, double value) {
  char buffer[32];
  const auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  out.write(buffer, end - buffer);
}

}  // namespace

void write_metrics_header(std::ostream& out) {
  const auto& columns = metrics_columns();
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << '\n';
}

void write_metrics_row(std::ostream& out, const MetricsRow& row) {
  out << row.update << ',' << row.env_steps << ',' << row.episodes << ',';
  if (row.episodes > 0) {
    put_number(out, row.mean_episode_reward);
    out << ',';
    put_number(out, row.mean_episode_length);
    out << ',';
    put_number(out, row.train_success);
  } else {
    out << ",,";
  }
  out << ',';
  if (row.eval_success) put_number(out, *row.eval_success);
  out << ',';
  if (row.eval_half_width) put_number(out, *row.eval_half_width);
  for (double v : {row.stats.policy_loss, row.stats.value_loss, row.stats.entropy,
                   row.stats.clip_fraction, row.stats.approx_kl, row.stats.grad_norm}) {
    out << ',';
    put_number(out, v);
  }
  out << '\n';
}

TrainResult train(const env::EnvConfig& env_cfg, const nn::NetSpec& spec, const PPOConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  if (options.updates < 0) throw std::invalid_argument("updates must be non-negative");
  env::VecEnv venv(env::replicate(env_cfg, cfg.num_envs, derive_seed(cfg.seed, 1)));
  RolloutCollector collector(venv, derive_seed(cfg.seed, 2));
  Rng update_rng(derive_seed(cfg.seed, 3));

  TrainResult result;
  result.policy = make_policy(spec, cfg);
  if (options.metrics_out) write_metrics_header(*options.metrics_out);
  if (options.timing_out) *options.timing_out << "update,seconds\n";
  if (options.checkpoint_dir) std::filesystem::create_directories(*options.checkpoint_dir);

  std::int64_t env_steps = 0;
  for (int u = 1; u <= options.updates; ++u) {
    const auto start = std::chrono::steady_clock::now();
    EpisodeStats episodes;
    const RolloutBuffer buffer = collector.collect(result.policy.params, cfg.n_steps, episodes);
    env_steps += static_cast<std::int64_t>(buffer.size());
    const Targets targets = compute_targets(buffer, cfg.gamma, cfg.use_gae, cfg.gae_lambda,
                                            cfg.bootstrap_on_timeout);
    MetricsRow row;
    row.update = u;
    row.stats = update(result.policy, buffer, targets, cfg, update_rng);
    row.env_steps = env_steps;
    row.episodes = static_cast<int>(episodes.returns.size());
    if (row.episodes > 0) {
      const double count = row.episodes;
      row.mean_episode_reward =
          std::accumulate(episodes.returns.begin(), episodes.returns.end(), 0.0) / count;
      row.mean_episode_length =
          std::accumulate(episodes.lengths.begin(), episodes.lengths.end(), 0.0) / count;
      row.train_success =
          std::accumulate(episodes.successes.begin(), episodes.successes.end(), 0.0) / count;
    }
    if (options.eval_hook) {
      if (const auto eval = options.eval_hook(u, result.policy)) {
        row.eval_success = eval->first;
        row.eval_half_width = eval->second;
      }
    }
    if (options.metrics_out) {
      write_metrics_row(*options.metrics_out, row);
      options.metrics_out->flush();
    }
    if (options.checkpoint_dir && options.checkpoint_every > 0 &&
        (u % options.checkpoint_every == 0 || u == options.updates ||
         (options.stop_when && options.stop_when(row)))) {
      nn::save_checkpoint(*options.checkpoint_dir / ("update_" + std::to_string(u) + ".ckpt"),
                          result.policy.params, result.policy.opt);
    }
    if (options.timing_out) {
      *options.timing_out
          << u << ','
          << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
          << '\n';
    }
    result.metrics.push_back(std::move(row));
    if (options.stop_when && options.stop_when(result.metrics.back())) break;
  }
  return result;
}

}  // namespace appgym::ppo
