#include "rmacvae/training.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "rmacvae/rng.hpp"

namespace rmacvae {

void BetaSchedule::validate() const {
  if (n_epochs == 0) throw std::invalid_argument("beta schedule: n_epochs must be positive");
  if (!(t_start <= t_end && t_end <= n_epochs - 1)) {
    throw std::invalid_argument("beta schedule: need 0 <= t_start <= t_end <= n_epochs - 1");
  }
  if (!(beta_start <= beta_end)) {
    throw std::invalid_argument("beta schedule: beta_start must not exceed beta_end");
  }
}

double beta_at(const BetaSchedule& schedule, std::size_t epoch) {
  schedule.validate();
  if (epoch >= schedule.n_epochs) {
    throw std::out_of_range("beta_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(schedule.n_epochs - 1) + "]");
  }
  if (epoch <= schedule.t_start) return schedule.beta_start;
  if (epoch >= schedule.t_end) return schedule.beta_end;
  const double progress = static_cast<double>(epoch - schedule.t_start) /
                          static_cast<double>(schedule.t_end - schedule.t_start);
  return schedule.beta_end - 0.5 * (schedule.beta_end - schedule.beta_start) *
                                 (1.0 + std::cos(std::numbers::pi * progress));
}

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("adam: decay rates must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("adam: epsilon must be positive");
}

AdamState adam_init(const VaeParams& params) {
  return AdamState{zeros_like(params), zeros_like(params), 0};
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::uint64_t step, const AdamConfig& config) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw std::invalid_argument("adam_update: block sizes differ");
  }
  if (step == 0) throw std::invalid_argument("adam_update: step index is 1-based");
  const double t = static_cast<double>(step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    param[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

namespace {

template <typename Value, typename Tree>
std::vector<std::span<Value>> trainable_blocks(Tree& tree) {
  std::vector<std::span<Value>> blocks;
  for_each_tensor(tree, [&](const std::string&, auto& t, bool trainable) {
    if (trainable) blocks.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  });
  return blocks;
}

}  // namespace

void adam_step(VaeParams& params, const Gradients& grads, AdamState& state,
               const AdamConfig& config) {
  for_each_tensor(grads, [](const std::string& name, const auto& t, bool trainable) {
    if (trainable && !t.allFinite()) {
      throw NonFiniteGradientError("adam_step: non-finite gradient in '" + name + "'");
    }
  });
  auto p = trainable_blocks<double>(params);
  auto g = trainable_blocks<const double>(grads);
  auto m = trainable_blocks<double>(state.m);
  auto v = trainable_blocks<double>(state.v);
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
    throw std::invalid_argument("adam_step: parameter trees differ");
  }
  ++state.step;
  for (std::size_t i = 0; i < p.size(); ++i) adam_update(p[i], g[i], m[i], v[i], state.step, config);
}

void TrainConfig::validate() const {
  adam.validate();
  schedule.validate();
  if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be at least 2");
}

VaeParams initial_params(const VaeConfig& vae_config, const TrainConfig& train_config) {
  return init_params(vae_config, derive_seed(train_config.seed, "init"));
}

std::vector<std::size_t> minibatch_sizes(std::size_t n, std::size_t batch_size) {
  std::vector<std::size_t> sizes(n / batch_size, batch_size);
  const std::size_t rest = n % batch_size;
  if (rest >= 2) sizes.push_back(rest);
  return sizes;
}

Matrix gather_rows(const DfmDataset& dataset, std::span<const std::size_t> rows) {
  const auto dim = static_cast<Eigen::Index>(dataset.record_size());
  Matrix out(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto rec = dataset.record(rows[r]);
    for (Eigen::Index j = 0; j < dim; ++j) {
      out(static_cast<Eigen::Index>(r), j) = rec[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

Matrix to_matrix(const DfmDataset& dataset) {
  std::vector<std::size_t> rows(dataset.n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return gather_rows(dataset, rows);
}

TrainResult train(const DfmDataset& dataset, const VaeConfig& vae_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch) {
  vae_config.validate();
  train_config.validate();
  dataset.validate();
  if (dataset.n == 0) throw TrainingError("train: empty dataset");
  if (dataset.h != 1 || dataset.w != 1 || dataset.c != vae_config.input_dim) {
    throw TrainingError("train: dataset records are " + std::to_string(dataset.c) + "x" +
                        std::to_string(dataset.h) + "x" + std::to_string(dataset.w) +
                        ", model expects vectors of " + std::to_string(vae_config.input_dim));
  }
  const auto sizes = minibatch_sizes(dataset.n, train_config.batch_size);
  if (sizes.empty()) throw TrainingError("train: dataset too small for a single minibatch");

  TrainResult result;
  result.params = initial_params(vae_config, train_config);
  AdamState adam = adam_init(result.params);
  Rng shuffle_rng(derive_seed(train_config.seed, "shuffle"));
  Rng noise_rng(derive_seed(train_config.seed, "noise"));
  const auto latent = static_cast<Eigen::Index>(vae_config.latent_dim);

  std::vector<std::size_t> order(dataset.n);
  for (std::size_t epoch = 0; epoch < train_config.schedule.n_epochs; ++epoch) {
    const double beta = beta_at(train_config.schedule, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    EpochRecord record;
    record.epoch = epoch;
    record.beta = beta;
    std::size_t offset = 0;
    for (std::size_t b = 0; b < sizes.size(); ++b) {
      const std::span<const std::size_t> rows(order.data() + offset, sizes[b]);
      offset += sizes[b];
      const Matrix x = gather_rows(dataset, rows);
      const Matrix noise = draw_noise(x.rows(), latent, noise_rng.next_u64());

      const ForwardPass pass = forward(result.params, x, noise, beta, vae_config);
      if (!std::isfinite(pass.loss.total)) {
        throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(b));
      }
      const Gradients grads = backward(result.params, pass, x, beta, vae_config.latent_dim);
      commit_batch_stats(result.params.encoder, pass.encoded.layers, vae_config.bn_momentum);
      commit_batch_stats(result.params.decoder, pass.decoded.layers, vae_config.bn_momentum);
      try {
        adam_step(result.params, grads, adam, train_config.adam);
      } catch (const NonFiniteGradientError& e) {
        throw TrainingError("train: epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b) + ": " + e.what());
      }

      const double weight = static_cast<double>(sizes[b]);
      record.total += weight * pass.loss.total;
      record.mse += weight * pass.loss.mse;
      record.kld += weight * pass.loss.kld;
      record.samples += sizes[b];
      ++record.batches;
    }
    const double samples = static_cast<double>(record.samples);
    record.total /= samples;
    record.mse /= samples;
    record.kld /= samples;
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

}  // namespace rmacvae
