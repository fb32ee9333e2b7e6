#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "rmacvae/feature_store.hpp"
#include "rmacvae/vae.hpp"

namespace rmacvae {

/// Cosine annealing of the KL weight over epochs t in [0, n_epochs).
struct BetaSchedule {
  double beta_start = 1e-4;
  double beta_end = 0.12;
  std::size_t t_start = 1;
  std::size_t t_end = 19;
  std::size_t n_epochs = 20;

  void validate() const;
  bool operator==(const BetaSchedule&) const = default;
};

/// beta_start before t_start, beta_end after t_end, half-cosine in between.
double beta_at(const BetaSchedule& schedule, std::size_t epoch);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  Gradients m;
  Gradients v;
  std::uint64_t step = 0;
};

class NonFiniteGradientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

AdamState adam_init(const VaeParams& params);

/// One bias-corrected Adam update of a flat parameter block. `step` is the
/// 1-based index of this update.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::uint64_t step, const AdamConfig& config);

/// Updates every trainable tensor. Rejects non-finite gradients before
/// touching any state.
void adam_step(VaeParams& params, const Gradients& grads, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 256;
  BetaSchedule schedule;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double beta = 0.0;
  double total = 0.0;
  double mse = 0.0;
  double kld = 0.0;
  std::size_t batches = 0;
  std::size_t samples = 0;
};

struct TrainResult {
  VaeParams params;
  std::vector<EpochRecord> history;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameters the training loop starts from for this config.
VaeParams initial_params(const VaeConfig& vae_config, const TrainConfig& train_config);

/// Splits a shuffled epoch of n rows into minibatch sizes. A trailing batch
/// smaller than 2 rows is dropped.
std::vector<std::size_t> minibatch_sizes(std::size_t n, std::size_t batch_size);

/// Copies rows of a vector dataset (h = w = 1) into a dense matrix.
Matrix gather_rows(const DfmDataset& dataset, std::span<const std::size_t> rows);
Matrix to_matrix(const DfmDataset& dataset);

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const DfmDataset& dataset, const VaeConfig& vae_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch = {});

}  // namespace rmacvae
