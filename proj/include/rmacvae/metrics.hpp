#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rmacvae/feature_store.hpp"
#include "rmacvae/vae.hpp"

namespace rmacvae {

/// Latent codes (n x C) paired with their ground-truth factors.
struct RepresentationSet {
  Matrix latents;
  FactorTable factors;

  std::size_t size() const { return static_cast<std::size_t>(latents.rows()); }
  std::size_t latent_dim() const { return static_cast<std::size_t>(latents.cols()); }
  void validate() const;
};

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Eval-mode posterior means for every record of a labelled vector dataset.
RepresentationSet represent(const VaeParams& params, const VaeConfig& config,
                            const DfmDataset& dataset);

/// Row order that depends only on the multiset of (factors, latents) rows,
/// so seeded metrics are invariant to sample and latent permutations.
std::vector<std::size_t> canonical_order(const RepresentationSet& rep);
RepresentationSet reorder(const RepresentationSet& rep, std::span<const std::size_t> order);

// ---------------------------------------------------------------- MIG

struct Discretized {
  std::vector<std::vector<std::int32_t>> codes;  // one column per latent
  std::vector<std::size_t> bins_used;            // occupied bins per latent
};

/// Equal-frequency binning per latent. Tied values share a bin; empty bins
/// are merged away so codes are consecutive from 0.
Discretized discretize(const Matrix& latents, std::size_t bins);

/// Plug-in entropy in nats.
double entropy(std::span<const std::int32_t> labels);

/// Plug-in mutual information in nats.
double mutual_info(std::span<const std::int32_t> a, std::span<const std::int32_t> b);

struct MigResult {
  double score = 0.0;
  Matrix mutual_info;  // latents x factors, nats
  std::vector<double> factor_entropy;
  std::vector<double> per_factor;
};

MigResult mig(const RepresentationSet& rep, std::size_t bins = 20);

// ---------------------------------------------------------------- SAP

/// R^2 of a single-latent linear fit of each factor, latents x factors.
Matrix sap_score_matrix(const RepresentationSet& rep);
double sap(const RepresentationSet& rep);

// ---------------------------------------------------------- FactorVAE

struct FactorVaeConfig {
  std::size_t train_votes = 800;
  std::size_t eval_votes = 200;
  std::size_t probe_batch = 64;
};

struct FactorVaeResult {
  double score = 0.0;  // held-out accuracy of the majority-vote classifier
  double train_accuracy = 0.0;
  std::vector<std::size_t> excluded_latents;  // zero global std
};

/// Maps pool row indices to their latent codes (rows x C).
using RepresentationFn = std::function<Matrix(std::span<const std::size_t>)>;

FactorVaeResult factorvae_score(const RepresentationFn& represent_rows, const FactorTable& pool,
                                const FactorVaeConfig& config, std::uint64_t seed);
FactorVaeResult factorvae_score(const RepresentationSet& rep, const FactorVaeConfig& config,
                                std::uint64_t seed);

// ---------------------------------------------------------------- DCI

struct DciConfig {
  double train_fraction = 0.8;
  double l1_penalty = 0.01;
  std::size_t iterations = 400;
};

struct DciScores {
  double disentanglement = 0.0;
  double completeness = 0.0;
};

struct DciResult {
  double disentanglement = 0.0;
  double completeness = 0.0;
  double informativeness = 0.0;
  Matrix importance;  // latents x factors
  std::vector<double> train_accuracy;
  std::vector<double> test_accuracy;
};

/// Entropy-based disentanglement (per latent, weighted by its share of
/// importance) and completeness (per factor, weighted likewise).
DciScores dci_scores(const Matrix& importance);

struct SoftmaxModel {
  Matrix weight;  // classes x features
  Vector bias;

  std::vector<std::int32_t> predict(const Matrix& x) const;
};

/// L1-regularized multinomial logistic regression fitted with FISTA.
SoftmaxModel fit_l1_softmax(const Matrix& x, std::span<const std::int32_t> labels,
                            std::size_t classes, double l1_penalty, std::size_t iterations);

DciResult dci(const RepresentationSet& rep, const DciConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------- IRS

struct IrsConfig {
  double diff_quantile = 1.0;  // 1.0 = maximal deviation
  bool zero_deviation_guard = true;
  double guard_threshold = 1e-9;
};

struct IrsResult {
  double score = 0.0;
  Matrix robustness;  // latents x factors, in [0, 1]
  std::vector<double> per_latent;
  std::vector<std::size_t> parents;  // best factor per latent
  std::vector<double> per_factor;
};

IrsResult irs(const RepresentationSet& rep, const IrsConfig& config = {});

// -------------------------------------------------------------- report

struct MetricConfig {
  std::size_t mig_bins = 20;
  FactorVaeConfig factorvae;
  DciConfig dci;
  IrsConfig irs;
  std::set<std::string> enabled{"factorvae", "mig", "sap", "dci", "irs"};
};

/// Names accepted in MetricConfig::enabled.
const std::vector<std::string>& metric_names();

struct MetricReport {
  std::optional<double> factorvae;
  std::optional<double> mig;
  std::optional<double> sap;
  std::optional<double> dci_disentanglement;
  std::optional<double> dci_completeness;
  std::optional<double> dci_informativeness;
  std::optional<double> irs;
};

MetricReport evaluate(const RepresentationSet& rep, const MetricConfig& config,
                      std::uint64_t seed);

}  // namespace rmacvae
