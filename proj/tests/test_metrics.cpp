#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "rmacvae/metrics.hpp"
#include "rmacvae/rng.hpp"
#include "rmacvae/synthdata.hpp"

using namespace rmacvae;

namespace {

// Full grid repeated `copies` times.
FactorTable grid(std::vector<std::uint32_t> cards, std::size_t copies = 1) {
  FactorSpec spec;
  spec.cardinalities = std::move(cards);
  const auto one = gen_factor_grid(spec);
  FactorTable out;
  out.cardinalities = one.cardinalities;
  for (std::size_t t = 0; t < copies; ++t) {
    out.values.insert(out.values.end(), one.values.begin(), one.values.end());
  }
  return out;
}

RepresentationSet identity(std::vector<std::uint32_t> cards, std::size_t noise = 2,
                           std::size_t copies = 1) {
  return gen_identity_codes(grid(std::move(cards), copies), noise, 11);
}

RepresentationSet random_codes(std::vector<std::uint32_t> cards, std::size_t dims,
                               std::uint64_t seed, std::size_t copies = 1) {
  RepresentationSet rep;
  rep.factors = grid(std::move(cards), copies);
  Rng rng(seed);
  rep.latents.resize(static_cast<Eigen::Index>(rep.factors.num_rows()), static_cast<Eigen::Index>(dims));
  for (Eigen::Index i = 0; i < rep.latents.size(); ++i) rep.latents.data()[i] = rng.normal();
  return rep;
}

RepresentationSet permute_latents(const RepresentationSet& rep, const std::vector<Eigen::Index>& perm) {
  RepresentationSet out = rep;
  for (std::size_t j = 0; j < perm.size(); ++j) {
    out.latents.col(static_cast<Eigen::Index>(j)) = rep.latents.col(perm[j]);
  }
  return out;
}

RepresentationSet shuffle_rows(const RepresentationSet& rep, std::uint64_t seed) {
  std::vector<std::size_t> order(rep.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  return reorder(rep, order);
}

void expect_unit_interval(const MetricReport& r) {
  for (const auto& v : {r.factorvae, r.mig, r.sap, r.dci_disentanglement, r.dci_completeness,
                        r.dci_informativeness, r.irs}) {
    ASSERT_TRUE(v.has_value());
    EXPECT_GE(*v, 0.0);
    EXPECT_LE(*v, 1.0);
  }
}

}  // namespace

TEST(Discretize, EqualFrequencyBins) {
  Matrix x(100, 1);
  for (int i = 0; i < 100; ++i) x(i, 0) = (i * 37) % 100;
  const auto d = discretize(x, 20);
  ASSERT_EQ(d.bins_used[0], 20u);
  std::vector<int> counts(20, 0);
  for (auto c : d.codes[0]) ++counts[static_cast<std::size_t>(c)];
  for (int c : counts) EXPECT_EQ(c, 5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(d.codes[0][static_cast<std::size_t>(i)], static_cast<int>(x(i, 0)) / 5);
}

TEST(Discretize, InvariantToMonotoneTransform) {
  Rng rng(3);
  Matrix x(257, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Matrix y = x;
  y.col(0) = x.col(0).array().exp();
  y.col(1) = 3.0 * x.col(1).array().cube() - 1.0;
  const auto a = discretize(x, 20);
  const auto b = discretize(y, 20);
  EXPECT_EQ(a.codes, b.codes);
}

TEST(Discretize, TiesShareBinAndConstantIsOneBin) {
  Matrix x(10, 2);
  x.col(0).setConstant(4.2);
  x.col(1) << 0, 0, 0, 0, 0, 0, 1, 2, 3, 4;
  const auto d = discretize(x, 5);
  EXPECT_EQ(d.bins_used[0], 1u);
  EXPECT_TRUE(std::all_of(d.codes[0].begin(), d.codes[0].end(), [](int c) { return c == 0; }));
  EXPECT_EQ(d.codes[1][0], d.codes[1][5]);
  EXPECT_EQ(d.bins_used[1], 3u);
  EXPECT_THROW(discretize(x, 1), std::invalid_argument);
}

TEST(MutualInfo, SelfInformationIsEntropy) {
  for (int k : {2, 3, 7}) {
    std::vector<std::int32_t> a;
    for (int i = 0; i < 70 * k; ++i) a.push_back(i % k);
    EXPECT_NEAR(entropy(a), std::log(k), 1e-12);
    EXPECT_NEAR(mutual_info(a, a), std::log(k), 1e-12);
  }
}

TEST(MutualInfo, IndependentAndConstant) {
  std::vector<std::int32_t> a;
  std::vector<std::int32_t> b;
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 4; ++j) {
      a.push_back(i);
      b.push_back(j);
    }
  }
  EXPECT_NEAR(mutual_info(a, b), 0.0, 1e-12);
  const std::vector<std::int32_t> constant(a.size(), 5);
  EXPECT_EQ(mutual_info(constant, a), 0.0);
  EXPECT_EQ(entropy(constant), 0.0);

  Rng rng(9);
  std::vector<std::int32_t> x(20000);
  std::vector<std::int32_t> y(20000);
  for (auto& v : x) v = static_cast<std::int32_t>(rng.uniform_index(5));
  for (auto& v : y) v = static_cast<std::int32_t>(rng.uniform_index(5));
  EXPECT_LT(mutual_info(x, y), 0.01);
}

TEST(Mig, IdentityCodesScoreHigh) {
  const auto r = mig(identity({6, 6, 4}, 2, 40));
  EXPECT_GE(r.score, 0.95);
  for (double p : r.per_factor) EXPECT_GE(p, 0.95);
}

TEST(Mig, RandomCodesScoreLow) {
  EXPECT_LT(mig(random_codes({6, 6, 4}, 5, 4, 40)).score, 0.05);
}

TEST(Mig, DuplicatedLatentGivesZeroGap) {
  auto rep = identity({5, 4}, 0);
  Matrix doubled(rep.latents.rows(), 4);
  doubled << rep.latents, rep.latents;
  rep.latents = doubled;
  EXPECT_NEAR(mig(rep).score, 0.0, 1e-12);
}

TEST(Mig, ConstantFactorRejected) {
  RepresentationSet rep;
  rep.factors.cardinalities = {2, 4};
  rep.latents.resize(8, 2);
  for (int i = 0; i < 8; ++i) {
    rep.factors.values.insert(rep.factors.values.end(), {0, i % 4});
    rep.latents(i, 0) = i;
    rep.latents(i, 1) = -i;
  }
  EXPECT_THROW(mig(rep), MetricError);
}

TEST(Sap, IdentityHighRandomLow) {
  EXPECT_GE(sap(identity({6, 6, 4})), 0.95);
  EXPECT_LT(sap(random_codes({6, 6, 4}, 5, 6, 40)), 0.05);
}

TEST(Sap, AffineInvariantPerLatent) {
  const auto rep = identity({6, 6, 4});
  auto scaled = rep;
  for (Eigen::Index j = 0; j < scaled.latents.cols(); ++j) {
    const double a = (j % 2 == 0) ? -2.5 : 0.01 * static_cast<double>(j + 1);
    scaled.latents.col(j) = a * scaled.latents.col(j).array() + 7.0 * static_cast<double>(j);
  }
  EXPECT_NEAR(sap(rep), sap(scaled), 1e-12);
}

TEST(Sap, ConstantLatentScoresZero) {
  auto rep = identity({4, 4}, 0);
  rep.latents.col(1).setConstant(3.0);
  const Matrix m = sap_score_matrix(rep);
  EXPECT_EQ(m(1, 0), 0.0);
  EXPECT_EQ(m(1, 1), 0.0);
}

TEST(FactorVae, IdentityIsPerfect) {
  const auto r = factorvae_score(identity({6, 6, 4}), FactorVaeConfig{}, 1);
  EXPECT_EQ(r.score, 1.0);
  EXPECT_EQ(r.train_accuracy, 1.0);
}

TEST(FactorVae, IndependentCodesNearChance) {
  const auto rep = random_codes({3, 3, 3, 3, 3}, 5, 8, 40);
  const auto r = factorvae_score(rep, FactorVaeConfig{}, 2);
  EXPECT_NEAR(r.score, 0.2, 0.1);
}

TEST(FactorVae, InvariantToLatentRescaling) {
  const auto rep = identity({6, 6, 4});
  auto scaled = rep;
  for (Eigen::Index j = 0; j < scaled.latents.cols(); ++j) {
    scaled.latents.col(j) *= std::pow(10.0, static_cast<double>(j) - 2.0);
  }
  const auto random = random_codes({4, 4, 4}, 4, 10);
  auto random_scaled = random;
  random_scaled.latents.col(0) *= 1000.0;
  random_scaled.latents.col(3) *= 0.001;
  EXPECT_EQ(factorvae_score(rep, {}, 3).score, factorvae_score(scaled, {}, 3).score);
  EXPECT_EQ(factorvae_score(random, {}, 3).score, factorvae_score(random_scaled, {}, 3).score);
}

TEST(FactorVae, ConstantLatentExcluded) {
  auto rep = identity({4, 4}, 1);
  rep.latents.col(2).setConstant(1.0);
  const auto r = factorvae_score(rep, {}, 4);
  EXPECT_EQ(r.excluded_latents, std::vector<std::size_t>{2});
  EXPECT_EQ(r.score, 1.0);
}

TEST(Dci, ScoresFromImportanceMatrix) {
  Matrix diag = Matrix::Identity(3, 3);
  EXPECT_NEAR(dci_scores(diag).disentanglement, 1.0, 1e-12);
  EXPECT_NEAR(dci_scores(diag).completeness, 1.0, 1e-12);

  Matrix one_latent = Matrix::Zero(3, 3);
  one_latent.row(0).setConstant(1.0);
  EXPECT_NEAR(dci_scores(one_latent).disentanglement, 0.0, 1e-12);
  EXPECT_NEAR(dci_scores(one_latent).completeness, 1.0, 1e-12);

  Matrix one_factor = Matrix::Zero(3, 3);
  one_factor.col(1).setConstant(2.0);
  EXPECT_NEAR(dci_scores(one_factor).completeness, 0.0, 1e-12);
  EXPECT_NEAR(dci_scores(one_factor).disentanglement, 1.0, 1e-12);

  EXPECT_EQ(dci_scores(Matrix::Zero(2, 2)).disentanglement, 0.0);
  Matrix negative = Matrix::Identity(2, 2);
  negative(0, 1) = -1.0;
  EXPECT_THROW(dci_scores(negative), MetricError);
}

TEST(Dci, IdentityCodesScoreHigh) {
  const auto r = dci(identity({6, 6, 4}), DciConfig{}, 1);
  EXPECT_GE(r.disentanglement, 0.95);
  EXPECT_GE(r.completeness, 0.95);
  EXPECT_GE(r.informativeness, 0.95);
}

TEST(Dci, RandomCodesNearChanceInformativeness) {
  const auto rep = random_codes({4, 4}, 4, 12, 40);
  const auto r = dci(rep, DciConfig{}, 1);
  EXPECT_LT(r.informativeness, 0.45);
}

TEST(Dci, SoftmaxSeparatesSeparableClasses) {
  Matrix x(60, 2);
  std::vector<std::int32_t> y(60);
  for (int i = 0; i < 60; ++i) {
    y[static_cast<std::size_t>(i)] = i % 3;
    x(i, 0) = (i % 3) * 2.0 + 0.01 * (i % 7);
    x(i, 1) = 0.1 * ((i * 13) % 5);
  }
  const auto model = fit_l1_softmax(x, y, 3, 0.0, 2000);
  EXPECT_EQ(model.predict(x), y);
}

TEST(Irs, IdentityIsOne) {
  EXPECT_NEAR(irs(identity({6, 6, 4})).score, 1.0, 1e-12);
}

TEST(Irs, MixedLatentsAreNotRobust) {
  auto rep = identity({5, 5}, 0);
  Matrix mixed(rep.latents.rows(), 1);
  mixed.col(0) = rep.latents.col(0) + rep.latents.col(1);
  rep.latents = mixed;
  EXPECT_LT(irs(rep).score, 1.0);
}

TEST(Irs, ConstantLatentGuard) {
  auto rep = identity({3, 3}, 0);
  rep.latents.setConstant(2.0);
  EXPECT_EQ(irs(rep).score, 0.0);
  IrsConfig unguarded;
  unguarded.zero_deviation_guard = false;
  EXPECT_EQ(irs(rep, unguarded).score, 1.0);
}

TEST(Irs, QuantileValidated) {
  IrsConfig bad;
  bad.diff_quantile = 0.0;
  EXPECT_THROW(irs(identity({2, 2}), bad), std::invalid_argument);
}

TEST(Evaluate, OutputsInUnitIntervalAndSelectable) {
  expect_unit_interval(evaluate(identity({6, 6, 4}), MetricConfig{}, 1));
  expect_unit_interval(evaluate(random_codes({6, 6, 4}, 5, 13, 10), MetricConfig{}, 1));

  MetricConfig only;
  only.enabled = {"mig", "irs"};
  const auto r = evaluate(identity({4, 4}, 2, 10), only, 1);
  EXPECT_TRUE(r.mig && r.irs);
  EXPECT_FALSE(r.factorvae || r.sap || r.dci_disentanglement);
}

TEST(Evaluate, InvariantToLatentAndSamplePermutation) {
  auto rep = random_codes({4, 3, 3}, 3, 21, 10);
  // Add some structure so scores are not all near zero.
  for (Eigen::Index i = 0; i < rep.latents.rows(); ++i) {
    rep.latents(i, 0) += rep.factors.at(static_cast<std::size_t>(i), 0);
    rep.latents(i, 2) += 0.5 * rep.factors.at(static_cast<std::size_t>(i), 2);
  }
  const auto base = evaluate(rep, MetricConfig{}, 5);
  const auto latent_perm = evaluate(permute_latents(rep, {2, 0, 1}), MetricConfig{}, 5);
  const auto row_perm = evaluate(shuffle_rows(rep, 77), MetricConfig{}, 5);
  for (const auto* other : {&latent_perm, &row_perm}) {
    EXPECT_NEAR(*base.factorvae, *other->factorvae, 1e-12);
    EXPECT_NEAR(*base.mig, *other->mig, 1e-12);
    EXPECT_NEAR(*base.sap, *other->sap, 1e-12);
    EXPECT_NEAR(*base.dci_disentanglement, *other->dci_disentanglement, 1e-9);
    EXPECT_NEAR(*base.dci_completeness, *other->dci_completeness, 1e-9);
    EXPECT_NEAR(*base.dci_informativeness, *other->dci_informativeness, 1e-12);
    EXPECT_NEAR(*base.irs, *other->irs, 1e-12);
  }
}

TEST(Evaluate, DeterministicForSeed) {
  const auto rep = random_codes({4, 4}, 3, 30, 10);
  const auto a = evaluate(rep, MetricConfig{}, 9);
  const auto b = evaluate(rep, MetricConfig{}, 9);
  EXPECT_EQ(a.factorvae, b.factorvae);
  EXPECT_EQ(a.dci_informativeness, b.dci_informativeness);
}

TEST(Representation, ValidationCatchesMismatch) {
  auto rep = identity({3, 3}, 0);
  rep.latents.conservativeResize(rep.latents.rows() - 1, Eigen::NoChange);
  EXPECT_ANY_THROW(mig(rep));
}
