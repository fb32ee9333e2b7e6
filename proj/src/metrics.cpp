#include "rmacvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "rmacvae/rng.hpp"
#include "rmacvae/training.hpp"

namespace rmacvae {

void RepresentationSet::validate() const {
  if (static_cast<std::size_t>(latents.rows()) != factors.num_rows()) {
    throw MetricError("representation: " + std::to_string(latents.rows()) + " latent rows vs " +
                      std::to_string(factors.num_rows()) + " factor rows");
  }
  if (!latents.allFinite()) throw MetricError("representation: non-finite latent value");
  factors.validate();
}

RepresentationSet represent(const VaeParams& params, const VaeConfig& config,
                            const DfmDataset& dataset) {
  if (!dataset.factors) throw MetricError("represent: dataset has no factor labels");
  if (dataset.h != 1 || dataset.w != 1 || dataset.c != config.input_dim) {
    throw MetricError("represent: dataset records do not match model input dim " +
                      std::to_string(config.input_dim));
  }
  constexpr std::size_t kChunk = 4096;
  RepresentationSet rep;
  rep.latents.resize(dataset.n, static_cast<Eigen::Index>(config.latent_dim));
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < dataset.n; start += kChunk) {
    const std::size_t stop = std::min<std::size_t>(dataset.n, start + kChunk);
    rows.resize(stop - start);
    std::iota(rows.begin(), rows.end(), start);
    rep.latents.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(rows.size())) =
        encode_means(params, gather_rows(dataset, rows), config);
  }
  rep.factors = *dataset.factors;
  return rep;
}

std::vector<std::size_t> canonical_order(const RepresentationSet& rep) {
  const std::size_t n = rep.size();
  const auto c = rep.latents.cols();
  const std::size_t f = rep.factors.num_factors();
  Matrix sorted_rows(static_cast<Eigen::Index>(n), c);
  for (std::size_t i = 0; i < n; ++i) {
    Vector row = rep.latents.row(static_cast<Eigen::Index>(i)).transpose();
    std::sort(row.data(), row.data() + row.size());
    sorted_rows.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) {
    for (std::size_t k = 0; k < f; ++k) {
      const auto fa = rep.factors.at(a, k);
      const auto fb = rep.factors.at(b, k);
      if (fa != fb) return fa < fb;
    }
    for (Eigen::Index j = 0; j < c; ++j) {
      const double va = sorted_rows(static_cast<Eigen::Index>(a), j);
      const double vb = sorted_rows(static_cast<Eigen::Index>(b), j);
      if (va != vb) return va < vb;
    }
    for (Eigen::Index j = 0; j < c; ++j) {
      const double va = rep.latents(static_cast<Eigen::Index>(a), j);
      const double vb = rep.latents(static_cast<Eigen::Index>(b), j);
      if (va != vb) return va < vb;
    }
    return false;
  };
  std::stable_sort(order.begin(), order.end(), less);
  return order;
}

RepresentationSet reorder(const RepresentationSet& rep, std::span<const std::size_t> order) {
  RepresentationSet out;
  out.latents.resize(static_cast<Eigen::Index>(order.size()), rep.latents.cols());
  out.factors.cardinalities = rep.factors.cardinalities;
  out.factors.values.reserve(order.size() * rep.factors.num_factors());
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.latents.row(static_cast<Eigen::Index>(i)) =
        rep.latents.row(static_cast<Eigen::Index>(order[i]));
    const auto row = rep.factors.row(order[i]);
    out.factors.values.insert(out.factors.values.end(), row.begin(), row.end());
  }
  return out;
}

// ---------------------------------------------------------------- MIG

Discretized discretize(const Matrix& latents, std::size_t bins) {
  if (bins < 2) throw std::invalid_argument("discretize: need at least 2 bins");
  const std::size_t n = static_cast<std::size_t>(latents.rows());
  Discretized out;
  std::vector<std::size_t> order(n);
  for (Eigen::Index j = 0; j < latents.cols(); ++j) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return latents(static_cast<Eigen::Index>(a), j) < latents(static_cast<Eigen::Index>(b), j);
    });
    std::vector<std::int32_t> codes(n);
    std::int32_t code = -1;
    std::size_t last_bin = bins;  // sentinel
    std::size_t r = 0;
    while (r < n) {
      // Tie group [r, e) shares the bin of its first rank.
      std::size_t e = r + 1;
      const double value = latents(static_cast<Eigen::Index>(order[r]), j);
      while (e < n && latents(static_cast<Eigen::Index>(order[e]), j) == value) ++e;
      const std::size_t bin = r * bins / n;
      if (bin != last_bin) {
        ++code;
        last_bin = bin;
      }
      for (std::size_t t = r; t < e; ++t) codes[order[t]] = code;
      r = e;
    }
    out.bins_used.push_back(static_cast<std::size_t>(code + 1));
    out.codes.push_back(std::move(codes));
  }
  return out;
}

namespace {

std::vector<std::size_t> label_counts(std::span<const std::int32_t> labels) {
  std::vector<std::int32_t> sorted(labels.begin(), labels.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t e = i + 1;
    while (e < sorted.size() && sorted[e] == sorted[i]) ++e;
    counts.push_back(e - i);
    i = e;
  }
  return counts;
}

}  // namespace

double entropy(std::span<const std::int32_t> labels) {
  if (labels.empty()) throw MetricError("entropy: empty input");
  const double n = static_cast<double>(labels.size());
  double h = 0.0;
  for (const std::size_t c : label_counts(labels)) {
    const double count = static_cast<double>(c);
    h += (count / n) * std::log((count * n) / (count * count));
  }
  return h;
}

double mutual_info(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
  if (a.size() != b.size()) throw std::invalid_argument("mutual_info: length mismatch");
  if (a.empty()) throw MetricError("mutual_info: empty input");
  const std::size_t n = a.size();
  std::unordered_map<std::int32_t, std::size_t> count_a;
  std::unordered_map<std::int32_t, std::size_t> count_b;
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs(n);
  for (std::size_t i = 0; i < n; ++i) {
    ++count_a[a[i]];
    ++count_b[b[i]];
    pairs[i] = {a[i], b[i]};
  }
  std::sort(pairs.begin(), pairs.end());
  const double total = static_cast<double>(n);
  double mi = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t e = i + 1;
    while (e < n && pairs[e] == pairs[i]) ++e;
    const double joint = static_cast<double>(e - i);
    const double pa = static_cast<double>(count_a[pairs[i].first]);
    const double pb = static_cast<double>(count_b[pairs[i].second]);
    mi += (joint / total) * std::log((joint * total) / (pa * pb));
    i = e;
  }
  return std::max(0.0, mi);
}

MigResult mig(const RepresentationSet& rep, std::size_t bins) {
  rep.validate();
  if (rep.size() == 0) throw MetricError("mig: empty representation");
  const std::size_t f = rep.factors.num_factors();
  const auto disc = discretize(rep.latents, bins);
  MigResult result;
  result.mutual_info.resize(rep.latents.cols(), static_cast<Eigen::Index>(f));
  for (std::size_t k = 0; k < f; ++k) {
    const auto factor = rep.factors.column(k);
    const double h = entropy(factor);
    if (!(h > 0.0)) {
      throw MetricError("mig: factor " + std::to_string(k) + " has zero entropy in the sample");
    }
    result.factor_entropy.push_back(h);
    std::vector<double> column;
    for (std::size_t j = 0; j < disc.codes.size(); ++j) {
      const double mi = mutual_info(disc.codes[j], factor);
      result.mutual_info(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = mi;
      column.push_back(mi);
    }
    std::sort(column.begin(), column.end(), std::greater<>());
    const double second = column.size() > 1 ? column[1] : 0.0;
    result.per_factor.push_back((column.front() - second) / h);
  }
  result.score = std::accumulate(result.per_factor.begin(), result.per_factor.end(), 0.0) /
                 static_cast<double>(f);
  return result;
}

// ---------------------------------------------------------------- SAP

Matrix sap_score_matrix(const RepresentationSet& rep) {
  rep.validate();
  const std::size_t n = rep.size();
  if (n < 10) throw MetricError("sap: need at least 10 samples");
  const std::size_t f = rep.factors.num_factors();
  const auto c = rep.latents.cols();
  Matrix centered = rep.latents.rowwise() - rep.latents.colwise().mean();
  const Vector latent_ss = centered.colwise().squaredNorm().transpose();
  Matrix scores(c, static_cast<Eigen::Index>(f));
  for (std::size_t k = 0; k < f; ++k) {
    Vector v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = rep.factors.at(i, k);
    v.array() -= v.mean();
    const double factor_ss = v.squaredNorm();
    if (!(factor_ss > 0.0)) throw MetricError("sap: factor " + std::to_string(k) + " is constant");
    for (Eigen::Index j = 0; j < c; ++j) {
      double r2 = 0.0;
      if (latent_ss(j) > 0.0) {
        const double cov = centered.col(j).dot(v);
        r2 = std::clamp((cov * cov) / (latent_ss(j) * factor_ss), 0.0, 1.0);
      }
      scores(j, static_cast<Eigen::Index>(k)) = r2;
    }
  }
  return scores;
}

double sap(const RepresentationSet& rep) {
  const Matrix scores = sap_score_matrix(rep);
  double total = 0.0;
  for (Eigen::Index k = 0; k < scores.cols(); ++k) {
    std::vector<double> col(scores.col(k).data(), scores.col(k).data() + scores.rows());
    std::sort(col.begin(), col.end(), std::greater<>());
    total += col.front() - (col.size() > 1 ? col[1] : 0.0);
  }
  return total / static_cast<double>(scores.cols());
}

// ---------------------------------------------------------- FactorVAE

namespace {

template <typename Values>
std::size_t argmin_lowest(const Values& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[best]) best = i;
  }
  return best;
}

}  // namespace

FactorVaeResult factorvae_score(const RepresentationFn& represent_rows, const FactorTable& pool,
                                const FactorVaeConfig& config, std::uint64_t seed) {
  if (config.train_votes == 0 || config.eval_votes == 0 || config.probe_batch < 2) {
    throw std::invalid_argument("factorvae: votes must be positive and probe batch at least 2");
  }
  const std::size_t n = pool.num_rows();
  const std::size_t f = pool.num_factors();
  if (n == 0 || f == 0) throw MetricError("factorvae: empty factor pool");

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Matrix latents = represent_rows(all);
  const auto c = static_cast<std::size_t>(latents.cols());
  const Vector mean = latents.colwise().mean().transpose();
  const Vector stddev =
      ((latents.rowwise() - mean.transpose()).array().square().colwise().mean().sqrt()).transpose();

  FactorVaeResult result;
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < c; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (stddev(jj) > 1e-12 * std::max(1.0, std::abs(mean(jj)))) {
      active.push_back(j);
    } else {
      result.excluded_latents.push_back(j);
    }
  }
  if (active.empty()) return result;

  // groups[k][v] = pool rows whose factor k equals v.
  std::vector<std::vector<std::vector<std::size_t>>> groups(f);
  for (std::size_t k = 0; k < f; ++k) groups[k].resize(pool.cardinalities[k]);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < f; ++k) groups[k][static_cast<std::size_t>(pool.at(i, k))].push_back(i);
  }

  Rng rng(seed);
  std::vector<std::size_t> probe(config.probe_batch);
  auto vote = [&]() -> std::pair<std::size_t, std::size_t> {
    const auto k = static_cast<std::size_t>(rng.uniform_index(f));
    const auto anchor = static_cast<std::size_t>(rng.uniform_index(n));
    const auto& group = groups[k][static_cast<std::size_t>(pool.at(anchor, k))];
    for (auto& row : probe) row = group[static_cast<std::size_t>(rng.uniform_index(group.size()))];
    const Matrix z = represent_rows(probe);
    std::vector<double> variances;
    for (const std::size_t j : active) {
      const auto jj = static_cast<Eigen::Index>(j);
      const Vector col = z.col(jj) / stddev(jj);
      variances.push_back((col.array() - col.mean()).square().mean());
    }
    return {active[argmin_lowest(variances)], k};
  };

  std::vector<std::vector<std::size_t>> counts(c, std::vector<std::size_t>(f, 0));
  for (std::size_t v = 0; v < config.train_votes; ++v) {
    const auto [latent, factor] = vote();
    ++counts[latent][factor];
  }
  std::vector<std::size_t> classifier(c, 0);
  std::size_t train_correct = 0;
  for (std::size_t j = 0; j < c; ++j) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < f; ++k) {
      if (counts[j][k] > counts[j][best]) best = k;
    }
    classifier[j] = best;
    train_correct += counts[j][best];
  }
  std::size_t eval_correct = 0;
  for (std::size_t v = 0; v < config.eval_votes; ++v) {
    const auto [latent, factor] = vote();
    if (classifier[latent] == factor) ++eval_correct;
  }
  result.train_accuracy =
      static_cast<double>(train_correct) / static_cast<double>(config.train_votes);
  result.score = static_cast<double>(eval_correct) / static_cast<double>(config.eval_votes);
  return result;
}

FactorVaeResult factorvae_score(const RepresentationSet& rep, const FactorVaeConfig& config,
                                std::uint64_t seed) {
  rep.validate();
  const RepresentationSet canonical = reorder(rep, canonical_order(rep));
  RepresentationFn lookup = [&](std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), canonical.latents.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) =
          canonical.latents.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
  };
  return factorvae_score(lookup, canonical.factors, config, seed);
}

// ---------------------------------------------------------------- DCI

namespace {

double entropy_base(const Vector& p, double base_size) {
  if (base_size <= 1.0) return 0.0;
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  }
  return h / std::log(base_size);
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

double largest_eigenvalue(const Matrix& gram) {
  Vector v = Vector::Ones(gram.rows()) / std::sqrt(static_cast<double>(gram.rows()));
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    const Vector w = gram * v;
    const double norm = w.norm();
    if (!(norm > 0.0)) return 0.0;
    lambda = v.dot(w);
    v = w / norm;
  }
  return lambda;
}

}  // namespace

DciScores dci_scores(const Matrix& importance) {
  if ((importance.array() < 0.0).any()) throw MetricError("dci: negative importance");
  DciScores scores;
  const double total = importance.sum();
  if (!(total > 0.0)) return scores;
  const auto latents = static_cast<double>(importance.rows());
  const auto factors = static_cast<double>(importance.cols());
  for (Eigen::Index j = 0; j < importance.rows(); ++j) {
    const double row_sum = importance.row(j).sum();
    if (!(row_sum > 0.0)) continue;
    const Vector p = importance.row(j).transpose() / row_sum;
    scores.disentanglement += (row_sum / total) * (1.0 - entropy_base(p, factors));
  }
  for (Eigen::Index k = 0; k < importance.cols(); ++k) {
    const double col_sum = importance.col(k).sum();
    if (!(col_sum > 0.0)) continue;
    const Vector p = importance.col(k) / col_sum;
    scores.completeness += (col_sum / total) * (1.0 - entropy_base(p, latents));
  }
  return scores;
}

std::vector<std::int32_t> SoftmaxModel::predict(const Matrix& x) const {
  Matrix logits = x * weight.transpose();
  logits.rowwise() += bias.transpose();
  std::vector<std::int32_t> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(best);
  }
  return out;
}

SoftmaxModel fit_l1_softmax(const Matrix& x, std::span<const std::int32_t> labels,
                            std::size_t classes, double l1_penalty, std::size_t iterations) {
  const auto n = x.rows();
  const auto d = x.cols();
  const auto k = static_cast<Eigen::Index>(classes);
  if (static_cast<std::size_t>(n) != labels.size() || n == 0) {
    throw std::invalid_argument("fit_l1_softmax: label count mismatch");
  }
  Matrix onehot = Matrix::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, labels[static_cast<std::size_t>(i)]) = 1.0;

  // Lipschitz bound of the mean cross-entropy gradient, bias column included.
  Matrix augmented(n, d + 1);
  augmented << x, Vector::Ones(n);
  const double lipschitz =
      0.5 * largest_eigenvalue(augmented.transpose() * augmented / static_cast<double>(n));
  const double step = 1.0 / std::max(lipschitz * 1.01, 1e-12);
  const double threshold = step * l1_penalty;

  SoftmaxModel model{Matrix::Zero(k, d), Vector::Zero(k)};
  Matrix w_mom = model.weight;
  Vector b_mom = model.bias;
  double t = 1.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    Matrix logits = x * w_mom.transpose();
    logits.rowwise() += b_mom.transpose();
    const Matrix g = (softmax_rows(logits) - onehot) / static_cast<double>(n);
    const Matrix grad_w = g.transpose() * x;
    const Vector grad_b = g.colwise().sum().transpose();

    Matrix w_next = w_mom - step * grad_w;
    w_next = w_next.array().sign() * (w_next.array().abs() - threshold).max(0.0);
    const Vector b_next = b_mom - step * grad_b;

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double momentum = (t - 1.0) / t_next;
    w_mom = w_next + momentum * (w_next - model.weight);
    b_mom = b_next + momentum * (b_next - model.bias);
    model.weight = std::move(w_next);
    model.bias = b_next;
    t = t_next;
  }
  return model;
}

DciResult dci(const RepresentationSet& rep, const DciConfig& config, std::uint64_t seed) {
  rep.validate();
  const std::size_t n = rep.size();
  if (n < 100) throw MetricError("dci: need at least 100 samples");
  if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0)) {
    throw std::invalid_argument("dci: train_fraction must lie in (0, 1)");
  }
  const RepresentationSet canonical = reorder(rep, canonical_order(rep));
  const auto perm = random_permutation(n, seed);
  const auto n_train = static_cast<std::size_t>(std::floor(config.train_fraction * static_cast<double>(n)));
  const std::span<const std::size_t> train_rows(perm.data(), n_train);
  const std::span<const std::size_t> test_rows(perm.data() + n_train, n - n_train);

  const auto c = canonical.latents.cols();
  auto gather = [&](std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), c);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = canonical.latents.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
  };
  Matrix x_train = gather(train_rows);
  Matrix x_test = gather(test_rows);
  const Eigen::RowVectorXd mean = x_train.colwise().mean();
  Eigen::RowVectorXd scale = (x_train.rowwise() - mean).array().square().colwise().mean().sqrt();
  for (Eigen::Index j = 0; j < c; ++j) scale(j) = scale(j) > 0.0 ? 1.0 / scale(j) : 0.0;
  x_train = ((x_train.rowwise() - mean).array().rowwise() * scale.array()).matrix();
  x_test = ((x_test.rowwise() - mean).array().rowwise() * scale.array()).matrix();

  const std::size_t f = canonical.factors.num_factors();
  DciResult result;
  result.importance = Matrix::Zero(c, static_cast<Eigen::Index>(f));
  for (std::size_t k = 0; k < f; ++k) {
    std::vector<std::int32_t> y_train;
    std::vector<std::int32_t> y_test;
    for (auto r : train_rows) y_train.push_back(canonical.factors.at(r, k));
    for (auto r : test_rows) y_test.push_back(canonical.factors.at(r, k));
    if (std::all_of(y_train.begin(), y_train.end(), [&](auto v) { return v == y_train.front(); })) {
      throw MetricError("dci: factor " + std::to_string(k) + " is constant on the training split");
    }
    const auto model = fit_l1_softmax(x_train, y_train, canonical.factors.cardinalities[k],
                                      config.l1_penalty, config.iterations);
    result.importance.col(static_cast<Eigen::Index>(k)) =
        model.weight.array().abs().colwise().mean().transpose();
    auto accuracy = [&](const Matrix& x, const std::vector<std::int32_t>& y) {
      const auto pred = model.predict(x);
      std::size_t hits = 0;
      for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i] ? 1 : 0;
      return y.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(y.size());
    };
    result.train_accuracy.push_back(accuracy(x_train, y_train));
    result.test_accuracy.push_back(accuracy(x_test, y_test));
  }
  const auto scores = dci_scores(result.importance);
  result.disentanglement = scores.disentanglement;
  result.completeness = scores.completeness;
  result.informativeness =
      std::accumulate(result.test_accuracy.begin(), result.test_accuracy.end(), 0.0) /
      static_cast<double>(f);
  return result;
}

// ---------------------------------------------------------------- IRS

namespace {

// Linear-interpolated quantile (numpy's default), q in [0, 1].
double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace

IrsResult irs(const RepresentationSet& rep, const IrsConfig& config) {
  rep.validate();
  const std::size_t n = rep.size();
  if (n == 0) throw MetricError("irs: empty conditional group (no samples)");
  if (!(config.diff_quantile > 0.0 && config.diff_quantile <= 1.0)) {
    throw std::invalid_argument("irs: diff_quantile must lie in (0, 1]");
  }
  const auto c = rep.latents.cols();
  const std::size_t f = rep.factors.num_factors();
  const Eigen::RowVectorXd mean = rep.latents.colwise().mean();
  const Eigen::RowVectorXd max_dev = (rep.latents.rowwise() - mean).cwiseAbs().colwise().maxCoeff();

  IrsResult result;
  result.robustness = Matrix::Zero(c, static_cast<Eigen::Index>(f));
  for (std::size_t k = 0; k < f; ++k) {
    std::vector<std::vector<std::size_t>> groups(rep.factors.cardinalities[k]);
    for (std::size_t i = 0; i < n; ++i) groups[static_cast<std::size_t>(rep.factors.at(i, k))].push_back(i);
    Vector cumulative = Vector::Zero(c);
    std::size_t populated = 0;
    for (const auto& group : groups) {
      if (group.empty()) continue;
      ++populated;
      for (Eigen::Index j = 0; j < c; ++j) {
        double group_mean = 0.0;
        for (auto i : group) group_mean += rep.latents(static_cast<Eigen::Index>(i), j);
        group_mean /= static_cast<double>(group.size());
        std::vector<double> deviations;
        deviations.reserve(group.size());
        for (auto i : group) {
          deviations.push_back(std::abs(rep.latents(static_cast<Eigen::Index>(i), j) - group_mean));
        }
        cumulative(j) += quantile(std::move(deviations), config.diff_quantile);
      }
    }
    cumulative /= static_cast<double>(populated);
    for (Eigen::Index j = 0; j < c; ++j) {
      double score;
      if (max_dev(j) < config.guard_threshold) {
        score = config.zero_deviation_guard ? 0.0 : 1.0;
      } else {
        score = std::max(0.0, 1.0 - cumulative(j) / max_dev(j));
      }
      result.robustness(j, static_cast<Eigen::Index>(k)) = score;
    }
  }
  for (Eigen::Index j = 0; j < c; ++j) {
    Eigen::Index parent = 0;
    const double best = result.robustness.row(j).maxCoeff(&parent);
    result.per_latent.push_back(best);
    result.parents.push_back(static_cast<std::size_t>(parent));
  }
  for (std::size_t k = 0; k < f; ++k) {
    result.per_factor.push_back(c == 0 ? 0.0 : result.robustness.col(static_cast<Eigen::Index>(k)).maxCoeff());
  }
  result.score = std::accumulate(result.per_factor.begin(), result.per_factor.end(), 0.0) /
                 static_cast<double>(f);
  return result;
}

// -------------------------------------------------------------- report

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"factorvae", "mig", "sap", "dci", "irs"};
  return names;
}

MetricReport evaluate(const RepresentationSet& rep, const MetricConfig& config,
                      std::uint64_t seed) {
  for (const auto& name : config.enabled) {
    if (std::find(metric_names().begin(), metric_names().end(), name) == metric_names().end()) {
      throw std::invalid_argument("unknown metric '" + name + "'");
    }
  }
  MetricReport report;
  auto enabled = [&](const char* name) { return config.enabled.count(name) > 0; };
  if (enabled("factorvae")) {
    report.factorvae =
        factorvae_score(rep, config.factorvae, derive_seed(seed, "factorvae")).score;
  }
  if (enabled("mig")) report.mig = mig(rep, config.mig_bins).score;
  if (enabled("sap")) report.sap = sap(rep);
  if (enabled("dci")) {
    const auto result = dci(rep, config.dci, derive_seed(seed, "dci"));
    report.dci_disentanglement = result.disentanglement;
    report.dci_completeness = result.completeness;
    report.dci_informativeness = result.informativeness;
  }
  if (enabled("irs")) report.irs = irs(rep, config.irs).score;
  return report;
}

}  // namespace rmacvae
