#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "rmacvae/aggregation.hpp"
#include "rmacvae/rng.hpp"

using namespace rmacvae;

namespace {

// Every (row, col) origin whose kernel x kernel window fits, found by testing
// all positions rather than by the output-size formula.
std::vector<WindowOrigin> enumerate_windows(std::size_t h, std::size_t w, std::size_t k,
                                            std::size_t s) {
  std::vector<WindowOrigin> out;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (r % s == 0 && c % s == 0 && r + k <= h && c + k <= w) out.push_back({r, c});
    }
  }
  return out;
}

std::vector<float> random_map(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed,
                              double zero_fraction = 0.3) {
  Rng rng(seed);
  std::vector<float> map(c * h * w);
  for (auto& v : map) v = rng.uniform() < zero_fraction ? 0.0f : static_cast<float>(rng.uniform(0, 4));
  return map;
}

double window_max(const std::vector<float>& map, std::size_t h, std::size_t w, std::size_t ch,
                  WindowOrigin o, std::size_t k) {
  double m = -INFINITY;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      m = std::max(m, static_cast<double>(map[(ch * h + o.row + i) * w + o.col + j]));
    }
  }
  return m;
}

// Independent RMAC: enumerate windows, max, normalize, sum, normalize.
std::vector<double> oracle_rmac(const std::vector<float>& map, std::size_t c, std::size_t h,
                                std::size_t w) {
  std::vector<double> sum(c, 0.0);
  for (const auto& spec : default_regions()) {
    for (const auto o : enumerate_windows(h, w, spec.kernel, spec.stride)) {
      std::vector<double> v(c);
      double sq = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        v[ch] = window_max(map, h, w, ch, o, spec.kernel);
        sq += v[ch] * v[ch];
      }
      if (sq == 0.0) continue;
      for (std::size_t ch = 0; ch < c; ++ch) sum[ch] += v[ch] / std::sqrt(sq);
    }
  }
  double sq = 0.0;
  for (double v : sum) sq += v * v;
  for (double& v : sum) v /= std::sqrt(sq);
  return sum;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

DfmDataset maps_dataset(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                        std::uint64_t seed) {
  DfmDataset ds;
  ds.n = static_cast<std::uint32_t>(n);
  ds.c = static_cast<std::uint32_t>(c);
  ds.h = static_cast<std::uint32_t>(h);
  ds.w = static_cast<std::uint32_t>(w);
  for (std::size_t i = 0; i < n; ++i) {
    const auto m = random_map(c, h, w, seed + i);
    ds.data.insert(ds.data.end(), m.begin(), m.end());
  }
  return ds;
}

}  // namespace

TEST(RegionGrid, KernelThreeStrideTwoOnSevenBySeven) {
  const auto grid = region_grid(7, 7, 3, 2);
  EXPECT_EQ(grid.size(), 9u);
  EXPECT_EQ(grid, enumerate_windows(7, 7, 3, 2));
}

TEST(RegionGrid, WholeMapWindow) {
  const auto grid = region_grid(7, 7, 7, 1);
  ASSERT_EQ(grid.size(), 1u);
  EXPECT_EQ(grid[0], (WindowOrigin{0, 0}));
}

TEST(RegionGrid, DefaultConfigGivesSixtyThree) {
  std::size_t enumerated = 0;
  for (const auto& spec : default_regions()) {
    enumerated += enumerate_windows(7, 7, spec.kernel, spec.stride).size();
  }
  EXPECT_EQ(enumerated, 63u);
  EXPECT_EQ(region_count(default_regions(), 7, 7), 63u);
}

TEST(RegionGrid, MatchesEnumerationOnManyShapes) {
  for (std::size_t h = 1; h <= 9; ++h) {
    for (std::size_t w = 1; w <= 9; ++w) {
      for (std::size_t k = 1; k <= std::min(h, w); ++k) {
        for (std::size_t s = 1; s <= 3; ++s) {
          EXPECT_EQ(region_grid(h, w, k, s), enumerate_windows(h, w, k, s));
        }
      }
    }
  }
}

TEST(RegionGrid, RejectsBadKernel) {
  EXPECT_THROW(region_grid(7, 7, 8, 1), std::invalid_argument);
  EXPECT_THROW(region_grid(7, 7, 0, 1), std::invalid_argument);
  EXPECT_THROW(region_grid(7, 7, 3, 0), std::invalid_argument);
}

TEST(MaxPool, TwoByTwo) {
  const std::vector<float> map = {1, 3, 2, 0};
  const auto v = max_pool_region(MapView{map, 1, 2, 2}, {0, 0}, 2);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], 3.0);
}

TEST(MaxPool, ConstantMap) {
  const std::vector<float> map(3 * 5 * 5, 2.5f);
  for (const auto o : region_grid(5, 5, 3, 1)) {
    for (double v : max_pool_region(MapView{map, 3, 5, 5}, o, 3)) EXPECT_EQ(v, 2.5);
  }
}

TEST(MaxPool, RandomMapAllWindowsMatchNestedLoops) {
  const auto map = random_map(512, 7, 7, 5);
  const MapView view{map, 512, 7, 7};
  for (const auto& spec : default_regions()) {
    for (const auto o : region_grid(7, 7, spec.kernel, spec.stride)) {
      const auto got = max_pool_region(view, o, spec.kernel);
      for (std::size_t ch = 0; ch < 512; ++ch) {
        ASSERT_EQ(got[ch], window_max(map, 7, 7, ch, o, spec.kernel));
      }
    }
  }
}

TEST(L2Normalize, Examples) {
  const std::vector<double> v = {3, 4};
  const auto n = l2_normalize(v);
  EXPECT_DOUBLE_EQ(n[0], 0.6);
  EXPECT_DOUBLE_EQ(n[1], 0.8);
  const std::vector<double> unit = {0.6, 0.8};
  EXPECT_EQ(l2_normalize(unit), unit);
  const std::vector<double> zero = {0, 0};
  EXPECT_THROW(l2_normalize(zero), ZeroNormError);
}

TEST(Rmac, ConstantMapGivesNormalizedChannelVector) {
  const std::vector<double> channel = {1.0, 2.0, 0.5, 3.0};
  std::vector<float> map;
  for (double v : channel) map.insert(map.end(), 49, static_cast<float>(v));
  const auto got = rmac(MapView{map, 4, 7, 7}, {});
  const auto want = l2_normalize(channel);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(got[i], want[i], 1e-15);
}

TEST(Rmac, MatchesOracleOnRandomMaps) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto map = random_map(512, 7, 7, 100 + seed);
    const auto got = rmac(MapView{map, 512, 7, 7}, {});
    const auto want = oracle_rmac(map, 512, 7, 7);
    for (std::size_t i = 0; i < 512; ++i) ASSERT_NEAR(got[i], want[i], 1e-10);
    EXPECT_NEAR(norm(got), 1.0, 1e-9);
  }
}

TEST(Rmac, ZeroRegionsSkippedAndAllZeroRejected) {
  // Only the bottom-right corner is non-zero; windows that miss it are skipped.
  std::vector<float> map(2 * 7 * 7, 0.0f);
  map[48] = 1.0f;
  map[49 + 48] = 2.0f;
  const auto got = rmac(MapView{map, 2, 7, 7}, {});
  EXPECT_NEAR(got[0], 1.0 / std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(got[1], 2.0 / std::sqrt(5.0), 1e-12);

  const std::vector<float> zeros(2 * 7 * 7, 0.0f);
  EXPECT_THROW(rmac(MapView{zeros, 2, 7, 7}, {}), ZeroNormError);
}

TEST(Rmac, ScaleInvariant) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    auto map = random_map(16, 7, 7, 200 + trial);
    const auto base = rmac(MapView{map, 16, 7, 7}, {});
    const float s = static_cast<float>(std::ldexp(1.0, static_cast<int>(rng.uniform_index(10)) - 5));
    for (auto& v : map) v *= s;
    const auto scaled = rmac(MapView{map, 16, 7, 7}, {});
    for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(scaled[i], base[i], 1e-12);
  }
}

TEST(Rmac, ChannelPermutationEquivariant) {
  const std::size_t c = 12;
  const auto map = random_map(c, 7, 7, 300);
  const auto perm = random_permutation(c, 1);
  std::vector<float> permuted(map.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::copy_n(map.begin() + static_cast<long>(perm[ch] * 49), 49,
                permuted.begin() + static_cast<long>(ch * 49));
  }
  const auto base = rmac(MapView{map, c, 7, 7}, {});
  const auto got = rmac(MapView{permuted, c, 7, 7}, {});
  for (std::size_t ch = 0; ch < c; ++ch) EXPECT_NEAR(got[ch], base[perm[ch]], 1e-12);
}

TEST(GlobalPool, AvgAndMaxPreNormValues) {
  // Channel 1 is a constant 1 reference, so the normalized ratio recovers
  // channel 0's pre-norm value.
  const std::vector<float> map = {1, 3, 2, 0, 1, 1, 1, 1};
  const MapView view{map, 2, 2, 2};
  const auto avg = global_pool(view, PoolMode::Avg);
  const auto max = global_pool(view, PoolMode::Max);
  EXPECT_DOUBLE_EQ(avg[0] / avg[1], 1.5);
  EXPECT_DOUBLE_EQ(max[0] / max[1], 3.0);
  EXPECT_NEAR(norm(avg), 1.0, 1e-15);
  EXPECT_NEAR(norm(max), 1.0, 1e-15);
}

TEST(GlobalPool, ConstantMapMatchesRmac) {
  std::vector<float> map;
  for (float v : {0.5f, 2.0f, 1.0f}) map.insert(map.end(), 49, v);
  const MapView view{map, 3, 7, 7};
  const auto r = rmac(view, {});
  for (auto mode : {PoolMode::Avg, PoolMode::Max}) {
    const auto g = global_pool(view, mode);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], r[i], 1e-15);
  }
}

TEST(Whitening, DiagonalGaussianBecomesIdentity) {
  const std::size_t n = 10000;
  const std::size_t d = 6;
  Rng rng(21);
  Eigen::MatrixXd sample(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      sample(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          3.0 + static_cast<double>(j) + 0.2 * static_cast<double>(j + 1) * rng.normal();
    }
  }
  const auto wt = fit_whitening(sample);
  EXPECT_EQ(wt.output_dim(), d);
  EXPECT_EQ(wt.dropped_components, 0u);
  Eigen::MatrixXd out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd row = sample.row(static_cast<Eigen::Index>(i));
    const auto y = wt.apply({row.data(), d});
    for (std::size_t j = 0; j < d; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = y[j];
  }
  const Eigen::MatrixXd centered = out.rowwise() - out.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    for (Eigen::Index j = 0; j < cov.cols(); ++j) {
      EXPECT_NEAR(cov(i, j), i == j ? 1.0 : 0.0, 0.05);
    }
  }
}

TEST(Whitening, WhiteDataGivesOrthonormalProjection) {
  Rng rng(22);
  Eigen::MatrixXd sample(20000, 4);
  for (Eigen::Index i = 0; i < sample.size(); ++i) sample.data()[i] = rng.normal();
  const auto wt = fit_whitening(sample);
  const Eigen::MatrixXd gram = wt.projection * wt.projection.transpose();
  EXPECT_TRUE(gram.isApprox(Eigen::MatrixXd::Identity(4, 4), 0.05));
}

TEST(Whitening, RankDeficientDropsComponents) {
  Rng rng(23);
  Eigen::MatrixXd sample(500, 3);
  for (Eigen::Index i = 0; i < 500; ++i) {
    const double a = rng.normal();
    const double b = rng.normal();
    sample.row(i) << a, b, a + b;
  }
  const auto wt = fit_whitening(sample);
  EXPECT_EQ(wt.output_dim(), 2u);
  EXPECT_EQ(wt.dropped_components, 1u);
}

TEST(Whitening, ConstantSampleThrows) {
  const Eigen::MatrixXd sample = Eigen::MatrixXd::Constant(100, 4, 0.7);
  EXPECT_THROW(fit_whitening(sample), WhiteningError);
}

TEST(Whitening, TooFewSamplesRejected) {
  const Eigen::MatrixXd sample = Eigen::MatrixXd::Random(3, 4);
  EXPECT_THROW(fit_whitening(sample), std::invalid_argument);
}

TEST(AggregateDataset, ShapeContractAndFactorsPassThrough) {
  auto maps = maps_dataset(10, 512, 7, 7, 40);
  maps.factors = FactorTable{{10}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}};
  for (auto method : {AggregationMethod::Rmac, AggregationMethod::Avg, AggregationMethod::Max}) {
    const auto out = aggregate_dataset(maps, method);
    EXPECT_EQ(out.n, 10u);
    EXPECT_EQ(out.c, 512u);
    EXPECT_EQ(out.h, 1u);
    EXPECT_EQ(out.w, 1u);
    EXPECT_EQ(out.factors, maps.factors);
  }
}

TEST(AggregateDataset, ConstantMapsGiveNormalizedChannelVectors) {
  DfmDataset maps;
  maps.n = 2;
  maps.c = 3;
  maps.h = 7;
  maps.w = 7;
  const double rows[2][3] = {{1, 2, 2}, {0, 3, 4}};
  for (const auto& row : rows) {
    for (double v : row) maps.data.insert(maps.data.end(), 49, static_cast<float>(v));
  }
  const auto out = aggregate_dataset(maps, AggregationMethod::Rmac);
  const float want[2][3] = {{1.0f / 3, 2.0f / 3, 2.0f / 3}, {0.0f, 0.6f, 0.8f}};
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_FLOAT_EQ(out.record(i)[j], want[i][j]);
  }
}

TEST(AggregateDataset, BatchEqualsPerRecordBitExact) {
  const auto maps = maps_dataset(6, 32, 7, 7, 50);
  AggregationConfig config;
  config.whitening_sample = 300;
  config.seed = 3;
  for (auto method : {AggregationMethod::Rmac, AggregationMethod::RmacWhitened,
                      AggregationMethod::Avg, AggregationMethod::Max}) {
    AggregationConfig cfg = config;
    if (method == AggregationMethod::RmacWhitened) {
      cfg.rmac.whitening = fit_whitening(
          sample_region_vectors(maps, cfg.rmac.regions, cfg.whitening_sample, cfg.seed));
    }
    const auto batch = aggregate_dataset(maps, method, cfg);
    for (std::size_t i = 0; i < maps.n; ++i) {
      const std::size_t idx[] = {i};
      const auto single = aggregate_dataset(gather_records(maps, idx), method, cfg);
      ASSERT_TRUE(std::equal(single.data.begin(), single.data.end(), batch.record(i).begin()))
          << to_string(method) << " record " << i;
    }
  }
}

TEST(AggregateDataset, WhitenedOutputsAreUnitNorm) {
  const auto maps = maps_dataset(20, 16, 7, 7, 60);
  AggregationConfig config;
  config.whitening_sample = 500;
  const auto out = aggregate_dataset(maps, AggregationMethod::RmacWhitened, config);
  EXPECT_EQ(out.n, 20u);
  for (std::size_t i = 0; i < out.n; ++i) {
    double sq = 0.0;
    for (float v : out.record(i)) sq += static_cast<double>(v) * v;
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-6);
  }
}

TEST(AggregateDataset, AllZeroMapReportsRecord) {
  auto maps = maps_dataset(3, 4, 7, 7, 70);
  std::fill_n(maps.data.begin() + 4 * 49, 4 * 49, 0.0f);
  try {
    aggregate_dataset(maps, AggregationMethod::Rmac);
    FAIL() << "expected AggregationError";
  } catch (const AggregationError& e) {
    EXPECT_EQ(e.record(), 1u);
  }
}

TEST(AggregationMethodNames, RoundTrip) {
  for (auto m : {AggregationMethod::Rmac, AggregationMethod::RmacWhitened, AggregationMethod::Avg,
                 AggregationMethod::Max}) {
    EXPECT_EQ(parse_aggregation_method(to_string(m)), m);
  }
  EXPECT_THROW(parse_aggregation_method("mean"), std::invalid_argument);
}
