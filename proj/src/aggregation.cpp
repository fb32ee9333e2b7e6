#include "rmacvae/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rmacvae/rng.hpp"

namespace rmacvae {

MapView map_view(const DfmDataset& maps, std::size_t record) {
  return MapView{maps.record(record), maps.c, maps.h, maps.w};
}

std::vector<RegionSpec> default_regions() {
  return {{1, 1}, {3, 2}, {5, 2}, {7, 1}};
}

std::vector<double> WhiteningTransform::apply(std::span<const double> v) const {
  if (static_cast<Eigen::Index>(v.size()) != mean.size()) {
    throw std::invalid_argument("whitening: input dim " + std::to_string(v.size()) +
                                " != fitted dim " + std::to_string(mean.size()));
  }
  const Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
  const Eigen::VectorXd y = projection * (x - mean);
  return {y.data(), y.data() + y.size()};
}

std::vector<WindowOrigin> region_grid(std::size_t height, std::size_t width, std::size_t kernel,
                                      std::size_t stride) {
  if (kernel == 0 || stride == 0) {
    throw std::invalid_argument("region_grid: kernel and stride must be positive");
  }
  if (kernel > height || kernel > width) {
    throw std::invalid_argument("region_grid: kernel " + std::to_string(kernel) +
                                " larger than map " + std::to_string(height) + "x" +
                                std::to_string(width));
  }
  const std::size_t rows = (height - kernel) / stride + 1;
  const std::size_t cols = (width - kernel) / stride + 1;
  std::vector<WindowOrigin> origins;
  origins.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) origins.push_back({r * stride, c * stride});
  }
  return origins;
}

std::size_t region_count(const std::vector<RegionSpec>& regions, std::size_t height,
                         std::size_t width) {
  std::size_t total = 0;
  for (const auto& spec : regions) {
    total += region_grid(height, width, spec.kernel, spec.stride).size();
  }
  return total;
}

std::vector<double> max_pool_region(const MapView& map, WindowOrigin origin, std::size_t kernel) {
  if (kernel == 0 || origin.row + kernel > map.height || origin.col + kernel > map.width) {
    throw std::out_of_range("max_pool_region: window outside map");
  }
  std::vector<double> out(map.channels, -std::numeric_limits<double>::infinity());
  for (std::size_t ch = 0; ch < map.channels; ++ch) {
    double best = out[ch];
    for (std::size_t r = origin.row; r < origin.row + kernel; ++r) {
      for (std::size_t c = origin.col; c < origin.col + kernel; ++c) {
        best = std::max(best, static_cast<double>(map.at(ch, r, c)));
      }
    }
    out[ch] = best;
  }
  return out;
}

namespace {

double norm2(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

}  // namespace

std::vector<double> l2_normalize(std::span<const double> v) {
  const double norm = norm2(v);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw ZeroNormError("l2_normalize: vector has zero (or non-finite) norm");
  }
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= norm;
  return out;
}

std::vector<double> rmac(const MapView& map, const RmacConfig& config) {
  if (config.regions.empty()) throw std::invalid_argument("rmac: no regions configured");
  const std::size_t dim =
      config.whitening ? config.whitening->output_dim() : map.channels;
  std::vector<double> sum(dim, 0.0);
  std::size_t contributing = 0;
  for (const auto& spec : config.regions) {
    for (const auto origin : region_grid(map.height, map.width, spec.kernel, spec.stride)) {
      auto pooled = max_pool_region(map, origin, spec.kernel);
      if (!(norm2(pooled) > 0.0)) continue;
      auto region = l2_normalize(pooled);
      if (config.whitening) {
        auto whitened = config.whitening->apply(region);
        if (!(norm2(whitened) > 0.0)) continue;
        region = l2_normalize(whitened);
      }
      for (std::size_t i = 0; i < dim; ++i) sum[i] += region[i];
      ++contributing;
    }
  }
  if (contributing == 0) throw ZeroNormError("rmac: every region vector is zero");
  return l2_normalize(sum);
}

std::vector<double> global_pool(const MapView& map, PoolMode mode) {
  const std::size_t positions = map.height * map.width;
  if (positions == 0 || map.channels == 0) throw std::invalid_argument("global_pool: empty map");
  std::vector<double> pooled(map.channels);
  for (std::size_t ch = 0; ch < map.channels; ++ch) {
    const auto plane = map.data.subspan(ch * positions, positions);
    if (mode == PoolMode::Avg) {
      double s = 0.0;
      for (float v : plane) s += v;
      pooled[ch] = s / static_cast<double>(positions);
    } else {
      pooled[ch] = *std::max_element(plane.begin(), plane.end());
    }
  }
  return l2_normalize(pooled);
}

Eigen::MatrixXd sample_region_vectors(const DfmDataset& maps,
                                      const std::vector<RegionSpec>& regions,
                                      std::size_t max_vectors, std::uint64_t seed) {
  std::vector<std::pair<RegionSpec, WindowOrigin>> windows;
  for (const auto& spec : regions) {
    for (const auto origin : region_grid(maps.h, maps.w, spec.kernel, spec.stride)) {
      windows.emplace_back(spec, origin);
    }
  }
  const std::size_t total = static_cast<std::size_t>(maps.n) * windows.size();
  std::vector<std::size_t> picks;
  if (total <= max_vectors) {
    picks.resize(total);
    for (std::size_t i = 0; i < total; ++i) picks[i] = i;
  } else {
    auto perm = random_permutation(total, seed);
    picks.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(max_vectors));
    std::sort(picks.begin(), picks.end());
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(picks.size()), maps.c);
  Eigen::Index row = 0;
  for (const std::size_t pick : picks) {
    const auto& [spec, origin] = windows[pick % windows.size()];
    const auto pooled = max_pool_region(map_view(maps, pick / windows.size()), origin, spec.kernel);
    if (!(norm2(pooled) > 0.0)) continue;
    const auto v = l2_normalize(pooled);
    for (std::size_t j = 0; j < v.size(); ++j) out(row, static_cast<Eigen::Index>(j)) = v[j];
    ++row;
  }
  out.conservativeResize(row, Eigen::NoChange);
  return out;
}

WhiteningTransform fit_whitening(const Eigen::MatrixXd& sample, double eigen_floor) {
  const Eigen::Index n = sample.rows();
  const Eigen::Index dim = sample.cols();
  if (n <= dim) {
    throw std::invalid_argument("fit_whitening: need more samples (" + std::to_string(n) +
                                ") than dimensions (" + std::to_string(dim) + ")");
  }
  WhiteningTransform t;
  t.mean = sample.colwise().mean().transpose();
  const Eigen::MatrixXd centered = sample.rowwise() - t.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw WhiteningError("fit_whitening: eigensolver failed");

  // Eigen returns ascending eigenvalues.
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = dim - 1; i >= 0; --i) {
    if (solver.eigenvalues()(i) > eigen_floor) kept.push_back(i);
  }
  t.dropped_components = static_cast<std::size_t>(dim) - kept.size();
  if (kept.empty()) {
    throw WhiteningError("fit_whitening: all " + std::to_string(dim) +
                         " components below eigenvalue floor");
  }
  t.projection.resize(static_cast<Eigen::Index>(kept.size()), dim);
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const double lambda = solver.eigenvalues()(kept[r]);
    t.eigenvalues.push_back(lambda);
    t.projection.row(static_cast<Eigen::Index>(r)) =
        solver.eigenvectors().col(kept[r]).transpose() / std::sqrt(lambda);
  }
  return t;
}

AggregationMethod parse_aggregation_method(const std::string& name) {
  if (name == "rmac") return AggregationMethod::Rmac;
  if (name == "rmac-whitened" || name == "rmac_whitened") return AggregationMethod::RmacWhitened;
  if (name == "avg") return AggregationMethod::Avg;
  if (name == "max") return AggregationMethod::Max;
  throw std::invalid_argument("unknown aggregation method '" + name + "'");
}

std::string to_string(AggregationMethod method) {
  switch (method) {
    case AggregationMethod::Rmac: return "rmac";
    case AggregationMethod::RmacWhitened: return "rmac-whitened";
    case AggregationMethod::Avg: return "avg";
    case AggregationMethod::Max: return "max";
  }
  return "unknown";
}

DfmDataset aggregate_dataset(const DfmDataset& maps, AggregationMethod method,
                             const AggregationConfig& config) {
  maps.validate();
  RmacConfig rmac_config = config.rmac;
  if (method == AggregationMethod::RmacWhitened && !rmac_config.whitening) {
    const auto sample =
        sample_region_vectors(maps, rmac_config.regions, config.whitening_sample, config.seed);
    rmac_config.whitening = fit_whitening(sample);
  }
  if (method == AggregationMethod::Rmac) rmac_config.whitening.reset();

  std::size_t out_dim = maps.c;
  if (method == AggregationMethod::RmacWhitened) out_dim = rmac_config.whitening->output_dim();

  DfmDataset out;
  out.n = maps.n;
  out.c = static_cast<std::uint32_t>(out_dim);
  out.h = 1;
  out.w = 1;
  out.factors = maps.factors;
  out.data.resize(static_cast<std::size_t>(maps.n) * out_dim);

  for (std::size_t i = 0; i < maps.n; ++i) {
    std::vector<double> v;
    try {
      const auto view = map_view(maps, i);
      switch (method) {
        case AggregationMethod::Rmac:
        case AggregationMethod::RmacWhitened: v = rmac(view, rmac_config); break;
        case AggregationMethod::Avg: v = global_pool(view, PoolMode::Avg); break;
        case AggregationMethod::Max: v = global_pool(view, PoolMode::Max); break;
      }
    } catch (const std::exception& e) {
      throw AggregationError(i, e.what());
    }
    for (std::size_t j = 0; j < out_dim; ++j) out.data[i * out_dim + j] = static_cast<float>(v[j]);
  }
  return out;
}

}  // namespace rmacvae
