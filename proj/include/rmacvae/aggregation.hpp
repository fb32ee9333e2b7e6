#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rmacvae/feature_store.hpp"

namespace rmacvae {

/// Read-only view of one channels x height x width feature map (row-major).
struct MapView {
  std::span<const float> data;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  float at(std::size_t ch, std::size_t row, std::size_t col) const {
    return data[(ch * height + row) * width + col];
  }
};

MapView map_view(const DfmDataset& maps, std::size_t record);

struct RegionSpec {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  bool operator==(const RegionSpec&) const = default;
};

struct WindowOrigin {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const WindowOrigin&) const = default;
};

/// PCA whitening: y = projection * (x - mean). Only components with
/// eigenvalue above the floor are kept, so projection is k x dim.
struct WhiteningTransform {
  Eigen::VectorXd mean;
  Eigen::MatrixXd projection;
  std::vector<double> eigenvalues;  // retained, descending
  std::size_t dropped_components = 0;

  std::size_t output_dim() const { return static_cast<std::size_t>(projection.rows()); }
  std::vector<double> apply(std::span<const double> v) const;
};

std::vector<RegionSpec> default_regions();

struct RmacConfig {
  std::vector<RegionSpec> regions = default_regions();
  std::optional<WhiteningTransform> whitening;
};

class ZeroNormError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class WhiteningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Valid (unpadded) window origins, row-major.
std::vector<WindowOrigin> region_grid(std::size_t height, std::size_t width,
                                      std::size_t kernel, std::size_t stride);

/// Total number of windows the config produces on a height x width map.
std::size_t region_count(const std::vector<RegionSpec>& regions, std::size_t height,
                         std::size_t width);

/// Channel-wise max over the kernel x kernel window at origin.
std::vector<double> max_pool_region(const MapView& map, WindowOrigin origin, std::size_t kernel);

/// Throws ZeroNormError for the zero vector.
std::vector<double> l2_normalize(std::span<const double> v);

/// Regional max-pooling: normalize every region vector, sum, renormalize.
/// Zero region vectors are skipped; an all-zero map throws ZeroNormError.
std::vector<double> rmac(const MapView& map, const RmacConfig& config);

enum class PoolMode { Avg, Max };

std::vector<double> global_pool(const MapView& map, PoolMode mode);

/// Collects l2-normalized region vectors from up to max_vectors randomly
/// chosen (record, region) pairs, one vector per row.
Eigen::MatrixXd sample_region_vectors(const DfmDataset& maps,
                                      const std::vector<RegionSpec>& regions,
                                      std::size_t max_vectors, std::uint64_t seed);

inline constexpr double kWhiteningEigenFloor = 1e-10;

/// Fits PCA whitening on sample rows. Requires more rows than columns.
WhiteningTransform fit_whitening(const Eigen::MatrixXd& sample,
                                 double eigen_floor = kWhiteningEigenFloor);

enum class AggregationMethod { Rmac, RmacWhitened, Avg, Max };

AggregationMethod parse_aggregation_method(const std::string& name);
std::string to_string(AggregationMethod method);

struct AggregationConfig {
  RmacConfig rmac;
  // Region vectors used to fit whitening when rmac.whitening is unset.
  std::size_t whitening_sample = 10000;
  std::uint64_t seed = 0;
};

class AggregationError : public std::runtime_error {
 public:
  AggregationError(std::size_t record, const std::string& what)
      : std::runtime_error("record " + std::to_string(record) + ": " + what), record_(record) {}
  std::size_t record() const { return record_; }

 private:
  std::size_t record_;
};

/// Aggregates every map into a unit vector; factors pass through unchanged.
/// For RmacWhitened without a fitted transform, one is fitted from `maps`.
DfmDataset aggregate_dataset(const DfmDataset& maps, AggregationMethod method,
                             const AggregationConfig& config = {});

}  // namespace rmacvae
