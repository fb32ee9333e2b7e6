#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rmacvae {

/// Ground-truth factor labels, row-major n x f.
struct FactorTable {
  std::vector<std::uint32_t> cardinalities;
  std::vector<std::int32_t> values;

  std::size_t num_factors() const { return cardinalities.size(); }
  std::size_t num_rows() const {
    return cardinalities.empty() ? 0 : values.size() / cardinalities.size();
  }
  std::int32_t at(std::size_t row, std::size_t factor) const {
    return values[row * cardinalities.size() + factor];
  }
  std::span<const std::int32_t> row(std::size_t i) const {
    return {values.data() + i * num_factors(), num_factors()};
  }
  /// Column k as a contiguous copy.
  std::vector<std::int32_t> column(std::size_t factor) const;

  /// Throws std::invalid_argument if a value is negative or not below its cardinality.
  void validate() const;

  bool operator==(const FactorTable&) const = default;
};

/// n records of c x h x w f32 values. Aggregated vectors use h = w = 1.
struct DfmDataset {
  std::uint32_t n = 0;
  std::uint32_t c = 0;
  std::uint32_t h = 1;
  std::uint32_t w = 1;
  std::vector<float> data;
  std::optional<FactorTable> factors;

  std::size_t record_size() const {
    return static_cast<std::size_t>(c) * h * w;
  }
  std::span<const float> record(std::size_t i) const {
    return {data.data() + i * record_size(), record_size()};
  }
  std::span<float> record(std::size_t i) {
    return {data.data() + i * record_size(), record_size()};
  }

  /// Checks the payload length, factor row count and value finiteness.
  void validate() const;

  bool operator==(const DfmDataset&) const = default;
};

class DfmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DfmIoError : public DfmError {
 public:
  using DfmError::DfmError;
};
class DfmMagicError : public DfmError {
 public:
  using DfmError::DfmError;
};
class DfmVersionError : public DfmError {
 public:
  using DfmError::DfmError;
};
class DfmTruncatedError : public DfmError {
 public:
  using DfmError::DfmError;
};
class DfmNonFiniteError : public DfmError {
 public:
  using DfmError::DfmError;
};
class DfmInvariantError : public DfmError {
 public:
  using DfmError::DfmError;
};

inline constexpr std::uint32_t kDfmVersion = 1;

std::vector<std::uint8_t> encode_dfm(const DfmDataset& dataset);
DfmDataset decode_dfm(std::span<const std::uint8_t> bytes);

void write_dfm(const DfmDataset& dataset, const std::filesystem::path& path);
DfmDataset read_dfm(const std::filesystem::path& path);

/// Uniform i.i.d. indices in [0, n_unique).
std::vector<std::size_t> sample_indices(std::size_t n_unique, std::size_t count,
                                        std::uint64_t seed);

/// Gathers the given records (and their factor rows) into a new dataset.
DfmDataset gather_records(const DfmDataset& source,
                          std::span<const std::size_t> indices);

/// Draws `count` records uniformly with replacement. Deterministic in seed.
DfmDataset sample_with_replacement(const DfmDataset& source, std::size_t count,
                                   std::uint64_t seed);

struct DedupStats {
  std::size_t unique_count = 0;
  std::size_t duplicate_count = 0;
};

/// Record equality is bit-exact on the f32 payload.
DedupStats dedup_stats(const DfmDataset& dataset);

}  // namespace rmacvae
