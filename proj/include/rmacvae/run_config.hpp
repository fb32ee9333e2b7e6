#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "rmacvae/aggregation.hpp"
#include "rmacvae/checkpoint.hpp"
#include "rmacvae/metrics.hpp"
#include "rmacvae/synthdata.hpp"
#include "rmacvae/training.hpp"
#include "rmacvae/vae.hpp"

namespace rmacvae {

/// Everything a run depends on besides its input files. Serialized as a
/// flat JSON object; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;

  FactorSpec synth;
  std::size_t samples = 1'000'000;

  AggregationMethod method = AggregationMethod::Rmac;
  std::vector<RegionSpec> regions = default_regions();
  std::size_t whitening_sample = 10000;

  VaeConfig vae;  // input_dim follows the data
  TrainConfig train;
  MetricConfig metrics;

  void validate() const;
};

Json to_json(const RunConfig& config);

/// Overlays the keys present in `j` onto `config`.
void apply_json(RunConfig& config, const Json& j);
RunConfig run_config_from_json(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Per-stage seed derived from the run seed.
std::uint64_t stage_seed(const RunConfig& config, std::string_view stage);

/// Parses "a,b,c" into metric names, validating each.
std::set<std::string> parse_metric_list(const std::string& list);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace rmacvae
