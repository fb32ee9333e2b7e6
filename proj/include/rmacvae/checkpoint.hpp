#pragma once

#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "rmacvae/training.hpp"
#include "rmacvae/vae.hpp"

namespace rmacvae {

using Json = nlohmann::ordered_json;

Json to_json(const VaeConfig& config);
Json to_json(const BetaSchedule& schedule);
Json to_json(const AdamConfig& config);
Json to_json(const TrainConfig& config);
Json to_json(const EpochRecord& record);
Json history_to_json(const std::vector<EpochRecord>& history);

VaeConfig vae_config_from_json(const Json& j);
TrainConfig train_config_from_json(const Json& j);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  VaeConfig vae_config;
  TrainConfig train_config;
  VaeParams params;
  Json run_config;  // free-form echo of the producing run, may be null
};

inline constexpr int kCheckpointVersion = 1;

/// One-line JSON header (format, version, configs, tensor manifest), a
/// newline, then every tensor as little-endian f64 in manifest order,
/// row-major.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Like load_checkpoint, but the stored model config must equal `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const VaeConfig& expected);

}  // namespace rmacvae
