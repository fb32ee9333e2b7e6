#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "rmacvae/run_config.hpp"

namespace rmacvae {

/// Grid feature maps; when config.samples > 0 the grid is resampled with
/// replacement to that many records.
DfmDataset run_synth(const RunConfig& config);

DfmDataset run_aggregate(const DfmDataset& maps, const RunConfig& config);

/// Model config for a vector dataset: config.vae with input_dim = data width.
VaeConfig model_config_for(const DfmDataset& vectors, const RunConfig& config);
TrainConfig train_config_for(const RunConfig& config);

TrainResult run_train(const DfmDataset& vectors, const RunConfig& config,
                      const EpochCallback& on_epoch = {});

MetricReport run_eval(const RepresentationSet& rep, const RunConfig& config);

Json report_to_json(const MetricReport& report, const RunConfig& config);
Json history_document(const std::vector<EpochRecord>& history, const RunConfig& config);

void write_json(const Json& document, const std::filesystem::path& path);

struct PipelineResult {
  std::filesystem::path maps_path;
  std::filesystem::path vectors_path;
  std::filesystem::path checkpoint_path;
  std::filesystem::path history_path;
  std::filesystem::path report_path;
  TrainResult training;
  MetricReport report;
  DfmDataset vectors;
};

/// synth -> aggregate -> resample -> train -> eval, artifacts in workdir.
/// Unique grid maps are aggregated once and the vectors resampled, which
/// gives the same vectors as aggregating resampled maps.
PipelineResult run_pipeline(const RunConfig& config, const std::filesystem::path& workdir,
                            const std::function<void(const std::string&)>& log = {});

}  // namespace rmacvae
