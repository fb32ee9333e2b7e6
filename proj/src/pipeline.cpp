#include "rmacvae/pipeline.hpp"

#include <fstream>

namespace rmacvae {

namespace {

DfmDataset synth_grid(const RunConfig& config) {
  const auto grid = gen_factor_grid(config.synth);
  return gen_feature_maps(grid, config.synth, stage_seed(config, "synth"));
}

std::vector<std::size_t> resample_indices(std::size_t unique, const RunConfig& config) {
  return sample_indices(unique, config.samples, stage_seed(config, "sample"));
}

}  // namespace

DfmDataset run_synth(const RunConfig& config) {
  config.validate();
  DfmDataset grid = synth_grid(config);
  if (config.samples == 0) return grid;
  return gather_records(grid, resample_indices(grid.n, config));
}

DfmDataset run_aggregate(const DfmDataset& maps, const RunConfig& config) {
  AggregationConfig agg;
  agg.rmac.regions = config.regions;
  agg.whitening_sample = config.whitening_sample;
  agg.seed = stage_seed(config, "aggregate");
  return aggregate_dataset(maps, config.method, agg);
}

VaeConfig model_config_for(const DfmDataset& vectors, const RunConfig& config) {
  VaeConfig vae = config.vae;
  vae.input_dim = vectors.c;
  return vae;
}

TrainConfig train_config_for(const RunConfig& config) {
  TrainConfig train = config.train;
  train.seed = stage_seed(config, "train");
  return train;
}

TrainResult run_train(const DfmDataset& vectors, const RunConfig& config,
                      const EpochCallback& on_epoch) {
  return train(vectors, model_config_for(vectors, config), train_config_for(config), on_epoch);
}

MetricReport run_eval(const RepresentationSet& rep, const RunConfig& config) {
  return evaluate(rep, config.metrics, stage_seed(config, "eval"));
}

Json report_to_json(const MetricReport& report, const RunConfig& config) {
  auto value = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  Json j;
  j["factorvae"] = value(report.factorvae);
  j["mig"] = value(report.mig);
  j["sap"] = value(report.sap);
  j["dci_disentanglement"] = value(report.dci_disentanglement);
  j["dci_completeness"] = value(report.dci_completeness);
  j["dci_informativeness"] = value(report.dci_informativeness);
  j["irs"] = value(report.irs);
  j["seed"] = config.seed;
  j["config"] = to_json(config);
  return j;
}

Json history_document(const std::vector<EpochRecord>& history, const RunConfig& config) {
  Json j;
  j["history"] = history_to_json(history);
  j["config"] = to_json(config);
  return j;
}

void write_json(const Json& document, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << document.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

PipelineResult run_pipeline(const RunConfig& config, const std::filesystem::path& workdir,
                            const std::function<void(const std::string&)>& log) {
  config.validate();
  auto note = [&](const std::string& msg) {
    if (log) log(msg);
  };
  std::filesystem::create_directories(workdir);
  PipelineResult result;
  result.maps_path = workdir / "maps.dfm";
  result.vectors_path = workdir / "vectors.dfm";
  result.checkpoint_path = workdir / "model.ckpt";
  result.history_path = workdir / "history.json";
  result.report_path = workdir / "report.json";

  const DfmDataset grid_maps = synth_grid(config);
  write_dfm(grid_maps, result.maps_path);
  note("synth: " + std::to_string(grid_maps.n) + " grid maps");

  const DfmDataset grid_vectors = run_aggregate(grid_maps, config);
  result.vectors = config.samples == 0
                       ? grid_vectors
                       : gather_records(grid_vectors, resample_indices(grid_vectors.n, config));
  write_dfm(result.vectors, result.vectors_path);
  const auto dup = dedup_stats(result.vectors);
  note("aggregate: " + std::to_string(result.vectors.n) + " vectors (" +
       std::to_string(dup.unique_count) + " unique)");

  result.training = run_train(result.vectors, config, [&](const EpochRecord& r) {
    note("epoch " + std::to_string(r.epoch) + " beta=" + std::to_string(r.beta) +
         " mse=" + std::to_string(r.mse) + " kld=" + std::to_string(r.kld));
  });
  const VaeConfig vae = model_config_for(result.vectors, config);
  save_checkpoint(Checkpoint{vae, train_config_for(config), result.training.params, to_json(config)},
                  result.checkpoint_path);
  write_json(history_document(result.training.history, config), result.history_path);

  const auto rep = represent(result.training.params, vae, result.vectors);
  result.report = run_eval(rep, config);
  write_json(report_to_json(result.report, config), result.report_path);
  note("eval: report written to " + result.report_path.string());
  return result;
}

}  // namespace rmacvae
