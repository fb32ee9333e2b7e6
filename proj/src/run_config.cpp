#include "rmacvae/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "rmacvae/rng.hpp"

namespace rmacvae {

void RunConfig::validate() const {
  try {
    synth.validate();
    vae.validate();
    train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (regions.empty()) throw ConfigError("config: at least one region is required");
  for (const auto& r : regions) {
    if (r.kernel == 0 || r.stride == 0) throw ConfigError("config: region kernel/stride must be positive");
    if (r.kernel > synth.map_h || r.kernel > synth.map_w) {
      throw ConfigError("config: region kernel " + std::to_string(r.kernel) +
                        " exceeds the map size");
    }
  }
  if (metrics.mig_bins < 2) throw ConfigError("config: mig_bins must be at least 2");
  for (const auto& name : metrics.enabled) {
    if (std::find(metric_names().begin(), metric_names().end(), name) == metric_names().end()) {
      throw ConfigError("config: unknown metric '" + name + "'");
    }
  }
}

Json to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["cardinalities"] = c.synth.cardinalities;
  j["channels"] = c.synth.map_channels;
  j["height"] = c.synth.map_h;
  j["width"] = c.synth.map_w;
  j["noise_dims"] = c.synth.noise_dims;
  j["samples"] = c.samples;
  j["method"] = to_string(c.method);
  Json regions = Json::array();
  for (const auto& r : c.regions) regions.push_back({r.kernel, r.stride});
  j["regions"] = regions;
  j["whitening_sample"] = c.whitening_sample;
  j["latents"] = c.vae.latent_dim;
  j["encoder_hidden"] = c.vae.encoder_hidden;
  j["decoder_hidden"] = c.vae.decoder_hidden;
  j["bn_epsilon"] = c.vae.bn_epsilon;
  j["bn_momentum"] = c.vae.bn_momentum;
  j["epochs"] = c.train.schedule.n_epochs;
  j["beta_start"] = c.train.schedule.beta_start;
  j["beta_end"] = c.train.schedule.beta_end;
  j["anneal_start"] = c.train.schedule.t_start;
  j["anneal_end"] = c.train.schedule.t_end;
  j["batch_size"] = c.train.batch_size;
  j["lr"] = c.train.adam.learning_rate;
  j["adam_beta1"] = c.train.adam.beta1;
  j["adam_beta2"] = c.train.adam.beta2;
  j["adam_epsilon"] = c.train.adam.epsilon;
  std::vector<std::string> enabled;
  for (const auto& name : metric_names()) {
    if (c.metrics.enabled.count(name)) enabled.push_back(name);
  }
  j["metrics"] = enabled;
  j["mig_bins"] = c.metrics.mig_bins;
  j["factorvae_train_votes"] = c.metrics.factorvae.train_votes;
  j["factorvae_eval_votes"] = c.metrics.factorvae.eval_votes;
  j["factorvae_probe"] = c.metrics.factorvae.probe_batch;
  j["dci_train_fraction"] = c.metrics.dci.train_fraction;
  j["dci_l1"] = c.metrics.dci.l1_penalty;
  j["dci_iterations"] = c.metrics.dci.iterations;
  j["irs_quantile"] = c.metrics.irs.diff_quantile;
  j["irs_guard"] = c.metrics.irs.zero_deviation_guard;
  return j;
}

std::set<std::string> parse_metric_list(const std::string& list) {
  std::set<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    if (std::find(metric_names().begin(), metric_names().end(), item) == metric_names().end()) {
      throw ConfigError("unknown metric '" + item + "'");
    }
    out.insert(item);
  }
  if (out.empty()) throw ConfigError("metric list is empty");
  return out;
}

void apply_json(RunConfig& c, const Json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "cardinalities") c.synth.cardinalities = value.get<std::vector<std::uint32_t>>();
      else if (key == "channels") c.synth.map_channels = value.get<std::size_t>();
      else if (key == "height") c.synth.map_h = value.get<std::size_t>();
      else if (key == "width") c.synth.map_w = value.get<std::size_t>();
      else if (key == "noise_dims") c.synth.noise_dims = value.get<std::size_t>();
      else if (key == "samples") c.samples = value.get<std::size_t>();
      else if (key == "method") c.method = parse_aggregation_method(value.get<std::string>());
      else if (key == "regions") {
        c.regions.clear();
        for (const auto& r : value) {
          c.regions.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>()});
        }
      }
      else if (key == "whitening_sample") c.whitening_sample = value.get<std::size_t>();
      else if (key == "latents") c.vae.latent_dim = value.get<std::size_t>();
      else if (key == "encoder_hidden") c.vae.encoder_hidden = value.get<std::vector<std::size_t>>();
      else if (key == "decoder_hidden") c.vae.decoder_hidden = value.get<std::vector<std::size_t>>();
      else if (key == "bn_epsilon") c.vae.bn_epsilon = value.get<double>();
      else if (key == "bn_momentum") c.vae.bn_momentum = value.get<double>();
      else if (key == "epochs") c.train.schedule.n_epochs = value.get<std::size_t>();
      else if (key == "beta_start") c.train.schedule.beta_start = value.get<double>();
      else if (key == "beta_end") c.train.schedule.beta_end = value.get<double>();
      else if (key == "anneal_start") c.train.schedule.t_start = value.get<std::size_t>();
      else if (key == "anneal_end") c.train.schedule.t_end = value.get<std::size_t>();
      else if (key == "batch_size") c.train.batch_size = value.get<std::size_t>();
      else if (key == "lr") c.train.adam.learning_rate = value.get<double>();
      else if (key == "adam_beta1") c.train.adam.beta1 = value.get<double>();
      else if (key == "adam_beta2") c.train.adam.beta2 = value.get<double>();
      else if (key == "adam_epsilon") c.train.adam.epsilon = value.get<double>();
      else if (key == "metrics") {
        if (value.is_string()) {
          c.metrics.enabled = parse_metric_list(value.get<std::string>());
        } else {
          std::string joined;
          for (const auto& m : value) joined += m.get<std::string>() + ",";
          c.metrics.enabled = parse_metric_list(joined);
        }
      }
      else if (key == "mig_bins") c.metrics.mig_bins = value.get<std::size_t>();
      else if (key == "factorvae_train_votes") c.metrics.factorvae.train_votes = value.get<std::size_t>();
      else if (key == "factorvae_eval_votes") c.metrics.factorvae.eval_votes = value.get<std::size_t>();
      else if (key == "factorvae_probe") c.metrics.factorvae.probe_batch = value.get<std::size_t>();
      else if (key == "dci_train_fraction") c.metrics.dci.train_fraction = value.get<double>();
      else if (key == "dci_l1") c.metrics.dci.l1_penalty = value.get<double>();
      else if (key == "dci_iterations") c.metrics.dci.iterations = value.get<std::size_t>();
      else if (key == "irs_quantile") c.metrics.irs.diff_quantile = value.get<double>();
      else if (key == "irs_guard") c.metrics.irs.zero_deviation_guard = value.get<bool>();
      else throw ConfigError("config: unknown key '" + key + "'");
    } catch (const Json::exception& e) {
      throw ConfigError("config: bad value for '" + key + "': " + e.what());
    }
  }
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  apply_json(c, j);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

std::uint64_t stage_seed(const RunConfig& config, std::string_view stage) {
  return derive_seed(config.seed, stage);
}

}  // namespace rmacvae
