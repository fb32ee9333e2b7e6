// rmacvae: feature aggregation, beta-VAE training and disentanglement
// evaluation on .dfm datasets.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rmacvae/pipeline.hpp"

using namespace rmacvae;

namespace {

std::vector<std::uint32_t> parse_cardinalities(const std::string& text) {
  std::vector<std::uint32_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const unsigned long v = std::stoul(item, &used);
    if (used != item.size()) throw ConfigError("bad cardinality '" + item + "'");
    out.push_back(static_cast<std::uint32_t>(v));
  }
  return out;
}

// Flags shared by every subcommand. Each starts at the built-in default and
// only overrides the config file when given explicitly.
struct Overrides {
  RunConfig defaults;
  std::string config_path;
  std::uint64_t seed = defaults.seed;
  std::string method = to_string(defaults.method);
  std::size_t latents = defaults.vae.latent_dim;
  std::size_t epochs = defaults.train.schedule.n_epochs;
  double beta_start = defaults.train.schedule.beta_start;
  double beta_end = defaults.train.schedule.beta_end;
  std::size_t anneal_start = defaults.train.schedule.t_start;
  std::size_t anneal_end = defaults.train.schedule.t_end;
  std::size_t batch_size = defaults.train.batch_size;
  double lr = defaults.train.adam.learning_rate;
  std::string metrics = "factorvae,mig,sap,dci,irs";
  std::size_t samples = defaults.samples;
  std::string cardinalities = "6,6,4";
  std::size_t channels = defaults.synth.map_channels;

  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> options;

  template <typename T>
  void add(CLI::App* app, const std::string& flag, T& target, const std::string& help,
           std::function<void(RunConfig&)> apply) {
    options.emplace_back(app->add_option(flag, target, help)->capture_default_str(),
                         std::move(apply));
  }

  RunConfig resolve() const {
    RunConfig config = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    for (const auto& [opt, apply] : options) {
      if (opt->count() > 0) apply(config);
    }
    config.validate();
    return config;
  }
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "Flat JSON run config; explicit flags take precedence")
      ->check(CLI::ExistingFile);
  o.add(app, "--seed", o.seed, "Run seed, split into per-stage seeds",
        [&o](RunConfig& c) { c.seed = o.seed; });
}

void add_synth_flags(CLI::App* app, Overrides& o) {
  o.add(app, "--samples", o.samples,
        "Records drawn with replacement from the factor grid (0 = grid only)",
        [&o](RunConfig& c) { c.samples = o.samples; });
  o.add(app, "--cardinalities", o.cardinalities, "Comma-separated factor cardinalities",
        [&o](RunConfig& c) { c.synth.cardinalities = parse_cardinalities(o.cardinalities); });
  o.add(app, "--channels", o.channels, "Feature map channels",
        [&o](RunConfig& c) { c.synth.map_channels = o.channels; });
}

void add_method_flag(CLI::App* app, Overrides& o) {
  o.options.emplace_back(
      app->add_option("--method", o.method, "Aggregation: rmac, rmac-whitened, avg or max")
          ->check(CLI::IsMember({"rmac", "rmac-whitened", "avg", "max"}))
          ->capture_default_str(),
      [&o](RunConfig& c) { c.method = parse_aggregation_method(o.method); });
}

void add_train_flags(CLI::App* app, Overrides& o) {
  o.add(app, "--latents", o.latents, "Latent dimensions C",
        [&o](RunConfig& c) { c.vae.latent_dim = o.latents; });
  o.add(app, "--epochs", o.epochs, "Training epochs N",
        [&o](RunConfig& c) { c.train.schedule.n_epochs = o.epochs; });
  o.add(app, "--beta-start", o.beta_start, "KL weight before annealing",
        [&o](RunConfig& c) { c.train.schedule.beta_start = o.beta_start; });
  o.add(app, "--beta-end", o.beta_end, "KL weight after annealing",
        [&o](RunConfig& c) { c.train.schedule.beta_end = o.beta_end; });
  o.add(app, "--anneal-start", o.anneal_start, "First epoch of the cosine ramp",
        [&o](RunConfig& c) { c.train.schedule.t_start = o.anneal_start; });
  o.add(app, "--anneal-end", o.anneal_end, "Last epoch of the cosine ramp",
        [&o](RunConfig& c) { c.train.schedule.t_end = o.anneal_end; });
  o.add(app, "--batch-size", o.batch_size, "Minibatch size",
        [&o](RunConfig& c) { c.train.batch_size = o.batch_size; });
  o.add(app, "--lr", o.lr, "Adam learning rate (decay rates 0.9 / 0.999)",
        [&o](RunConfig& c) { c.train.adam.learning_rate = o.lr; });
}

void add_metric_flags(CLI::App* app, Overrides& o) {
  o.add(app, "--metrics", o.metrics, "Comma list of factorvae, mig, sap, dci, irs",
        [&o](RunConfig& c) { c.metrics.enabled = parse_metric_list(o.metrics); });
}

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const DfmError*>(&e)) return "format_error";
  if (dynamic_cast<const ConfigError*>(&e)) return "config_error";
  if (dynamic_cast<const CheckpointError*>(&e)) return "checkpoint_error";
  if (dynamic_cast<const MetricError*>(&e)) return "metric_error";
  if (dynamic_cast<const TrainingError*>(&e)) return "training_error";
  if (dynamic_cast<const AggregationError*>(&e)) return "aggregation_error";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid_argument";
  return "error";
}

void print_result(const Json& summary) { std::cout << summary.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RMAC feature aggregation, beta-VAE training and disentanglement metrics"};
  app.require_subcommand(1);

  Overrides synth_o;
  Overrides agg_o;
  Overrides train_o;
  Overrides eval_o;
  Overrides pipe_o;
  std::string input;
  std::string output;
  std::string checkpoint;
  std::string history;
  bool identity_codes = false;

  auto* synth = app.add_subcommand("synth", "Generate synthetic feature maps with factor labels");
  synth->add_option("--output", output, "Output .dfm")->required();
  synth->add_flag("--identity-codes", identity_codes,
                  "Write oracle latent codes (factor values plus noise dims) instead of maps");
  add_common(synth, synth_o);
  add_synth_flags(synth, synth_o);

  auto* aggregate = app.add_subcommand("aggregate", "Aggregate feature maps into unit vectors");
  aggregate->add_option("--input", input, "Input map .dfm")->required()->check(CLI::ExistingFile);
  aggregate->add_option("--output", output, "Output vector .dfm")->required();
  add_common(aggregate, agg_o);
  add_method_flag(aggregate, agg_o);

  auto* train_cmd = app.add_subcommand("train", "Train the beta-VAE on aggregated vectors");
  train_cmd->add_option("--input", input, "Input vector .dfm")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--output", output, "Output checkpoint")->required();
  train_cmd->add_option("--history", history, "History JSON (default: <output>.history.json)");
  add_common(train_cmd, train_o);
  add_train_flags(train_cmd, train_o);

  auto* eval = app.add_subcommand("eval", "Score a model (or stored codes) with disentanglement metrics");
  eval->add_option("--input", input, "Labelled vector .dfm (or latent codes without --checkpoint)")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  eval->add_option("--output", output, "Output report.json")->required();
  add_common(eval, eval_o);
  add_metric_flags(eval, eval_o);

  auto* pipeline = app.add_subcommand("pipeline", "synth -> aggregate -> train -> eval");
  pipeline->add_option("--output", output, "Work directory for all artifacts")->required();
  add_common(pipeline, pipe_o);
  add_synth_flags(pipeline, pipe_o);
  add_method_flag(pipeline, pipe_o);
  add_train_flags(pipeline, pipe_o);
  add_metric_flags(pipeline, pipe_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    Json err;
    err["error"]["type"] = "usage_error";
    err["error"]["message"] = e.what();
    std::cerr << err.dump() << '\n';
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (synth->parsed()) {
      const RunConfig config = synth_o.resolve();
      Json summary;
      if (identity_codes) {
        FactorTable factors = gen_factor_grid(config.synth);
        if (config.samples > 0) {
          DfmDataset labels;
          labels.n = static_cast<std::uint32_t>(factors.num_rows());
          labels.factors = factors;
          factors = *gather_records(
                         labels, sample_indices(labels.n, config.samples, stage_seed(config, "sample")))
                         .factors;
        }
        const auto rep =
            gen_identity_codes(factors, config.synth.noise_dims, stage_seed(config, "codes"));
        const auto ds = representation_to_dfm(rep);
        write_dfm(ds, output);
        summary["n"] = ds.n;
        summary["c"] = ds.c;
      } else {
        const auto maps = run_synth(config);
        write_dfm(maps, output);
        const auto dup = dedup_stats(maps);
        summary["n"] = maps.n;
        summary["c"] = maps.c;
        summary["h"] = maps.h;
        summary["w"] = maps.w;
        summary["unique"] = dup.unique_count;
        summary["duplicates"] = dup.duplicate_count;
      }
      summary["output"] = output;
      print_result(summary);
    } else if (aggregate->parsed()) {
      const RunConfig config = agg_o.resolve();
      const auto vectors = run_aggregate(read_dfm(input), config);
      write_dfm(vectors, output);
      Json summary;
      summary["n"] = vectors.n;
      summary["c"] = vectors.c;
      summary["method"] = to_string(config.method);
      summary["output"] = output;
      print_result(summary);
    } else if (train_cmd->parsed()) {
      const RunConfig config = train_o.resolve();
      const auto vectors = read_dfm(input);
      const auto result = run_train(vectors, config, [](const EpochRecord& r) {
        std::cerr << "epoch " << r.epoch << " beta=" << r.beta << " total=" << r.total
                  << " mse=" << r.mse << " kld=" << r.kld << '\n';
      });
      save_checkpoint(Checkpoint{model_config_for(vectors, config), train_config_for(config),
                                 result.params, to_json(config)},
                      output);
      const std::string history_path = history.empty() ? output + ".history.json" : history;
      write_json(history_document(result.history, config), history_path);
      Json summary;
      summary["checkpoint"] = output;
      summary["history"] = history_path;
      summary["final_mse"] = result.history.back().mse;
      summary["final_kld"] = result.history.back().kld;
      print_result(summary);
    } else if (eval->parsed()) {
      const RunConfig config = eval_o.resolve();
      const auto data = read_dfm(input);
      RepresentationSet rep;
      if (checkpoint.empty()) {
        if (!data.factors) throw MetricError("eval: input has no factor labels");
        if (data.h != 1 || data.w != 1) throw MetricError("eval: latent codes must have h = w = 1");
        rep.latents = to_matrix(data);
        rep.factors = *data.factors;
      } else {
        const auto ckpt = load_checkpoint(checkpoint);
        rep = represent(ckpt.params, ckpt.vae_config, data);
      }
      const auto report = run_eval(rep, config);
      const Json doc = report_to_json(report, config);
      write_json(doc, output);
      print_result(doc);
    } else if (pipeline->parsed()) {
      const RunConfig config = pipe_o.resolve();
      const auto result =
          run_pipeline(config, output, [](const std::string& msg) { std::cerr << msg << '\n'; });
      print_result(report_to_json(result.report, config));
    }
  } catch (const std::exception& e) {
    Json err;
    err["error"]["type"] = error_type(e);
    err["error"]["message"] = e.what();
    std::cerr << err.dump() << '\n';
    return 1;
  }
  return 0;
}
