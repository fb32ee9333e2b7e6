#include "rmacvae/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>

namespace rmacvae {

Json to_json(const VaeConfig& config) {
  Json j;
  j["input_dim"] = config.input_dim;
  j["encoder_hidden"] = config.encoder_hidden;
  j["decoder_hidden"] = config.decoder_hidden;
  j["latent_dim"] = config.latent_dim;
  j["bn_epsilon"] = config.bn_epsilon;
  j["bn_momentum"] = config.bn_momentum;
  return j;
}

Json to_json(const BetaSchedule& schedule) {
  Json j;
  j["beta_start"] = schedule.beta_start;
  j["beta_end"] = schedule.beta_end;
  j["t_start"] = schedule.t_start;
  j["t_end"] = schedule.t_end;
  j["n_epochs"] = schedule.n_epochs;
  return j;
}

Json to_json(const AdamConfig& config) {
  Json j;
  j["learning_rate"] = config.learning_rate;
  j["beta1"] = config.beta1;
  j["beta2"] = config.beta2;
  j["epsilon"] = config.epsilon;
  return j;
}

Json to_json(const TrainConfig& config) {
  Json j;
  j["adam"] = to_json(config.adam);
  j["batch_size"] = config.batch_size;
  j["schedule"] = to_json(config.schedule);
  j["seed"] = config.seed;
  return j;
}

Json to_json(const EpochRecord& record) {
  Json j;
  j["epoch"] = record.epoch;
  j["beta"] = record.beta;
  j["total"] = record.total;
  j["mse"] = record.mse;
  j["kld"] = record.kld;
  j["batches"] = record.batches;
  j["samples"] = record.samples;
  return j;
}

Json history_to_json(const std::vector<EpochRecord>& history) {
  Json rows = Json::array();
  for (const auto& r : history) rows.push_back(to_json(r));
  return rows;
}

VaeConfig vae_config_from_json(const Json& j) {
  VaeConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.encoder_hidden = j.at("encoder_hidden").get<std::vector<std::size_t>>();
  c.decoder_hidden = j.at("decoder_hidden").get<std::vector<std::size_t>>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.bn_epsilon = j.at("bn_epsilon").get<double>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  const auto& adam = j.at("adam");
  c.adam.learning_rate = adam.at("learning_rate").get<double>();
  c.adam.beta1 = adam.at("beta1").get<double>();
  c.adam.beta2 = adam.at("beta2").get<double>();
  c.adam.epsilon = adam.at("epsilon").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  const auto& s = j.at("schedule");
  c.schedule.beta_start = s.at("beta_start").get<double>();
  c.schedule.beta_end = s.at("beta_end").get<double>();
  c.schedule.t_start = s.at("t_start").get<std::size_t>();
  c.schedule.t_end = s.at("t_end").get<std::size_t>();
  c.schedule.n_epochs = s.at("n_epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

namespace {

constexpr const char* kFormatName = "rmacvae-checkpoint";

Json manifest(const VaeParams& params) {
  Json tensors = Json::array();
  for_each_tensor(params, [&](const std::string& name, const auto& t, bool trainable) {
    Json entry;
    entry["name"] = name;
    entry["shape"] = {t.rows(), t.cols()};
    entry["trainable"] = trainable;
    tensors.push_back(entry);
  });
  return tensors;
}

std::size_t value_count(const VaeParams& params) {
  std::size_t n = 0;
  for_each_tensor(params, [&](const std::string&, const auto& t, bool) {
    n += static_cast<std::size_t>(t.size());
  });
  return n;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  check_shapes(checkpoint.params, checkpoint.vae_config);
  Json header;
  header["format"] = kFormatName;
  header["version"] = kCheckpointVersion;
  header["byte_order"] = "little";
  header["layout"] = "row_major";
  header["vae_config"] = to_json(checkpoint.vae_config);
  header["train_config"] = to_json(checkpoint.train_config);
  header["run_config"] = checkpoint.run_config;
  header["tensors"] = manifest(checkpoint.params);
  header["blob_bytes"] = value_count(checkpoint.params) * 8;

  std::string bytes = header.dump();
  bytes.push_back('\n');
  for_each_tensor(checkpoint.params, [&](const std::string&, const auto& t, bool) {
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        const auto bits = std::bit_cast<std::uint64_t>(static_cast<double>(t(r, c)));
        for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
      }
    }
  });
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw CheckpointError("checkpoint: missing header terminator");

  Json header;
  try {
    header = Json::parse(bytes.substr(0, newline));
  } catch (const Json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint: corrupt header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    if (header.at("format").get<std::string>() != kFormatName) {
      throw CheckpointError("checkpoint: unknown format tag");
    }
    if (header.at("version").get<int>() != kCheckpointVersion) {
      throw CheckpointError("checkpoint: unsupported version " + header.at("version").dump());
    }
    ckpt.vae_config = vae_config_from_json(header.at("vae_config"));
    ckpt.train_config = train_config_from_json(header.at("train_config"));
    ckpt.run_config = header.value("run_config", Json());
  } catch (const Json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: invalid config: ") + e.what());
  }

  ckpt.params = zeros_like(init_params(ckpt.vae_config, 0));
  if (header.at("tensors") != manifest(ckpt.params)) {
    throw CheckpointError("checkpoint: tensor manifest does not match the declared config");
  }
  const std::size_t blob = bytes.size() - newline - 1;
  const std::size_t expected = value_count(ckpt.params) * 8;
  if (blob < expected) {
    throw CheckpointError("checkpoint: truncated parameter blob (" + std::to_string(blob) +
                          " of " + std::to_string(expected) + " bytes)");
  }
  if (blob != expected || header.at("blob_bytes").get<std::size_t>() != expected) {
    throw CheckpointError("checkpoint: parameter blob size mismatch");
  }

  std::size_t pos = newline + 1;
  for_each_tensor(ckpt.params, [&](const std::string&, auto& t, bool) {
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
          bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + b])) << (8 * b);
        }
        pos += 8;
        t(r, c) = std::bit_cast<double>(bits);
      }
    }
  });
  for (const auto* stack : {&ckpt.params.encoder, &ckpt.params.decoder}) {
    for (const auto& layer : *stack) {
      if ((layer.norm.running_var.array() < 0.0).any()) {
        throw CheckpointError("checkpoint: negative running variance");
      }
    }
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const VaeConfig& expected) {
  Checkpoint ckpt = load_checkpoint(path);
  if (!(ckpt.vae_config == expected)) {
    throw CheckpointError("checkpoint: model config does not match the expected config");
  }
  return ckpt;
}

}  // namespace rmacvae
