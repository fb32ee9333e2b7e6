#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rmacvae {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct VaeConfig {
  std::size_t input_dim = 512;
  std::vector<std::size_t> encoder_hidden{256, 128, 64};
  std::vector<std::size_t> decoder_hidden{64, 128, 256};
  std::size_t latent_dim = 18;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;

  void validate() const;
  bool operator==(const VaeConfig&) const = default;
};

/// Fully connected layer, weight is out x in.
struct Linear {
  Matrix weight;
  Vector bias;
};

struct BatchNorm {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
};

/// Linear -> BatchNorm -> ReLU.
struct HiddenLayer {
  Linear linear;
  BatchNorm norm;
};

struct VaeParams {
  std::vector<HiddenLayer> encoder;
  Linear mu_head;
  Linear log_var_head;
  std::vector<HiddenLayer> decoder;
  Linear output;
};

// Gradients mirror the parameter tree; running statistics stay zero.
using Gradients = VaeParams;

/// Visits every tensor as fn(name, tensor, trainable). Order is fixed and
/// defines the checkpoint manifest.
template <typename Params, typename Fn>
void for_each_tensor(Params& params, Fn&& fn) {
  auto linear = [&](const std::string& prefix, auto& layer) {
    fn(prefix + ".weight", layer.weight, true);
    fn(prefix + ".bias", layer.bias, true);
  };
  auto stack = [&](const std::string& prefix, auto& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string p = prefix + "." + std::to_string(i);
      linear(p + ".linear", layers[i].linear);
      fn(p + ".norm.gamma", layers[i].norm.gamma, true);
      fn(p + ".norm.beta", layers[i].norm.beta, true);
      fn(p + ".norm.running_mean", layers[i].norm.running_mean, false);
      fn(p + ".norm.running_var", layers[i].norm.running_var, false);
    }
  };
  stack("encoder", params.encoder);
  linear("mu_head", params.mu_head);
  linear("log_var_head", params.log_var_head);
  stack("decoder", params.decoder);
  linear("output", params.output);
}

/// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); gamma = 1,
/// beta = 0, running mean 0, running variance 1.
VaeParams init_params(const VaeConfig& config, std::uint64_t seed);

/// Same shapes, all zero.
VaeParams zeros_like(const VaeParams& params);

/// Throws std::invalid_argument when shapes disagree with config.
void check_shapes(const VaeParams& params, const VaeConfig& config);

std::size_t trainable_parameter_count(const VaeParams& params);

enum class Mode { Train, Eval };

inline constexpr double kLogVarMin = -30.0;
inline constexpr double kLogVarMax = 30.0;

struct PosteriorParams {
  Matrix mu;       // batch x C
  Matrix log_var;  // batch x C, clamped to [kLogVarMin, kLogVarMax]
};

struct LatentSample {
  Matrix z;
  Matrix noise;
};

struct LayerCache {
  Matrix input;
  Matrix normalized;      // BN x-hat
  Matrix pre_activation;  // BN output before ReLU
  Vector batch_mean;
  Vector batch_var;  // biased
  Vector inv_std;
};

struct Encoded {
  PosteriorParams posterior;
  std::vector<LayerCache> layers;
  Matrix features;      // last hidden activation
  Matrix raw_log_var;   // head output before clamping
  Mode mode = Mode::Eval;
};

struct Decoded {
  Matrix mu_hat;
  std::vector<LayerCache> layers;
  Matrix features;
  Mode mode = Mode::Eval;
};

class BatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class StaleCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Encoder forward. Never mutates params: in train mode the batch
/// statistics are returned in the cache; use commit_batch_stats to fold
/// them into the running averages.
Encoded encode(const VaeParams& params, const Matrix& x, Mode mode, double bn_epsilon = 1e-5);
Decoded decode(const VaeParams& params, const Matrix& z, Mode mode, double bn_epsilon = 1e-5);

void commit_batch_stats(std::vector<HiddenLayer>& layers, const std::vector<LayerCache>& caches,
                        double momentum);

/// Train-mode encode that also updates the running statistics.
Encoded encode_train(VaeParams& params, const Matrix& x, const VaeConfig& config);

/// Eval-mode encoder means for a batch (the representation used by metrics).
Matrix encode_means(const VaeParams& params, const Matrix& x, const VaeConfig& config);

Matrix draw_noise(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

/// z = mu + exp(0.5 * log_var) * noise.
LatentSample reparameterize_with_noise(const PosteriorParams& posterior, Matrix noise);
LatentSample reparameterize(const PosteriorParams& posterior, std::uint64_t seed);

struct LossTerms {
  double total = 0.0;
  double mse = 0.0;  // batch mean of the summed squared error
  double kld = 0.0;  // batch mean of the summed per-latent KL
};

/// total = mse + (beta / latent_dim) * kld, each term averaged over the batch.
LossTerms loss(const Matrix& x, const Matrix& mu_hat, const PosteriorParams& posterior,
               double beta, std::size_t latent_dim);

/// Per-sample KL divergence of N(mu, exp(log_var)) from N(0, I).
Vector kl_divergence(const PosteriorParams& posterior);

struct ForwardPass {
  Matrix input;
  Encoded encoded;
  LatentSample latent;
  Decoded decoded;
  LossTerms loss;
};

/// Full train-mode pass with given noise. Pure.
ForwardPass forward(const VaeParams& params, const Matrix& x, const Matrix& noise, double beta,
                    const VaeConfig& config);

/// Reverse-mode gradient of the batch loss for the pass's inputs.
Gradients backward(const VaeParams& params, const ForwardPass& pass, const Matrix& x, double beta,
                   std::size_t latent_dim);

/// Central-difference gradient using one fixed noise draw for every
/// perturbed evaluation. Intended as a test oracle on small networks.
Gradients finite_diff_grad(const VaeParams& params, const Matrix& x, double beta,
                           const VaeConfig& config, std::uint64_t seed, double step);

}  // namespace rmacvae
