#include "rmacvae/vae.hpp"

#include <cmath>

#include "rmacvae/rng.hpp"

namespace rmacvae {

namespace {

Linear make_linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear layer;
  layer.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  layer.bias.resize(static_cast<Eigen::Index>(out));
  // Row-major draw order so the stream does not depend on Eigen's storage.
  for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      layer.weight(r, c) = rng.uniform(-bound, bound);
    }
  }
  for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = rng.uniform(-bound, bound);
  return layer;
}

std::vector<HiddenLayer> make_stack(std::size_t in, const std::vector<std::size_t>& sizes,
                                    Rng& rng) {
  std::vector<HiddenLayer> layers;
  for (const std::size_t out : sizes) {
    HiddenLayer layer;
    layer.linear = make_linear(in, out, rng);
    const auto n = static_cast<Eigen::Index>(out);
    layer.norm.gamma = Vector::Ones(n);
    layer.norm.beta = Vector::Zero(n);
    layer.norm.running_mean = Vector::Zero(n);
    layer.norm.running_var = Vector::Ones(n);
    layers.push_back(std::move(layer));
    in = out;
  }
  return layers;
}

Matrix affine(const Linear& layer, const Matrix& x) {
  Matrix out = x * layer.weight.transpose();
  out.rowwise() += layer.bias.transpose();
  return out;
}

struct StackResult {
  Matrix output;
  std::vector<LayerCache> caches;
};

StackResult run_stack(const std::vector<HiddenLayer>& layers, const Matrix& x, Mode mode,
                      double epsilon) {
  if (mode == Mode::Train && x.rows() < 2) {
    throw BatchError("train-mode batch normalization needs a batch of at least 2 rows");
  }
  StackResult result;
  Matrix h = x;
  const double batch = static_cast<double>(x.rows());
  for (const auto& layer : layers) {
    LayerCache cache;
    cache.input = h;
    Matrix a = affine(layer.linear, h);
    if (mode == Mode::Train) {
      cache.batch_mean = a.colwise().sum().transpose() / batch;
      a.rowwise() -= cache.batch_mean.transpose();
      cache.batch_var = a.array().square().colwise().sum().transpose() / batch;
    } else {
      cache.batch_mean = layer.norm.running_mean;
      cache.batch_var = layer.norm.running_var;
      a.rowwise() -= cache.batch_mean.transpose();
    }
    cache.inv_std = (cache.batch_var.array() + epsilon).rsqrt().matrix();
    cache.normalized = a.array().rowwise() * cache.inv_std.transpose().array();
    cache.pre_activation =
        (cache.normalized.array().rowwise() * layer.norm.gamma.transpose().array()).matrix();
    cache.pre_activation.rowwise() += layer.norm.beta.transpose();
    h = cache.pre_activation.cwiseMax(0.0);
    result.caches.push_back(std::move(cache));
  }
  result.output = std::move(h);
  return result;
}

// Gradient through the stack given dL/d(output); accumulates parameter
// gradients and returns dL/d(input).
Matrix backprop_stack(const std::vector<HiddenLayer>& layers,
                      const std::vector<LayerCache>& caches, Matrix grad,
                      std::vector<HiddenLayer>& grads) {
  for (std::size_t idx = layers.size(); idx-- > 0;) {
    const auto& layer = layers[idx];
    const auto& cache = caches[idx];
    auto& g = grads[idx];
    const double batch = static_cast<double>(grad.rows());

    const Matrix d_pre = (cache.pre_activation.array() > 0.0).select(grad, 0.0);
    g.norm.gamma = (d_pre.array() * cache.normalized.array()).colwise().sum().transpose();
    g.norm.beta = d_pre.colwise().sum().transpose();

    const Matrix d_hat = d_pre.array().rowwise() * layer.norm.gamma.transpose().array();
    const Eigen::RowVectorXd sum_d_hat = d_hat.colwise().sum();
    const Eigen::RowVectorXd sum_d_hat_x =
        (d_hat.array() * cache.normalized.array()).colwise().sum();
    Matrix d_a = batch * d_hat;
    d_a.rowwise() -= sum_d_hat;
    d_a -= (cache.normalized.array().rowwise() * sum_d_hat_x.array()).matrix();
    d_a = (d_a.array().rowwise() * (cache.inv_std.transpose().array() / batch)).matrix();

    g.linear.weight = d_a.transpose() * cache.input;
    g.linear.bias = d_a.colwise().sum().transpose();
    grad = d_a * layer.linear.weight;
  }
  return grad;
}

}  // namespace

void VaeConfig::validate() const {
  if (input_dim == 0) throw std::invalid_argument("vae config: input_dim must be positive");
  if (latent_dim == 0) throw std::invalid_argument("vae config: latent_dim must be positive");
  if (encoder_hidden.empty() || decoder_hidden.empty()) {
    throw std::invalid_argument("vae config: encoder and decoder need at least one hidden layer");
  }
  for (auto s : encoder_hidden) {
    if (s == 0) throw std::invalid_argument("vae config: encoder hidden sizes must be positive");
  }
  for (auto s : decoder_hidden) {
    if (s == 0) throw std::invalid_argument("vae config: decoder hidden sizes must be positive");
  }
  if (!(bn_epsilon > 0.0)) throw std::invalid_argument("vae config: bn_epsilon must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) {
    throw std::invalid_argument("vae config: bn_momentum must lie in (0, 1)");
  }
}

VaeParams init_params(const VaeConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  VaeParams params;
  params.encoder = make_stack(config.input_dim, config.encoder_hidden, rng);
  const std::size_t enc_out = config.encoder_hidden.back();
  params.mu_head = make_linear(enc_out, config.latent_dim, rng);
  params.log_var_head = make_linear(enc_out, config.latent_dim, rng);
  params.decoder = make_stack(config.latent_dim, config.decoder_hidden, rng);
  const std::size_t dec_out = config.decoder_hidden.back();
  params.output = make_linear(dec_out, config.input_dim, rng);
  return params;
}

VaeParams zeros_like(const VaeParams& params) {
  VaeParams out = params;
  for_each_tensor(out, [](const std::string&, auto& t, bool) { t.setZero(); });
  return out;
}

void check_shapes(const VaeParams& params, const VaeConfig& config) {
  const VaeParams reference = zeros_like(init_params(config, 0));
  std::vector<std::pair<Eigen::Index, Eigen::Index>> expected;
  for_each_tensor(reference, [&](const std::string&, const auto& t, bool) {
    expected.emplace_back(t.rows(), t.cols());
  });
  std::size_t i = 0;
  bool ok = params.encoder.size() == reference.encoder.size() &&
            params.decoder.size() == reference.decoder.size();
  if (ok) {
    for_each_tensor(params, [&](const std::string& name, const auto& t, bool) {
      if (i >= expected.size() || t.rows() != expected[i].first ||
          t.cols() != expected[i].second) {
        throw std::invalid_argument("parameter '" + name + "' has shape " +
                                    std::to_string(t.rows()) + "x" + std::to_string(t.cols()) +
                                    ", config expects a different shape");
      }
      ++i;
    });
  }
  if (!ok || i != expected.size()) {
    throw std::invalid_argument("parameter tree does not match config layer counts");
  }
}

std::size_t trainable_parameter_count(const VaeParams& params) {
  std::size_t total = 0;
  for_each_tensor(params, [&](const std::string&, const auto& t, bool trainable) {
    if (trainable) total += static_cast<std::size_t>(t.size());
  });
  return total;
}

Encoded encode(const VaeParams& params, const Matrix& x, Mode mode, double bn_epsilon) {
  if (params.encoder.empty()) throw std::invalid_argument("encode: empty encoder");
  if (x.cols() != params.encoder.front().linear.weight.cols()) {
    throw std::invalid_argument("encode: input has " + std::to_string(x.cols()) +
                                " columns, model expects " +
                                std::to_string(params.encoder.front().linear.weight.cols()));
  }
  Encoded out;
  out.mode = mode;
  auto stack = run_stack(params.encoder, x, mode, bn_epsilon);
  out.layers = std::move(stack.caches);
  out.features = std::move(stack.output);
  out.posterior.mu = affine(params.mu_head, out.features);
  out.raw_log_var = affine(params.log_var_head, out.features);
  out.posterior.log_var = out.raw_log_var.cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
  return out;
}

Decoded decode(const VaeParams& params, const Matrix& z, Mode mode, double bn_epsilon) {
  if (params.decoder.empty()) throw std::invalid_argument("decode: empty decoder");
  if (z.cols() != params.decoder.front().linear.weight.cols()) {
    throw std::invalid_argument("decode: latent has " + std::to_string(z.cols()) +
                                " columns, model expects " +
                                std::to_string(params.decoder.front().linear.weight.cols()));
  }
  Decoded out;
  out.mode = mode;
  auto stack = run_stack(params.decoder, z, mode, bn_epsilon);
  out.layers = std::move(stack.caches);
  out.features = std::move(stack.output);
  out.mu_hat = affine(params.output, out.features);
  return out;
}

void commit_batch_stats(std::vector<HiddenLayer>& layers, const std::vector<LayerCache>& caches,
                        double momentum) {
  if (layers.size() != caches.size()) throw StaleCacheError("commit_batch_stats: layer mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const double batch = static_cast<double>(caches[i].input.rows());
    // Running variance tracks the unbiased estimate.
    const Vector unbiased = caches[i].batch_var * (batch / (batch - 1.0));
    auto& norm = layers[i].norm;
    norm.running_mean = (1.0 - momentum) * norm.running_mean + momentum * caches[i].batch_mean;
    norm.running_var = (1.0 - momentum) * norm.running_var + momentum * unbiased;
  }
}

Encoded encode_train(VaeParams& params, const Matrix& x, const VaeConfig& config) {
  Encoded enc = encode(params, x, Mode::Train, config.bn_epsilon);
  commit_batch_stats(params.encoder, enc.layers, config.bn_momentum);
  return enc;
}

Matrix encode_means(const VaeParams& params, const Matrix& x, const VaeConfig& config) {
  return encode(params, x, Mode::Eval, config.bn_epsilon).posterior.mu;
}

Matrix draw_noise(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix noise(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) noise(r, c) = rng.normal();
  }
  return noise;
}

LatentSample reparameterize_with_noise(const PosteriorParams& posterior, Matrix noise) {
  if (noise.rows() != posterior.mu.rows() || noise.cols() != posterior.mu.cols()) {
    throw std::invalid_argument("reparameterize: noise shape mismatch");
  }
  LatentSample sample;
  const Matrix clamped = posterior.log_var.cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
  sample.z = posterior.mu.array() + (0.5 * clamped.array()).exp() * noise.array();
  sample.noise = std::move(noise);
  return sample;
}

LatentSample reparameterize(const PosteriorParams& posterior, std::uint64_t seed) {
  return reparameterize_with_noise(posterior,
                                   draw_noise(posterior.mu.rows(), posterior.mu.cols(), seed));
}

Vector kl_divergence(const PosteriorParams& posterior) {
  const auto& lv = posterior.log_var.array();
  const auto& mu = posterior.mu.array();
  return (0.5 * (mu.square() + lv.exp() - 1.0 - lv)).rowwise().sum().matrix();
}

LossTerms loss(const Matrix& x, const Matrix& mu_hat, const PosteriorParams& posterior,
               double beta, std::size_t latent_dim) {
  if (x.rows() != mu_hat.rows() || x.cols() != mu_hat.cols()) {
    throw std::invalid_argument("loss: reconstruction shape mismatch");
  }
  if (posterior.mu.rows() != x.rows() || posterior.log_var.rows() != x.rows() ||
      posterior.mu.cols() != posterior.log_var.cols()) {
    throw std::invalid_argument("loss: posterior shape mismatch");
  }
  if (latent_dim == 0) throw std::invalid_argument("loss: latent_dim must be positive");
  const double batch = static_cast<double>(x.rows());
  LossTerms terms;
  terms.mse = (mu_hat - x).array().square().sum() / batch;
  terms.kld = kl_divergence(posterior).sum() / batch;
  terms.total = terms.mse + (beta / static_cast<double>(latent_dim)) * terms.kld;
  return terms;
}

ForwardPass forward(const VaeParams& params, const Matrix& x, const Matrix& noise, double beta,
                    const VaeConfig& config) {
  ForwardPass pass;
  pass.input = x;
  pass.encoded = encode(params, x, Mode::Train, config.bn_epsilon);
  pass.latent = reparameterize_with_noise(pass.encoded.posterior, noise);
  pass.decoded = decode(params, pass.latent.z, Mode::Train, config.bn_epsilon);
  pass.loss = loss(x, pass.decoded.mu_hat, pass.encoded.posterior, beta, config.latent_dim);
  return pass;
}

Gradients backward(const VaeParams& params, const ForwardPass& pass, const Matrix& x, double beta,
                   std::size_t latent_dim) {
  if (pass.encoded.mode != Mode::Train || pass.decoded.mode != Mode::Train) {
    throw StaleCacheError("backward: caches must come from a train-mode forward pass");
  }
  if (x.rows() != pass.input.rows() || x.cols() != pass.input.cols() || x != pass.input) {
    throw StaleCacheError("backward: input does not match the cached forward pass");
  }
  const auto& posterior = pass.encoded.posterior;
  if (static_cast<std::size_t>(posterior.mu.cols()) != latent_dim ||
      params.mu_head.weight.rows() != posterior.mu.cols() ||
      pass.encoded.layers.size() != params.encoder.size() ||
      pass.decoded.layers.size() != params.decoder.size()) {
    throw StaleCacheError("backward: cache shapes do not match parameters");
  }

  Gradients grads = zeros_like(params);
  const double batch = static_cast<double>(x.rows());
  const double kl_scale = beta / (static_cast<double>(latent_dim) * batch);

  // Decoder.
  const Matrix d_mu_hat = (2.0 / batch) * (pass.decoded.mu_hat - x);
  grads.output.weight = d_mu_hat.transpose() * pass.decoded.features;
  grads.output.bias = d_mu_hat.colwise().sum().transpose();
  Matrix d_features = d_mu_hat * params.output.weight;
  const Matrix d_z = backprop_stack(params.decoder, pass.decoded.layers, d_features, grads.decoder);

  // Reparameterization and KL.
  const Matrix sigma = (0.5 * posterior.log_var.array()).exp();
  Matrix d_mu = d_z + kl_scale * posterior.mu;
  Matrix d_log_var = (0.5 * d_z.array() * pass.latent.noise.array() * sigma.array()) +
                     (0.5 * kl_scale) * (posterior.log_var.array().exp() - 1.0);
  // Clamped entries pass no gradient to the head.
  d_log_var = (pass.encoded.raw_log_var.array() < kLogVarMin ||
               pass.encoded.raw_log_var.array() > kLogVarMax)
                  .select(0.0, d_log_var);

  grads.mu_head.weight = d_mu.transpose() * pass.encoded.features;
  grads.mu_head.bias = d_mu.colwise().sum().transpose();
  grads.log_var_head.weight = d_log_var.transpose() * pass.encoded.features;
  grads.log_var_head.bias = d_log_var.colwise().sum().transpose();
  Matrix d_enc = d_mu * params.mu_head.weight + d_log_var * params.log_var_head.weight;
  backprop_stack(params.encoder, pass.encoded.layers, d_enc, grads.encoder);
  return grads;
}

Gradients finite_diff_grad(const VaeParams& params, const Matrix& x, double beta,
                           const VaeConfig& config, std::uint64_t seed, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  const Matrix noise = draw_noise(x.rows(), static_cast<Eigen::Index>(config.latent_dim), seed);
  VaeParams probe = params;
  Gradients grads = zeros_like(params);

  std::vector<double*> probe_slots;
  std::vector<double*> grad_slots;
  for_each_tensor(probe, [&](const std::string&, auto& t, bool trainable) {
    if (!trainable) return;
    for (Eigen::Index i = 0; i < t.size(); ++i) probe_slots.push_back(t.data() + i);
  });
  for_each_tensor(grads, [&](const std::string&, auto& t, bool trainable) {
    if (!trainable) return;
    for (Eigen::Index i = 0; i < t.size(); ++i) grad_slots.push_back(t.data() + i);
  });

  for (std::size_t k = 0; k < probe_slots.size(); ++k) {
    double& slot = *probe_slots[k];
    const double original = slot;
    slot = original + step;
    const double plus = forward(probe, x, noise, beta, config).loss.total;
    slot = original - step;
    const double minus = forward(probe, x, noise, beta, config).loss.total;
    slot = original;
    *grad_slots[k] = (plus - minus) / (2.0 * step);
  }
  return grads;
}

}  // namespace rmacvae
