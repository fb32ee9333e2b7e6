#include "rmacvae/synthdata.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

#include "rmacvae/rng.hpp"

namespace rmacvae {

void FactorSpec::validate() const {
  if (cardinalities.empty()) throw std::invalid_argument("factor spec: no factors");
  for (auto card : cardinalities) {
    if (card < 2) throw std::invalid_argument("factor spec: every cardinality must be >= 2");
  }
  if (map_channels == 0 || map_h == 0 || map_w == 0) {
    throw std::invalid_argument("factor spec: map shape must be positive");
  }
}

FactorTable gen_factor_grid(const FactorSpec& spec, std::size_t cap) {
  spec.validate();
  std::size_t rows = 1;
  for (auto card : spec.cardinalities) {
    if (rows > cap / card) {
      throw std::invalid_argument("gen_factor_grid: grid exceeds cap of " + std::to_string(cap));
    }
    rows *= card;
  }
  FactorTable table;
  table.cardinalities = spec.cardinalities;
  const std::size_t f = spec.cardinalities.size();
  table.values.resize(rows * f);
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t rest = i;
    for (std::size_t k = f; k-- > 0;) {
      table.values[i * f + k] = static_cast<std::int32_t>(rest % spec.cardinalities[k]);
      rest /= spec.cardinalities[k];
    }
  }
  return table;
}

namespace {

struct MapBasis {
  // Per factor: a channel signature and a smooth spatial field.
  std::vector<std::vector<double>> signature;
  std::vector<std::vector<double>> field;  // h * w
  std::vector<double> offset;              // per channel, may be negative
  std::vector<double> blob_signature;
  double blob_width = 1.0;
};

MapBasis make_basis(const FactorSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t f = spec.cardinalities.size();
  const std::size_t hw = spec.map_h * spec.map_w;
  MapBasis basis;
  for (std::size_t k = 0; k < f; ++k) {
    std::vector<double> a(spec.map_channels);
    for (auto& v : a) v = rng.normal();
    // Orthogonal to earlier signatures with unit RMS.
    for (const auto& prev : basis.signature) {
      double dot = 0.0;
      double prev_sq = 0.0;
      for (std::size_t ch = 0; ch < a.size(); ++ch) {
        dot += a[ch] * prev[ch];
        prev_sq += prev[ch] * prev[ch];
      }
      if (prev_sq > 0.0) {
        for (std::size_t ch = 0; ch < a.size(); ++ch) a[ch] -= dot / prev_sq * prev[ch];
      }
    }
    double sq = 0.0;
    for (double v : a) sq += v * v;
    const double scale = sq > 0.0 ? std::sqrt(static_cast<double>(a.size()) / sq) : 0.0;
    for (auto& v : a) v *= scale;
    basis.signature.push_back(std::move(a));

    const double fr = rng.uniform(0.3, 1.2);
    const double fc = rng.uniform(0.3, 1.2);
    const double pr = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double pc = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::vector<double> field(hw);
    for (std::size_t r = 0; r < spec.map_h; ++r) {
      for (std::size_t c = 0; c < spec.map_w; ++c) {
        field[r * spec.map_w + c] = 1.0 + 0.5 * std::cos(fr * static_cast<double>(r) + pr) *
                                              std::cos(fc * static_cast<double>(c) + pc);
      }
    }
    basis.field.push_back(std::move(field));
  }
  basis.offset.resize(spec.map_channels);
  for (auto& v : basis.offset) v = 0.5 * rng.normal();
  basis.blob_signature.resize(spec.map_channels);
  for (auto& v : basis.blob_signature) v = std::abs(rng.normal()) + 0.5;
  basis.blob_width = 0.15 * static_cast<double>(std::max(spec.map_h, spec.map_w)) + 0.5;
  return basis;
}

}  // namespace

DfmDataset gen_feature_maps(const FactorTable& factors, const FactorSpec& spec,
                            std::uint64_t seed) {
  spec.validate();
  factors.validate();
  if (factors.cardinalities != spec.cardinalities) {
    throw std::invalid_argument("gen_feature_maps: factor table does not match spec");
  }
  const MapBasis basis = make_basis(spec, seed);
  const std::size_t f = factors.num_factors();
  const std::size_t hw = spec.map_h * spec.map_w;

  DfmDataset out;
  out.n = static_cast<std::uint32_t>(factors.num_rows());
  out.c = static_cast<std::uint32_t>(spec.map_channels);
  out.h = static_cast<std::uint32_t>(spec.map_h);
  out.w = static_cast<std::uint32_t>(spec.map_w);
  out.factors = factors;
  out.data.resize(static_cast<std::size_t>(out.n) * out.record_size());

  std::vector<double> level(f);
  std::vector<double> blob(hw);
  for (std::size_t i = 0; i < out.n; ++i) {
    for (std::size_t k = 0; k < f; ++k) {
      level[k] = 2.0 * static_cast<double>(factors.at(i, k)) /
                     static_cast<double>(factors.cardinalities[k] - 1) -
                 1.0;
    }
    const double row_pos = static_cast<double>(factors.at(i, 0)) /
                           static_cast<double>(factors.cardinalities[0] - 1) *
                           static_cast<double>(spec.map_h - 1);
    const double col_pos = f > 1 ? static_cast<double>(factors.at(i, 1)) /
                                       static_cast<double>(factors.cardinalities[1] - 1) *
                                       static_cast<double>(spec.map_w - 1)
                                 : 0.5 * static_cast<double>(spec.map_w - 1);
    for (std::size_t r = 0; r < spec.map_h; ++r) {
      for (std::size_t c = 0; c < spec.map_w; ++c) {
        const double dr = static_cast<double>(r) - row_pos;
        const double dc = static_cast<double>(c) - col_pos;
        blob[r * spec.map_w + c] =
            2.0 * std::exp(-(dr * dr + dc * dc) / (2.0 * basis.blob_width * basis.blob_width));
      }
    }
    auto record = out.record(i);
    for (std::size_t ch = 0; ch < spec.map_channels; ++ch) {
      for (std::size_t p = 0; p < hw; ++p) {
        double value = basis.offset[ch] + basis.blob_signature[ch] * blob[p];
        for (std::size_t k = 0; k < f; ++k) {
          value += basis.signature[k][ch] * level[k] * basis.field[k][p];
        }
        record[ch * hw + p] = static_cast<float>(std::max(0.0, value));
      }
    }
  }

  // Injectivity: distinct factor rows must give distinct maps.
  std::unordered_set<std::string_view> factor_rows;
  std::unordered_set<std::string_view> maps;
  const auto* fbase = reinterpret_cast<const char*>(out.factors->values.data());
  const auto* mbase = reinterpret_cast<const char*>(out.data.data());
  const std::size_t fbytes = f * sizeof(std::int32_t);
  const std::size_t mbytes = out.record_size() * sizeof(float);
  for (std::size_t i = 0; i < out.n; ++i) {
    const bool new_factor = factor_rows.emplace(fbase + i * fbytes, fbytes).second;
    const bool new_map = maps.emplace(mbase + i * mbytes, mbytes).second;
    if (new_factor != new_map) {
      throw std::logic_error("gen_feature_maps: generator is not injective at record " +
                             std::to_string(i));
    }
  }
  return out;
}

RepresentationSet gen_identity_codes(const FactorTable& factors, std::size_t noise_dims,
                                     std::uint64_t seed) {
  factors.validate();
  const std::size_t n = factors.num_rows();
  const std::size_t f = factors.num_factors();
  RepresentationSet rep;
  rep.factors = factors;
  rep.latents.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f + noise_dims));
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t k = 0; k < f; ++k) rep.latents(row, static_cast<Eigen::Index>(k)) = factors.at(i, k);
    for (std::size_t k = 0; k < noise_dims; ++k) {
      rep.latents(row, static_cast<Eigen::Index>(f + k)) = rng.normal();
    }
  }
  return rep;
}

DfmDataset representation_to_dfm(const RepresentationSet& rep) {
  DfmDataset out;
  out.n = static_cast<std::uint32_t>(rep.size());
  out.c = static_cast<std::uint32_t>(rep.latent_dim());
  out.data.resize(rep.size() * rep.latent_dim());
  for (std::size_t i = 0; i < rep.size(); ++i) {
    for (std::size_t j = 0; j < rep.latent_dim(); ++j) {
      out.data[i * rep.latent_dim() + j] =
          static_cast<float>(rep.latents(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  out.factors = rep.factors;
  return out;
}

}  // namespace rmacvae
