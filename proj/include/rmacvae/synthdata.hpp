#pragma once

#include <cstdint>
#include <vector>

#include "rmacvae/feature_store.hpp"
#include "rmacvae/metrics.hpp"

namespace rmacvae {

struct FactorSpec {
  std::vector<std::uint32_t> cardinalities{6, 6, 4};
  std::size_t map_channels = 64;
  std::size_t map_h = 7;
  std::size_t map_w = 7;
  std::size_t noise_dims = 2;

  void validate() const;
};

inline constexpr std::size_t kDefaultGridCap = 1'000'000;

/// Full Cartesian product in lexicographic order (last factor fastest).
FactorTable gen_factor_grid(const FactorSpec& spec, std::size_t cap = kDefaultGridCap);

/// Deterministic non-negative feature maps, one per factor row. Each factor
/// drives a channel signature modulated by a smooth spatial field; the first
/// two factors additionally place a Gaussian blob. Distinct factor rows map
/// to distinct maps (checked).
DfmDataset gen_feature_maps(const FactorTable& factors, const FactorSpec& spec,
                            std::uint64_t seed);

/// Oracle code: latent k equals factor k, followed by noise_dims i.i.d.
/// standard normal columns.
RepresentationSet gen_identity_codes(const FactorTable& factors, std::size_t noise_dims,
                                     std::uint64_t seed);

/// Stores a representation as an h = w = 1 .dfm with factor labels.
DfmDataset representation_to_dfm(const RepresentationSet& rep);

}  // namespace rmacvae
