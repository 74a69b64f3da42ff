#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>

#include "dqmp/kvfd.hpp"

namespace dqmp {

inline constexpr std::size_t kParamCount = 3;
using Normalized = std::array<double, kParamCount>;

/// Per-parameter (min, max) ranges, ordered (E0, alpha, tau).
struct ParameterBox {
  std::array<double, kParamCount> lo{10.0, 0.01, 1.0};
  std::array<double, kParamCount> hi{100000.0, 0.99, 1000.0};

  /// Throws DomainError unless lo < hi componentwise (and alpha stays in (0, 1)).
  void validate() const;
  bool contains(const kvfd::ParameterVector& p) const;
  kvfd::ParameterVector clamp(const kvfd::ParameterVector& p) const;
};

std::array<double, kParamCount> to_array(const kvfd::ParameterVector& p);
kvfd::ParameterVector from_array(const std::array<double, kParamCount>& a);

/// (x - min) / (max - min) per component; DomainError outside the box.
Normalized normalize_params(const kvfd::ParameterVector& p, const ParameterBox& box);
/// Inverse of normalize_params; DomainError if any u lies outside [0, 1].
kvfd::ParameterVector denormalize_params(std::span<const double> u, const ParameterBox& box);

/// Uniform draw in normalized space, denormalized.
kvfd::ParameterVector sample_params(std::mt19937_64& rng, const ParameterBox& box);

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);
/// Seed of the generator owned by record/pixel `index` under `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace dqmp
