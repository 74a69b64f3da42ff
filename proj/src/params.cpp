#include "dqmp/params.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dqmp/errors.hpp"

namespace dqmp {

void ParameterBox::validate() const {
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || !(lo[i] < hi[i])) {
      throw DomainError("ParameterBox: need finite min < max on coordinate " + std::to_string(i));
    }
  }
  if (lo[0] <= 0.0 || lo[2] <= 0.0) throw DomainError("ParameterBox: e0 and tau ranges must be positive");
  if (lo[1] <= 0.0 || hi[1] >= 1.0) throw DomainError("ParameterBox: alpha range must lie in (0, 1)");
}

bool ParameterBox::contains(const kvfd::ParameterVector& p) const {
  const auto a = to_array(p);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (!(a[i] >= lo[i] && a[i] <= hi[i])) return false;
  }
  return true;
}

kvfd::ParameterVector ParameterBox::clamp(const kvfd::ParameterVector& p) const {
  auto a = to_array(p);
  for (std::size_t i = 0; i < kParamCount; ++i) a[i] = std::clamp(a[i], lo[i], hi[i]);
  return from_array(a);
}

std::array<double, kParamCount> to_array(const kvfd::ParameterVector& p) { return {p.e0, p.alpha, p.tau}; }

kvfd::ParameterVector from_array(const std::array<double, kParamCount>& a) { return {a[0], a[1], a[2]}; }

Normalized normalize_params(const kvfd::ParameterVector& p, const ParameterBox& box) {
  if (!box.contains(p)) throw DomainError("normalize_params: parameters outside the box");
  const auto a = to_array(p);
  Normalized u{};
  for (std::size_t i = 0; i < kParamCount; ++i) u[i] = (a[i] - box.lo[i]) / (box.hi[i] - box.lo[i]);
  return u;
}

kvfd::ParameterVector denormalize_params(std::span<const double> u, const ParameterBox& box) {
  if (u.size() != kParamCount) throw DomainError("denormalize_params: expected 3 coordinates");
  std::array<double, kParamCount> a{};
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (!(u[i] >= 0.0 && u[i] <= 1.0)) throw DomainError("denormalize_params: coordinate outside [0, 1]");
    // Pin the endpoints so the round trip through normalize is exact at the corners.
    if (u[i] == 1.0) {
      a[i] = box.hi[i];
    } else {
      a[i] = box.lo[i] + u[i] * (box.hi[i] - box.lo[i]);
    }
  }
  return from_array(a);
}

kvfd::ParameterVector sample_params(std::mt19937_64& rng, const ParameterBox& box) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Normalized u{};
  for (auto& x : u) x = unit(rng);
  return denormalize_params(u, box);
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) { return mix64(mix64(master) ^ index); }

}  // namespace dqmp
