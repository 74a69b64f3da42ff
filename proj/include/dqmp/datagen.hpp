#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dqmp/kvfd.hpp"
#include "dqmp/params.hpp"
#include "dqmp/rewards.hpp"

namespace dqmp {

enum class NoiseFamily { None, Gaussian, Uniform, Rayleigh, Exponential };

const char* noise_family_name(NoiseFamily f);
NoiseFamily noise_family_from_name(const std::string& name);

/// Additive noise with standard deviation `scale`, in curve units unless
/// `relative` is set, in which case the scale is multiplied by max|Y|.
struct NoiseSpec {
  NoiseFamily family = NoiseFamily::None;
  double scale = 0.0;
  bool zero_mean = true;  // subtract the analytic mean of Rayleigh/Exponential draws
  bool relative = false;

  void validate() const;
};

/// Returns a copy of c with noise added to every value; times are unchanged.
kvfd::Curve add_noise(const kvfd::Curve& c, const NoiseSpec& spec, std::mt19937_64& rng);

/// Min-max maps a curve to [0, 1]. A constant curve maps to zeros and sets
/// `degenerate`.
struct NormalizedCurve {
  std::vector<double> values;
  bool degenerate = false;
};
NormalizedCurve normalize_curve(std::span<const double> y);

enum class DatasetKind : std::uint8_t { Din = 1, Drn = 2 };

/// In-memory DS container: `count` records of m inputs followed by the
/// targets (k for DIN, 2^k for DRN), stored as float.
class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetKind kind, std::uint32_t m, std::uint32_t k);

  DatasetKind kind() const { return kind_; }
  std::uint32_t input_len() const { return m_; }
  std::uint32_t param_count() const { return k_; }
  std::size_t target_len() const;
  std::size_t width() const { return m_ + target_len(); }
  std::size_t size() const { return width() == 0 ? 0 : values_.size() / width(); }

  std::span<const float> inputs(std::size_t i) const;
  std::span<const float> targets(std::size_t i) const;
  std::span<const float> record(std::size_t i) const;

  void append(std::span<const double> inputs, std::span<const double> targets);
  void append_record(std::span<const float> record);
  void reserve(std::size_t records) { values_.reserve(records * width()); }
  void resize(std::size_t records) { values_.resize(records * width()); }
  std::span<float> mutable_record(std::size_t i);

  const std::vector<float>& raw() const { return values_; }

 private:
  DatasetKind kind_ = DatasetKind::Din;
  std::uint32_t m_ = 0;
  std::uint32_t k_ = 0;
  std::vector<float> values_;
};

/// Layout: "DQMPDS1\0", u32 version = 1, u8 kind, u32 m, u32 k, u64 count,
/// then count records of little-endian float32.
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

struct DinGenConfig {
  std::size_t count = 1000;
  ParameterBox box;
  kvfd::ProtocolConfig proto = kvfd::preset(kvfd::Protocol::RampRelaxation);
  std::size_t m = 250;
  NoiseSpec noise;
  unsigned threads = 1;
};

struct DrnGenConfig {
  std::size_t count = 1000;
  ParameterBox box;
  kvfd::ProtocolConfig proto = kvfd::preset(kvfd::Protocol::RampRelaxation);
  std::size_t m = 250;
  double step_frac = 0.01;
  RewardConfig reward;
  NoiseSpec noise;  // applied to the target curve
  unsigned threads = 1;
};

struct GenReport {
  std::size_t degenerate = 0;  // constant curves mapped to zeros
};

/// Record i uses a generator seeded with derive_seed(seed, i), so the output
/// does not depend on the thread count.
Dataset gen_din_dataset(const DinGenConfig& cfg, std::uint64_t seed, GenReport* report = nullptr);
Dataset gen_drn_dataset(const DrnGenConfig& cfg, std::uint64_t seed, GenReport* report = nullptr);

/// Global reward of every action taken from theta_hat, scored against the
/// target curve y_exp and the true parameters theta_true. These are the DRN
/// training targets, and the exact rewards the DRN is meant to predict.
std::vector<double> global_reward_targets(const kvfd::ParameterVector& theta_true,
                                          const kvfd::ParameterVector& theta_hat, std::span<const double> y_exp,
                                          kvfd::CurveEvaluator& eval, double step_frac, const ParameterBox& box,
                                          const RewardConfig& reward);

/// Seeded shuffle, then sizes floor(f0 n), floor(f1 n) and the remainder.
std::array<Dataset, 3> split_dataset(const Dataset& ds, std::array<double, 3> fractions, std::uint64_t seed);

}  // namespace dqmp
