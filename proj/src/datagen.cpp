#include "dqmp/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "dqmp/binio.hpp"
#include "dqmp/errors.hpp"
#include "dqmp/parallel.hpp"

namespace dqmp {

namespace {

constexpr char kMagic[8] = {'D', 'Q', 'M', 'P', 'D', 'S', '1', '\0'};
constexpr std::uint32_t kVersion = 1;

double peak_abs(std::span<const double> y) {
  double peak = 0.0;
  for (double v : y) peak = std::max(peak, std::abs(v));
  return peak;
}

}  // namespace

const char* noise_family_name(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::None: return "none";
    case NoiseFamily::Gaussian: return "gaussian";
    case NoiseFamily::Uniform: return "uniform";
    case NoiseFamily::Rayleigh: return "rayleigh";
    case NoiseFamily::Exponential: return "exponential";
  }
  return "unknown";
}

NoiseFamily noise_family_from_name(const std::string& name) {
  for (NoiseFamily f : {NoiseFamily::None, NoiseFamily::Gaussian, NoiseFamily::Uniform, NoiseFamily::Rayleigh,
                        NoiseFamily::Exponential}) {
    if (name == noise_family_name(f)) return f;
  }
  throw DomainError("unknown noise family '" + name + "'");
}

void NoiseSpec::validate() const {
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw DomainError("NoiseSpec: scale must be finite and >= 0");
}

kvfd::Curve add_noise(const kvfd::Curve& c, const NoiseSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  kvfd::Curve out = c;
  if (spec.family == NoiseFamily::None || spec.scale == 0.0) return out;
  const double s = spec.relative ? spec.scale * peak_abs(c.values) : spec.scale;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (spec.family) {
    case NoiseFamily::None:
      break;
    case NoiseFamily::Gaussian: {
      std::normal_distribution<double> g(0.0, s);
      for (double& v : out.values) v += g(rng);
      break;
    }
    case NoiseFamily::Uniform: {
      const double half = s * std::sqrt(3.0);
      for (double& v : out.values) v += half * (2.0 * unit(rng) - 1.0);
      break;
    }
    case NoiseFamily::Rayleigh: {
      // std of Rayleigh(sigma) is sigma sqrt((4 - pi) / 2); mean sigma sqrt(pi / 2).
      const double sigma = s / std::sqrt((4.0 - std::numbers::pi) / 2.0);
      const double mean = spec.zero_mean ? sigma * std::sqrt(std::numbers::pi / 2.0) : 0.0;
      for (double& v : out.values) v += sigma * std::sqrt(-2.0 * std::log1p(-unit(rng))) - mean;
      break;
    }
    case NoiseFamily::Exponential: {
      const double mean = spec.zero_mean ? s : 0.0;
      for (double& v : out.values) v += -s * std::log1p(-unit(rng)) - mean;
      break;
    }
  }
  return out;
}

NormalizedCurve normalize_curve(std::span<const double> y) {
  NormalizedCurve out;
  out.values.assign(y.size(), 0.0);
  if (y.empty()) return out;
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < y.size(); ++i) out.values[i] = (y[i] - *lo) / range;
  return out;
}

// ---- Dataset ----

Dataset::Dataset(DatasetKind kind, std::uint32_t m, std::uint32_t k) : kind_(kind), m_(m), k_(k) {
  if (m == 0 || k == 0 || k > 16) throw DomainError("Dataset: need m >= 1 and 1 <= k <= 16");
}

std::size_t Dataset::target_len() const { return kind_ == DatasetKind::Din ? k_ : (std::size_t{1} << k_); }

std::span<const float> Dataset::record(std::size_t i) const {
  if (i >= size()) throw DomainError("Dataset: record index out of range");
  return std::span<const float>(values_).subspan(i * width(), width());
}

std::span<float> Dataset::mutable_record(std::size_t i) {
  if (i >= size()) throw DomainError("Dataset: record index out of range");
  return std::span<float>(values_).subspan(i * width(), width());
}

std::span<const float> Dataset::inputs(std::size_t i) const { return record(i).first(m_); }

std::span<const float> Dataset::targets(std::size_t i) const { return record(i).subspan(m_); }

void Dataset::append(std::span<const double> in, std::span<const double> tgt) {
  if (in.size() != m_ || tgt.size() != target_len()) throw DomainError("Dataset: record shape mismatch");
  for (double v : in) values_.push_back(static_cast<float>(v));
  for (double v : tgt) values_.push_back(static_cast<float>(v));
}

void Dataset::append_record(std::span<const float> rec) {
  if (rec.size() != width()) throw DomainError("Dataset: record shape mismatch");
  values_.insert(values_.end(), rec.begin(), rec.end());
}

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(path + ": cannot open for writing");
  os.write(kMagic, sizeof kMagic);
  binio::put_uint<std::uint32_t>(os, kVersion);
  binio::put_uint<std::uint8_t>(os, static_cast<std::uint8_t>(ds.kind()));
  binio::put_uint<std::uint32_t>(os, ds.input_len());
  binio::put_uint<std::uint32_t>(os, ds.param_count());
  binio::put_uint<std::uint64_t>(os, ds.size());
  binio::put_floats(os, ds.raw());
  if (!os.flush()) throw IoError(path + ": write failed");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path + ": cannot open for reading");
  char magic[8];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kMagic)) throw FormatError(path + ": bad magic");
  const auto version = binio::get_uint<std::uint32_t>(is, path);
  if (version != kVersion) throw FormatError(path + ": unsupported version " + std::to_string(version));
  const auto kind = binio::get_uint<std::uint8_t>(is, path);
  if (kind != 1 && kind != 2) throw FormatError(path + ": bad dataset kind");
  const auto m = binio::get_uint<std::uint32_t>(is, path);
  const auto k = binio::get_uint<std::uint32_t>(is, path);
  const auto count = binio::get_uint<std::uint64_t>(is, path);
  if (m == 0 || k == 0 || k > 16) throw FormatError(path + ": bad shape");
  Dataset ds(static_cast<DatasetKind>(kind), m, k);
  ds.resize(count);
  for (std::size_t i = 0; i < count; ++i) binio::get_floats(is, ds.mutable_record(i), path);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path + ": trailing bytes");
  return ds;
}

// ---- generation ----

Dataset gen_din_dataset(const DinGenConfig& cfg, std::uint64_t seed, GenReport* report) {
  if (cfg.count < 1) throw DomainError("gen_din_dataset: count must be >= 1");
  cfg.box.validate();
  cfg.proto.validate();
  cfg.noise.validate();
  Dataset ds(DatasetKind::Din, static_cast<std::uint32_t>(cfg.m), kParamCount);
  ds.resize(cfg.count);
  const auto times = kvfd::time_grid(cfg.proto, cfg.m);
  std::vector<char> degenerate(cfg.count, 0);
  parallel_for(cfg.count, cfg.threads, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    const auto theta = sample_params(rng, cfg.box);
    kvfd::Curve c{cfg.proto, times, std::vector<double>(times.size())};
    for (std::size_t j = 0; j < times.size(); ++j) c.values[j] = kvfd::response(theta, cfg.proto, times[j]);
    c = add_noise(c, cfg.noise, rng);
    const auto norm = normalize_curve(c.values);
    degenerate[i] = norm.degenerate;
    const auto u = normalize_params(theta, cfg.box);
    auto rec = ds.mutable_record(i);
    for (std::size_t j = 0; j < cfg.m; ++j) rec[j] = static_cast<float>(norm.values[j]);
    for (std::size_t j = 0; j < kParamCount; ++j) rec[cfg.m + j] = static_cast<float>(u[j]);
  });
  if (report) report->degenerate = static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1));
  return ds;
}

std::vector<double> global_reward_targets(const kvfd::ParameterVector& theta_true,
                                          const kvfd::ParameterVector& theta_hat, std::span<const double> y_exp,
                                          kvfd::CurveEvaluator& eval, double step_frac, const ParameterBox& box,
                                          const RewardConfig& reward) {
  const auto actions = enumerate_actions(kParamCount);
  const auto u_true = normalize_params(theta_true, box);
  std::vector<double> out(actions.size());
  std::vector<double> y(eval.size());
  for (std::size_t a = 0; a < actions.size(); ++a) {
    const auto cand = apply_action(theta_hat, actions[a], step_frac, box);
    eval.evaluate(cand, y);
    const double r_curve = reward_curve(mae_normalized(y_exp, y), reward);
    const auto u_cand = normalize_params(cand, box);
    const double r_theta = reward_theta(u_true, u_cand);
    out[a] = std::clamp(reward_global(r_theta, r_curve, reward), 0.0, 1.0);
  }
  return out;
}

Dataset gen_drn_dataset(const DrnGenConfig& cfg, std::uint64_t seed, GenReport* report) {
  if (cfg.count < 1) throw DomainError("gen_drn_dataset: count must be >= 1");
  if (!(cfg.step_frac > 0.0)) throw DomainError("gen_drn_dataset: step_frac must be positive");
  cfg.box.validate();
  cfg.proto.validate();
  cfg.reward.validate();
  cfg.noise.validate();
  Dataset ds(DatasetKind::Drn, static_cast<std::uint32_t>(cfg.m), kParamCount);
  ds.resize(cfg.count);
  const auto times = kvfd::time_grid(cfg.proto, cfg.m);
  std::vector<char> degenerate(cfg.count, 0);
  parallel_for(cfg.count, cfg.threads, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    const auto theta = sample_params(rng, cfg.box);
    const auto theta_hat = sample_params(rng, cfg.box);
    kvfd::CurveEvaluator eval(cfg.proto, times, 16);
    kvfd::Curve c{cfg.proto, times, eval.evaluate(theta)};
    c = add_noise(c, cfg.noise, rng);
    const double peak = peak_abs(c.values);
    const auto y_hat = eval.evaluate(theta_hat);
    const auto targets = global_reward_targets(theta, theta_hat, c.values, eval, cfg.step_frac, cfg.box, cfg.reward);
    auto rec = ds.mutable_record(i);
    // Residual stored already scaled by 1/max|Y_exp|: the scale is not kept in
    // the container, and the network sees the same units at fit time.
    if (peak > 0.0) {
      for (std::size_t j = 0; j < cfg.m; ++j) rec[j] = static_cast<float>((c.values[j] - y_hat[j]) / peak);
    } else {
      degenerate[i] = 1;
      for (std::size_t j = 0; j < cfg.m; ++j) rec[j] = 0.0f;
    }
    for (std::size_t a = 0; a < targets.size(); ++a) rec[cfg.m + a] = static_cast<float>(targets[a]);
  });
  if (report) report->degenerate = static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1));
  return ds;
}

std::array<Dataset, 3> split_dataset(const Dataset& ds, std::array<double, 3> fractions, std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f >= 0.0)) throw DomainError("split_dataset: fractions must be non-negative");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw DomainError("split_dataset: fractions must sum to 1");
  }
  const std::size_t n = ds.size();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  const auto n0 = static_cast<std::size_t>(std::floor(fractions[0] * static_cast<double>(n) + 1e-9));
  const auto n1 = static_cast<std::size_t>(std::floor(fractions[1] * static_cast<double>(n) + 1e-9));
  std::array<Dataset, 3> out;
  for (auto& part : out) part = Dataset(ds.kind(), ds.input_len(), ds.param_count());
  out[0].reserve(n0);
  out[1].reserve(n1);
  out[2].reserve(n - std::min(n, n0 + n1));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t part = i < n0 ? 0 : (i < n0 + n1 ? 1 : 2);
    out[part].append_record(ds.record(perm[i]));
  }
  return out;
}

}  // namespace dqmp
