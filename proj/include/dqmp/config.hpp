#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dqmp/baselines.hpp"
#include "dqmp/datagen.hpp"
#include "dqmp/dqmp.hpp"
#include "dqmp/eval.hpp"
#include "dqmp/nnet.hpp"

namespace dqmp {

/// Everything a CLI run can be told. Populated from `key = value` text;
/// every key has the default shown by config_reference().
struct RunConfig {
  ParameterBox box;
  kvfd::ProtocolConfig protocol = kvfd::preset(kvfd::Protocol::RampRelaxation);
  std::size_t m = 250;
  NoiseSpec noise;  // dataset generation

  std::size_t gen_count = 1000;
  double gen_step_frac = 0.01;
  std::array<double, 3> split{0.8, 0.1, 0.1};

  std::vector<std::size_t> din_layers{64, 32};
  std::vector<std::size_t> drn_layers{64, 64, 64};
  nnet::TrainConfig train;

  DqmpConfig dqmp;
  RewardConfig reward;
  LmConfig lm;

  PhantomSpec phantom = quadrant_phantom();
  std::vector<std::string> phantom_methods{"dqmp", "ql", "lsm"};

  /// sweep.protocols, sweep.noises and sweep.m are rebuilt by propagate()
  /// from the fields below; a swept protocol equal to `protocol` uses its
  /// overrides, any other uses its preset.
  SweepSpec sweep;
  std::vector<kvfd::Protocol> sweep_protocols{kvfd::Protocol::RampRelaxation};
  std::vector<NoiseFamily> sweep_noises{NoiseFamily::None, NoiseFamily::Gaussian};
  NoiseSpec sweep_noise{NoiseFamily::Gaussian, 1e-7, true, false};  // family ignored
  std::string sweep_method = "dqmp";

  std::string din_path;  // "{protocol}" expands to the protocol name
  std::string drn_path;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  /// Copies the shared box, protocol and m into the nested configs.
  void propagate();
  void validate() const;
};

/// Parses config text. Throws DomainError (with the line number) on unknown
/// or repeated keys and malformed values. `protocol` resets the protocol.*
/// fields to that protocol's preset before any protocol.* override applies.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Every key with its default value and a one-line description.
std::string config_reference();
/// Effective configuration as parseable `key = value` lines.
std::string format_config(const RunConfig& cfg);

/// Replaces "{protocol}" in a path template.
std::string expand_path(const std::string& pattern, kvfd::Protocol p);

/// Trained networks keyed by protocol; fitters pick the pair matching the
/// curve's protocol.
struct NetworkSet {
  std::map<kvfd::Protocol, nnet::Network> din;
  std::map<kvfd::Protocol, nnet::Network> drn;
};

/// Which networks a method needs under `cfg`.
bool method_needs_din(const std::string& method, const RunConfig& cfg);
bool method_needs_drn(const std::string& method);

/// "dqmp", "ql" or "lsm" configured from cfg. `nets` must outlive the fitter;
/// a missing network surfaces as DomainError from the fit.
Fitter make_fitter(const std::string& method, const RunConfig& cfg, const NetworkSet& nets);

}  // namespace dqmp
