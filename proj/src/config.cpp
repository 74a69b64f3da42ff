#include "dqmp/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dqmp/errors.hpp"

namespace dqmp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (item.empty()) throw DomainError("empty list item in '" + v + "'");
    out.push_back(item);
  }
  if (out.empty()) throw DomainError("empty list");
  return out;
}

double to_double(const std::string& v) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw DomainError("not a number: '" + v + "'");
  return x;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw DomainError("not a non-negative integer: '" + v + "'");
  return x;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw DomainError("not a boolean: '" + v + "'");
}

std::string fmt(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

std::string fmt(std::uint64_t x) { return std::to_string(x); }
std::string fmt(bool b) { return b ? "true" : "false"; }

template <class T, class F>
std::string join(const std::vector<T>& xs, F f, const char* sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += f(xs[i]);
  }
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(v)) out.push_back(to_size(s));
  return out;
}

std::string fmt_sizes(const std::vector<std::size_t>& xs) {
  return join(xs, [](std::size_t x) { return std::to_string(x); });
}

std::array<double, 2> to_range(const std::string& v) {
  const auto parts = split_list(v);
  if (parts.size() != 2) throw DomainError("expected 'lo, hi'");
  return {to_double(parts[0]), to_double(parts[1])};
}

kvfd::ParameterVector to_theta(const std::string& v) {
  const auto parts = split_list(v);
  if (parts.size() != 3) throw DomainError("expected 'e0, alpha, tau'");
  return {to_double(parts[0]), to_double(parts[1]), to_double(parts[2])};
}

std::string fmt_theta(const kvfd::ParameterVector& p) { return fmt(p.e0) + ", " + fmt(p.alpha) + ", " + fmt(p.tau); }

std::vector<Region> to_regions(const std::string& v) {
  std::vector<Region> out;
  for (const auto& item : split_list(v, ';')) {
    std::vector<double> xs;
    for (const auto& s : split_list(item)) xs.push_back(to_double(s));
    if (xs.size() != 7) throw DomainError("region needs 'row0, col0, rows, cols, e0, alpha, tau'");
    for (int i = 0; i < 4; ++i) {
      if (xs[i] < 0 || xs[i] != static_cast<double>(static_cast<std::size_t>(xs[i]))) {
        throw DomainError("region bounds must be non-negative integers");
      }
    }
    out.push_back({static_cast<std::size_t>(xs[0]), static_cast<std::size_t>(xs[1]), static_cast<std::size_t>(xs[2]),
                   static_cast<std::size_t>(xs[3]), {xs[4], xs[5], xs[6]}});
  }
  return out;
}

std::string fmt_regions(const std::vector<Region>& rs) {
  return join(
      rs,
      [](const Region& r) {
        return std::to_string(r.row0) + ", " + std::to_string(r.col0) + ", " + std::to_string(r.rows) + ", " +
               std::to_string(r.cols) + ", " + fmt_theta(r.theta);
      },
      "; ");
}

const char* optimizer_name(nnet::Optimizer o) { return o == nnet::Optimizer::Adam ? "adam" : "sgd"; }

nnet::Optimizer optimizer_from_name(const std::string& v) {
  if (v == "adam") return nnet::Optimizer::Adam;
  if (v == "sgd") return nnet::Optimizer::Sgd;
  throw DomainError("unknown optimizer '" + v + "'");
}

const char* next_value_name(NextValue n) { return n == NextValue::RewardLookahead ? "reward_lookahead" : "q_value"; }

NextValue next_value_from_name(const std::string& v) {
  if (v == "reward_lookahead") return NextValue::RewardLookahead;
  if (v == "q_value") return NextValue::QValue;
  throw DomainError("unknown next_value '" + v + "'");
}

struct Entry {
  const char* key;
  const char* doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define DQMP_DOUBLE(KEY, FIELD, DOC) \
  {KEY, DOC, [](RunConfig& c, const std::string& v) { c.FIELD = to_double(v); }, [](const RunConfig& c) { return fmt(c.FIELD); }}
#define DQMP_SIZE(KEY, FIELD, DOC)                                                    \
  {KEY, DOC, [](RunConfig& c, const std::string& v) { c.FIELD = to_size(v); }, \
   [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.FIELD)); }}
#define DQMP_BOOL(KEY, FIELD, DOC) \
  {KEY, DOC, [](RunConfig& c, const std::string& v) { c.FIELD = to_bool(v); }, [](const RunConfig& c) { return fmt(c.FIELD); }}

// Application order: `protocol` must precede the protocol.* fields.
const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"box.e0", "E0 range (Pa): lo, hi",
       [](RunConfig& c, const std::string& v) {
         const auto r = to_range(v);
         c.box.lo[0] = r[0];
         c.box.hi[0] = r[1];
       },
       [](const RunConfig& c) { return fmt(c.box.lo[0]) + ", " + fmt(c.box.hi[0]); }},
      {"box.alpha", "alpha range: lo, hi",
       [](RunConfig& c, const std::string& v) {
         const auto r = to_range(v);
         c.box.lo[1] = r[0];
         c.box.hi[1] = r[1];
       },
       [](const RunConfig& c) { return fmt(c.box.lo[1]) + ", " + fmt(c.box.hi[1]); }},
      {"box.tau", "tau range (s): lo, hi",
       [](RunConfig& c, const std::string& v) {
         const auto r = to_range(v);
         c.box.lo[2] = r[0];
         c.box.hi[2] = r[1];
       },
       [](const RunConfig& c) { return fmt(c.box.lo[2]) + ", " + fmt(c.box.hi[2]); }},
      {"protocol", "relaxation | load-unload | creep-sphere | creep-plate; loads that protocol's preset",
       [](RunConfig& c, const std::string& v) { c.protocol = kvfd::preset(kvfd::protocol_from_name(v)); },
       [](const RunConfig& c) { return std::string(kvfd::protocol_name(c.protocol.protocol)); }},
      DQMP_DOUBLE("protocol.ramp_time", protocol.ramp_time, "ramp time Tr (s)"),
      DQMP_DOUBLE("protocol.hold_time", protocol.hold_time, "hold time after the ramp (s); unused by load-unload"),
      DQMP_DOUBLE("protocol.probe_radius", protocol.probe_radius, "spherical probe radius (m)"),
      DQMP_DOUBLE("protocol.max_depth", protocol.max_depth, "peak indentation depth (m), displacement-controlled"),
      DQMP_DOUBLE("protocol.max_force", protocol.max_force, "peak force (N), sphere creep"),
      DQMP_DOUBLE("protocol.sigma0", protocol.sigma0, "plateau stress (Pa), plate creep"),
      DQMP_DOUBLE("protocol.plate_area", protocol.plate_area, "plate area (m^2), plate creep"),
      DQMP_SIZE("curve.points", m, "samples per curve"),
      {"noise.family", "noise on generated curves: none | gaussian | uniform | rayleigh | exponential",
       [](RunConfig& c, const std::string& v) { c.noise.family = noise_family_from_name(v); },
       [](const RunConfig& c) { return std::string(noise_family_name(c.noise.family)); }},
      DQMP_DOUBLE("noise.scale", noise.scale, "noise scale in curve units (or fraction of max|Y| if relative)"),
      DQMP_BOOL("noise.zero_mean", noise.zero_mean, "remove the mean of rayleigh/exponential draws"),
      DQMP_BOOL("noise.relative", noise.relative, "scale noise by max|Y| of each curve"),
      DQMP_SIZE("gen.count", gen_count, "records per generated dataset"),
      DQMP_DOUBLE("gen.step_frac", gen_step_frac, "action step used for reward-network targets"),
      {"split.fractions", "train, validation, test fractions",
       [](RunConfig& c, const std::string& v) {
         const auto parts = split_list(v);
         if (parts.size() != 3) throw DomainError("expected three fractions");
         for (int i = 0; i < 3; ++i) c.split[i] = to_double(parts[i]);
       },
       [](const RunConfig& c) { return fmt(c.split[0]) + ", " + fmt(c.split[1]) + ", " + fmt(c.split[2]); }},
      {"net.din_layers", "LSTM widths of the initial-guess network",
       [](RunConfig& c, const std::string& v) { c.din_layers = to_sizes(v); },
       [](const RunConfig& c) { return fmt_sizes(c.din_layers); }},
      {"net.drn_layers", "LSTM widths of the reward network",
       [](RunConfig& c, const std::string& v) { c.drn_layers = to_sizes(v); },
       [](const RunConfig& c) { return fmt_sizes(c.drn_layers); }},
      DQMP_SIZE("train.epochs", train.epochs, "training epochs"),
      DQMP_SIZE("train.batch_size", train.batch_size, "minibatch size"),
      DQMP_DOUBLE("train.learning_rate", train.learning_rate, "optimizer step size"),
      {"train.optimizer", "adam | sgd",
       [](RunConfig& c, const std::string& v) { c.train.optimizer = optimizer_from_name(v); },
       [](const RunConfig& c) { return std::string(optimizer_name(c.train.optimizer)); }},
      DQMP_DOUBLE("train.adam_beta1", train.adam_beta1, "Adam first-moment decay"),
      DQMP_DOUBLE("train.adam_beta2", train.adam_beta2, "Adam second-moment decay"),
      DQMP_DOUBLE("train.adam_eps", train.adam_eps, "Adam denominator guard"),
      DQMP_SIZE("train.early_stop_patience", train.early_stop_patience, "epochs without validation gain; 0 disables"),
      DQMP_DOUBLE("train.clip_norm", train.clip_norm, "global gradient norm clip; 0 disables"),
      DQMP_DOUBLE("train.loss_theta", train.loss.weights.theta, "initial-guess loss: parameter term weight"),
      DQMP_DOUBLE("train.loss_curve", train.loss.weights.curve, "initial-guess loss: curve term weight"),
      {"train.param_weights", "initial-guess loss: per-parameter weights (e0, alpha, tau)",
       [](RunConfig& c, const std::string& v) {
         const auto t = to_theta(v);
         c.train.loss.weights.per_param = {t.e0, t.alpha, t.tau};
       },
       [](const RunConfig& c) {
         const auto& w = c.train.loss.weights.per_param;
         return fmt(w[0]) + ", " + fmt(w[1]) + ", " + fmt(w[2]);
       }},
      DQMP_DOUBLE("train.fd_step", train.loss.fd_step, "normalized step for the curve-term gradient"),
      DQMP_DOUBLE("dqmp.xi", dqmp.xi, "Q learning rate"),
      DQMP_DOUBLE("dqmp.gamma", dqmp.gamma, "discount factor"),
      DQMP_DOUBLE("dqmp.step_frac", dqmp.step_frac, "multiplicative parameter step per action"),
      DQMP_SIZE("dqmp.max_iters", dqmp.max_iters, "iteration limit"),
      DQMP_DOUBLE("dqmp.mae_tol", dqmp.mae_tol, "converged below this normalized mae"),
      DQMP_SIZE("dqmp.stall_window", dqmp.stall_window, "stalled when the best mae gains < 1% over this many iterations; 0 disables"),
      {"dqmp.next_value", "reward_lookahead | q_value",
       [](RunConfig& c, const std::string& v) { c.dqmp.next_value = next_value_from_name(v); },
       [](const RunConfig& c) { return std::string(next_value_name(c.dqmp.next_value)); }},
      DQMP_BOOL("dqmp.reuse_prediction", dqmp.reuse_prediction, "next-state global reward reuses the current prediction"),
      DQMP_BOOL("dqmp.rescale_e0", dqmp.rescale_e0, "least-squares amplitude correction of the initial E0"),
      DQMP_DOUBLE("reward.beta_g", reward.beta_g, "weight of the learned global reward"),
      DQMP_DOUBLE("reward.beta_theta", reward.beta_theta, "parameter-term weight in the global reward target"),
      DQMP_DOUBLE("reward.beta_c", reward.beta_c, "curve-term weight in the global reward target"),
      DQMP_DOUBLE("reward.e_min", reward.e_min, "mae with curve reward 1"),
      DQMP_DOUBLE("reward.e_max", reward.e_max, "mae with curve reward 0"),
      DQMP_DOUBLE("lm.lambda0", lm.lambda0, "initial damping"),
      DQMP_DOUBLE("lm.lambda_up", lm.lambda_up, "damping factor after a rejected step"),
      DQMP_DOUBLE("lm.lambda_down", lm.lambda_down, "damping factor after an accepted step"),
      DQMP_SIZE("lm.max_iters", lm.max_iters, "step limit"),
      DQMP_DOUBLE("lm.gradient_tol", lm.gradient_tol, "converged below this gradient max-norm"),
      DQMP_DOUBLE("lm.fd_step", lm.fd_step, "central-difference step (normalized)"),
      DQMP_DOUBLE("lm.lambda_max", lm.lambda_max, "stalled beyond this damping"),
      {"lm.init_mode", "box_midpoint | random_seeded | din",
       [](RunConfig& c, const std::string& v) { c.lm.init_mode = lm_init_from_name(v); },
       [](const RunConfig& c) { return std::string(lm_init_name(c.lm.init_mode)); }},
      DQMP_SIZE("phantom.rows", phantom.rows, "phantom grid rows"),
      DQMP_SIZE("phantom.cols", phantom.cols, "phantom grid columns"),
      {"phantom.regions", "'row0, col0, rows, cols, e0, alpha, tau' items separated by ';' tiling the grid",
       [](RunConfig& c, const std::string& v) { c.phantom.regions = to_regions(v); },
       [](const RunConfig& c) { return fmt_regions(c.phantom.regions); }},
      {"phantom.methods", "fitters to compare: dqmp, ql, lsm",
       [](RunConfig& c, const std::string& v) { c.phantom_methods = split_list(v); },
       [](const RunConfig& c) { return join(c.phantom_methods, [](const std::string& s) { return s; }); }},
      {"phantom.noise.family", "phantom curve noise family",
       [](RunConfig& c, const std::string& v) { c.phantom.noise.family = noise_family_from_name(v); },
       [](const RunConfig& c) { return std::string(noise_family_name(c.phantom.noise.family)); }},
      DQMP_DOUBLE("phantom.noise.scale", phantom.noise.scale, "phantom noise scale"),
      DQMP_BOOL("phantom.noise.zero_mean", phantom.noise.zero_mean, "remove the mean of rayleigh/exponential draws"),
      DQMP_BOOL("phantom.noise.relative", phantom.noise.relative, "scale phantom noise by max|Y|"),
      {"sweep.theta", "true parameters of the swept curve: e0, alpha, tau",
       [](RunConfig& c, const std::string& v) { c.sweep.theta = to_theta(v); },
       [](const RunConfig& c) { return fmt_theta(c.sweep.theta); }},
      {"sweep.protocols", "protocols swept",
       [](RunConfig& c, const std::string& v) {
         c.sweep_protocols.clear();
         for (const auto& s : split_list(v)) c.sweep_protocols.push_back(kvfd::protocol_from_name(s));
       },
       [](const RunConfig& c) {
         return join(c.sweep_protocols, [](kvfd::Protocol p) { return std::string(kvfd::protocol_name(p)); });
       }},
      {"sweep.noises", "noise families swept",
       [](RunConfig& c, const std::string& v) {
         c.sweep_noises.clear();
         for (const auto& s : split_list(v)) c.sweep_noises.push_back(noise_family_from_name(s));
       },
       [](const RunConfig& c) {
         return join(c.sweep_noises, [](NoiseFamily f) { return std::string(noise_family_name(f)); });
       }},
      DQMP_DOUBLE("sweep.noise_scale", sweep_noise.scale, "noise scale of every swept family"),
      DQMP_BOOL("sweep.noise_zero_mean", sweep_noise.zero_mean, "remove the mean of rayleigh/exponential draws"),
      DQMP_BOOL("sweep.noise_relative", sweep_noise.relative, "scale swept noise by max|Y|"),
      DQMP_SIZE("sweep.n_curves", sweep.n_curves, "noisy replicas per (protocol, noise) cell"),
      {"sweep.method", "fitter used by the sweep: dqmp | ql | lsm",
       [](RunConfig& c, const std::string& v) { c.sweep_method = v; },
       [](const RunConfig& c) { return c.sweep_method; }},
      {"paths.din", "initial-guess network file; {protocol} expands to the protocol name",
       [](RunConfig& c, const std::string& v) { c.din_path = v; }, [](const RunConfig& c) { return c.din_path; }},
      {"paths.drn", "reward network file; {protocol} expands to the protocol name",
       [](RunConfig& c, const std::string& v) { c.drn_path = v; }, [](const RunConfig& c) { return c.drn_path; }},
      {"seed", "master seed (overridden by --seed)",
       [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); }, [](const RunConfig& c) { return fmt(c.seed); }},
      {"threads", "worker threads (overridden by --threads)",
       [](RunConfig& c, const std::string& v) { c.threads = static_cast<unsigned>(to_u64(v)); },
       [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.threads)); }},
  };
  return table;
}

#undef DQMP_DOUBLE
#undef DQMP_SIZE
#undef DQMP_BOOL

bool is_fitter_name(const std::string& s) { return s == "dqmp" || s == "ql" || s == "lsm"; }

}  // namespace

void RunConfig::propagate() {
  dqmp.box = box;
  lm.box = box;
  train.loss.box = box;
  train.loss.proto = protocol;
  train.loss.curve_points = m;
  train.threads = threads;
  phantom.protocol = protocol;
  phantom.m = m;
  sweep.m = m;
  sweep.protocols.clear();
  for (auto p : sweep_protocols) sweep.protocols.push_back(p == protocol.protocol ? protocol : kvfd::preset(p));
  sweep.noises.clear();
  for (auto f : sweep_noises) {
    NoiseSpec n = sweep_noise;
    n.family = f;
    if (f == NoiseFamily::None) n.scale = 0.0;
    sweep.noises.push_back(n);
  }
}

void RunConfig::validate() const {
  box.validate();
  protocol.validate();
  if (m < 2) throw DomainError("curve.points must be at least 2");
  noise.validate();
  if (gen_count < 1) throw DomainError("gen.count must be positive");
  if (!(gen_step_frac > 0.0 && gen_step_frac < 1.0)) throw DomainError("gen.step_frac must lie in (0, 1)");
  double total = 0.0;
  for (double f : split) {
    if (!(f >= 0.0)) throw DomainError("split.fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("split.fractions must sum to 1");
  if (din_layers.empty() || drn_layers.empty()) throw DomainError("network layer lists must be non-empty");
  for (auto w : din_layers) {
    if (w < 1) throw DomainError("layer widths must be positive");
  }
  for (auto w : drn_layers) {
    if (w < 1) throw DomainError("layer widths must be positive");
  }
  train.validate();
  dqmp.validate();
  reward.validate();
  lm.validate();
  phantom.validate();
  if (phantom_methods.empty()) throw DomainError("phantom.methods must not be empty");
  for (const auto& s : phantom_methods) {
    if (!is_fitter_name(s)) throw DomainError("unknown method '" + s + "' in phantom.methods");
  }
  if (!is_fitter_name(sweep_method)) throw DomainError("unknown sweep.method '" + sweep_method + "'");
  kvfd::check_params(sweep.theta);
  if (sweep.n_curves < 1) throw DomainError("sweep.n_curves must be positive");
  if (sweep_protocols.empty() || sweep_noises.empty()) throw DomainError("sweep lists must be non-empty");
  sweep_noise.validate();
}

RunConfig parse_config(const std::string& text) {
  std::map<std::string, std::pair<std::string, int>> values;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DomainError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw DomainError("config line " + std::to_string(lineno) + ": empty key or value");
    }
    if (!values.emplace(key, std::make_pair(value, lineno)).second) {
      throw DomainError("config line " + std::to_string(lineno) + ": repeated key '" + key + "'");
    }
  }
  for (const auto& [key, v] : values) {
    bool known = false;
    for (const auto& e : entries()) known = known || key == e.key;
    if (!known) throw DomainError("config line " + std::to_string(v.second) + ": unknown key '" + key + "'");
  }
  RunConfig cfg;
  for (const auto& e : entries()) {
    const auto it = values.find(e.key);
    if (it == values.end()) continue;
    try {
      e.set(cfg, it->second.first);
    } catch (const DomainError& err) {
      throw DomainError("config line " + std::to_string(it->second.second) + " (" + e.key + "): " + err.what());
    }
  }
  cfg.propagate();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string config_reference() {
  const RunConfig defaults;
  std::string out;
  for (const auto& e : entries()) {
    out += "# ";
    out += e.doc;
    out += "\n";
    const std::string v = e.get(defaults);
    out += v.empty() ? std::string("# ") + e.key + " =\n" : std::string(e.key) + " = " + v + "\n";
  }
  return out;
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) {
    const std::string v = e.get(cfg);
    if (!v.empty()) out += std::string(e.key) + " = " + v + "\n";
  }
  return out;
}

std::string expand_path(const std::string& pattern, kvfd::Protocol p) {
  static const std::string token = "{protocol}";
  std::string out = pattern;
  for (auto pos = out.find(token); pos != std::string::npos; pos = out.find(token, pos)) {
    out.replace(pos, token.size(), kvfd::protocol_name(p));
  }
  return out;
}

bool method_needs_din(const std::string& method, const RunConfig& cfg) {
  return method == "dqmp" || method == "ql" || (method == "lsm" && cfg.lm.init_mode == LmInit::Din);
}

bool method_needs_drn(const std::string& method) { return method == "dqmp"; }

Fitter make_fitter(const std::string& method, const RunConfig& cfg, const NetworkSet& nets) {
  auto lookup = [](const std::map<kvfd::Protocol, nnet::Network>& m, const kvfd::Curve& c,
                   const char* what) -> const nnet::Network& {
    const auto it = m.find(c.protocol.protocol);
    if (it == m.end()) {
      throw DomainError(std::string("no ") + what + " network for protocol " + kvfd::protocol_name(c.protocol.protocol));
    }
    return it->second;
  };
  const DqmpConfig dc = cfg.dqmp;
  const RewardConfig rc = cfg.reward;
  const LmConfig lc = cfg.lm;
  const NetworkSet* ns = &nets;
  if (method == "dqmp") {
    return {method, [=](const kvfd::Curve& c, std::uint64_t) {
              return dqmp_fit(c, lookup(ns->din, c, "din"), lookup(ns->drn, c, "drn"), dc, rc);
            }};
  }
  if (method == "ql") {
    return {method, [=](const kvfd::Curve& c, std::uint64_t) { return ql_fit(c, lookup(ns->din, c, "din"), dc, rc); }};
  }
  if (method == "lsm") {
    return {method, [=](const kvfd::Curve& c, std::uint64_t seed) {
              const nnet::Network* din = lc.init_mode == LmInit::Din ? &lookup(ns->din, c, "din") : nullptr;
              return lm_fit(c, lc, seed, din);
            }};
  }
  throw DomainError("unknown method '" + method + "'");
}

}  // namespace dqmp
