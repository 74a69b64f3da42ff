#include "dqmp/kvfd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Core>

#include "dqmp/errors.hpp"
#include "dqmp/quadrature.hpp"
#include "dqmp/specfn.hpp"

namespace dqmp::kvfd {

namespace {

void check_time(double t) {
  if (!std::isfinite(t) || t < 0.0) throw DomainError("kvfd: time must be finite and non-negative");
}

void require_protocol(const ProtocolConfig& proto, Protocol want, const char* who) {
  if (proto.protocol != want) {
    throw DomainError(std::string(who) + ": protocol mismatch (got " + protocol_name(proto.protocol) + ")");
  }
}

// 4 sqrt(R) v^(3/2), the force scale of the displacement-controlled protocols.
double indentation_scale(const ProtocolConfig& proto) {
  const double v = proto.max_depth / proto.ramp_time;
  return 4.0 * std::sqrt(proto.probe_radius) * v * std::sqrt(v);
}

// Creep prefactor: 3k / (8 sqrt(R)) for the sphere, sigma0 / Tr for the plate.
double creep_scale(const ProtocolConfig& proto) {
  if (proto.protocol == Protocol::RampCreepSphere) {
    const double k = proto.max_force / proto.ramp_time;
    return 3.0 * k / (8.0 * std::sqrt(proto.probe_radius));
  }
  return proto.sigma0 / proto.ramp_time;
}

bool on_ramp(double t, double tr, Side side) {
  if (t == tr) return side != Side::AfterRamp;
  return t < tr;
}

void check_side(const ProtocolConfig& proto, double t, Side side) {
  if ((side == Side::Ramp && t > proto.ramp_time) || (side == Side::AfterRamp && t < proto.ramp_time)) {
    throw DomainError("kvfd: time outside the requested branch");
  }
}

// Integral of w^(-alpha) (c + w)^(1/2) over [0, d]; w = d s^(1/(1-alpha))
// removes the endpoint singularity.
double unload_memory_integral(double alpha, double c, double d) {
  if (d <= 0.0) return 0.0;
  const double e = 1.0 / (1.0 - alpha);
  auto f = [&](double s) { return std::sqrt(c + d * std::pow(s, e)); };
  const auto r = quad::tanh_sinh(f, 0.0, 1.0, 1e-13, 12);
  return std::pow(d, 1.0 - alpha) * e * r.value;
}

// Alpha-dependent part of the displacement-controlled force (without E0,
// without tau^alpha, without the indentation scale).
double memory_term(double alpha, const ProtocolConfig& proto, double t, Side side = Side::Auto) {
  const double tr = proto.ramp_time;
  const double rg = specfn::reciprocal_gamma(1.0 - alpha);
  const double pw = std::pow(t, 1.5 - alpha);
  if (on_ramp(t, tr, side)) return pw * specfn::beta_complete(1.5, 1.0 - alpha) * rg;
  const double held = pw * specfn::beta_incomplete(tr / t, 1.5, 1.0 - alpha);
  if (proto.protocol == Protocol::LoadUnload) {
    return (held - unload_memory_integral(alpha, std::max(0.0, 2.0 * tr - t), t - tr)) * rg;
  }
  return held * rg;
}

double elastic_term(const ProtocolConfig& proto, double t, Side side = Side::Auto) {
  const double tr = proto.ramp_time;
  if (on_ramp(t, tr, side)) return (2.0 / 3.0) * std::pow(t, 1.5);
  if (proto.protocol == Protocol::LoadUnload) return (2.0 / 3.0) * std::pow(std::max(0.0, 2.0 * tr - t), 1.5);
  return (2.0 / 3.0) * std::pow(tr, 1.5);
}

// Creep shape: integral of [1 - E_alpha(-(u/tau)^alpha)] over the loading
// history, per unit load rate.
double creep_shape(double alpha, double tau, double tr, double t, Side side = Side::Auto) {
  auto ml2 = [&](double u) { return specfn::mittag_leffler(alpha, 2.0, -std::pow(u / tau, alpha)); };
  if (on_ramp(t, tr, side)) return t * (1.0 - ml2(t));
  return tr + (t - tr) * ml2(t - tr) - t * ml2(t);
}

double displacement_force(const ParameterVector& p, const ProtocolConfig& proto, double t, Side side) {
  if (t == 0.0) return 0.0;
  return indentation_scale(proto) * p.e0 *
         (elastic_term(proto, t, side) + std::pow(p.tau, p.alpha) * memory_term(p.alpha, proto, t, side));
}

double creep(const ParameterVector& p, const ProtocolConfig& proto, double t, Side side) {
  if (t == 0.0) return 0.0;
  return creep_scale(proto) / p.e0 * creep_shape(p.alpha, p.tau, proto.ramp_time, t, side);
}

// ---- hereditary-integral oracle ----

// Prescribed history: psi for displacement control, load for force control.
double prescribed_psi(const ProtocolConfig& proto, double t) {
  const double v = proto.max_depth / proto.ramp_time;
  const double tr = proto.ramp_time;
  double h = v * std::min(t, tr);
  if (proto.protocol == Protocol::LoadUnload && t > tr) h = v * std::max(0.0, 2.0 * tr - t);
  return h * std::sqrt(h);
}

double prescribed_load(const ProtocolConfig& proto, double t) {
  const double frac = std::min(t, proto.ramp_time) / proto.ramp_time;
  return proto.protocol == Protocol::RampCreepSphere ? proto.max_force * frac : proto.sigma0 * frac;
}

double contact_factor(const ProtocolConfig& proto) {
  return proto.protocol == Protocol::RampCreepPlate ? 1.0 : 8.0 * std::sqrt(proto.probe_radius) / 3.0;
}

// (k+1)^(1-alpha) - k^(1-alpha) without cancellation.
double panel_weight(std::size_t k, double one_minus_alpha) {
  if (k == 0) return 1.0;
  const double kd = static_cast<double>(k);
  return std::pow(kd, one_minus_alpha) * std::expm1(one_minus_alpha * std::log1p(1.0 / kd));
}

}  // namespace

const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::RampRelaxation: return "relaxation";
    case Protocol::LoadUnload: return "load-unload";
    case Protocol::RampCreepSphere: return "creep-sphere";
    case Protocol::RampCreepPlate: return "creep-plate";
  }
  return "unknown";
}

Protocol protocol_from_name(const std::string& name) {
  for (Protocol p : {Protocol::RampRelaxation, Protocol::LoadUnload, Protocol::RampCreepSphere,
                     Protocol::RampCreepPlate}) {
    if (name == protocol_name(p)) return p;
  }
  throw DomainError("unknown protocol '" + name + "'");
}

double ProtocolConfig::duration() const {
  return protocol == Protocol::LoadUnload ? 2.0 * ramp_time : ramp_time + hold_time;
}

void ProtocolConfig::validate() const {
  auto positive = [](double v, const char* what) {
    if (!std::isfinite(v) || v <= 0.0) throw DomainError(std::string("protocol: ") + what + " must be positive");
  };
  positive(ramp_time, "ramp_time");
  if (protocol != Protocol::LoadUnload && (!std::isfinite(hold_time) || hold_time < 0.0)) {
    throw DomainError("protocol: hold_time must be non-negative");
  }
  switch (protocol) {
    case Protocol::RampRelaxation:
    case Protocol::LoadUnload:
      positive(probe_radius, "probe_radius");
      positive(max_depth, "max_depth");
      break;
    case Protocol::RampCreepSphere:
      positive(probe_radius, "probe_radius");
      positive(max_force, "max_force");
      break;
    case Protocol::RampCreepPlate:
      positive(sigma0, "sigma0");
      positive(plate_area, "plate_area");
      break;
  }
}

ProtocolConfig preset(Protocol p) {
  ProtocolConfig c;
  c.protocol = p;
  switch (p) {
    case Protocol::RampRelaxation:
      c.ramp_time = 2.0;
      c.hold_time = 3.0;
      break;
    case Protocol::LoadUnload:
      c.ramp_time = 25.0;
      c.hold_time = 0.0;
      break;
    case Protocol::RampCreepSphere:
      c.ramp_time = 2.0;
      c.hold_time = 3.0;
      break;
    case Protocol::RampCreepPlate:
      c.ramp_time = 0.25;
      c.hold_time = 9.75;
      break;
  }
  return c;
}

void check_params(const ParameterVector& p) {
  if (!std::isfinite(p.e0) || !std::isfinite(p.alpha) || !std::isfinite(p.tau)) {
    throw DomainError("kvfd: parameters must be finite");
  }
  if (p.e0 <= 0.0 || p.tau <= 0.0) throw DomainError("kvfd: e0 and tau must be positive");
  if (p.alpha <= 0.0 || p.alpha >= 1.0) throw DomainError("kvfd: alpha must lie in (0, 1)");
}

double relaxation_force(const ParameterVector& p, const ProtocolConfig& proto, double t, Side side) {
  require_protocol(proto, Protocol::RampRelaxation, "relaxation_force");
  check_params(p);
  check_time(t);
  check_side(proto, t, side);
  return displacement_force(p, proto, t, side);
}

double load_unload_force(const ParameterVector& p, const ProtocolConfig& proto, double t, Side side) {
  require_protocol(proto, Protocol::LoadUnload, "load_unload_force");
  check_params(p);
  check_time(t);
  if (t > 2.0 * proto.ramp_time * (1.0 + 1e-12)) throw DomainError("load_unload_force: time beyond unloading");
  check_side(proto, t, side);
  return displacement_force(p, proto, std::min(t, 2.0 * proto.ramp_time), side);
}

double sphere_creep_response(const ParameterVector& p, const ProtocolConfig& proto, double t, Side side) {
  require_protocol(proto, Protocol::RampCreepSphere, "sphere_creep_response");
  check_params(p);
  check_time(t);
  check_side(proto, t, side);
  return creep(p, proto, t, side);
}

double plate_creep_strain(const ParameterVector& p, const ProtocolConfig& proto, double t, Side side) {
  require_protocol(proto, Protocol::RampCreepPlate, "plate_creep_strain");
  check_params(p);
  check_time(t);
  check_side(proto, t, side);
  return creep(p, proto, t, side);
}

double response(const ParameterVector& p, const ProtocolConfig& proto, double t, Side side) {
  switch (proto.protocol) {
    case Protocol::RampRelaxation: return relaxation_force(p, proto, t, side);
    case Protocol::LoadUnload: return load_unload_force(p, proto, t, side);
    case Protocol::RampCreepSphere: return sphere_creep_response(p, proto, t, side);
    case Protocol::RampCreepPlate: return plate_creep_strain(p, proto, t, side);
  }
  throw DomainError("response: unknown protocol");
}

std::vector<double> time_grid(const ProtocolConfig& proto, std::size_t m) {
  if (m < 2) throw DomainError("time_grid: need at least two samples");
  const double total = proto.duration();
  std::vector<double> t(m);
  for (std::size_t i = 0; i < m; ++i) t[i] = total * static_cast<double>(i) / static_cast<double>(m - 1);
  t.back() = total;
  return t;
}

Curve sample_curve(const ParameterVector& p, const ProtocolConfig& proto, std::size_t m) {
  proto.validate();
  Curve c;
  c.protocol = proto;
  c.times = time_grid(proto, m);
  c.values.resize(m);
  for (std::size_t i = 0; i < m; ++i) c.values[i] = response(p, proto, c.times[i]);
  return c;
}

namespace {

std::vector<double> oracle_march(const ParameterVector& p, const ProtocolConfig& proto,
                                 std::span<const double> times, std::size_t n_quad) {
  double t_max = 0.0;
  for (double t : times) {
    check_time(t);
    t_max = std::max(t_max, t);
  }
  std::vector<double> out(times.size(), 0.0);
  if (t_max == 0.0) return out;

  const double tr = proto.ramp_time;
  double dt = 0.0;
  if (t_max <= tr) {
    dt = t_max / static_cast<double>(n_quad);
  } else {
    const double n_ramp = std::max(1.0, std::round(static_cast<double>(n_quad) * tr / t_max));
    dt = tr / n_ramp;
  }
  const auto n_nodes = static_cast<std::size_t>(std::ceil(t_max / dt - 1e-9)) + 1;
  const double oma = 1.0 - p.alpha;
  const double tau_a = std::pow(p.tau, p.alpha);
  const double g2 = specfn::reciprocal_gamma(2.0 - p.alpha);
  const double scale = contact_factor(proto) * p.e0;

  std::vector<double> node_t(n_nodes);
  for (std::size_t j = 0; j < n_nodes; ++j) node_t[j] = static_cast<double>(j) * dt;
  std::vector<double> psi(n_nodes, 0.0);

  if (!proto.force_controlled()) {
    for (std::size_t j = 0; j < n_nodes; ++j) psi[j] = prescribed_psi(proto, node_t[j]);
  } else {
    // Implicit march: psi_n (1 + c) = L_n + c psi_{n-1} - c sum_{j<n-1} d_j b_{n-1-j}.
    // Weights stored reversed, rb[N - 1 - k] = b_k, so the history sum runs
    // forward through both arrays.
    const std::size_t nn = n_nodes;
    std::vector<double> rb(nn);
    for (std::size_t k = 0; k < nn; ++k) rb[nn - 1 - k] = panel_weight(k, oma);
    std::vector<double> d(nn, 0.0);
    const double c = tau_a * std::pow(dt, -p.alpha) * g2;
    for (std::size_t n = 1; n < nn; ++n) {
      const double* w = rb.data() + (nn - n);
      const auto len = static_cast<Eigen::Index>(n - 1);
      const double hist = Eigen::Map<const Eigen::VectorXd>(d.data(), len).dot(Eigen::Map<const Eigen::VectorXd>(w, len));
      const double load = prescribed_load(proto, node_t[n]) / scale;
      psi[n] = (load + c * psi[n - 1] - c * hist) / (1.0 + c);
      d[n - 1] = psi[n] - psi[n - 1];
    }
  }

  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    if (t == 0.0) continue;
    auto n = static_cast<std::size_t>(std::floor(t / dt));
    if (n >= n_nodes) n = n_nodes - 1;
    // Full panels before the node at or below t.
    double hist = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double slope = (psi[j + 1] - psi[j]) / dt;
      hist += slope * (std::pow(t - node_t[j], oma) - std::pow(std::max(0.0, t - node_t[j + 1]), oma));
    }
    const double u = t - node_t[n];
    if (!proto.force_controlled()) {
      const double psi_t = prescribed_psi(proto, t);
      // A sliver panel left by rounding takes the previous slope; differencing
      // psi across it would amplify rounding by u^-alpha.
      double slope = 0.0;
      if (u > 1e-3 * dt) {
        slope = (psi_t - psi[n]) / u;
      } else if (n > 0) {
        slope = (psi[n] - psi[n - 1]) / dt;
      }
      const double partial = u > 0.0 ? slope * std::pow(u, oma) : 0.0;
      out[i] = scale * (psi_t + tau_a * g2 * (hist + partial));
    } else {
      const double q = tau_a * g2;
      const double load = prescribed_load(proto, t) / scale;
      if (u <= 0.0) {
        out[i] = psi[n];
      } else {
        const double ku = q * std::pow(u, -p.alpha);
        out[i] = (load - q * hist + ku * psi[n]) / (1.0 + ku);
      }
    }
  }
  return out;
}

}  // namespace

std::vector<double> oracle_curve(const ParameterVector& p, const ProtocolConfig& proto,
                                 std::span<const double> times, std::size_t n_quad) {
  check_params(p);
  proto.validate();
  if (n_quad < 100) throw DomainError("oracle: n_quad must be at least 100");
  std::vector<double> out(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) out[i] = oracle_march(p, proto, times.subspan(i, 1), n_quad)[0];
  return out;
}

double oracle_response(const ParameterVector& p, const ProtocolConfig& proto, double t, std::size_t n_quad) {
  const double ts[1] = {t};
  return oracle_curve(p, proto, ts, n_quad)[0];
}

// ---- CurveEvaluator ----

std::size_t CurveEvaluator::KeyHash::operator()(const Key& k) const noexcept {
  const std::size_t a = std::hash<double>{}(k.alpha);
  const std::size_t b = std::hash<double>{}(k.tau);
  return a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
}

CurveEvaluator::CurveEvaluator(ProtocolConfig proto, std::vector<double> times, std::size_t cache_capacity)
    : proto_(proto), times_(std::move(times)), capacity_(std::max<std::size_t>(1, cache_capacity)) {
  proto_.validate();
  for (double t : times_) check_time(t);
  if (proto_.protocol == Protocol::LoadUnload) {
    for (double t : times_) {
      if (t > 2.0 * proto_.ramp_time * (1.0 + 1e-12)) throw DomainError("CurveEvaluator: time beyond unloading");
    }
  }
  if (!proto_.force_controlled()) {
    elastic_.resize(times_.size());
    for (std::size_t i = 0; i < times_.size(); ++i) elastic_[i] = elastic_term(proto_, times_[i]);
    prefactor_ = indentation_scale(proto_);
  } else {
    prefactor_ = creep_scale(proto_);
  }
}

CurveEvaluator::Basis CurveEvaluator::compute_basis(const ParameterVector& p) const {
  Basis b(times_.size(), 0.0);
  for (std::size_t i = 0; i < times_.size(); ++i) {
    const double t = std::min(times_[i], proto_.protocol == Protocol::LoadUnload ? 2.0 * proto_.ramp_time : times_[i]);
    if (t == 0.0) continue;
    b[i] = proto_.force_controlled() ? creep_shape(p.alpha, p.tau, proto_.ramp_time, t)
                                     : memory_term(p.alpha, proto_, t);
  }
  return b;
}

const CurveEvaluator::Basis& CurveEvaluator::basis(const ParameterVector& p) {
  const Key key{p.alpha, proto_.force_controlled() ? p.tau : 0.0};
  auto it = index_.find(key);
  if (it != index_.end()) {
    ++hits_;
    lru_.splice(lru_.begin(), lru_, it->second);
    return it->second->second;
  }
  ++misses_;
  lru_.emplace_front(key, compute_basis(p));
  index_[key] = lru_.begin();
  if (lru_.size() > capacity_) {
    index_.erase(lru_.back().first);
    lru_.pop_back();
  }
  return lru_.front().second;
}

void CurveEvaluator::evaluate(const ParameterVector& p, std::span<double> out) {
  check_params(p);
  if (out.size() != times_.size()) throw DomainError("CurveEvaluator: output size mismatch");
  const Basis& b = basis(p);
  if (proto_.force_controlled()) {
    const double s = prefactor_ / p.e0;
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = s * b[i];
  } else {
    const double s = prefactor_ * p.e0;
    const double ta = std::pow(p.tau, p.alpha);
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = times_[i] == 0.0 ? 0.0 : s * (elastic_[i] + ta * b[i]);
  }
}

std::vector<double> CurveEvaluator::evaluate(const ParameterVector& p) {
  std::vector<double> out(times_.size());
  evaluate(p, out);
  return out;
}

// ---- CSV ----

void write_curve_csv(const std::string& path, const Curve& c) {
  if (c.times.size() != c.values.size()) throw DomainError("write_curve_csv: length mismatch");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  std::fputs("t,value\n", f);
  for (std::size_t i = 0; i < c.times.size(); ++i) std::fprintf(f, "%.17g,%.17g\n", c.times[i], c.values[i]);
  if (std::fclose(f) != 0) throw IoError("write failed for '" + path + "'");
}

Curve read_curve_csv(const std::string& path, const ProtocolConfig& proto) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  Curve c;
  c.protocol = proto;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw FormatError(path + ": empty file");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,value") throw FormatError(path + ":1: expected header 't,value'");
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError(path + ":" + std::to_string(lineno) + ": missing comma");
    char* end = nullptr;
    const std::string a = line.substr(0, comma);
    const std::string b = line.substr(comma + 1);
    const double t = std::strtod(a.c_str(), &end);
    if (end == a.c_str() || *end != '\0') throw FormatError(path + ":" + std::to_string(lineno) + ": bad time");
    const double v = std::strtod(b.c_str(), &end);
    if (end == b.c_str() || *end != '\0') throw FormatError(path + ":" + std::to_string(lineno) + ": bad value");
    if (!c.times.empty() && !(t > c.times.back())) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": times must be strictly increasing");
    }
    c.times.push_back(t);
    c.values.push_back(v);
  }
  if (c.times.size() < 2) throw FormatError(path + ": need at least two samples");
  if (c.times.front() < 0.0) throw FormatError(path + ": negative time");
  return c;
}

}  // namespace dqmp::kvfd
