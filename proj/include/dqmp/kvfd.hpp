#pragma once

#include <cstddef>
#include <list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dqmp::kvfd {

/// KVFD triple in physical units: elastic modulus (Pa), fractional order,
/// time constant (s).
struct ParameterVector {
  double e0 = 0.0;
  double alpha = 0.0;
  double tau = 0.0;

  bool operator==(const ParameterVector&) const = default;
};

enum class Protocol { RampRelaxation, LoadUnload, RampCreepSphere, RampCreepPlate };

const char* protocol_name(Protocol p);
/// Accepts the names produced by protocol_name ("relaxation", "load-unload",
/// "creep-sphere", "creep-plate"); throws DomainError otherwise.
Protocol protocol_from_name(const std::string& name);

struct ProtocolConfig {
  Protocol protocol = Protocol::RampRelaxation;
  double ramp_time = 2.0;      // s
  double hold_time = 3.0;      // s, ignored for LoadUnload
  double probe_radius = 8.5e-6;  // m, spherical protocols
  double max_depth = 5e-6;     // m, displacement-controlled protocols
  double max_force = 5e-6;     // N, sphere creep
  double sigma0 = 833.3;       // Pa, plate creep
  double plate_area = 24e-4;   // m^2, plate creep (does not enter the strain)

  /// Total protocol duration: Tr + hold, or 2 Tr for LoadUnload.
  double duration() const;
  /// Throws DomainError if a field required by `protocol` is invalid.
  void validate() const;
  bool force_controlled() const {
    return protocol == Protocol::RampCreepSphere || protocol == Protocol::RampCreepPlate;
  }
};

/// Settings used in the simulation experiments for each protocol.
ProtocolConfig preset(Protocol p);

struct Curve {
  ProtocolConfig protocol;
  std::vector<double> times;
  std::vector<double> values;

  std::size_t size() const { return times.size(); }
};

/// Throws DomainError unless all components are finite, e0 > 0, tau > 0 and
/// 0 < alpha < 1. Box membership is the caller's concern.
void check_params(const ParameterVector& p);

/// Branch used at t == Tr. The hold and unloading branches have a
/// (t - Tr)^(1 - alpha) cusp, so one-sided limits are taken by selecting the
/// branch rather than by perturbing t. Ramp requires t <= Tr, AfterRamp t >= Tr.
enum class Side { Auto, Ramp, AfterRamp };

double relaxation_force(const ParameterVector& p, const ProtocolConfig& proto, double t, Side side = Side::Auto);
double load_unload_force(const ParameterVector& p, const ProtocolConfig& proto, double t, Side side = Side::Auto);
/// h^(3/2)(t) in m^(3/2).
double sphere_creep_response(const ParameterVector& p, const ProtocolConfig& proto, double t,
                             Side side = Side::Auto);
double plate_creep_strain(const ParameterVector& p, const ProtocolConfig& proto, double t, Side side = Side::Auto);

/// Dispatches to the closed form matching proto.protocol.
double response(const ParameterVector& p, const ProtocolConfig& proto, double t, Side side = Side::Auto);

/// Uniform grid of m points over [0, duration].
std::vector<double> time_grid(const ProtocolConfig& proto, std::size_t m);
Curve sample_curve(const ParameterVector& p, const ProtocolConfig& proto, std::size_t m = 250);

/// Direct numerical evaluation of the constitutive law
///   response = K E0 [psi + tau^alpha D^alpha psi],
/// psi = h^(3/2) (sphere, K = 8 sqrt(R) / 3) or strain (plate, K = 1), with the
/// fractional derivative discretized by product integration of the singular
/// kernel against the piecewise-linear history on a uniform grid of roughly
/// n_quad panels over [0, t], with Tr on a node when t > Tr. Force-controlled
/// protocols march the implicit scheme for psi, O(n_quad^2) per time.
double oracle_response(const ParameterVector& p, const ProtocolConfig& proto, double t,
                       std::size_t n_quad = 20000);
/// oracle_response for each time; every time gets its own grid.
std::vector<double> oracle_curve(const ParameterVector& p, const ProtocolConfig& proto,
                                 std::span<const double> times, std::size_t n_quad = 20000);

/// Evaluates model curves on a fixed time grid for many parameter triples.
/// The force protocols are affine in E0 and tau^alpha, so the alpha-dependent
/// basis is cached; creep curves scale as 1/E0, so (alpha, tau) is cached.
/// Not thread-safe; use one evaluator per fitting session.
class CurveEvaluator {
 public:
  CurveEvaluator(ProtocolConfig proto, std::vector<double> times, std::size_t cache_capacity = 256);

  const std::vector<double>& times() const { return times_; }
  const ProtocolConfig& protocol() const { return proto_; }
  std::size_t size() const { return times_.size(); }

  void evaluate(const ParameterVector& p, std::span<double> out);
  std::vector<double> evaluate(const ParameterVector& p);

  std::size_t cache_hits() const { return hits_; }
  std::size_t cache_misses() const { return misses_; }

 private:
  struct Key {
    double alpha;
    double tau;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };
  using Basis = std::vector<double>;

  const Basis& basis(const ParameterVector& p);
  Basis compute_basis(const ParameterVector& p) const;

  ProtocolConfig proto_;
  std::vector<double> times_;
  std::vector<double> elastic_;  // alpha-free part, force protocols only
  double prefactor_ = 0.0;
  std::size_t capacity_;
  std::list<std::pair<Key, Basis>> lru_;
  std::unordered_map<Key, std::list<std::pair<Key, Basis>>::iterator, KeyHash> index_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// Curve text format: header "t,value", one "%.17g,%.17g" row per sample, LF.
void write_curve_csv(const std::string& path, const Curve& c);
/// Reads times and values; the protocol must be supplied by the caller.
Curve read_curve_csv(const std::string& path, const ProtocolConfig& proto);

}  // namespace dqmp::kvfd
