#include "dqmp/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "dqmp/binio.hpp"
#include "dqmp/errors.hpp"
#include "dqmp/parallel.hpp"

namespace dqmp::nnet {

namespace {

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;
using Idx = Eigen::Index;

constexpr char kMagic[8] = {'D', 'Q', 'M', 'P', 'N', 'N', '1', '\0'};
constexpr std::uint32_t kVersion = 1;

std::string layer_name(std::size_t l, const char* what) { return "lstm" + std::to_string(l) + "." + what; }

ConstRowMap as_matrix(const Tensor& t) {
  const Idx rows = t.dims.at(0);
  const Idx cols = t.dims.size() > 1 ? static_cast<Idx>(t.dims[1]) : 1;
  return ConstRowMap(t.values.data(), rows, cols);
}

RowMap as_matrix(Tensor& t) {
  const Idx rows = t.dims.at(0);
  const Idx cols = t.dims.size() > 1 ? static_cast<Idx>(t.dims[1]) : 1;
  return RowMap(t.values.data(), rows, cols);
}

Eigen::Map<const Eigen::VectorXd> as_vector(const Tensor& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.values.data(), static_cast<Idx>(t.values.size()));
}

const Tensor& get(const TensorStore& s, const std::string& name) {
  const auto it = s.find(name);
  if (it == s.end()) throw FormatError("network: missing tensor " + name);
  return it->second;
}

template <class X>
auto sigmoid(const X& x) {
  return (1.0 + (-x.array()).exp()).inverse().matrix();
}

// Eigen's double tanh is scalar; this form vectorizes through exp.
template <class X>
auto fast_tanh(const X& x) {
  return (2.0 * (1.0 + (-2.0 * x.array()).exp()).inverse() - 1.0).matrix();
}

Tensor zeros_like(const Tensor& t) { return Tensor{t.dims, std::vector<double>(t.values.size(), 0.0)}; }

struct LayerCache {
  Mat x;      // D x TB, column t*B + b
  Mat gates;  // 4H x TB, activated (i, f, g, o)
  Mat c;      // H x TB
  Mat tc;     // tanh(c)
  Mat h;      // H x TB, before the rectifier
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Mat fc_in;  // in x B
  Mat out;    // out x B
};

// Step-major sequence columns (T*D x B) to a D x (T*B) matrix.
Mat to_time_major(const Mat& inputs, Idx T, Idx D) {
  const Idx B = inputs.cols();
  Mat x(D, T * B);
  for (Idx t = 0; t < T; ++t) {
    for (Idx b = 0; b < B; ++b) x.col(t * B + b) = inputs.block(t * D, b, D, 1);
  }
  return x;
}

void run_forward(const Network& net, const Mat& inputs, ForwardCache& cache) {
  const auto& spec = net.spec;
  const Idx T = static_cast<Idx>(spec.input_len);
  const Idx D0 = static_cast<Idx>(spec.input_width);
  if (inputs.rows() != T * D0) throw DomainError("forward: input length does not match the network");
  const Idx B = inputs.cols();
  cache.layers.assign(spec.lstm_layers.size(), LayerCache{});

  Mat x = spec.lstm_layers.empty() ? Mat() : to_time_major(inputs, T, D0);
  for (std::size_t l = 0; l < spec.lstm_layers.size(); ++l) {
    const Idx H = static_cast<Idx>(spec.lstm_layers[l]);
    const auto W = as_matrix(get(net.weights, layer_name(l, "W")));
    const auto bias = as_vector(get(net.weights, layer_name(l, "b")));
    const Idx D = W.cols() - H;
    auto& lc = cache.layers[l];
    lc.x = std::move(x);
    lc.gates.noalias() = W.leftCols(D) * lc.x;
    lc.gates.colwise() += bias;
    lc.c.resize(H, T * B);
    lc.tc.resize(H, T * B);
    lc.h.resize(H, T * B);
    const auto Wh = W.rightCols(H);
    for (Idx t = 0; t < T; ++t) {
      auto z = lc.gates.middleCols(t * B, B);
      if (t > 0) z.noalias() += Wh * lc.h.middleCols((t - 1) * B, B);
      z.topRows(2 * H) = sigmoid(z.topRows(2 * H));
      z.middleRows(2 * H, H) = fast_tanh(z.middleRows(2 * H, H));
      z.bottomRows(H) = sigmoid(z.bottomRows(H));
      auto c = lc.c.middleCols(t * B, B);
      c = z.topRows(H).cwiseProduct(z.middleRows(2 * H, H));
      if (t > 0) c += z.middleRows(H, H).cwiseProduct(lc.c.middleCols((t - 1) * B, B));
      auto tc = lc.tc.middleCols(t * B, B);
      tc = fast_tanh(c);
      lc.h.middleCols(t * B, B) = z.bottomRows(H).cwiseProduct(tc);
    }
    x = lc.h.cwiseMax(0.0);
  }
  if (spec.lstm_layers.empty()) {
    cache.fc_in = inputs;
  } else {
    cache.fc_in = x.rightCols(B);
  }
  const auto Wf = as_matrix(get(net.weights, "fc.W"));
  const auto bf = as_vector(get(net.weights, "fc.b"));
  Mat z = Wf * cache.fc_in;
  z.colwise() += bf;
  cache.out = sigmoid(z);
}

// Gradient of the loss with respect to every tensor, given dL/d(out).
void run_backward(const Network& net, const ForwardCache& cache, const Mat& dout, TensorStore& grad) {
  const auto& spec = net.spec;
  const Idx T = static_cast<Idx>(spec.input_len);
  const Idx B = dout.cols();
  grad.clear();
  for (const auto& [name, t] : net.weights) grad[name] = zeros_like(t);

  const Mat dz = dout.cwiseProduct(cache.out).cwiseProduct((1.0 - cache.out.array()).matrix());
  as_matrix(grad["fc.W"]).noalias() = dz * cache.fc_in.transpose();
  as_matrix(grad["fc.b"]) = dz.rowwise().sum();
  if (spec.lstm_layers.empty()) return;

  const auto Wf = as_matrix(get(net.weights, "fc.W"));
  // External gradient on the rectified output sequence of the current layer.
  Mat dy = Mat::Zero(static_cast<Idx>(spec.lstm_layers.back()), T * B);
  dy.rightCols(B).noalias() = Wf.transpose() * dz;

  for (std::size_t li = spec.lstm_layers.size(); li-- > 0;) {
    const Idx H = static_cast<Idx>(spec.lstm_layers[li]);
    const auto& lc = cache.layers[li];
    const auto W = as_matrix(get(net.weights, layer_name(li, "W")));
    const Idx D = W.cols() - H;
    const auto Wh = W.rightCols(H);
    // Through the rectifier.
    dy = dy.cwiseProduct((lc.h.array() > 0.0).cast<double>().matrix());

    Mat dZ(4 * H, T * B);
    Mat dh_next = Mat::Zero(H, B);
    Mat dc_next = Mat::Zero(H, B);
    for (Idx t = T - 1; t >= 0; --t) {
      const auto z = lc.gates.middleCols(t * B, B);
      const auto ig = z.topRows(H).array();
      const auto fg = z.middleRows(H, H).array();
      const auto gg = z.middleRows(2 * H, H).array();
      const auto og = z.bottomRows(H).array();
      const auto tc = lc.tc.middleCols(t * B, B).array();
      const Eigen::ArrayXXd dh = dy.middleCols(t * B, B).array() + dh_next.array();
      const Eigen::ArrayXXd dc = dc_next.array() + dh * og * (1.0 - tc * tc);
      auto dzt = dZ.middleCols(t * B, B);
      dzt.topRows(H) = (dc * gg * ig * (1.0 - ig)).matrix();
      if (t > 0) {
        dzt.middleRows(H, H) = (dc * lc.c.middleCols((t - 1) * B, B).array() * fg * (1.0 - fg)).matrix();
      } else {
        dzt.middleRows(H, H).setZero();
      }
      dzt.middleRows(2 * H, H) = (dc * ig * (1.0 - gg * gg)).matrix();
      dzt.bottomRows(H) = (dh * tc * og * (1.0 - og)).matrix();
      dc_next = (dc * fg).matrix();
      dh_next.noalias() = Wh.transpose() * dzt;
    }
    auto gW = as_matrix(grad[layer_name(li, "W")]);
    gW.leftCols(D).noalias() = dZ * lc.x.transpose();
    if (T > 1) gW.rightCols(H).noalias() = dZ.rightCols((T - 1) * B) * lc.h.leftCols((T - 1) * B).transpose();
    as_matrix(grad[layer_name(li, "b")]) = dZ.rowwise().sum();
    if (li > 0) {
      dy.noalias() = W.leftCols(D).transpose() * dZ;
    }
  }
}

// ---- Initial-loss helpers ----

struct InitialTerms {
  double value = 0.0;
  std::array<double, kParamCount> grad{};
};

double curve_term(std::span<const double> y_true, std::span<const double> y_hat, double weight) {
  double s = 0.0;
  double peak = 0.0;
  for (std::size_t j = 0; j < y_true.size(); ++j) {
    s += std::abs(y_hat[j] - y_true[j]);
    peak = std::max(peak, y_true[j]);
  }
  if (!(peak > 0.0)) throw DomainError("loss_initial: max of the true curve must be positive");
  return weight * s / static_cast<double>(y_true.size()) / peak;
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

InitialTerms initial_terms(std::span<const double> u_hat_in, std::span<const double> u_true, const LossSpec& ls,
                           kvfd::CurveEvaluator& eval, bool want_grad) {
  Normalized u_hat{};
  for (std::size_t i = 0; i < kParamCount; ++i) u_hat[i] = std::clamp(u_hat_in[i], 0.0, 1.0);
  const auto theta = denormalize_params(u_true, ls.box);
  const auto hat = denormalize_params(u_hat, ls.box);
  const auto a_true = to_array(theta);
  const auto a_hat = to_array(hat);
  const auto& w = ls.weights;
  InitialTerms out;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    out.value += w.theta * w.per_param[i] * std::abs(a_hat[i] - a_true[i]) / a_true[i];
    if (want_grad) {
      out.grad[i] = w.theta * w.per_param[i] * sign(a_hat[i] - a_true[i]) / a_true[i] * (ls.box.hi[i] - ls.box.lo[i]);
    }
  }
  if (w.curve == 0.0) return out;
  const auto y_true = eval.evaluate(theta);
  std::vector<double> y(eval.size());
  eval.evaluate(hat, y);
  out.value += curve_term(y_true, y, w.curve);
  if (!want_grad) return out;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    Normalized lo = u_hat, hi = u_hat;
    lo[i] = std::max(0.0, u_hat[i] - ls.fd_step);
    hi[i] = std::min(1.0, u_hat[i] + ls.fd_step);
    eval.evaluate(denormalize_params(hi, ls.box), y);
    const double f_hi = curve_term(y_true, y, w.curve);
    eval.evaluate(denormalize_params(lo, ls.box), y);
    const double f_lo = curve_term(y_true, y, w.curve);
    out.grad[i] += (f_hi - f_lo) / (hi[i] - lo[i]);
  }
  return out;
}

void add_scaled(TensorStore& acc, const TensorStore& g, double s) {
  for (auto& [name, t] : acc) {
    const auto& src = g.at(name).values;
    for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] += s * src[i];
  }
}

}  // namespace

// ---- tensors ----

void write_tensors(const std::string& path, const TensorStore& store) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(path + ": cannot open for writing");
  os.write(kMagic, sizeof kMagic);
  binio::put_uint<std::uint32_t>(os, kVersion);
  binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store) {
    if (name.size() > 0xffff) throw DomainError("write_tensors: name too long");
    if (t.dims.size() > 0xff) throw DomainError("write_tensors: rank too large");
    binio::put_uint<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    binio::put_uint<std::uint8_t>(os, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) binio::put_uint<std::uint32_t>(os, d);
    std::vector<float> f(t.values.begin(), t.values.end());
    binio::put_floats(os, f);
  }
  if (!os.flush()) throw IoError(path + ": write failed");
}

TensorStore read_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path + ": cannot open for reading");
  char magic[8];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kMagic)) throw FormatError(path + ": bad magic");
  const auto version = binio::get_uint<std::uint32_t>(is, path);
  if (version != kVersion) throw FormatError(path + ": unsupported version " + std::to_string(version));
  const auto count = binio::get_uint<std::uint32_t>(is, path);
  TensorStore store;
  for (std::uint32_t n = 0; n < count; ++n) {
    const auto len = binio::get_uint<std::uint16_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError(path + ": truncated file");
    const auto rank = binio::get_uint<std::uint8_t>(is, path);
    Tensor t;
    std::size_t total = 1;
    for (int r = 0; r < rank; ++r) {
      t.dims.push_back(binio::get_uint<std::uint32_t>(is, path));
      total *= t.dims.back();
    }
    if (total > (std::size_t{1} << 32)) throw FormatError(path + ": tensor too large");
    std::vector<float> f(total);
    binio::get_floats(is, f, path);
    t.values.assign(f.begin(), f.end());
    if (!store.emplace(name, std::move(t)).second) throw FormatError(path + ": duplicate tensor " + name);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path + ": trailing bytes");
  return store;
}

void round_to_float(TensorStore& store) {
  for (auto& [name, t] : store) {
    for (double& v : t.values) v = static_cast<float>(v);
  }
}

// ---- network construction ----

void NetworkSpec::validate() const {
  if (input_len == 0 || input_width == 0 || fc_out == 0) throw DomainError("NetworkSpec: sizes must be >= 1");
  for (auto h : lstm_layers) {
    if (h == 0) throw DomainError("NetworkSpec: hidden sizes must be >= 1");
  }
}

NetworkSpec drn_spec(std::size_t m, std::size_t k) { return NetworkSpec{m, 1, {64, 64, 64}, std::size_t{1} << k}; }

NetworkSpec din_spec(std::size_t m, std::size_t k) { return NetworkSpec{m, 1, {64, 32}, k}; }

Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Network net{spec, {}};
  std::mt19937_64 rng(seed);
  auto uniform = [&](Tensor& t, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : t.values) v = u(rng);
  };
  std::size_t in = spec.input_width;
  for (std::size_t l = 0; l < spec.lstm_layers.size(); ++l) {
    const std::size_t H = spec.lstm_layers[l];
    Tensor W{{static_cast<std::uint32_t>(4 * H), static_cast<std::uint32_t>(in + H)},
             std::vector<double>(4 * H * (in + H))};
    uniform(W, 1.0 / std::sqrt(static_cast<double>(in + H)));
    Tensor b{{static_cast<std::uint32_t>(4 * H)}, std::vector<double>(4 * H, 0.0)};
    for (std::size_t j = H; j < 2 * H; ++j) b.values[j] = 1.0;
    net.weights[layer_name(l, "W")] = std::move(W);
    net.weights[layer_name(l, "b")] = std::move(b);
    in = H;
  }
  if (spec.lstm_layers.empty()) in = spec.input_len * spec.input_width;
  Tensor Wf{{static_cast<std::uint32_t>(spec.fc_out), static_cast<std::uint32_t>(in)},
            std::vector<double>(spec.fc_out * in)};
  uniform(Wf, 1.0 / std::sqrt(static_cast<double>(in)));
  net.weights["fc.W"] = std::move(Wf);
  net.weights["fc.b"] = Tensor{{static_cast<std::uint32_t>(spec.fc_out)}, std::vector<double>(spec.fc_out, 0.0)};
  net.weights["meta.input_len"] = Tensor{{1}, {static_cast<double>(spec.input_len)}};
  return net;
}

Network network_from_tensors(TensorStore store) {
  Network net;
  const auto& meta = get(store, "meta.input_len");
  if (meta.values.size() != 1 || !(meta.values[0] >= 1.0)) throw FormatError("network: bad meta.input_len");
  net.spec.input_len = static_cast<std::size_t>(meta.values[0]);
  net.spec.lstm_layers.clear();
  net.spec.input_width = 1;
  std::size_t in = 0;
  for (std::size_t l = 0; store.count(layer_name(l, "W")); ++l) {
    const auto& W = store.at(layer_name(l, "W"));
    const auto& b = get(store, layer_name(l, "b"));
    if (W.dims.size() != 2 || W.dims[0] % 4 != 0 || b.dims.size() != 1 || b.dims[0] != W.dims[0]) {
      throw FormatError("network: bad shape for " + layer_name(l, "W"));
    }
    const std::size_t H = W.dims[0] / 4;
    if (W.dims[1] <= H) throw FormatError("network: bad shape for " + layer_name(l, "W"));
    const std::size_t D = W.dims[1] - H;
    if (l == 0) {
      net.spec.input_width = D;
    } else if (D != in) {
      throw FormatError("network: layer " + std::to_string(l) + " input width mismatch");
    }
    net.spec.lstm_layers.push_back(H);
    in = H;
  }
  const auto& Wf = get(store, "fc.W");
  const auto& bf = get(store, "fc.b");
  if (Wf.dims.size() != 2 || bf.dims.size() != 1 || bf.dims[0] != Wf.dims[0]) throw FormatError("network: bad fc shape");
  net.spec.fc_out = Wf.dims[0];
  if (net.spec.lstm_layers.empty()) {
    net.spec.input_width = 1;
    in = net.spec.input_len;
  }
  if (Wf.dims[1] != in) throw FormatError("network: fc input width mismatch");
  std::size_t expected = 3 + 2 * net.spec.lstm_layers.size();
  if (store.size() != expected) throw FormatError("network: unexpected tensors in store");
  for (const auto& [name, t] : store) {
    std::size_t total = 1;
    for (auto d : t.dims) total *= d;
    if (total != t.values.size()) throw FormatError("network: value count mismatch for " + name);
  }
  net.weights = std::move(store);
  return net;
}

void save_network(const std::string& path, const Network& net) { write_tensors(path, net.weights); }

Network load_network(const std::string& path) { return network_from_tensors(read_tensors(path)); }

// ---- forward ----

Eigen::MatrixXd forward_batch(const Network& net, const Eigen::MatrixXd& inputs) {
  ForwardCache cache;
  run_forward(net, inputs, cache);
  return cache.out;
}

std::vector<double> forward(const Network& net, std::span<const double> seq) {
  const Mat in = Eigen::Map<const Eigen::VectorXd>(seq.data(), static_cast<Idx>(seq.size()));
  const Mat out = forward_batch(net, in);
  return std::vector<double>(out.data(), out.data() + out.size());
}

// ---- losses ----

double loss_reward(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw DomainError("loss_reward: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(target[i] - pred[i]);
  return s;
}

double loss_initial(const kvfd::ParameterVector& theta_true, const kvfd::ParameterVector& theta_hat,
                    std::span<const double> curve_true, std::span<const double> curve_hat, const LossWeights& w) {
  if (curve_true.size() != curve_hat.size() || curve_true.empty()) throw DomainError("loss_initial: curve length mismatch");
  const auto a = to_array(theta_true);
  const auto b = to_array(theta_hat);
  double s = 0.0;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (a[i] == 0.0) throw DomainError("loss_initial: true parameters must be nonzero");
    s += w.per_param[i] * std::abs(b[i] - a[i]) / std::abs(a[i]);
  }
  return w.theta * s + curve_term(curve_true, curve_hat, w.curve);
}

double batch_loss(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& targets, const LossSpec& loss,
                  Eigen::MatrixXd* grad) {
  if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols() || outputs.cols() == 0) {
    throw DomainError("batch_loss: output/target shape mismatch");
  }
  const Idx B = outputs.cols();
  const double inv_b = 1.0 / static_cast<double>(B);
  if (grad) grad->resize(outputs.rows(), B);
  double total = 0.0;
  if (loss.kind == LossKind::Reward) {
    for (Idx b = 0; b < B; ++b) {
      for (Idx r = 0; r < outputs.rows(); ++r) {
        const double d = outputs(r, b) - targets(r, b);
        total += std::abs(d);
        if (grad) (*grad)(r, b) = sign(d) * inv_b;
      }
    }
    return total * inv_b;
  }
  if (outputs.rows() != static_cast<Idx>(kParamCount)) throw DomainError("batch_loss: Initial loss needs 3 outputs");
  kvfd::CurveEvaluator eval(loss.proto, kvfd::time_grid(loss.proto, loss.curve_points), 8);
  for (Idx b = 0; b < B; ++b) {
    const std::array<double, kParamCount> uh{outputs(0, b), outputs(1, b), outputs(2, b)};
    const std::array<double, kParamCount> ut{std::clamp(targets(0, b), 0.0, 1.0), std::clamp(targets(1, b), 0.0, 1.0),
                                             std::clamp(targets(2, b), 0.0, 1.0)};
    const auto terms = initial_terms(uh, ut, loss, eval, grad != nullptr);
    total += terms.value;
    if (grad) {
      for (std::size_t i = 0; i < kParamCount; ++i) (*grad)(static_cast<Idx>(i), b) = terms.grad[i] * inv_b;
    }
  }
  return total * inv_b;
}

double loss_gradient(const Network& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                     const LossSpec& loss, TensorStore& grad) {
  ForwardCache cache;
  run_forward(net, inputs, cache);
  Mat dout;
  const double value = batch_loss(cache.out, targets, loss, &dout);
  run_backward(net, cache, dout, grad);
  grad.erase("meta.input_len");
  grad["meta.input_len"] = Tensor{{1}, {0.0}};
  return value;
}

double grad_check(const Network& net, std::span<const double> input, std::span<const double> target,
                  const LossSpec& loss, double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw DomainError("grad_check: epsilon must lie in [1e-7, 1e-3]");
  const Mat in = Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Idx>(input.size()));
  const Mat tg = Eigen::Map<const Eigen::VectorXd>(target.data(), static_cast<Idx>(target.size()));
  TensorStore analytic;
  loss_gradient(net, in, tg, loss, analytic);
  Network probe = net;
  double worst = 0.0;
  for (auto& [name, t] : probe.weights) {
    if (name.rfind("meta.", 0) == 0) continue;
    const auto& a = analytic.at(name).values;
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      const double w0 = t.values[i];
      t.values[i] = w0 + epsilon;
      const double lp = batch_loss(forward_batch(probe, in), tg, loss, nullptr);
      t.values[i] = w0 - epsilon;
      const double lm = batch_loss(forward_batch(probe, in), tg, loss, nullptr);
      t.values[i] = w0;
      const double n = (lp - lm) / (2.0 * epsilon);
      const double dev = std::abs(a[i] - n) / std::max({std::abs(a[i]), std::abs(n), 1e-6});
      worst = std::max(worst, dev);
    }
  }
  return worst;
}

// ---- training ----

void TrainConfig::validate() const {
  if (batch_size == 0) throw DomainError("TrainConfig: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw DomainError("TrainConfig: learning_rate must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0)) {
    throw DomainError("TrainConfig: bad Adam constants");
  }
  if (!(clip_norm >= 0.0)) throw DomainError("TrainConfig: clip_norm must be >= 0");
}

Eigen::MatrixXd batch_inputs(const Dataset& ds, std::span<const std::size_t> rows) {
  Mat x(ds.input_len(), static_cast<Idx>(rows.size()));
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const auto in = ds.inputs(rows[b]);
    for (std::size_t j = 0; j < in.size(); ++j) x(static_cast<Idx>(j), static_cast<Idx>(b)) = in[j];
  }
  return x;
}

Eigen::MatrixXd batch_targets(const Dataset& ds, std::span<const std::size_t> rows) {
  Mat y(static_cast<Idx>(ds.target_len()), static_cast<Idx>(rows.size()));
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const auto tg = ds.targets(rows[b]);
    for (std::size_t j = 0; j < tg.size(); ++j) y(static_cast<Idx>(j), static_cast<Idx>(b)) = tg[j];
  }
  return y;
}

double evaluate_loss(const Network& net, const Dataset& ds, const LossSpec& loss, std::size_t batch_size) {
  if (ds.size() == 0) throw DomainError("evaluate_loss: empty dataset");
  double total = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t first = 0; first < ds.size(); first += batch_size) {
    const std::size_t n = std::min(batch_size, ds.size() - first);
    rows.resize(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = first + i;
    total += batch_loss(forward_batch(net, batch_inputs(ds, rows)), batch_targets(ds, rows), loss, nullptr) *
             static_cast<double>(n);
  }
  return total / static_cast<double>(ds.size());
}

namespace {

void check_dataset(const Network& net, const Dataset& ds, const LossSpec& loss, const char* which) {
  const auto want = loss.kind == LossKind::Reward ? DatasetKind::Drn : DatasetKind::Din;
  if (ds.kind() != want) throw DomainError(std::string("train: ") + which + " dataset kind does not match the loss");
  if (ds.input_len() != net.spec.input_len * net.spec.input_width) {
    throw DomainError(std::string("train: ") + which + " dataset input length does not match the network");
  }
  if (ds.target_len() != net.spec.fc_out) {
    throw DomainError(std::string("train: ") + which + " dataset target width does not match the network");
  }
  if (ds.size() == 0) throw DomainError(std::string("train: empty ") + which + " dataset");
}

}  // namespace

TrainResult train(const Network& init, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg) {
  cfg.validate();
  check_dataset(init, train_set, cfg.loss, "training");
  check_dataset(init, val_set, cfg.loss, "validation");
  if (cfg.loss.kind == LossKind::Initial && cfg.loss.curve_points != init.spec.input_len) {
    throw DomainError("train: curve_points must equal the network input length");
  }

  TrainResult result;
  Network net = init;
  auto finite_or_throw = [](double v, const char* what) {
    if (!std::isfinite(v)) throw DivergenceError(std::string("train: non-finite ") + what + " loss");
    return v;
  };
  const double val0 = finite_or_throw(evaluate_loss(net, val_set, cfg.loss), "validation");
  const double train0 = finite_or_throw(evaluate_loss(net, train_set, cfg.loss), "training");
  result.history.push_back({0, train0, val0});
  result.net = net;
  double best = val0;
  std::size_t since_best = 0;

  TensorStore m1, m2;
  for (const auto& [name, t] : net.weights) {
    m1[name] = zeros_like(t);
    m2[name] = zeros_like(t);
  }
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t step = 0;
  const unsigned workers = std::max(1u, cfg.threads);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - first);
      const std::span<const std::size_t> rows(order.data() + first, n);
      TensorStore grad;
      double loss = 0.0;
      if (workers == 1 || n < 2 * workers) {
        loss = loss_gradient(net, batch_inputs(train_set, rows), batch_targets(train_set, rows), cfg.loss, grad);
      } else {
        // Fixed contiguous chunks, summed in chunk order.
        std::vector<TensorStore> part(workers);
        std::vector<double> part_loss(workers);
        std::vector<std::size_t> bounds(workers + 1);
        for (unsigned w = 0; w <= workers; ++w) bounds[w] = n * w / workers;
        parallel_for(workers, workers, [&](std::size_t w) {
          const auto sub = rows.subspan(bounds[w], bounds[w + 1] - bounds[w]);
          part_loss[w] = loss_gradient(net, batch_inputs(train_set, sub), batch_targets(train_set, sub), cfg.loss, part[w]);
        });
        for (const auto& [name, t] : net.weights) grad[name] = zeros_like(t);
        for (unsigned w = 0; w < workers; ++w) {
          const double share = static_cast<double>(bounds[w + 1] - bounds[w]) / static_cast<double>(n);
          add_scaled(grad, part[w], share);
          loss += share * part_loss[w];
        }
      }
      finite_or_throw(loss, "training");
      epoch_loss += loss * static_cast<double>(n);

      if (cfg.clip_norm > 0.0) {
        double ss = 0.0;
        for (const auto& [name, g] : grad) {
          for (double v : g.values) ss += v * v;
        }
        const double norm = std::sqrt(ss);
        if (norm > cfg.clip_norm) {
          for (auto& [name, g] : grad) {
            for (double& v : g.values) v *= cfg.clip_norm / norm;
          }
        }
      }

      ++step;
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      for (auto& [name, t] : net.weights) {
        if (name.rfind("meta.", 0) == 0) continue;
        const auto& g = grad.at(name).values;
        if (cfg.optimizer == Optimizer::Sgd) {
          for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] -= cfg.learning_rate * g[i];
          continue;
        }
        auto& a = m1[name].values;
        auto& v = m2[name].values;
        for (std::size_t i = 0; i < t.values.size(); ++i) {
          a[i] = cfg.adam_beta1 * a[i] + (1.0 - cfg.adam_beta1) * g[i];
          v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
          t.values[i] -= cfg.learning_rate * (a[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
        }
      }
    }
    const double train_loss = epoch_loss / static_cast<double>(order.size());
    const double val_loss = finite_or_throw(evaluate_loss(net, val_set, cfg.loss), "validation");
    result.history.push_back({epoch, train_loss, val_loss});
    if (val_loss < best) {
      best = val_loss;
      result.net = net;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.early_stop_patience > 0 && ++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  return result;
}

void write_loss_history(const std::string& path, const std::vector<EpochLoss>& history) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError(path + ": cannot open for writing");
  std::fprintf(f, "epoch,train_loss,val_loss\n");
  for (const auto& e : history) std::fprintf(f, "%zu,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss);
  if (std::fclose(f) != 0) throw IoError(path + ": write failed");
}

// ---- inference ----

kvfd::ParameterVector din_init(std::span<const double> curve_values, const Network& din, const ParameterBox& box) {
  if (din.spec.fc_out != kParamCount) throw DomainError("din_init: network must have 3 outputs");
  const auto norm = normalize_curve(curve_values);
  const auto out = forward(din, norm.values);
  Normalized u{};
  for (std::size_t i = 0; i < kParamCount; ++i) u[i] = std::clamp(out[i], 0.0, 1.0);
  return denormalize_params(u, box);
}

std::vector<double> drn_predict(std::span<const double> residual, const Network& drn) {
  return forward(drn, residual);
}

}  // namespace dqmp::nnet
