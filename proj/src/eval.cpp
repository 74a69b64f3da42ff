#include "dqmp/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "dqmp/errors.hpp"
#include "dqmp/metrics.hpp"
#include "dqmp/parallel.hpp"

namespace dqmp {

const std::array<const char*, kParamCount> kParamNames{"e0", "alpha", "tau"};

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void write_text(const std::string& path, const std::string& text) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  std::fwrite(text.data(), 1, text.size(), f);
  if (std::fclose(f) != 0) throw IoError("write failed for '" + path + "'");
}

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string g17(double v) { return format("%.17g", v); }

PixelResult fit_one(const Fitter& f, const kvfd::Curve& c, std::uint64_t seed, const kvfd::ParameterVector& truth) {
  PixelResult pr;
  pr.truth = truth;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    pr.fit = f.fit(c, seed);
  } catch (const std::exception& e) {
    pr.failed = true;
    pr.error = e.what();
  }
  pr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return pr;
}

}  // namespace

void PhantomSpec::validate() const {
  if (rows < 1 || cols < 1) throw DomainError("PhantomSpec: empty grid");
  if (m < 2) throw DomainError("PhantomSpec: need at least 2 samples per curve");
  protocol.validate();
  noise.validate();
  std::vector<int> cover(rows * cols, 0);
  for (const auto& r : regions) {
    kvfd::check_params(r.theta);
    if (r.rows < 1 || r.cols < 1 || r.row0 + r.rows > rows || r.col0 + r.cols > cols) {
      throw DomainError("PhantomSpec: region outside the grid");
    }
    for (std::size_t i = r.row0; i < r.row0 + r.rows; ++i) {
      for (std::size_t j = r.col0; j < r.col0 + r.cols; ++j) ++cover[i * cols + j];
    }
  }
  for (int c : cover) {
    if (c != 1) throw DomainError("PhantomSpec: regions must tile the grid without overlap");
  }
}

const kvfd::ParameterVector& PhantomSpec::truth(std::size_t pixel) const {
  const std::size_t i = pixel / cols, j = pixel % cols;
  for (const auto& r : regions) {
    if (i >= r.row0 && i < r.row0 + r.rows && j >= r.col0 && j < r.col0 + r.cols) return r.theta;
  }
  throw DomainError("PhantomSpec: pixel not covered by any region");
}

PhantomSpec quadrant_phantom() {
  PhantomSpec s;
  s.regions = {{0, 0, 8, 8, {20000, 0.7, 800}},
               {0, 8, 8, 8, {40000, 0.5, 600}},
               {8, 0, 8, 8, {60000, 0.3, 400}},
               {8, 8, 8, 8, {80000, 0.1, 200}}};
  return s;
}

std::uint64_t curve_seed(std::uint64_t master, std::size_t index) { return derive_seed(master, index); }

std::uint64_t fitter_seed(std::uint64_t master, std::size_t index) {
  return derive_seed(mix64(master ^ 0x9e3779b97f4a7c15ULL), index);
}

kvfd::Curve phantom_curve(const PhantomSpec& spec, std::size_t pixel, std::uint64_t master_seed) {
  std::mt19937_64 rng(curve_seed(master_seed, pixel));
  return add_noise(kvfd::sample_curve(spec.truth(pixel), spec.protocol, spec.m), spec.noise, rng);
}

MethodSummary summarize(const std::string& name, const std::vector<PixelResult>& results) {
  MethodSummary s;
  s.name = name;
  std::array<std::vector<double>, kParamCount> err, est, tru;
  double r2 = 0.0;
  for (const auto& p : results) {
    s.seconds += p.seconds;
    if (p.failed) {
      ++s.failed;
      continue;
    }
    ++s.count;
    const auto e = relative_error(p.fit.theta_hat, p.truth);
    const auto a = to_array(p.fit.theta_hat);
    const auto t = to_array(p.truth);
    for (std::size_t i = 0; i < kParamCount; ++i) {
      err[i].push_back(e[i]);
      est[i].push_back(a[i]);
      tru[i].push_back(t[i]);
    }
    r2 += p.fit.r_squared;
  }
  if (s.count == 0) {
    s.mean_error.fill(kNaN);
    s.std_error.fill(kNaN);
    s.mean_abs_error.fill(kNaN);
    s.pearson.fill(kNaN);
    s.pearson_p.fill(kNaN);
    s.mean_r_squared = kNaN;
    return s;
  }
  const double n = static_cast<double>(s.count);
  s.mean_r_squared = r2 / n;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    double sum = 0.0, abs_sum = 0.0;
    for (double v : err[i]) {
      sum += v;
      abs_sum += std::abs(v);
    }
    s.mean_error[i] = sum / n;
    s.mean_abs_error[i] = abs_sum / n;
    double ss = 0.0;
    for (double v : err[i]) ss += (v - s.mean_error[i]) * (v - s.mean_error[i]);
    s.std_error[i] = s.count > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    try {
      s.pearson[i] = pearson_r(est[i], tru[i]);
      s.pearson_p[i] = pearson_p_value(s.pearson[i], s.count);
    } catch (const DomainError&) {
      s.pearson[i] = kNaN;
      s.pearson_p[i] = kNaN;
    }
  }
  return s;
}

PhantomResult run_phantom(const PhantomSpec& spec, const std::vector<Fitter>& fitters, std::uint64_t master_seed,
                          unsigned threads) {
  spec.validate();
  if (fitters.empty()) throw DomainError("run_phantom: no fitters");
  const std::size_t n = spec.rows * spec.cols;
  PhantomResult out;
  for (const auto& f : fitters) {
    MethodResult mr;
    mr.name = f.name;
    mr.pixels.resize(n);
    parallel_for(n, threads, [&](std::size_t i) {
      const auto c = phantom_curve(spec, i, master_seed);
      mr.pixels[i] = fit_one(f, c, fitter_seed(master_seed, i), spec.truth(i));
    });
    mr.image.rows = spec.rows;
    mr.image.cols = spec.cols;
    for (auto& ch : mr.image.channels) ch.assign(n, kNaN);
    for (std::size_t i = 0; i < n; ++i) {
      if (mr.pixels[i].failed) continue;
      const auto a = to_array(mr.pixels[i].fit.theta_hat);
      for (std::size_t k = 0; k < kParamCount; ++k) mr.image.channels[k][i] = a[k];
    }
    mr.summary = summarize(f.name, mr.pixels);
    out.methods.push_back(std::move(mr));
  }
  return out;
}

std::vector<SweepCell> run_noise_sweep(const SweepSpec& spec, const Fitter& fitter, std::uint64_t master_seed,
                                       unsigned threads) {
  if (spec.n_curves < 1) throw DomainError("run_noise_sweep: n_curves must be >= 1");
  kvfd::check_params(spec.theta);
  std::vector<SweepCell> cells;
  std::uint64_t cell_index = 0;
  for (const auto& proto : spec.protocols) {
    proto.validate();
    const auto clean = kvfd::sample_curve(spec.theta, proto, spec.m);
    for (const auto& noise : spec.noises) {
      noise.validate();
      const std::uint64_t cell_seed = derive_seed(master_seed, cell_index++);
      std::vector<PixelResult> reps(spec.n_curves);
      parallel_for(spec.n_curves, threads, [&](std::size_t i) {
        std::mt19937_64 rng(curve_seed(cell_seed, i));
        const auto c = add_noise(clean, noise, rng);
        reps[i] = fit_one(fitter, c, fitter_seed(cell_seed, i), spec.theta);
      });
      cells.push_back({proto.protocol, noise, summarize(fitter.name, reps)});
    }
  }
  return cells;
}

std::string summary_table(const std::vector<MethodSummary>& rows) {
  std::ostringstream os;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-8s %22s %22s %22s %8s %8s %8s %8s %6s\n", "method", "E0 err % (mean+-std)",
                "alpha err % (mean+-std)", "tau err % (mean+-std)", "R2", "r_E0", "r_alpha", "r_tau", "failed");
  os << buf;
  for (const auto& s : rows) {
    std::string cols[kParamCount];
    for (std::size_t i = 0; i < kParamCount; ++i) {
      std::snprintf(buf, sizeof buf, "%.3f +- %.3f", s.mean_error[i], s.std_error[i]);
      cols[i] = buf;
    }
    std::snprintf(buf, sizeof buf, "%-8s %22s %22s %22s %8.4f %8.4f %8.4f %8.4f %6zu\n", s.name.c_str(),
                  cols[0].c_str(), cols[1].c_str(), cols[2].c_str(), s.mean_r_squared, s.pearson[0], s.pearson[1],
                  s.pearson[2], s.failed);
    os << buf;
  }
  return os.str();
}

std::string summary_csv(const std::vector<MethodSummary>& rows) {
  std::ostringstream os;
  os << "method,count,failed";
  for (const char* p : kParamNames) os << ',' << p << "_mean," << p << "_std," << p << "_abs";
  os << ",r_squared";
  for (const char* p : kParamNames) os << ",pearson_" << p << ",pearson_p_" << p;
  os << '\n';
  for (const auto& s : rows) {
    os << s.name << ',' << s.count << ',' << s.failed;
    for (std::size_t i = 0; i < kParamCount; ++i) {
      os << ',' << g17(s.mean_error[i]) << ',' << g17(s.std_error[i]) << ',' << g17(s.mean_abs_error[i]);
    }
    os << ',' << g17(s.mean_r_squared);
    for (std::size_t i = 0; i < kParamCount; ++i) os << ',' << g17(s.pearson[i]) << ',' << g17(s.pearson_p[i]);
    os << '\n';
  }
  return os.str();
}

std::string sweep_table(const std::vector<SweepCell>& cells) {
  std::ostringstream os;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-13s %-12s %10s %22s %22s %22s %8s %6s\n", "protocol", "noise", "scale",
                "E0 err % (mean+-std)", "alpha err % (mean+-std)", "tau err % (mean+-std)", "R2", "failed");
  os << buf;
  for (const auto& c : cells) {
    std::string cols[kParamCount];
    for (std::size_t i = 0; i < kParamCount; ++i) {
      std::snprintf(buf, sizeof buf, "%.3f +- %.3f", c.summary.mean_error[i], c.summary.std_error[i]);
      cols[i] = buf;
    }
    std::snprintf(buf, sizeof buf, "%-13s %-12s %10.3g %22s %22s %22s %8.4f %6zu\n", kvfd::protocol_name(c.protocol),
                  noise_family_name(c.noise.family), c.noise.scale, cols[0].c_str(), cols[1].c_str(), cols[2].c_str(),
                  c.summary.mean_r_squared, c.summary.failed);
    os << buf;
  }
  return os.str();
}

std::string sweep_csv(const std::vector<SweepCell>& cells) {
  std::ostringstream os;
  os << "protocol,noise,scale,relative,count,failed";
  for (const char* p : kParamNames) os << ',' << p << "_mean," << p << "_std," << p << "_abs";
  os << ",r_squared\n";
  for (const auto& c : cells) {
    const auto& s = c.summary;
    os << kvfd::protocol_name(c.protocol) << ',' << noise_family_name(c.noise.family) << ',' << g17(c.noise.scale)
       << ',' << (c.noise.relative ? 1 : 0) << ',' << s.count << ',' << s.failed;
    for (std::size_t i = 0; i < kParamCount; ++i) {
      os << ',' << g17(s.mean_error[i]) << ',' << g17(s.std_error[i]) << ',' << g17(s.mean_abs_error[i]);
    }
    os << ',' << g17(s.mean_r_squared) << '\n';
  }
  return os.str();
}

void export_image(const ParamImage& img, const std::string& prefix) {
  const std::size_t n = img.rows * img.cols;
  if (n == 0) throw DomainError("export_image: empty image");
  for (std::size_t k = 0; k < kParamCount; ++k) {
    const auto& ch = img.channels[k];
    if (ch.size() != n) throw DomainError("export_image: channel size does not match the grid");
    const std::string base = prefix + "_" + kParamNames[k];

    std::string csv;
    for (std::size_t i = 0; i < img.rows; ++i) {
      for (std::size_t j = 0; j < img.cols; ++j) {
        if (j) csv += ',';
        csv += g17(ch[i * img.cols + j]);
      }
      csv += '\n';
    }
    write_text(base + ".csv", csv);

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : ch) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (!(lo <= hi)) lo = hi = 0.0;
    std::string pgm = "P5 " + std::to_string(img.cols) + " " + std::to_string(img.rows) + " 65535\n";
    for (double v : ch) {
      unsigned level = 0;
      if (std::isfinite(v) && hi > lo) level = static_cast<unsigned>(std::lround(65535.0 * (v - lo) / (hi - lo)));
      pgm += static_cast<char>((level >> 8) & 0xff);
      pgm += static_cast<char>(level & 0xff);
    }
    write_text(base + ".pgm", pgm);
    write_text(base + ".window.txt", "min = " + g17(lo) + "\nmax = " + g17(hi) + "\n");
  }
}

std::vector<double> read_image_csv(const std::string& path, std::size_t rows, std::size_t cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<double> out;
  std::string line;
  std::size_t r = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        out.push_back(std::stod(cell));
      } catch (const std::exception&) {
        if (cell == "nan" || cell == "-nan") {
          out.push_back(kNaN);
        } else {
          throw FormatError(path + ": bad value '" + cell + "'");
        }
      }
      ++c;
    }
    if (c != cols) throw FormatError(path + ": row " + std::to_string(r + 1) + " has the wrong width");
    ++r;
  }
  if (r != rows) throw FormatError(path + ": wrong number of rows");
  return out;
}

void write_phantom_outputs(const std::string& dir, const PhantomResult& result) {
  std::filesystem::create_directories(dir);
  std::vector<MethodSummary> rows;
  std::string timing, pixels = "method,pixel,row,col,e0,alpha,tau,r_squared,mae,iterations,terminated_by,failed\n";
  for (const auto& m : result.methods) {
    rows.push_back(m.summary);
    timing += m.name + " = " + format("%.3f", m.summary.seconds) + "\n";
    export_image(m.image, dir + "/" + m.name);
    for (std::size_t i = 0; i < m.pixels.size(); ++i) {
      const auto& p = m.pixels[i];
      pixels += m.name + "," + std::to_string(i) + "," + std::to_string(i / m.image.cols) + "," +
                std::to_string(i % m.image.cols) + "," + g17(p.fit.theta_hat.e0) + "," + g17(p.fit.theta_hat.alpha) +
                "," + g17(p.fit.theta_hat.tau) + "," + g17(p.fit.r_squared) + "," + g17(p.fit.mae) + "," +
                std::to_string(p.fit.iterations) + "," + termination_name(p.fit.terminated_by) + "," +
                (p.failed ? "1" : "0") + "\n";
    }
  }
  write_text(dir + "/report.txt", summary_table(rows));
  write_text(dir + "/report.csv", summary_csv(rows));
  write_text(dir + "/pixels.csv", pixels);
  write_text(dir + "/timing.txt", timing);
}

}  // namespace dqmp
