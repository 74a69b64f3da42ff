#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dqmp/datagen.hpp"
#include "dqmp/dqmp.hpp"
#include "dqmp/kvfd.hpp"

namespace dqmp {

/// Pixel rectangle [row0, row0 + rows) x [col0, col0 + cols) with one parameter triple.
struct Region {
  std::size_t row0 = 0;
  std::size_t col0 = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  kvfd::ParameterVector theta;
};

struct PhantomSpec {
  std::size_t rows = 16;
  std::size_t cols = 16;
  std::vector<Region> regions;
  NoiseSpec noise{NoiseFamily::Gaussian, 1e-3, true, true};
  kvfd::ProtocolConfig protocol = kvfd::preset(kvfd::Protocol::RampRelaxation);
  std::size_t m = 250;

  /// Throws DomainError unless the regions tile the grid exactly.
  void validate() const;
  /// Parameters of the region covering pixel (row-major index).
  const kvfd::ParameterVector& truth(std::size_t pixel) const;
};

/// 16x16 grid split into four 8x8 quadrants (row-major from the top left):
/// [20000, 0.7, 800], [40000, 0.5, 600], [60000, 0.3, 400], [80000, 0.1, 200].
PhantomSpec quadrant_phantom();

/// Fits one curve; `seed` is shared by all fitters for the same pixel.
using FitFn = std::function<FitResult(const kvfd::Curve& curve, std::uint64_t seed)>;

struct Fitter {
  std::string name;
  FitFn fit;
};

/// Noise generator seed of pixel/replica i and the seed handed to fitters.
std::uint64_t curve_seed(std::uint64_t master, std::size_t index);
std::uint64_t fitter_seed(std::uint64_t master, std::size_t index);

/// Noisy curve of pixel i; identical for every fitter.
kvfd::Curve phantom_curve(const PhantomSpec& spec, std::size_t pixel, std::uint64_t master_seed);

struct PixelResult {
  kvfd::ParameterVector truth;
  FitResult fit;
  bool failed = false;
  std::string error;
  double seconds = 0.0;
};

/// Statistics over the non-failed pixels or replicas. Errors are signed
/// percentages; Pearson r (NaN when undefined) compares estimates with truth.
struct MethodSummary {
  std::string name;
  std::size_t count = 0;
  std::size_t failed = 0;
  std::array<double, kParamCount> mean_error{};
  std::array<double, kParamCount> std_error{};
  std::array<double, kParamCount> mean_abs_error{};
  double mean_r_squared = 0.0;
  std::array<double, kParamCount> pearson{};
  std::array<double, kParamCount> pearson_p{};
  double seconds = 0.0;
};

MethodSummary summarize(const std::string& name, const std::vector<PixelResult>& results);

/// One scalar channel per parameter, row-major.
struct ParamImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::array<std::vector<double>, kParamCount> channels;
};

struct MethodResult {
  std::string name;
  std::vector<PixelResult> pixels;
  ParamImage image;
  MethodSummary summary;
};

struct PhantomResult {
  std::vector<MethodResult> methods;
};

/// Fits every pixel with every fitter. Pixel fits run on `threads` workers;
/// results do not depend on the thread count. Fit exceptions mark the pixel
/// failed (NaN in the images).
PhantomResult run_phantom(const PhantomSpec& spec, const std::vector<Fitter>& fitters, std::uint64_t master_seed,
                          unsigned threads = 1);

struct SweepCell {
  kvfd::Protocol protocol = kvfd::Protocol::RampRelaxation;
  NoiseSpec noise;
  MethodSummary summary;
};

struct SweepSpec {
  kvfd::ParameterVector theta{20000, 0.2, 50};
  std::vector<kvfd::ProtocolConfig> protocols{kvfd::preset(kvfd::Protocol::RampRelaxation)};
  std::vector<NoiseSpec> noises{NoiseSpec{}};
  std::size_t n_curves = 50;
  std::size_t m = 250;
};

/// n_curves independently noised replicas of the theta curve per
/// (protocol, noise) cell, each fitted by `fitter`.
std::vector<SweepCell> run_noise_sweep(const SweepSpec& spec, const Fitter& fitter, std::uint64_t master_seed,
                                       unsigned threads = 1);

/// Text table: method, signed mean +- std error per parameter (%), mean R^2,
/// Pearson r per parameter, failures.
std::string summary_table(const std::vector<MethodSummary>& rows);
std::string summary_csv(const std::vector<MethodSummary>& rows);
std::string sweep_table(const std::vector<SweepCell>& cells);
std::string sweep_csv(const std::vector<SweepCell>& cells);

/// Per channel: <prefix>_<param>.csv (rows lines of cols values),
/// <prefix>_<param>.pgm (binary P5, 16-bit big-endian, maxval 65535, linear
/// over [min, max] of the finite values) and <prefix>_<param>.window.txt.
void export_image(const ParamImage& img, const std::string& prefix);
/// Reads back one CSV channel written by export_image.
std::vector<double> read_image_csv(const std::string& path, std::size_t rows, std::size_t cols);

/// report.txt, report.csv, per-method images and pixels.csv under `dir`,
/// plus timing.txt (the only non-reproducible file).
void write_phantom_outputs(const std::string& dir, const PhantomResult& result);

extern const std::array<const char*, kParamCount> kParamNames;

}  // namespace dqmp
