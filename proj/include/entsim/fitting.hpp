#pragma once

#include <functional>
#include <span>
#include <vector>

namespace entsim::fit {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct FitResult {
  std::vector<double> params;
  /// 1-sigma from the covariance of the linearised problem.
  std::vector<double> sigmas;
  double residual_sum_squares = 0.0;
  bool converged = false;
  int iterations = 0;
};

enum class Weighting {
  poisson,   // 1 / max(y, 1)
  uniform,   // 1
  explicit_, // FitOptions::weights, one per point
};

struct FitOptions {
  Weighting weighting = Weighting::poisson;
  std::vector<double> weights;
  /// Treat weights as 1/variance and skip the residual-variance rescaling of
  /// the covariance.
  bool absolute_weights = false;
  int max_iterations = 200;
};

// --- linear -----------------------------------------------------------------

/// Weighted least squares y = a P^2 + b P (no constant). params = {a, b}.
/// Throws SingularFit unless at least two distinct non-zero P are present.
FitResult fit_quadratic_linear(std::span<const Point> points, const FitOptions& options = {});

// --- peaks ------------------------------------------------------------------

enum class Polarity { automatic, peak, dip };

struct PeakFit {
  double center = 0.0;
  double fwhm = 0.0;
  double amplitude = 0.0;
  double offset = 0.0;
  FitResult fit;  // params = {center, fwhm, amplitude, offset}

  double center_sigma() const { return fit.sigmas.at(0); }
  double fwhm_sigma() const { return fit.sigmas.at(1); }
  double peak_value() const { return offset + amplitude; }
};

/// y = offset + amplitude / (1 + (2 (x - center) / fwhm)^2).
PeakFit fit_lorentzian(std::span<const Point> points, const FitOptions& options = {},
                       Polarity polarity = Polarity::automatic);

/// y = offset + amplitude exp(-4 ln2 (x - center)^2 / fwhm^2).
PeakFit fit_gaussian(std::span<const Point> points, const FitOptions& options = {},
                     Polarity polarity = Polarity::automatic);

// --- sinusoid ---------------------------------------------------------------

enum class SinusoidAxis {
  phase,    // y = offset + amplitude cos(x + phase0)
  voltage,  // y = offset + amplitude cos(rad_per_unit x + phase0)
};

struct SinusoidFit {
  double amplitude = 0.0;
  double phase0 = 0.0;
  double offset = 0.0;
  double rad_per_unit = 1.0;
  double visibility = 0.0;
  double visibility_sigma = 0.0;
  bool unphysical = false;  // amplitude > offset
  FitResult fit;            // params = {amplitude, phase0, offset[, rad_per_unit]}
};

SinusoidFit fit_sinusoid(std::span<const Point> points, SinusoidAxis axis = SinusoidAxis::phase,
                         const FitOptions& options = {});

// --- solver -----------------------------------------------------------------

using ModelFn = std::function<double(double x, std::span<const double> params)>;
/// Writes d model / d params into `gradient` (size = params.size()).
using GradientFn = std::function<void(double x, std::span<const double> params, std::span<double> gradient)>;

/// Damped Gauss-Newton with Levenberg-Marquardt lambda control (x10 on a
/// rejected step, /10 on an accepted one). Stops when the relative parameter
/// change drops below 1e-10 or the relative RSS change below 1e-12.
FitResult levenberg_marquardt(std::span<const Point> points, std::span<const double> weights,
                              const ModelFn& model, const GradientFn& gradient,
                              std::vector<double> initial, bool absolute_weights, int max_iterations);

namespace models {
double lorentzian(double x, std::span<const double> p);
void lorentzian_gradient(double x, std::span<const double> p, std::span<double> g);
double gaussian(double x, std::span<const double> p);
void gaussian_gradient(double x, std::span<const double> p, std::span<double> g);
/// p = {amplitude, phase0, offset[, rad_per_unit]}.
double sinusoid(double x, std::span<const double> p);
void sinusoid_gradient(double x, std::span<const double> p, std::span<double> g);
}  // namespace models

}  // namespace entsim::fit
