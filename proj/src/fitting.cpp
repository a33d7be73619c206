#include "entsim/fitting.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "entsim/errors.hpp"
#include "entsim/units.hpp"

namespace entsim::fit {

namespace {

constexpr double kFourLn2 = 2.772588722239781;

std::vector<double> resolve_weights(std::span<const Point> points, const FitOptions& options) {
  std::vector<double> w(points.size(), 1.0);
  switch (options.weighting) {
    case Weighting::uniform:
      break;
    case Weighting::poisson:
      for (std::size_t i = 0; i < points.size(); ++i) w[i] = 1.0 / std::max(points[i].y, 1.0);
      break;
    case Weighting::explicit_:
      if (options.weights.size() != points.size())
        throw DomainError("explicit weights must match the number of points");
      w = options.weights;
      for (double v : w)
        if (!(v >= 0.0)) throw DomainError("weights must be non-negative");
      break;
  }
  return w;
}

// Points (and their weights) in ascending x, ties by y, so initial guesses
// and results do not depend on input order.
struct Sorted {
  std::vector<Point> points;
  std::vector<double> weights;
};

Sorted sort_points(std::span<const Point> points, const FitOptions& options) {
  const std::vector<double> w = resolve_weights(points, options);
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].x != points[b].x) return points[a].x < points[b].x;
    if (points[a].y != points[b].y) return points[a].y < points[b].y;
    return w[a] < w[b];
  });
  Sorted s;
  s.points.reserve(points.size());
  s.weights.reserve(points.size());
  for (std::size_t i : order) {
    s.points.push_back(points[i]);
    s.weights.push_back(w[i]);
  }
  return s;
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& normal, double scale) {
  Eigen::MatrixXd cov = normal.completeOrthogonalDecomposition().pseudoInverse();
  return cov * scale;
}

std::vector<double> sigmas_from(const Eigen::MatrixXd& cov) {
  std::vector<double> s(static_cast<std::size_t>(cov.rows()));
  for (Eigen::Index i = 0; i < cov.rows(); ++i) s[static_cast<std::size_t>(i)] = std::sqrt(std::max(cov(i, i), 0.0));
  return s;
}

// Initial peak guess: median offset, extremum of the chosen polarity (lowest
// index on ties), and a second-moment width from the contiguous excess
// around the extremum.
std::vector<double> peak_initial(const std::vector<Point>& pts, Polarity polarity) {
  std::vector<double> ys(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) ys[i] = pts[i].y;
  const double offset = median(ys);
  const auto max_it = std::max_element(ys.begin(), ys.end());
  const auto min_it = std::min_element(ys.begin(), ys.end());
  bool dip = polarity == Polarity::dip;
  if (polarity == Polarity::automatic) dip = (offset - *min_it) > (*max_it - offset);
  const std::size_t peak = static_cast<std::size_t>((dip ? min_it : max_it) - ys.begin());
  const double sign = dip ? -1.0 : 1.0;
  const double amplitude = ys[peak] - offset;

  auto excess = [&](std::size_t i) { return sign * (ys[i] - offset); };
  std::size_t lo = peak, hi = peak;
  while (lo > 0 && excess(lo - 1) > 0.0) --lo;
  while (hi + 1 < pts.size() && excess(hi + 1) > 0.0) ++hi;
  double sw = 0.0, sxx = 0.0;
  const double c = pts[peak].x;
  for (std::size_t i = lo; i <= hi; ++i) {
    const double e = excess(i);
    sw += e;
    sxx += e * (pts[i].x - c) * (pts[i].x - c);
  }
  const double span = pts.back().x - pts.front().x;
  double min_dx = span;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i].x > pts[i - 1].x) min_dx = std::min(min_dx, pts[i].x - pts[i - 1].x);
  double fwhm = sw > 0.0 ? sigma_to_fwhm(std::sqrt(sxx / sw)) : 0.0;
  fwhm = std::clamp(fwhm, 2.0 * min_dx, std::max(span, 2.0 * min_dx));
  return {c, fwhm, amplitude, offset};
}

PeakFit fit_peak(std::span<const Point> points, const FitOptions& options, Polarity polarity,
                 const ModelFn& model, const GradientFn& gradient) {
  if (points.size() < 5) throw DomainError("peak fit needs at least 5 points");
  const Sorted s = sort_points(points, options);
  const std::vector<double> init = peak_initial(s.points, polarity);
  PeakFit out;
  out.fit = levenberg_marquardt(s.points, s.weights, model, gradient, init, options.absolute_weights,
                                options.max_iterations);
  out.fit.params[1] = std::abs(out.fit.params[1]);
  out.center = out.fit.params[0];
  out.fwhm = out.fit.params[1];
  out.amplitude = out.fit.params[2];
  out.offset = out.fit.params[3];
  return out;
}

double wrap_phase(double phi) {
  phi = std::remainder(phi, 2.0 * constants::pi);
  if (phi <= -constants::pi) phi += 2.0 * constants::pi;
  return phi;
}

}  // namespace

// ---------------------------------------------------------------------------

FitResult fit_quadratic_linear(std::span<const Point> points, const FitOptions& options) {
  for (const auto& p : points)
    if (p.x < 0.0) throw DomainError("pump powers must be non-negative");
  const Sorted s = sort_points(points, options);

  double s44 = 0, s33 = 0, s22 = 0, s2y = 0, s1y = 0;
  std::size_t distinct_nonzero = 0;
  double last_x = -1.0;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const double x = s.points[i].x, y = s.points[i].y, w = s.weights[i];
    if (x > 0.0 && x != last_x) ++distinct_nonzero;
    last_x = x;
    s44 += w * x * x * x * x;
    s33 += w * x * x * x;
    s22 += w * x * x;
    s2y += w * x * x * y;
    s1y += w * x * y;
  }
  const double det = s44 * s22 - s33 * s33;
  if (distinct_nonzero < 2 || !(std::abs(det) > 1e-12 * s44 * s22))
    throw SingularFit("quadratic+linear fit needs at least two distinct non-zero powers");

  FitResult r;
  const double a = (s2y * s22 - s1y * s33) / det;
  const double b = (s44 * s1y - s33 * s2y) / det;
  r.params = {a, b};
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const double x = s.points[i].x;
    const double res = s.points[i].y - (a * x * x + b * x);
    r.residual_sum_squares += s.weights[i] * res * res;
  }
  const std::size_t n = s.points.size();
  const double scale = options.absolute_weights ? 1.0
                       : n > 2                  ? r.residual_sum_squares / static_cast<double>(n - 2)
                                                : 0.0;
  r.sigmas = {std::sqrt(std::max(s22 / det * scale, 0.0)), std::sqrt(std::max(s44 / det * scale, 0.0))};
  r.converged = true;
  r.iterations = 0;
  return r;
}

FitResult levenberg_marquardt(std::span<const Point> points, std::span<const double> weights,
                              const ModelFn& model, const GradientFn& gradient, std::vector<double> p,
                              bool absolute_weights, int max_iterations) {
  const auto n = static_cast<Eigen::Index>(points.size());
  const auto m = static_cast<Eigen::Index>(p.size());
  Eigen::MatrixXd J(n, m);
  Eigen::VectorXd r(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) w(i) = weights[static_cast<std::size_t>(i)];
  std::vector<double> g(p.size());

  auto evaluate = [&](const std::vector<double>& params, Eigen::VectorXd& res) {
    double rss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& pt = points[static_cast<std::size_t>(i)];
      res(i) = pt.y - model(pt.x, params);
      rss += w(i) * res(i) * res(i);
    }
    return rss;
  };
  auto jacobian = [&](const std::vector<double>& params) {
    for (Eigen::Index i = 0; i < n; ++i) {
      gradient(points[static_cast<std::size_t>(i)].x, params, g);
      for (Eigen::Index j = 0; j < m; ++j) J(i, j) = g[static_cast<std::size_t>(j)];
    }
  };

  FitResult out;
  double rss = evaluate(p, r);
  jacobian(p);
  double lambda = 1e-3;
  Eigen::VectorXd r_trial(n);
  std::vector<double> trial(p.size());

  while (out.iterations < max_iterations) {
    ++out.iterations;
    const Eigen::MatrixXd A = J.transpose() * w.asDiagonal() * J;
    const Eigen::VectorXd grad = J.transpose() * (w.asDiagonal() * r);
    Eigen::MatrixXd damped = A;
    for (Eigen::Index j = 0; j < m; ++j) damped(j, j) += lambda * (A(j, j) > 0.0 ? A(j, j) : 1.0);
    const Eigen::VectorXd step = damped.ldlt().solve(grad);
    for (Eigen::Index j = 0; j < m; ++j) trial[static_cast<std::size_t>(j)] = p[static_cast<std::size_t>(j)] + step(j);
    const double rss_trial = step.allFinite() ? evaluate(trial, r_trial) : INFINITY;

    if (std::isfinite(rss_trial) && rss_trial < rss) {
      double rel_step = 0.0;
      for (Eigen::Index j = 0; j < m; ++j)
        rel_step = std::max(rel_step, std::abs(step(j)) / (std::abs(trial[static_cast<std::size_t>(j)]) + 1e-300));
      const double rel_rss = (rss - rss_trial) / std::max(rss, 1e-300);
      p = trial;
      r = r_trial;
      rss = rss_trial;
      jacobian(p);
      lambda = std::max(lambda / 10.0, 1e-12);
      if (rel_step < 1e-10 || rel_rss < 1e-12) {
        out.converged = true;
        break;
      }
    } else {
      lambda *= 10.0;
      // No damping level reduces the RSS: numerically stationary.
      if (lambda > 1e16) {
        out.converged = true;
        break;
      }
    }
  }

  const Eigen::MatrixXd A = J.transpose() * w.asDiagonal() * J;
  const double dof = static_cast<double>(n - m);
  const double scale = absolute_weights ? 1.0 : (dof > 0 ? rss / dof : 0.0);
  out.params = p;
  out.sigmas = sigmas_from(covariance(A, scale));
  out.residual_sum_squares = rss;
  return out;
}

// ---------------------------------------------------------------------------

namespace models {

double lorentzian(double x, std::span<const double> p) {
  const double u = 2.0 * (x - p[0]) / p[1];
  return p[3] + p[2] / (1.0 + u * u);
}

void lorentzian_gradient(double x, std::span<const double> p, std::span<double> g) {
  const double u = 2.0 * (x - p[0]) / p[1];
  const double d = 1.0 + u * u;
  const double common = 2.0 * p[2] * u / (d * d);  // -(d model / d u)
  g[0] = common * 2.0 / p[1];
  g[1] = common * u / p[1];
  g[2] = 1.0 / d;
  g[3] = 1.0;
}

double gaussian(double x, std::span<const double> p) {
  const double u = (x - p[0]) / p[1];
  return p[3] + p[2] * std::exp(-kFourLn2 * u * u);
}

void gaussian_gradient(double x, std::span<const double> p, std::span<double> g) {
  const double u = (x - p[0]) / p[1];
  const double e = std::exp(-kFourLn2 * u * u);
  g[0] = p[2] * e * 2.0 * kFourLn2 * u / p[1];
  g[1] = p[2] * e * 2.0 * kFourLn2 * u * u / p[1];
  g[2] = e;
  g[3] = 1.0;
}

double sinusoid(double x, std::span<const double> p) {
  const double k = p.size() > 3 ? p[3] : 1.0;
  return p[2] + p[0] * std::cos(k * x + p[1]);
}

void sinusoid_gradient(double x, std::span<const double> p, std::span<double> g) {
  const double k = p.size() > 3 ? p[3] : 1.0;
  const double arg = k * x + p[1];
  g[0] = std::cos(arg);
  g[1] = -p[0] * std::sin(arg);
  g[2] = 1.0;
  if (p.size() > 3) g[3] = -p[0] * x * std::sin(arg);
}

}  // namespace models

PeakFit fit_lorentzian(std::span<const Point> points, const FitOptions& options, Polarity polarity) {
  return fit_peak(points, options, polarity, models::lorentzian, models::lorentzian_gradient);
}

PeakFit fit_gaussian(std::span<const Point> points, const FitOptions& options, Polarity polarity) {
  return fit_peak(points, options, polarity, models::gaussian, models::gaussian_gradient);
}

SinusoidFit fit_sinusoid(std::span<const Point> points, SinusoidAxis axis, const FitOptions& options) {
  if (points.size() < 4) throw DomainError("sinusoid fit needs at least 4 points");
  const Sorted s = sort_points(points, options);
  const auto& pts = s.points;

  double mean = 0.0, ymax = pts[0].y, ymin = pts[0].y;
  for (const auto& pt : pts) {
    mean += pt.y;
    ymax = std::max(ymax, pt.y);
    ymin = std::min(ymin, pt.y);
  }
  mean /= static_cast<double>(pts.size());

  // Discrete correlation over 64 trial phases (and trial frequencies in
  // voltage mode); the first maximum wins.
  constexpr int kPhaseGrid = 64;
  auto best_phase = [&](double k, double& score) {
    double best = -INFINITY, phase = 0.0;
    for (int j = 0; j < kPhaseGrid; ++j) {
      const double theta = 2.0 * constants::pi * j / kPhaseGrid;
      double corr = 0.0, norm = 0.0;
      for (const auto& pt : pts) {
        const double c = std::cos(k * pt.x + theta);
        corr += (pt.y - mean) * c;
        norm += c * c;
      }
      const double val = norm > 0.0 ? corr / std::sqrt(norm) : 0.0;
      if (val > best) {
        best = val;
        phase = theta;
      }
    }
    score = best;
    return phase;
  };

  double k0 = 1.0, score = 0.0;
  double phase0 = best_phase(1.0, score);
  if (axis == SinusoidAxis::voltage) {
    const double span = pts.back().x - pts.front().x;
    if (!(span > 0.0)) throw DomainError("voltage sweep needs distinct abscissae");
    double min_dx = span;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (pts[i].x > pts[i - 1].x) min_dx = std::min(min_dx, pts[i].x - pts[i - 1].x);
    // Periods from four spans down to two sample spacings.
    const double k_lo = 2.0 * constants::pi / (4.0 * span);
    const double k_hi = constants::pi / min_dx;
    constexpr int kFreqGrid = 400;
    double best = -INFINITY;
    for (int i = 0; i < kFreqGrid; ++i) {
      const double k = k_lo * std::pow(k_hi / k_lo, static_cast<double>(i) / (kFreqGrid - 1));
      double sc = 0.0;
      const double ph = best_phase(k, sc);
      if (sc > best) {
        best = sc;
        k0 = k;
        phase0 = ph;
      }
    }
  }

  std::vector<double> init{0.5 * (ymax - ymin), phase0, mean};
  if (axis == SinusoidAxis::voltage) init.push_back(k0);

  SinusoidFit out;
  out.fit = levenberg_marquardt(pts, s.weights, models::sinusoid, models::sinusoid_gradient, init,
                                options.absolute_weights, options.max_iterations);
  auto& p = out.fit.params;
  if (p[0] < 0.0) {
    p[0] = -p[0];
    p[1] += constants::pi;
  }
  p[1] = wrap_phase(p[1]);
  out.amplitude = p[0];
  out.phase0 = p[1];
  out.offset = p[2];
  out.rad_per_unit = axis == SinusoidAxis::voltage ? p[3] : 1.0;
  out.visibility = out.offset != 0.0 ? out.amplitude / out.offset : 0.0;
  out.unphysical = out.amplitude > out.offset;

  // Propagate amplitude and offset uncertainties into the visibility.
  // Their correlation is dropped: on a sweep covering whole periods the
  // cos term is orthogonal to the constant.
  const double sa = out.fit.sigmas[0], so = out.fit.sigmas[2];
  if (out.amplitude > 0.0 && out.offset != 0.0)
    out.visibility_sigma = std::abs(out.visibility) * std::hypot(sa / out.amplitude, so / out.offset);
  return out;
}

}  // namespace entsim::fit
