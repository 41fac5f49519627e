#include "rawscore/optics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace rawscore {

namespace {

double model(const Eigen::Vector4d& p, double x) {
  const double u = (x - p(1)) / p(2);
  return p(3) + p(0) * std::exp(-0.5 * u * u);
}

double sum_squares(std::span<const ProfileSample> s, const Eigen::Vector4d& p) {
  double ss = 0;
  for (const auto& v : s) {
    const double r = v.intensity - model(p, v.position);
    ss += r * r;
  }
  return ss;
}

}  // namespace

GaussianFit psf_fwhm(std::span<const ProfileSample> profile) {
  require(profile.size() >= 7, ErrorCode::kInvalidSpec, "profile needs at least 7 samples");
  double lo = profile[0].intensity, hi = lo;
  std::size_t peak = 0;
  for (std::size_t i = 0; i < profile.size(); ++i) {
    if (profile[i].intensity > hi) {
      hi = profile[i].intensity;
      peak = i;
    }
    lo = std::min(lo, profile[i].intensity);
  }
  const double scale = std::max(std::abs(hi), std::abs(lo));
  require(hi - lo > 1e-12 * std::max(1.0, scale), ErrorCode::kNoPeak, "profile is flat");

  // Moments of the baseline-subtracted profile seed the fit.
  double w = 0, m1 = 0;
  for (const auto& s : profile) {
    w += s.intensity - lo;
    m1 += (s.intensity - lo) * s.position;
  }
  const double mu = m1 / w;
  double m2 = 0;
  for (const auto& s : profile) m2 += (s.intensity - lo) * (s.position - mu) * (s.position - mu);
  double sigma0 = std::sqrt(m2 / w);
  const double span = std::abs(profile.back().position - profile.front().position);
  if (!(sigma0 > 0)) sigma0 = span / static_cast<double>(profile.size());
  Eigen::Vector4d p(hi - lo, profile[peak].position, sigma0, lo);
  // The moment estimate overshoots on wide tails; start nearer the peak.
  p(2) = std::min(sigma0, span / 4);

  const std::size_t n = profile.size();
  double lambda = 1e-3;
  double cost = sum_squares(profile, p);
  Eigen::MatrixXd jac(n, 4);
  Eigen::VectorXd res(n);
  GaussianFit fit;
  bool converged = false;
  for (int it = 1; it <= 500; ++it) {
    fit.iterations = it;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = profile[i].position;
      const double u = (x - p(1)) / p(2);
      const double e = std::exp(-0.5 * u * u);
      jac(i, 0) = e;
      jac(i, 1) = p(0) * e * u / p(2);
      jac(i, 2) = p(0) * e * u * u / p(2);
      jac(i, 3) = 1.0;
      res(i) = profile[i].intensity - (p(3) + p(0) * e);
    }
    const Eigen::Matrix4d jtj = jac.transpose() * jac;
    const Eigen::Vector4d jtr = jac.transpose() * res;
    bool improved = false;
    for (int tries = 0; tries < 40 && !improved; ++tries) {
      Eigen::Matrix4d a = jtj;
      for (int k = 0; k < 4; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-300);
      const Eigen::Vector4d step = a.ldlt().solve(jtr);
      const Eigen::Vector4d trial = p + step;
      const double c = trial(2) > 0 && trial.allFinite() ? sum_squares(profile, trial)
                                                         : std::numeric_limits<double>::infinity();
      if (c <= cost) {
        const bool small = step.norm() <= 1e-12 * (p.norm() + 1e-12) || cost - c <= 1e-15 * cost;
        p = trial;
        cost = c;
        lambda = std::max(lambda / 10, 1e-12);
        improved = true;
        if (small) converged = true;
      } else {
        lambda *= 10;
      }
    }
    if (!improved || converged) {
      converged = true;
      break;
    }
  }
  require(converged && p.allFinite() && p(2) > 0 && p(2) < 10 * std::max(span, 1.0),
          ErrorCode::kFitDiverged, "gaussian fit did not converge");

  fit.amplitude = p(0);
  fit.center = p(1);
  fit.sigma = std::abs(p(2));
  fit.baseline = p(3);
  fit.fwhm = kFwhmPerSigma * fit.sigma;
  fit.residual_rms = std::sqrt(cost / static_cast<double>(n));
  if (n > 4) {
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (profile[i].position - p(1)) / p(2);
      const double e = std::exp(-0.5 * u * u);
      jac(i, 0) = e;
      jac(i, 1) = p(0) * e * u / p(2);
      jac(i, 2) = p(0) * e * u * u / p(2);
      jac(i, 3) = 1.0;
    }
    const Eigen::Matrix4d jtj = jac.transpose() * jac;
    const double s2 = cost / static_cast<double>(n - 4);
    const Eigen::Matrix4d cov = jtj.inverse() * s2;
    fit.fwhm_stderr = kFwhmPerSigma * std::sqrt(std::max(0.0, cov(2, 2)));
  }
  return fit;
}

double deconvolve_bead(double measured_fwhm, double bead_fwhm) {
  require(measured_fwhm > bead_fwhm && bead_fwhm >= 0, ErrorCode::kInvalidSpec,
          "measured width must exceed the bead width");
  return std::sqrt(measured_fwhm * measured_fwhm - bead_fwhm * bead_fwhm);
}

std::vector<ProfileSample> line_profile(const RealImage& image, double x0, double y0, double x1,
                                        double y1, std::size_t samples) {
  require(samples >= 2, ErrorCode::kInvalidSpec, "line profile needs at least 2 samples");
  const Dims d = image.dims();
  auto pixel = [&](std::ptrdiff_t x, std::ptrdiff_t y) {
    x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(d.width) - 1);
    y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(d.height) - 1);
    return image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
  };
  const double length = std::hypot(x1 - x0, y1 - y0);
  std::vector<ProfileSample> out;
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(samples - 1);
    const double x = x0 + t * (x1 - x0), y = y0 + t * (y1 - y0);
    const auto ix = static_cast<std::ptrdiff_t>(std::floor(x));
    const auto iy = static_cast<std::ptrdiff_t>(std::floor(y));
    const double fx = x - static_cast<double>(ix), fy = y - static_cast<double>(iy);
    const double v = (1 - fx) * (1 - fy) * pixel(ix, iy) + fx * (1 - fy) * pixel(ix + 1, iy) +
                     (1 - fx) * fy * pixel(ix, iy + 1) + fx * fy * pixel(ix + 1, iy + 1);
    out.push_back({t * length, v});
  }
  return out;
}

double mtf_modulation(std::span<const double> profile) {
  require(!profile.empty(), ErrorCode::kDegenerateProfile, "empty profile");
  const auto [lo_it, hi_it] = std::minmax_element(profile.begin(), profile.end());
  require(*lo_it >= 0, ErrorCode::kDegenerateProfile, "profile has negative intensities");
  require(*hi_it + *lo_it > 0, ErrorCode::kDegenerateProfile, "profile is all zero");
  if (*hi_it == *lo_it) return 0.0;
  const double mid = 0.5 * (*hi_it + *lo_it);
  double sum_max = 0, sum_min = 0;
  int n_max = 0, n_min = 0;
  std::size_t i = 0;
  while (i < profile.size()) {
    const bool bright = profile[i] > mid;
    double extreme = profile[i];
    std::size_t j = i;
    while (j < profile.size() && (profile[j] > mid) == bright) {
      extreme = bright ? std::max(extreme, profile[j]) : std::min(extreme, profile[j]);
      ++j;
    }
    if (bright) {
      sum_max += extreme;
      ++n_max;
    } else {
      sum_min += extreme;
      ++n_min;
    }
    i = j;
  }
  const double i_max = sum_max / n_max, i_min = sum_min / n_min;
  return (i_max - i_min) / (i_max + i_min);
}

double mtf_cutoff(std::span<const std::pair<double, double>> points) {
  require(points.size() >= 4, ErrorCode::kInvalidSpec, "cutoff fit needs at least 4 points");
  double fmax = 0;
  for (const auto& [f, m] : points) fmax = std::max(fmax, std::abs(f));
  require(fmax > 0, ErrorCode::kNoRoot, "all frequencies are zero");
  // Fit in scaled frequency for conditioning.
  Eigen::MatrixXd a(points.size(), 3);
  Eigen::VectorXd b(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double u = points[i].first / fmax;
    a(i, 0) = 1;
    a(i, 1) = u;
    a(i, 2) = u * u;
    b(i) = points[i].second;
  }
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
  std::vector<double> roots;
  if (std::abs(c(2)) < 1e-14 * (std::abs(c(1)) + std::abs(c(0)))) {
    if (c(1) != 0) roots.push_back(-c(0) / c(1));
  } else {
    const double disc = c(1) * c(1) - 4 * c(2) * c(0);
    if (disc >= 0) {
      // Numerically stable pair.
      const double q = -0.5 * (c(1) + std::copysign(std::sqrt(disc), c(1)));
      roots.push_back(q / c(2));
      if (q != 0) roots.push_back(c(0) / q);
    }
  }
  double best = std::numeric_limits<double>::infinity();
  for (double r : roots) {
    // Must be a downward crossing: fitted M falls through zero.
    const double slope = c(1) + 2 * c(2) * r;
    if (r > 0 && slope < 0) best = std::min(best, r);
  }
  require(std::isfinite(best), ErrorCode::kNoRoot, "fitted modulation never falls to zero");
  return best * fmax;
}

}  // namespace rawscore
