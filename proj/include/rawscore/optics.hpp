#pragma once

#include <span>
#include <utility>
#include <vector>

#include "rawscore/image.hpp"

namespace rawscore {

struct ProfileSample {
  double position = 0;
  double intensity = 0;
};

// I(x) = baseline + amplitude * exp(-(x - center)^2 / (2 sigma^2))
struct GaussianFit {
  double amplitude = 0;
  double center = 0;
  double sigma = 0;
  double baseline = 0;
  double fwhm = 0;
  double fwhm_stderr = 0;  // from the fit covariance
  double residual_rms = 0;
  int iterations = 0;
};

inline constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

// Levenberg-Marquardt fit; needs >= 7 samples around a peak.
GaussianFit psf_fwhm(std::span<const ProfileSample> profile);

// Bead-size correction for Gaussian-like kernels: sqrt(measured^2 - bead^2).
double deconvolve_bead(double measured_fwhm, double bead_fwhm);

// Samples along the segment (x0,y0)-(x1,y1) with bilinear interpolation;
// positions are distances from the start point.
std::vector<ProfileSample> line_profile(const RealImage& image, double x0, double y0, double x1,
                                        double y1, std::size_t samples);

// (I_max - I_min) / (I_max + I_min), with I_max and I_min averaged over the
// bright and dark runs on either side of the mid level.
double mtf_modulation(std::span<const double> profile);

// Unweighted quadratic fit of M(f); smallest positive zero crossing.
double mtf_cutoff(std::span<const std::pair<double, double>> points);

}  // namespace rawscore
