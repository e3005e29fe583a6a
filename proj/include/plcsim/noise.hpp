#ifndef PLCSIM_NOISE_HPP
#define PLCSIM_NOISE_HPP

#include <string>
#include <variant>
#include <vector>

#include "plcsim/numerics.hpp"

namespace plcsim {

// Stationary white Gaussian background, E|n|^2 = variance.
struct AwgnParams {
  double variance = 1.0;

  void validate() const;
};

// Finite Gaussian mixture: component k active with probability weights[k],
// sample drawn CN(0, variances[k]). Weights must sum to 1 (within 1e-9).
struct GaussianMixtureParams {
  RVec weights;
  RVec variances;

  void validate() const;

  // Average power E|z|^2 = sum_k weights[k] * variances[k].
  double mean_power() const;
};

// Canonical two-parameter impulsive-noise statistics: overlap factor A
// (mean impulse rate) and Gaussian-to-impulsive power ratio Omega.
struct MiddletonClassAParams {
  double overlap_a = 0.1;
  double power_ratio_omega = 0.01;
  int truncation = 10;  // number of mixture components kept (k = 0 .. truncation-1)

  void validate() const;
};

// Cyclostationary model: the period is split into contiguous regions, each
// shaping a shared white complex Gaussian drive with its own FIR filter.
// Sample k of the output is produced by the filter of the region containing
// (k mod period), convolving the one common drive sequence, so the output
// is continuous in distribution across region boundaries.
struct LptvNoiseParams {
  struct Region {
    int begin = 0;  // inclusive, within [0, period)
    int end = 0;    // exclusive
    RVec taps;      // FIR coefficients, real
  };

  int period = 0;  // samples
  std::vector<Region> regions;
  double drive_variance = 1.0;

  void validate() const;

  // Stationary-section output power of region r: drive_variance * ||taps||^2.
  double region_power(std::size_t r) const;
};

// Tagged union over the supported noise processes.
using NoiseModel = std::variant<AwgnParams, GaussianMixtureParams, MiddletonClassAParams, LptvNoiseParams>;

// Short tag for logs and CSV rows: "awgn", "gm", "mca", "lptv".
std::string noise_tag(const NoiseModel& model);

// Expand two-parameter statistics into an explicit truncated mixture.
// Component k (impulse count) has Poisson(A) weight; variances are
// normalized so the quietest component carries Omega / (1 + Omega) and the
// truncated weights are rescaled to sum to 1. Total power is (close to) 1.
GaussianMixtureParams mca_to_mixture(const MiddletonClassAParams& p);

// n i.i.d. draws from the mixture. Mixture label then Gaussian draw per
// sample, so streams are reproducible under a fixed generator state.
CVec sample_gm(Rng& rng, const GaussianMixtureParams& p, int n);

// n consecutive samples of the cyclostationary process starting at absolute
// sample offset `phase` within the period. The same call sequence with the
// same generator state reproduces the same trace.
CVec sample_lptv(Rng& rng, const LptvNoiseParams& p, int n, int phase = 0);

}  // namespace plcsim

#endif
