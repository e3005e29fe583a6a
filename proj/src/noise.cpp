#include "plcsim/noise.hpp"

#include <cmath>

namespace plcsim {

void AwgnParams::validate() const {
  if (!(variance >= 0.0)) throw std::invalid_argument("awgn: variance must be >= 0");
}

void GaussianMixtureParams::validate() const {
  if (weights.size() == 0 || weights.size() != variances.size())
    throw std::invalid_argument("gm: weights and variances must be non-empty and equal length");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights(i) < 0.0) throw std::invalid_argument("gm: weights must be non-negative");
    if (variances(i) < 0.0) throw std::invalid_argument("gm: variances must be non-negative");
    sum += weights(i);
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("gm: weights must sum to 1");
}

double GaussianMixtureParams::mean_power() const { return weights.dot(variances); }

void MiddletonClassAParams::validate() const {
  if (!(overlap_a > 0.0)) throw std::invalid_argument("mca: overlap factor must be positive");
  if (!(power_ratio_omega > 0.0)) throw std::invalid_argument("mca: power ratio must be positive");
  if (truncation < 1) throw std::invalid_argument("mca: need at least one mixture component");
}

void LptvNoiseParams::validate() const {
  if (period <= 0) throw std::invalid_argument("lptv: period must be positive");
  if (regions.empty()) throw std::invalid_argument("lptv: need at least one region");
  if (!(drive_variance > 0.0)) throw std::invalid_argument("lptv: drive variance must be positive");
  int cursor = 0;
  for (const auto& r : regions) {
    if (r.begin != cursor || r.end <= r.begin)
      throw std::invalid_argument("lptv: regions must partition [0, period) contiguously");
    if (r.taps.size() == 0) throw std::invalid_argument("lptv: each region needs FIR taps");
    cursor = r.end;
  }
  if (cursor != period)
    throw std::invalid_argument("lptv: regions must cover the full period");
}

double LptvNoiseParams::region_power(std::size_t r) const {
  return drive_variance * regions.at(r).taps.squaredNorm();
}

std::string noise_tag(const NoiseModel& model) {
  struct Visitor {
    std::string operator()(const AwgnParams&) const { return "awgn"; }
    std::string operator()(const GaussianMixtureParams&) const { return "gm"; }
    std::string operator()(const MiddletonClassAParams&) const { return "mca"; }
    std::string operator()(const LptvNoiseParams&) const { return "lptv"; }
  };
  return std::visit(Visitor{}, model);
}

GaussianMixtureParams mca_to_mixture(const MiddletonClassAParams& p) {
  p.validate();
  const int k_count = p.truncation;
  GaussianMixtureParams out;
  out.weights.resize(k_count);
  out.variances.resize(k_count);
  // Poisson(A) weights, built iteratively to avoid factorial overflow.
  double w = std::exp(-p.overlap_a);
  double total = 0.0;
  for (int k = 0; k < k_count; ++k) {
    if (k > 0) w *= p.overlap_a / static_cast<double>(k);
    out.weights(k) = w;
    total += w;
    out.variances(k) =
        (static_cast<double>(k) / p.overlap_a + p.power_ratio_omega) / (1.0 + p.power_ratio_omega);
  }
  out.weights /= total;  // renormalize the truncated tail away
  return out;
}

CVec sample_gm(Rng& rng, const GaussianMixtureParams& p, int n) {
  p.validate();
  if (n < 0) throw std::invalid_argument("sample_gm: n must be >= 0");
  CVec out(n);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    double cum = 0.0;
    Eigen::Index k = p.weights.size() - 1;  // fall through to last on rounding
    for (Eigen::Index j = 0; j < p.weights.size(); ++j) {
      cum += p.weights(j);
      if (u < cum) {
        k = j;
        break;
      }
    }
    out(i) = sample_circular_gaussian(rng, 1, p.variances(k))(0);
  }
  return out;
}

CVec sample_lptv(Rng& rng, const LptvNoiseParams& p, int n, int phase) {
  p.validate();
  if (n < 0) throw std::invalid_argument("sample_lptv: n must be >= 0");
  if (phase < 0) throw std::invalid_argument("sample_lptv: phase must be >= 0");

  Eigen::Index max_len = 0;
  for (const auto& r : p.regions) max_len = std::max(max_len, r.taps.size());

  // One shared drive covers the whole window including filter memory, so the
  // output is a single continuous process across region switches.
  const CVec drive = sample_circular_gaussian(rng, n + static_cast<int>(max_len) - 1, p.drive_variance);

  // Map each offset within the period to its region once.
  std::vector<int> region_of(p.period);
  {
    int r = 0;
    for (int k = 0; k < p.period; ++k) {
      if (k >= p.regions[r].end) ++r;
      region_of[k] = r;
    }
  }

  CVec out(n);
  for (int t = 0; t < n; ++t) {
    const int k_abs = phase + t;
    const auto& taps = p.regions[region_of[k_abs % p.period]].taps;
    cxd acc = 0.0;
    for (Eigen::Index j = 0; j < taps.size(); ++j) {
      // drive[t + max_len - 1] corresponds to absolute sample k_abs.
      acc += taps(j) * drive(t + max_len - 1 - j);
    }
    out(t) = acc;
  }
  return out;
}

}  // namespace plcsim
