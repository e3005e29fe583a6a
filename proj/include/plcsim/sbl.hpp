#ifndef PLCSIM_SBL_HPP
#define PLCSIM_SBL_HPP

#include <optional>
#include <vector>

#include "plcsim/fec.hpp"
#include "plcsim/numerics.hpp"
#include "plcsim/ofdm.hpp"

namespace plcsim {

// Per-coordinate Gamma prior on the impulse precisions 1/gamma_i, shape a_i
// and rate b_i. All-zero (the default) means no prior: plain evidence
// maximization. The decision-feedback estimator supplies non-zero rates
// built from tentative decisions.
struct GammaHyperprior {
  RVec a;
  RVec b;

  static GammaHyperprior none(int n) {
    return GammaHyperprior{RVec::Zero(n), RVec::Zero(n)};
  }
};

enum class Sigma2Mode {
  kFixed,    // settings.sigma2 held constant
  kLearned,  // settings.sigma2 is the initial value, refined each pass
};

struct SblSettings {
  double sigma2 = 1e-3;
  Sigma2Mode sigma2_mode = Sigma2Mode::kFixed;
  int max_iters = 200;
  double tol = 1e-4;          // stop when ||d gamma||_inf / ||gamma||_inf < tol
  double gamma_floor = 1e-8;  // prune gamma_i below gamma_floor * max(gamma)
  double seq_tol = 1e-6;      // sequential mode: smallest meaningful |d log alpha|
  bool want_covariance = false;  // fill SblState::sigma_e (full size) on exit
  // All-tone estimator only. The stock update refreshes the data-tone signal
  // hypothesis once per pass from the previous posterior mean, which makes the
  // signal and weight blocks converge in lock-step and can take hundreds of
  // passes. When set, each pass instead solves the signal block to its own
  // fixed point: at that point the posterior mean reduces algebraically to
  // the non-data-tone posterior mean at the current weights, so the mean is
  // computed from the known-tone rows and the per-pass covariance (still the
  // full-size factorization) supplies the weight update. Stationary points
  // are identical; the trajectory just stops ping-ponging.
  bool alltone_signal_exact = false;
};

struct SblState {
  RVec gamma;       // prior variances; exact zeros are pruned coordinates
  double sigma2 = 0.0;
  CVec mu;          // posterior mean
  RVec sigma_diag;  // posterior variance diagonal
  CMat sigma_e;     // full posterior covariance, only if requested
  int iterations = 0;
  bool converged = false;
  // Marginal log-likelihood, one entry per evidence pass. Strictly the
  // plain likelihood: hyperprior terms are not folded in.
  std::vector<double> loglik;
};

struct PosteriorMoments {
  CVec mu;
  CMat sigma;
};

// Posterior of w in z = Phi w + noise under w ~ CN(0, diag(gamma)),
// noise ~ CN(0, sigma2 I). Direct form: Sigma = (Phi^H Phi / sigma2 +
// diag(gamma)^-1)^-1. Requires every gamma_i > 0.
PosteriorMoments sbl_posterior(const CMat& phi, const CVec& z, const RVec& gamma, double sigma2);

// Same posterior through the matrix-inversion identity:
// Sigma = G - G Phi^H (Phi G Phi^H + sigma2 I)^-1 Phi G with G = diag(gamma).
// Handles gamma_i = 0 without special cases; this is the production route.
PosteriorMoments sbl_posterior_woodbury(const CMat& phi, const CVec& z, const RVec& gamma, double sigma2);

// Measurement matrix with its Gram matrix and column norms precomputed,
// shared across many estimator calls on the same tone layout.
//
// When the matrix consists of rows of the unitary DFT (the usual case here),
// the second constructor records that structure. The weighted outer product
// Phi_A Gamma Phi_A^H then depends only on row-index differences, which cuts
// the cost of assembling the observation covariance from M^2 K to N K; the
// factorization work is unchanged. Results agree with the generic path to
// rounding error.
struct SblBasis {
  CMat phi;       // M x N
  CMat gram;      // phi^H phi
  RVec col_norm2; // squared column norms

  // DFT-subrow structure; empty when the matrix is generic.
  int dft_n = 0;
  IndexSet dft_rows;
  CVec unit_roots;             // exp(-i 2 pi t / n), t = 0 .. n-1
  std::vector<int> row_diff;   // (rows[j] - rows[l]) mod n, M x M row-major

  explicit SblBasis(CMat phi_in);
  SblBasis(CMat phi_in, IndexSet rows, int n_fft);

  bool structured() const { return dft_n > 0; }
};

struct EstimatorResult {
  CVec e_hat;  // impulse estimate, full length N
  SblState state;
};

// Evidence-maximization estimate of the time-domain impulse vector from the
// non-data tone observation z = Phi e + noise. Optional hyperprior feeds the
// decision-feedback variant; identity hyperprior reproduces the plain path.
EstimatorResult estimate_nulltone(const CVec& z, const SblBasis& basis, const SblSettings& settings,
                                  const GammaHyperprior* prior = nullptr);
EstimatorResult estimate_nulltone(const CVec& z, const CMat& phi, const SblSettings& settings);

struct AlltoneResult {
  CVec e_hat;       // impulse estimate, full length N
  CVec signal_data; // estimated (channel * data symbol) per data tone
  SblState state;
};

// Evidence maximization over all tones: the unknown data-tone signal is a
// third hyperparameter estimated alongside gamma and sigma2, initialized to
// the raw observation on those tones. known_nondata holds the fixed
// (channel * pilot) values on the non-data tones, in nondata order.
// The covariance update runs on the full tone dimension each pass, so the
// per-pass cost is cubic in n_fft by construction.
AlltoneResult estimate_alltone(const CVec& y, const CMat& f, const CVec& channel_freq,
                               const IndexSet& data_tones, const IndexSet& nondata_tones,
                               const CVec& known_nondata, const SblSettings& settings);

struct DecisionFeedbackResult {
  std::vector<CVec> e_hat;        // one impulse estimate per OFDM symbol
  BitVector info_bits;            // decoded (or sliced) information bits
  BitVector coded_bits;           // re-encoded decisions on the data tones
  std::vector<SblState> states;   // final-round state per symbol
  int rounds_run = 0;
};

// Iterative estimate-detect-refine loop over a block of OFDM symbols.
// Round 0 is exactly the null-tone estimate per symbol followed by
// detection (and decoding when a code is given). Each later round rebuilds
// the residual from the tentative decisions, turns it into per-coordinate
// Gamma rates, and re-runs the estimator with that prior. rounds = 0 gives
// bit-identical results to estimate_nulltone + detection.
DecisionFeedbackResult estimate_decision_feedback(const std::vector<CVec>& y_symbols,
                                                  const OfdmModel& model, const SblBasis& basis,
                                                  const ConvCode* code, int rounds,
                                                  const SblSettings& settings,
                                                  const GammaHyperprior* round0_prior = nullptr);

struct SequentialResult {
  CVec e_hat;
  IndexSet support;  // sorted active coordinates
  SblState state;
};

// Greedy basis-selection backend: starts from an empty model and adds,
// re-estimates or deletes one coordinate per step, picking the action with
// the largest marginal-likelihood gain. Stops when every candidate change
// of log alpha falls below settings.seq_tol (structure changes count as
// unbounded). Requires fixed sigma2.
SequentialResult estimate_sequential(const CVec& z, const SblBasis& basis, const SblSettings& settings);

}  // namespace plcsim

#endif
