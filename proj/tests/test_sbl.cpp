#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <vector>

#include "plcsim/ofdm.hpp"
#include "plcsim/sbl.hpp"

using namespace plcsim;

namespace {

struct Instance {
  CVec e;          // true impulse vector, length n
  CVec z;          // non-data-tone observation
  double sigma2;   // background power used to build z
  IndexSet support;
};

const OfdmModel& typical_model() {
  static OfdmModel model(OfdmConfig::typical());
  return model;
}

const SblBasis& typical_basis() {
  static SblBasis basis(typical_model().dft_nondata_rows(), typical_model().nondata(),
                        typical_model().config().n_fft);
  return basis;
}

// K impulses at distinct positions with amplitudes from the heavy mixture
// components, observed on the non-data tones at the requested SNR
// (impulse power over background power on the observation).
Instance make_instance(Rng& rng, int k, double snr_db) {
  const OfdmModel& model = typical_model();
  const int n = model.config().n_fft;

  Instance inst;
  inst.e = CVec::Zero(n);
  std::set<int> pos;
  while (static_cast<int>(pos.size()) < k)
    pos.insert(static_cast<int>(rng.uniform_below(n)));
  for (int p : pos) {
    inst.support.push_back(p);
    const double var = (rng.uniform() < 0.7) ? 100.0 : 1000.0;
    inst.e(p) = sample_circular_gaussian(rng, 1, var)(0);
  }

  inst.sigma2 = (inst.e.squaredNorm() / n) * std::pow(10.0, -snr_db / 10.0);
  inst.z = model.dft_nondata_rows() * inst.e +
           sample_circular_gaussian(rng, static_cast<int>(model.nondata().size()), inst.sigma2);
  return inst;
}

IndexSet gamma_support(const RVec& gamma) {
  IndexSet s;
  const double gmax = gamma.maxCoeff();
  for (Eigen::Index i = 0; i < gamma.size(); ++i)
    if (gamma(i) > 0.0 && gamma(i) > 1e-6 * gmax) s.push_back(static_cast<int>(i));
  return s;
}

BitVector random_bits(Rng& rng, int n) {
  BitVector b(n);
  for (int i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(rng.uniform_below(2));
  return b;
}

bool loglik_monotone(const std::vector<double>& ll, double slack = 1e-9) {
  for (std::size_t i = 1; i < ll.size(); ++i)
    if (ll[i] < ll[i - 1] - slack) return false;
  return true;
}

}  // namespace

TEST_CASE("posterior moments: direct form equals matrix-identity form") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 8, n = 16;
    CMat phi(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) phi(i, j) = cxd(rng.uniform() - 0.5, rng.uniform() - 0.5);
    RVec gamma(n);
    for (int j = 0; j < n; ++j) gamma(j) = std::pow(10.0, 3.0 * rng.uniform() - 1.0);
    const CVec z = sample_circular_gaussian(rng, m, 1.0);
    const double s2 = 0.05;

    const PosteriorMoments a = sbl_posterior(phi, z, gamma, s2);
    const PosteriorMoments b = sbl_posterior_woodbury(phi, z, gamma, s2);
    CHECK((a.mu - b.mu).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((a.sigma - b.sigma).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("posterior with fully pruned prior is zero") {
  Rng rng(72);
  const CMat phi = typical_model().dft_nondata_rows();
  const CVec z = sample_circular_gaussian(rng, static_cast<int>(phi.rows()), 1.0);
  const PosteriorMoments p = sbl_posterior_woodbury(phi, z, RVec::Zero(phi.cols()), 0.1);
  CHECK(p.mu.cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.sigma.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pruned coordinates zero their posterior row and column") {
  Rng rng(73);
  const int m = 6, n = 10;
  CMat phi(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) phi(i, j) = cxd(rng.uniform() - 0.5, rng.uniform() - 0.5);
  RVec gamma = RVec::Ones(n);
  gamma(3) = 0.0;
  gamma(7) = 0.0;
  const CVec z = sample_circular_gaussian(rng, m, 1.0);
  const PosteriorMoments p = sbl_posterior_woodbury(phi, z, gamma, 0.2);
  CHECK(std::abs(p.mu(3)) == 0.0);
  CHECK(std::abs(p.mu(7)) == 0.0);
  CHECK(p.sigma.row(3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.sigma.col(7).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("noiseless identity basis returns the observation") {
  Rng rng(74);
  const int n = 8;
  const CMat eye = CMat::Identity(n, n);
  const CVec t = sample_circular_gaussian(rng, n, 1.0);
  const PosteriorMoments p = sbl_posterior(eye, t, RVec::Constant(n, 100.0), 1e-12);
  CHECK((p.mu - t).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("null-tone estimator: zero observation gives zero estimate") {
  SblSettings st;
  st.sigma2 = 1e-3;
  const CVec z = CVec::Zero(static_cast<int>(typical_model().nondata().size()));
  const EstimatorResult r = estimate_nulltone(z, typical_basis(), st);
  CHECK(r.e_hat.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.state.gamma.maxCoeff() == 0.0);
}

TEST_CASE("null-tone estimator recovers a noiseless single impulse") {
  Rng rng(75);
  const OfdmModel& model = typical_model();
  const int n = model.config().n_fft;
  SblSettings st;
  st.sigma2 = 1e-8;

  for (int trial = 0; trial < 20; ++trial) {
    const int pos = static_cast<int>(rng.uniform_below(n));
    CVec e = CVec::Zero(n);
    e(pos) = std::polar(10.0, 2.0 * 3.14159265358979 * rng.uniform());
    const CVec z = model.dft_nondata_rows() * e;

    const EstimatorResult r = estimate_nulltone(z, typical_basis(), st);
    Eigen::Index argmax;
    r.e_hat.cwiseAbs().maxCoeff(&argmax);
    CHECK(argmax == pos);
    CHECK(std::abs(r.e_hat(pos) - e(pos)) / std::abs(e(pos)) < 1e-3);
  }
}

TEST_CASE("null-tone estimator on heavy-tailed multi-impulse instances") {
  Rng rng(76);
  SblSettings st;
  int ok = 0;
  for (int trial = 0; trial < 40; ++trial) {
    Instance inst = make_instance(rng, 5, 30.0);
    st.sigma2 = inst.sigma2;
    const EstimatorResult r = estimate_nulltone(inst.z, typical_basis(), st);

    // Support must be recovered: the 5 largest estimate magnitudes sit on
    // the true positions and the relative error is small.
    std::vector<std::pair<double, int>> mag;
    for (int i = 0; i < r.e_hat.size(); ++i) mag.push_back({std::abs(r.e_hat(i)), i});
    std::sort(mag.rbegin(), mag.rend());
    IndexSet top;
    for (int i = 0; i < 5; ++i) top.push_back(mag[i].second);
    std::sort(top.begin(), top.end());

    const double rel = (r.e_hat - inst.e).norm() / inst.e.norm();
    if (top == inst.support && rel < 0.05) ++ok;
  }
  CHECK(ok >= 38);  // 95% at desk scale
}

TEST_CASE("null-tone estimate scales with the observation") {
  Rng rng(77);
  Instance inst = make_instance(rng, 3, 25.0);
  SblSettings st;
  st.sigma2 = inst.sigma2;
  const EstimatorResult r1 = estimate_nulltone(inst.z, typical_basis(), st);

  const double c = 5.0;
  st.sigma2 = inst.sigma2 * c * c;
  const EstimatorResult r2 = estimate_nulltone(CVec(c * inst.z), typical_basis(), st);
  CHECK((r2.e_hat - c * r1.e_hat).norm() / (c * r1.e_hat.norm()) < 1e-8);
}

TEST_CASE("noiseless sparse instances converge to exactly K active coordinates") {
  // Run EM to a tight fixed point: off-support weights decay geometrically
  // only once the support has locked in, so the default working tolerance
  // stops before they hit the pruning floor.
  Rng rng(78);
  SblSettings st;
  st.sigma2 = 1e-8;
  st.tol = 1e-8;
  st.max_iters = 500;
  const OfdmModel& model = typical_model();
  for (int k = 1; k <= 5; ++k) {
    CVec e = CVec::Zero(128);
    std::set<int> pos;
    while (static_cast<int>(pos.size()) < k) pos.insert(static_cast<int>(rng.uniform_below(128)));
    for (int p : pos) e(p) = std::polar(3.0 + 10.0 * rng.uniform(), 6.28 * rng.uniform());
    const CVec z = model.dft_nondata_rows() * e;
    const EstimatorResult r = estimate_nulltone(z, typical_basis(), st);
    // Everything below the pruning floor is an exact zero, so the active set
    // is simply the nonzero entries.
    int active = 0;
    for (Eigen::Index i = 0; i < r.state.gamma.size(); ++i) active += r.state.gamma(i) > 0.0;
    CHECK(active == k);
  }
}

TEST_CASE("evidence is non-decreasing across EM passes") {
  Rng rng(79);
  SblSettings st;
  for (int trial = 0; trial < 10; ++trial) {
    Instance inst = make_instance(rng, 5, 20.0);
    st.sigma2 = inst.sigma2;
    const EstimatorResult r = estimate_nulltone(inst.z, typical_basis(), st);
    CHECK(loglik_monotone(r.state.loglik));
  }
}

TEST_CASE("structured and generic basis paths agree") {
  Rng rng(80);
  Instance inst = make_instance(rng, 4, 25.0);
  SblSettings st;
  st.sigma2 = inst.sigma2;

  const EstimatorResult fast = estimate_nulltone(inst.z, typical_basis(), st);
  // Force the generic path by perturbing nothing but the structure tag:
  // a basis built from the bare matrix has no DFT row bookkeeping.
  const SblBasis generic(typical_model().dft_nondata_rows());
  CHECK(!generic.structured());
  const EstimatorResult slow = estimate_nulltone(inst.z, generic, st);
  CHECK((fast.e_hat - slow.e_hat).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("all-tone estimator is exact on a clean channel") {
  Rng rng(81);
  const OfdmModel& model = typical_model();
  const CVec d = qpsk_map(random_bits(rng, model.bits_per_symbol()));
  const CVec y = model.demodulate(model.apply_channel(model.modulate(d), CVec::Zero(128), CVec::Zero(128)));

  SblSettings st;
  st.sigma2 = 1e-6;
  const AlltoneResult r = estimate_alltone(y, model.dft(), model.channel(), model.config().data_tones,
                                           model.nondata(), model.known_nondata(), st);
  CHECK(r.e_hat.cwiseAbs().maxCoeff() < 1e-8);

  // The signal hypothesis equals the transmitted frame from the first pass.
  const CVec frame = model.build_frame(d);
  for (std::size_t i = 0; i < model.config().data_tones.size(); ++i) {
    const int tone = model.config().data_tones[i];
    CHECK(std::abs(r.signal_data(i) - frame(tone)) < 1e-10);
  }
}

TEST_CASE("all-tone estimator with no data tones reduces to the null-tone path") {
  Rng rng(82);
  const int n = 16;
  const CMat f = dft_matrix(n);

  CVec e = CVec::Zero(n);
  e(3) = cxd(4.0, -1.0);
  e(11) = cxd(-2.0, 5.0);
  const double s2 = 1e-3;
  const CVec y = f * e + sample_circular_gaussian(rng, n, s2);

  IndexSet all(n);
  for (int i = 0; i < n; ++i) all[i] = i;

  SblSettings st;
  st.sigma2 = s2;
  const AlltoneResult a =
      estimate_alltone(y, f, CVec::Ones(n), IndexSet{}, all, CVec::Zero(n), st);

  const SblBasis basis(f, all, n);
  const EstimatorResult b = estimate_nulltone(y, basis, st);

  CHECK((a.e_hat - b.e_hat).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(a.state.loglik.size() == b.state.loglik.size());
}

TEST_CASE("all-tone residual is statistically no worse than null-tone") {
  // Paired runs on sparse heavy-impulse instances. The two estimators share
  // the fixed point for the posterior mean at equal hyperparameters, so the
  // paired residual difference concentrates near zero with the all-tone side
  // ahead when the support is unambiguous; the mean must not be worse.
  Rng rng(83);
  const OfdmModel& model = typical_model();
  SblSettings nt;
  SblSettings at;
  at.alltone_signal_exact = true;

  double sum_n = 0.0, sum_a = 0.0, sum_d = 0.0, sum_d2 = 0.0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    Instance inst = make_instance(rng, 5, 18.0);
    const CVec d = qpsk_map(random_bits(rng, model.bits_per_symbol()));
    const CVec bg = sample_circular_gaussian(rng, 128, inst.sigma2);
    const CVec y = model.demodulate(model.apply_channel(model.modulate(d), inst.e, bg));

    nt.sigma2 = inst.sigma2;
    at.sigma2 = inst.sigma2;
    const EstimatorResult rn = estimate_nulltone(model.observe_nondata(y), typical_basis(), nt);
    const AlltoneResult ra = estimate_alltone(y, model.dft(), model.channel(),
                                              model.config().data_tones, model.nondata(),
                                              model.known_nondata(), at);
    const double en = (rn.e_hat - inst.e).norm();
    const double ea = (ra.e_hat - inst.e).norm();
    sum_n += en;
    sum_a += ea;
    sum_d += (ea - en);
    sum_d2 += (ea - en) * (ea - en);
  }
  const double mean_d = sum_d / trials;
  const double sd = std::sqrt((sum_d2 / trials - mean_d * mean_d) / (trials - 1));
  INFO("mean nulltone residual ", sum_n / trials, ", alltone ", sum_a / trials);
  CHECK(mean_d <= 2.0 * sd + 1e-12);
}

TEST_CASE("all-tone evidence is non-decreasing") {
  Rng rng(84);
  const OfdmModel& model = typical_model();
  SblSettings st;  // default lock-step updates
  st.max_iters = 80;
  for (int trial = 0; trial < 3; ++trial) {
    Instance inst = make_instance(rng, 5, 20.0);
    const CVec d = qpsk_map(random_bits(rng, model.bits_per_symbol()));
    const CVec bg = sample_circular_gaussian(rng, 128, inst.sigma2);
    const CVec y = model.demodulate(model.apply_channel(model.modulate(d), inst.e, bg));
    st.sigma2 = inst.sigma2;
    const AlltoneResult r = estimate_alltone(y, model.dft(), model.channel(),
                                             model.config().data_tones, model.nondata(),
                                             model.known_nondata(), st);
    CHECK(loglik_monotone(r.state.loglik));
  }
}

TEST_CASE("uninformative hyperprior changes nothing") {
  Rng rng(85);
  Instance inst = make_instance(rng, 4, 22.0);
  SblSettings st;
  st.sigma2 = inst.sigma2;
  const GammaHyperprior none = GammaHyperprior::none(128);
  const EstimatorResult bare = estimate_nulltone(inst.z, typical_basis(), st);
  const EstimatorResult with = estimate_nulltone(inst.z, typical_basis(), st, &none);
  CHECK((bare.e_hat - with.e_hat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("oracle feedback never hurts detection") {
  // Prior rates built from the true impulse realization: the re-estimate
  // must match or beat the plain estimate on every trial. Strong-impulse
  // regime: the background is quiet enough that bit errors are driven by
  // impulse misestimation, which is exactly what the oracle prior removes.
  // 16 impulses against 56 observation rows makes the plain estimator miss
  // often enough to exercise the comparison.
  Rng rng(86);
  const OfdmModel& model = typical_model();
  SblSettings st;
  int trials_with_pre_errors = 0;
  for (int trial = 0; trial < 100; ++trial) {
    CVec e = CVec::Zero(128);
    std::set<int> pos;
    while (static_cast<int>(pos.size()) < 16) pos.insert(static_cast<int>(rng.uniform_below(128)));
    for (int p : pos) e(p) = sample_circular_gaussian(rng, 1, 100.0)(0);
    const double s2 = (e.squaredNorm() / 128.0) * std::pow(10.0, -2.8);

    const BitVector bits = random_bits(rng, model.bits_per_symbol());
    const CVec d = qpsk_map(bits);
    const CVec bg = sample_circular_gaussian(rng, 128, s2);
    const CVec y = model.demodulate(model.apply_channel(model.modulate(d), e, bg));
    st.sigma2 = s2;

    const EstimatorResult pre = estimate_nulltone(model.observe_nondata(y), typical_basis(), st);
    GammaHyperprior prior;
    prior.a = RVec::Constant(128, 0.5);
    prior.b = 0.5 * e.cwiseAbs2();
    const EstimatorResult post = estimate_nulltone(model.observe_nondata(y), typical_basis(), st, &prior);

    int pre_err = 0, post_err = 0;
    const BitVector b_pre = model.subtract_and_detect(y, pre.e_hat).bits;
    const BitVector b_post = model.subtract_and_detect(y, post.e_hat).bits;
    for (std::size_t i = 0; i < bits.size(); ++i) {
      pre_err += (b_pre[i] != bits[i]);
      post_err += (b_post[i] != bits[i]);
    }
    trials_with_pre_errors += (pre_err > 0);
    CHECK(post_err <= pre_err);
  }
  // The batch must actually exercise the mechanism.
  CHECK(trials_with_pre_errors > 10);
}

TEST_CASE("decision feedback with zero rounds is the null-tone chain") {
  Rng rng(87);
  const OfdmModel& model = typical_model();
  SblSettings st;

  std::vector<CVec> ys;
  std::vector<Instance> insts;
  BitVector all_bits;
  for (int s = 0; s < 3; ++s) {
    Instance inst = make_instance(rng, 5, 15.0);
    const BitVector bits = random_bits(rng, model.bits_per_symbol());
    all_bits.insert(all_bits.end(), bits.begin(), bits.end());
    const CVec d = qpsk_map(bits);
    const CVec bg = sample_circular_gaussian(rng, 128, inst.sigma2);
    ys.push_back(model.demodulate(model.apply_channel(model.modulate(d), inst.e, bg)));
    insts.push_back(inst);
  }
  st.sigma2 = insts[0].sigma2;

  const DecisionFeedbackResult df =
      estimate_decision_feedback(ys, model, typical_basis(), nullptr, 0, st);
  CHECK(df.rounds_run == 0);
  REQUIRE(df.e_hat.size() == 3);

  BitVector manual;
  for (int s = 0; s < 3; ++s) {
    const EstimatorResult r = estimate_nulltone(model.observe_nondata(ys[s]), typical_basis(), st);
    CHECK((df.e_hat[s] - r.e_hat).cwiseAbs().maxCoeff() == 0.0);
    const BitVector b = model.subtract_and_detect(ys[s], r.e_hat).bits;
    manual.insert(manual.end(), b.begin(), b.end());
  }
  CHECK(df.info_bits == manual);
}

TEST_CASE("feedback rounds are a fixed point on a clean channel") {
  Rng rng(88);
  const OfdmModel& model = typical_model();
  SblSettings st;
  st.sigma2 = 1e-2;

  std::vector<CVec> ys;
  for (int s = 0; s < 2; ++s) {
    const CVec d = qpsk_map(random_bits(rng, model.bits_per_symbol()));
    const CVec bg = sample_circular_gaussian(rng, 128, st.sigma2);
    ys.push_back(model.demodulate(model.apply_channel(model.modulate(d), CVec::Zero(128), bg)));
  }

  const DecisionFeedbackResult r0 =
      estimate_decision_feedback(ys, model, typical_basis(), nullptr, 0, st);
  const DecisionFeedbackResult r2 =
      estimate_decision_feedback(ys, model, typical_basis(), nullptr, 2, st);
  CHECK(r0.info_bits == r2.info_bits);
}

TEST_CASE("decision feedback runs the coded chain") {
  Rng rng(89);
  const OfdmModel& model = typical_model();
  ConvCode code;
  SblSettings st;

  // One codeword per OFDM symbol: 144 coded bits = 66 info + 6 flush.
  const int info_len = model.bits_per_symbol() / 2 - code.memory();
  Instance inst = make_instance(rng, 5, 15.0);
  st.sigma2 = inst.sigma2;
  const BitVector info = random_bits(rng, info_len);
  const CVec d = qpsk_map(conv_encode(code, info));
  const CVec bg = sample_circular_gaussian(rng, 128, inst.sigma2);
  const CVec y = model.demodulate(model.apply_channel(model.modulate(d), inst.e, bg));

  const DecisionFeedbackResult r =
      estimate_decision_feedback({y}, model, typical_basis(), &code, 2, st);
  CHECK(r.rounds_run == 2);
  CHECK(static_cast<int>(r.info_bits.size()) == info_len);
  CHECK(r.coded_bits.size() == d.size() * 2);
  // Re-encoded decisions must be a valid codeword of the decoded info.
  CHECK(r.coded_bits == conv_encode(code, r.info_bits));
}

TEST_CASE("sequential backend basics") {
  Rng rng(90);
  SblSettings st;
  st.sigma2 = 1e-4;

  const int m = static_cast<int>(typical_model().nondata().size());
  const SequentialResult zero = estimate_sequential(CVec::Zero(m), typical_basis(), st);
  CHECK(zero.support.empty());
  CHECK(zero.e_hat.cwiseAbs().maxCoeff() == 0.0);

  // One strong impulse, no background: initialization picks the projection
  // argmax, and with a zero residual afterwards no other candidate has a
  // positive evidence gain, so the support stays a singleton.
  CVec e = CVec::Zero(128);
  e(77) = cxd(8.0, 6.0);
  const CVec z = typical_model().dft_nondata_rows() * e;
  const SequentialResult one = estimate_sequential(z, typical_basis(), st);
  REQUIRE(one.support.size() == 1);
  CHECK(one.support[0] == 77);
  CHECK(std::abs(one.e_hat(77) - e(77)) / std::abs(e(77)) < 1e-2);
}

TEST_CASE("sequential backend agrees with the EM estimator on support") {
  // Both backends keep harmless near-zero weights around (EM stops before
  // the floor prunes them, the greedy pass adds tiny noise-fitting
  // components whose evidence gain is genuinely positive), so supports are
  // compared after thresholding. Measured weight profiles: spurious weights
  // top out near 3e-4 of the maximum while true impulses sit decades above,
  // so 1e-2 splits them cleanly.
  Rng rng(91);
  SblSettings st;
  int agree = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    Instance inst = make_instance(rng, 5, 30.0);
    st.sigma2 = inst.sigma2;
    const EstimatorResult em = estimate_nulltone(inst.z, typical_basis(), st);
    const SequentialResult seq = estimate_sequential(inst.z, typical_basis(), st);

    auto thresholded = [](const RVec& gamma) {
      IndexSet s;
      const double cut = 1e-2 * gamma.maxCoeff();
      for (Eigen::Index i = 0; i < gamma.size(); ++i)
        if (gamma(i) > cut) s.push_back(static_cast<int>(i));
      return s;
    };
    if (thresholded(em.state.gamma) == thresholded(seq.state.gamma)) ++agree;
  }
  CHECK(agree >= 95);
}

TEST_CASE("sequential backend requires a fixed noise level") {
  SblSettings st;
  st.sigma2_mode = Sigma2Mode::kLearned;
  CHECK_THROWS(estimate_sequential(CVec::Zero(56), typical_basis(), st));
}

TEST_CASE("per-pass cost of the full estimator grows faster than the sequential one") {
  // The full-tone estimator factorizes an n x n system every pass; the
  // sequential backend touches n candidates with constant-size updates at
  // fixed support. The runtime ratio must grow with n.
  Rng rng(92);
  auto ratio_at = [&](int n) {
    // Build a square layout: half the tones observed.
    OfdmConfig cfg;
    cfg.n_fft = n;
    for (int i = n / 4; i < n - n / 4; ++i) cfg.data_tones.push_back(i);
    OfdmModel model(cfg);
    const SblBasis basis(model.dft_nondata_rows(), model.nondata(), n);

    CVec e = CVec::Zero(n);
    for (int i = 0; i < 4; ++i) e(static_cast<int>(rng.uniform_below(n))) = cxd(6.0, 3.0);
    const double s2 = 1e-4;
    SblSettings st;
    st.sigma2 = s2;

    const CVec d = qpsk_map(random_bits(rng, model.bits_per_symbol()));
    const CVec bg = sample_circular_gaussian(rng, n, s2);
    const CVec y = model.demodulate(model.apply_channel(model.modulate(d), e, bg));
    const CVec z = model.observe_nondata(y);

    auto time_of = [](auto&& fn) {
      double best = 1e300;
      for (int rep = 0; rep < 3; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
      }
      return best;
    };

    double iters_all = 0.0, iters_seq = 0.0;
    const double t_all = time_of([&] {
      const AlltoneResult r = estimate_alltone(y, model.dft(), model.channel(),
                                               model.config().data_tones, model.nondata(),
                                               model.known_nondata(), st);
      iters_all = std::max(1, r.state.iterations);
    });
    const double t_seq = time_of([&] {
      const SequentialResult r = estimate_sequential(z, basis, st);
      iters_seq = std::max(1, r.state.iterations);
    });
    return (t_all / iters_all) / (t_seq / iters_seq);
  };

  const double r32 = ratio_at(32);
  const double r128 = ratio_at(128);
  INFO("per-iteration cost ratio at n=32: ", r32, ", at n=128: ", r128);
  CHECK(r128 > r32);
}
