#include "plcsim/sbl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

namespace plcsim {

namespace {

constexpr double kLogPi = 1.1447298858494001741;  // log(pi)
constexpr double kTiny = 1e-300;

CVec gather(const CVec& v, const std::vector<int>& idx) {
  CVec out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(idx[i]);
  return out;
}

CMat gather_cols(const CMat& m, const std::vector<int>& idx) {
  CMat out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(idx[i]);
  return out;
}

CMat gather_block(const CMat& m, const std::vector<int>& idx) {
  const Eigen::Index k = static_cast<Eigen::Index>(idx.size());
  CMat out(k, k);
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < k; ++c) out(r, c) = m(idx[r], idx[c]);
  return out;
}

// Weighted outer product Phi_A Gamma_A Phi_A^H when the rows of Phi come from
// the unitary DFT. Entry (j, l) equals c[(rows[j] - rows[l]) mod n] with
// c[t] = (1/n) sum_{a in A} gamma_a exp(-i 2 pi t a / n), so the n distinct
// values are assembled once and spread over the matrix by lookup. Only the
// factorization sees the result, hence the generic rank-update path and this
// one agree to rounding error.
void structured_outer(const CVec& unit_roots, const std::vector<int>& active, const RVec& gamma_a,
                      const std::vector<int>& row_diff, Eigen::Index m, CMat* sigma_y) {
  const int nf = static_cast<int>(unit_roots.size());
  CVec cval = CVec::Zero(nf);
  for (std::size_t i = 0; i < active.size(); ++i) {
    const int a = active[i] % nf;
    const cxd g(gamma_a(static_cast<Eigen::Index>(i)), 0.0);
    int idx = 0;
    for (int t = 0; t < nf; ++t) {
      cval(t) += g * unit_roots(idx);
      idx += a;
      if (idx >= nf) idx -= nf;
    }
  }
  cval /= static_cast<double>(nf);
  sigma_y->resize(m, m);
  for (Eigen::Index l = 0; l < m; ++l) {
    for (Eigen::Index j = l; j < m; ++j) {
      const cxd v = cval(row_diff[static_cast<std::size_t>(j * m + l)]);
      (*sigma_y)(j, l) = v;
      (*sigma_y)(l, j) = std::conj(v);
    }
  }
}

CVec dft_unit_roots(int n) {
  CVec roots(n);
  for (int t = 0; t < n; ++t)
    roots(t) = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(t) / n);
  return roots;
}

// True when f is bitwise the canonical unitary DFT of its size; canonical
// matrices are cached per size so repeated estimator calls pay one comparison.
bool is_canonical_dft(const CMat& f) {
  if (f.rows() != f.cols() || f.rows() == 0) return false;
  static std::mutex mtx;
  static std::map<Eigen::Index, CMat> cache;
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(f.rows());
  if (it == cache.end())
    it = cache.emplace(f.rows(), dft_matrix(static_cast<int>(f.rows()))).first;
  return (f.array() == it->second.array()).all();
}

Eigen::LLT<CMat> checked_llt(const CMat& a, const char* who) {
  Eigen::LLT<CMat> llt(a);
  if (llt.info() != Eigen::Success)
    throw SingularMatrixError(std::string(who) + ": covariance factorization failed");
  return llt;
}

double logdet_from_llt(const Eigen::LLT<CMat>& llt) {
  double s = 0.0;
  const auto& packed = llt.matrixLLT();
  for (Eigen::Index i = 0; i < packed.rows(); ++i) s += std::log(packed(i, i).real());
  return 2.0 * s;
}

// Posterior moments and evidence restricted to the active coordinates.
// Two algebraically identical routes: a K x K system when the active set is
// small, the observation-space form otherwise. Both report the same
// marginal log-likelihood, so the evidence trace stays consistent when the
// active set shrinks across the crossover.
struct ActiveEval {
  CVec mu;          // size K
  RVec diag;        // size K
  double loglik = 0.0;
  double resid_sq = 0.0;   // ||z - Phi_A mu||^2
  double trace_term = 0.0; // sum_i (1 - diag_i / gamma_i)
};

ActiveEval eval_posterior_active(const SblBasis& basis, const CVec& z, const CVec& phi_h_z,
                                 double z_sq, const std::vector<int>& active, const RVec& gamma_a,
                                 double sigma2, CMat* cov_out) {
  const Eigen::Index m = basis.phi.rows();
  const int k = static_cast<int>(active.size());
  ActiveEval out;
  if (k == 0) {
    out.mu.resize(0);
    out.diag.resize(0);
    out.loglik = -static_cast<double>(m) * (kLogPi + std::log(sigma2)) - z_sq / sigma2;
    out.resid_sq = z_sq;
    if (cov_out) cov_out->resize(0, 0);
    return out;
  }

  const CVec d_a = gather(phi_h_z, active);

  if (k <= m) {
    const CMat g_aa = gather_block(basis.gram, active);
    CMat h = g_aa / sigma2;
    for (int i = 0; i < k; ++i) h(i, i) += 1.0 / gamma_a(i);
    auto llt = checked_llt(h, "sbl posterior");
    const CMat h_inv = llt.solve(CMat::Identity(k, k));
    out.mu = h_inv * d_a / sigma2;
    out.diag = h_inv.diagonal().real();
    const double logdet_z =
        static_cast<double>(m) * std::log(sigma2) + gamma_a.array().log().sum() + logdet_from_llt(llt);
    const double quad = (z_sq - d_a.dot(out.mu).real()) / sigma2;
    out.loglik = -static_cast<double>(m) * kLogPi - logdet_z - quad;
    out.resid_sq = z_sq - 2.0 * d_a.dot(out.mu).real() + (out.mu.adjoint() * g_aa * out.mu)(0).real();
    out.resid_sq = std::max(out.resid_sq, 0.0);
    if (cov_out) *cov_out = h_inv;
  } else {
    const CMat phi_a = gather_cols(basis.phi, active);
    CMat sigma_y(m, m);
    if (basis.structured()) {
      structured_outer(basis.unit_roots, active, gamma_a, basis.row_diff, m, &sigma_y);
    } else {
      sigma_y.setZero();
      sigma_y.selfadjointView<Eigen::Lower>().rankUpdate(
          phi_a * gamma_a.cwiseSqrt().cast<cxd>().asDiagonal());
    }
    sigma_y.diagonal().array() += sigma2;
    auto llt = checked_llt(sigma_y, "sbl posterior");  // reads the lower triangle only
    const CVec w = llt.matrixL().solve(z);
    const CMat v = llt.matrixL().solve(phi_a);
    out.mu = gamma_a.cast<cxd>().asDiagonal() * (v.adjoint() * w);
    out.diag.resize(k);
    for (int i = 0; i < k; ++i)
      out.diag(i) = gamma_a(i) - gamma_a(i) * gamma_a(i) * v.col(i).squaredNorm();
    out.loglik = -static_cast<double>(m) * kLogPi - logdet_from_llt(llt) - w.squaredNorm();
    out.resid_sq = (z - phi_a * out.mu).squaredNorm();
    if (cov_out) {
      const CMat vv = v.adjoint() * v;
      *cov_out = gamma_a.cast<cxd>().asDiagonal() *
                 CMat(CMat::Identity(k, k) - vv * gamma_a.cast<cxd>().asDiagonal());
      // Symmetrize away factorization round-off.
      *cov_out = ((*cov_out + cov_out->adjoint()) / 2.0).eval();
    }
  }

  out.trace_term = 0.0;
  for (int i = 0; i < k; ++i) out.trace_term += 1.0 - out.diag(i) / gamma_a(i);
  return out;
}

void scatter(const CVec& src, const std::vector<int>& idx, CVec* dst) {
  dst->setZero();
  for (std::size_t i = 0; i < idx.size(); ++i) (*dst)(idx[i]) = src(static_cast<Eigen::Index>(i));
}

void scatter(const RVec& src, const std::vector<int>& idx, RVec* dst) {
  dst->setZero();
  for (std::size_t i = 0; i < idx.size(); ++i) (*dst)(idx[i]) = src(static_cast<Eigen::Index>(i));
}

void validate_settings(const SblSettings& s) {
  if (!(s.sigma2 > 0.0)) throw std::invalid_argument("sbl: sigma2 must be positive");
  if (s.max_iters < 1) throw std::invalid_argument("sbl: max_iters must be >= 1");
  if (!(s.tol > 0.0) || !(s.gamma_floor > 0.0) || !(s.seq_tol > 0.0))
    throw std::invalid_argument("sbl: tolerances must be positive");
}

}  // namespace

SblBasis::SblBasis(CMat phi_in) : phi(std::move(phi_in)) {
  if (phi.rows() == 0 || phi.cols() == 0) throw std::invalid_argument("sbl basis: empty matrix");
  gram = phi.adjoint() * phi;
  col_norm2 = gram.diagonal().real();
}

SblBasis::SblBasis(CMat phi_in, IndexSet rows, int n_fft) : SblBasis(std::move(phi_in)) {
  if (n_fft <= 0) throw std::invalid_argument("sbl basis: transform size must be positive");
  if (static_cast<Eigen::Index>(rows.size()) != phi.rows() || phi.cols() != n_fft)
    throw std::invalid_argument("sbl basis: row list does not match the matrix shape");
  const CMat canon = dft_matrix(n_fft);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j] < 0 || rows[j] >= n_fft)
      throw std::invalid_argument("sbl basis: row index out of range");
    if (!(phi.row(static_cast<Eigen::Index>(j)).array() == canon.row(rows[j]).array()).all())
      throw std::invalid_argument("sbl basis: matrix rows do not match the stated transform rows");
  }
  dft_n = n_fft;
  dft_rows = std::move(rows);
  unit_roots = dft_unit_roots(n_fft);
  const Eigen::Index m = phi.rows();
  row_diff.resize(static_cast<std::size_t>(m * m));
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index l = 0; l < m; ++l) {
      int d = (dft_rows[static_cast<std::size_t>(j)] - dft_rows[static_cast<std::size_t>(l)]) % n_fft;
      if (d < 0) d += n_fft;
      row_diff[static_cast<std::size_t>(j * m + l)] = d;
    }
  }
}

PosteriorMoments sbl_posterior(const CMat& phi, const CVec& z, const RVec& gamma, double sigma2) {
  if (phi.rows() != z.size() || phi.cols() != gamma.size())
    throw std::invalid_argument("sbl_posterior: dimension mismatch");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sbl_posterior: sigma2 must be positive");
  for (Eigen::Index i = 0; i < gamma.size(); ++i)
    if (!(gamma(i) > 0.0))
      throw std::invalid_argument("sbl_posterior: direct form needs strictly positive gamma");
  const Eigen::Index n = phi.cols();
  CMat h = phi.adjoint() * phi / sigma2;
  h += gamma.cwiseInverse().cast<cxd>().asDiagonal();
  PosteriorMoments out;
  out.sigma = hermitian_solve(h, CMat(CMat::Identity(n, n)));
  out.mu = out.sigma * (phi.adjoint() * z) / sigma2;
  return out;
}

PosteriorMoments sbl_posterior_woodbury(const CMat& phi, const CVec& z, const RVec& gamma,
                                        double sigma2) {
  if (phi.rows() != z.size() || phi.cols() != gamma.size())
    throw std::invalid_argument("sbl_posterior_woodbury: dimension mismatch");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sbl_posterior_woodbury: sigma2 must be positive");
  const Eigen::Index m = phi.rows();
  CMat sigma_y = phi * gamma.cast<cxd>().asDiagonal() * phi.adjoint();
  sigma_y.diagonal().array() += sigma2;
  const CMat phi_g = phi * gamma.cast<cxd>().asDiagonal();  // Phi Gamma
  const CMat solved = hermitian_solve(sigma_y, CMat(phi_g));
  PosteriorMoments out;
  out.sigma = CMat(gamma.cast<cxd>().asDiagonal()) - phi_g.adjoint() * solved;
  out.mu = phi_g.adjoint() * hermitian_solve(sigma_y, z);
  (void)m;
  return out;
}

namespace {

// Shared evidence-maximization loop for the non-data-tone observation.
EstimatorResult em_estimate(const CVec& z, const SblBasis& basis, const SblSettings& settings,
                            const GammaHyperprior* prior) {
  validate_settings(settings);
  const Eigen::Index m = basis.phi.rows();
  const Eigen::Index n = basis.phi.cols();
  if (z.size() != m) throw std::invalid_argument("estimate: observation length mismatch");
  if (prior && (prior->a.size() != n || prior->b.size() != n))
    throw std::invalid_argument("estimate: hyperprior must have one (a, b) pair per coordinate");

  const CVec phi_h_z = basis.phi.adjoint() * z;
  const double z_sq = z.squaredNorm();

  EstimatorResult res;
  res.state.sigma2 = settings.sigma2;
  double sigma2 = settings.sigma2;

  const double g0 = z_sq / static_cast<double>(m);
  std::vector<int> active;
  RVec gamma_a;
  if (g0 > 0.0) {
    active.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) active[static_cast<std::size_t>(i)] = static_cast<int>(i);
    gamma_a = RVec::Constant(n, g0);
  }

  bool converged = (g0 == 0.0);
  int it = 0;
  ActiveEval eval;
  while (!converged && it < settings.max_iters) {
    ++it;
    eval = eval_posterior_active(basis, z, phi_h_z, z_sq, active, gamma_a, sigma2, nullptr);
    res.state.loglik.push_back(eval.loglik);

    const int k = static_cast<int>(active.size());
    RVec gamma_new(k);
    for (int i = 0; i < k; ++i) {
      const int gi = active[static_cast<std::size_t>(i)];
      const double b2 = prior ? 2.0 * prior->b(gi) : 0.0;
      const double a2 = prior ? 2.0 * prior->a(gi) : 0.0;
      gamma_new(i) = (std::norm(eval.mu(i)) + eval.diag(i) + b2) / (1.0 + a2);
    }

    if (settings.sigma2_mode == Sigma2Mode::kLearned) {
      sigma2 = (eval.resid_sq + sigma2 * eval.trace_term) / static_cast<double>(m);
      sigma2 = std::max(sigma2, kTiny);
    }

    const double gmax_old = k > 0 ? gamma_a.maxCoeff() : 0.0;
    const double delta = k > 0 ? (gamma_new - gamma_a).cwiseAbs().maxCoeff() : 0.0;
    converged = delta <= settings.tol * std::max(gmax_old, kTiny);

    // Prune relative to the current largest weight, exact zeros thereafter.
    const double gmax_new = k > 0 ? gamma_new.maxCoeff() : 0.0;
    const double floor = settings.gamma_floor * gmax_new;
    std::vector<int> next_active;
    next_active.reserve(active.size());
    std::vector<double> next_gamma;
    next_gamma.reserve(active.size());
    for (int i = 0; i < k; ++i) {
      if (gamma_new(i) > floor) {
        next_active.push_back(active[static_cast<std::size_t>(i)]);
        next_gamma.push_back(gamma_new(i));
      }
    }
    active = std::move(next_active);
    gamma_a = Eigen::Map<RVec>(next_gamma.data(), static_cast<Eigen::Index>(next_gamma.size()));
  }

  CMat cov;
  eval = eval_posterior_active(basis, z, phi_h_z, z_sq, active, gamma_a, sigma2,
                               settings.want_covariance ? &cov : nullptr);
  res.state.loglik.push_back(eval.loglik);

  res.state.iterations = it;
  res.state.converged = converged;
  res.state.sigma2 = sigma2;
  res.state.gamma.resize(n);
  scatter(gamma_a, active, &res.state.gamma);
  res.state.mu.resize(n);
  scatter(eval.mu, active, &res.state.mu);
  res.state.sigma_diag.resize(n);
  scatter(eval.diag, active, &res.state.sigma_diag);
  if (settings.want_covariance) {
    res.state.sigma_e = CMat::Zero(n, n);
    for (std::size_t r = 0; r < active.size(); ++r)
      for (std::size_t c = 0; c < active.size(); ++c)
        res.state.sigma_e(active[r], active[c]) = cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  res.e_hat = res.state.mu;
  return res;
}

}  // namespace

EstimatorResult estimate_nulltone(const CVec& z, const SblBasis& basis, const SblSettings& settings,
                                  const GammaHyperprior* prior) {
  return em_estimate(z, basis, settings, prior);
}

EstimatorResult estimate_nulltone(const CVec& z, const CMat& phi, const SblSettings& settings) {
  return em_estimate(z, SblBasis(phi), settings, nullptr);
}

AlltoneResult estimate_alltone(const CVec& y, const CMat& f, const CVec& channel_freq,
                               const IndexSet& data_tones, const IndexSet& nondata_tones,
                               const CVec& known_nondata, const SblSettings& settings) {
  validate_settings(settings);
  const Eigen::Index n = f.rows();
  if (f.cols() != n) throw std::invalid_argument("estimate_alltone: transform must be square");
  if (y.size() != n) throw std::invalid_argument("estimate_alltone: observation length mismatch");
  if (channel_freq.size() != 0 && channel_freq.size() != n)
    throw std::invalid_argument("estimate_alltone: channel length mismatch");
  if (known_nondata.size() != static_cast<Eigen::Index>(nondata_tones.size()))
    throw std::invalid_argument("estimate_alltone: one known value per non-data tone required");
  (void)channel_freq;  // known_nondata already carries channel * pilot products

  const Eigen::Index m = static_cast<Eigen::Index>(nondata_tones.size());
  if (m == 0) throw std::invalid_argument("estimate_alltone: need at least one known tone");

  // Same spectral scale initialization as the non-data-tone path.
  double g0 = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) g0 += std::norm(y(nondata_tones[i]) - known_nondata(i));
  g0 /= static_cast<double>(m);

  // Signal hypothesis: fixed on known tones, observation-initialized on data tones.
  CVec lam_x = CVec::Zero(n);
  for (std::size_t i = 0; i < nondata_tones.size(); ++i) lam_x(nondata_tones[i]) = known_nondata(i);
  for (int k : data_tones) lam_x(k) = y(k);

  double sigma2 = settings.sigma2;
  std::vector<int> active;
  RVec gamma_a;
  if (g0 > 0.0) {
    active.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) active[static_cast<std::size_t>(i)] = static_cast<int>(i);
    gamma_a = RVec::Constant(n, g0);
  }

  AlltoneResult res;
  bool converged = (g0 == 0.0);
  int it = 0;

  CMat phi_a;
  CVec mu_a;
  RVec diag_a;

  // Row-difference assembly applies whenever the caller hands us the canonical
  // transform, which is the usual case.
  const bool structured = is_canonical_dft(f);
  CVec roots;
  std::vector<int> row_diff;
  if (structured) {
    roots = dft_unit_roots(static_cast<int>(n));
    row_diff.resize(static_cast<std::size_t>(n * n));
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index l = 0; l < n; ++l)
        row_diff[static_cast<std::size_t>(j * n + l)] = static_cast<int>(((j - l) % n + n) % n);
  }

  // Exact signal-block mode needs the known-tone rows as a reduced system.
  std::optional<SblBasis> nd_basis;
  CVec z_nd, nd_phi_h_z;
  double z_nd_sq = 0.0;
  if (settings.alltone_signal_exact) {
    CMat f_nd = submatrix_rows(f, nondata_tones);
    if (structured)
      nd_basis.emplace(std::move(f_nd), nondata_tones, static_cast<int>(n));
    else
      nd_basis.emplace(std::move(f_nd));
    z_nd.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) z_nd(i) = y(nondata_tones[i]) - known_nondata(i);
    nd_phi_h_z = nd_basis->phi.adjoint() * z_nd;
    z_nd_sq = z_nd.squaredNorm();
  }

  // One evidence pass at the current (gamma, sigma2, signal) triple. The
  // covariance of the full-length observation is factored as an n x n matrix
  // every pass, which is what keeps this estimator cubic in n.
  auto eval_pass = [&](double* loglik, double* resid_fit, double* trace_term) {
    const int k = static_cast<int>(active.size());
    if (k == 0) {
      const CVec resid = y - lam_x;
      mu_a.resize(0);
      diag_a.resize(0);
      *loglik = -static_cast<double>(n) * (kLogPi + std::log(sigma2)) - resid.squaredNorm() / sigma2;
      *resid_fit = resid.squaredNorm();
      *trace_term = 0.0;
      return;
    }
    phi_a = gather_cols(f, active);

    double resid_nd_sq = -1.0;
    if (settings.alltone_signal_exact) {
      // Signal block at its fixed point: the posterior mean then equals the
      // reduced known-tone posterior mean, so take the mean from there and
      // move the signal hypothesis before evaluating the full covariance.
      const ActiveEval nd = eval_posterior_active(*nd_basis, z_nd, nd_phi_h_z, z_nd_sq, active,
                                                  gamma_a, sigma2, nullptr);
      mu_a = nd.mu;
      resid_nd_sq = nd.resid_sq;
      const CVec f_mu = phi_a * mu_a;
      for (int kk : data_tones) lam_x(kk) = y(kk) - f_mu(kk);
    }
    const CVec resid = y - lam_x;

    CMat sigma_y(n, n);
    if (structured) {
      structured_outer(roots, active, gamma_a, row_diff, n, &sigma_y);
    } else {
      sigma_y.setZero();
      sigma_y.selfadjointView<Eigen::Lower>().rankUpdate(
          phi_a * gamma_a.cwiseSqrt().cast<cxd>().asDiagonal());
    }
    sigma_y.diagonal().array() += sigma2;
    auto llt = checked_llt(sigma_y, "estimate_alltone");
    const CVec w = llt.matrixL().solve(resid);
    const CMat v = llt.matrixL().solve(phi_a);
    if (!settings.alltone_signal_exact) mu_a = gamma_a.cast<cxd>().asDiagonal() * (v.adjoint() * w);
    diag_a.resize(k);
    for (int i = 0; i < k; ++i)
      diag_a(i) = gamma_a(i) - gamma_a(i) * gamma_a(i) * v.col(i).squaredNorm();
    *loglik = -static_cast<double>(n) * kLogPi - logdet_from_llt(llt) - w.squaredNorm();
    *resid_fit = resid_nd_sq >= 0.0 ? resid_nd_sq : (resid - phi_a * mu_a).squaredNorm();
    *trace_term = 0.0;
    for (int i = 0; i < k; ++i) *trace_term += 1.0 - diag_a(i) / gamma_a(i);
  };

  double loglik = 0.0, resid_fit = 0.0, trace_term = 0.0;
  while (!converged && it < settings.max_iters) {
    ++it;
    eval_pass(&loglik, &resid_fit, &trace_term);
    res.state.loglik.push_back(loglik);

    const int k = static_cast<int>(active.size());
    RVec gamma_new(k);
    for (int i = 0; i < k; ++i) gamma_new(i) = std::norm(mu_a(i)) + diag_a(i);

    if (settings.sigma2_mode == Sigma2Mode::kLearned) {
      sigma2 = (resid_fit + sigma2 * trace_term) / static_cast<double>(n);
      sigma2 = std::max(sigma2, kTiny);
    }

    // Refresh the data-tone signal hypothesis from the current impulse fit.
    if (k > 0) {
      const CVec f_mu = phi_a * mu_a;
      for (int kk : data_tones) lam_x(kk) = y(kk) - f_mu(kk);
    } else {
      for (int kk : data_tones) lam_x(kk) = y(kk);
    }

    const double gmax_old = k > 0 ? gamma_a.maxCoeff() : 0.0;
    const double delta = k > 0 ? (gamma_new - gamma_a).cwiseAbs().maxCoeff() : 0.0;
    converged = delta <= settings.tol * std::max(gmax_old, kTiny);

    const double gmax_new = k > 0 ? gamma_new.maxCoeff() : 0.0;
    const double floor = settings.gamma_floor * gmax_new;
    std::vector<int> next_active;
    std::vector<double> next_gamma;
    next_active.reserve(active.size());
    next_gamma.reserve(active.size());
    for (int i = 0; i < k; ++i) {
      if (gamma_new(i) > floor) {
        next_active.push_back(active[static_cast<std::size_t>(i)]);
        next_gamma.push_back(gamma_new(i));
      }
    }
    active = std::move(next_active);
    gamma_a = Eigen::Map<RVec>(next_gamma.data(), static_cast<Eigen::Index>(next_gamma.size()));
  }

  eval_pass(&loglik, &resid_fit, &trace_term);
  res.state.loglik.push_back(loglik);

  res.state.iterations = it;
  res.state.converged = converged;
  res.state.sigma2 = sigma2;
  res.state.gamma.resize(n);
  scatter(gamma_a, active, &res.state.gamma);
  res.state.mu.resize(n);
  scatter(mu_a, active, &res.state.mu);
  res.state.sigma_diag.resize(n);
  scatter(diag_a, active, &res.state.sigma_diag);
  res.e_hat = res.state.mu;
  res.signal_data.resize(static_cast<Eigen::Index>(data_tones.size()));
  for (std::size_t i = 0; i < data_tones.size(); ++i)
    res.signal_data(static_cast<Eigen::Index>(i)) = lam_x(data_tones[i]);
  return res;
}

DecisionFeedbackResult estimate_decision_feedback(const std::vector<CVec>& y_symbols,
                                                  const OfdmModel& model, const SblBasis& basis,
                                                  const ConvCode* code, int rounds,
                                                  const SblSettings& settings,
                                                  const GammaHyperprior* round0_prior) {
  if (y_symbols.empty()) throw std::invalid_argument("estimate_decision_feedback: need at least one symbol");
  if (rounds < 0) throw std::invalid_argument("estimate_decision_feedback: rounds must be >= 0");
  const std::size_t n_sym = y_symbols.size();
  const int bits_per = model.bits_per_symbol();
  const Eigen::Index n = model.config().n_fft;

  DecisionFeedbackResult res;
  res.e_hat.resize(n_sym);
  res.states.resize(n_sym);

  std::vector<CVec> z_cache(n_sym);
  for (std::size_t s = 0; s < n_sym; ++s) z_cache[s] = model.observe_nondata(y_symbols[s]);

  auto detect_all = [&]() {
    BitVector stream;
    stream.reserve(n_sym * static_cast<std::size_t>(bits_per));
    for (std::size_t s = 0; s < n_sym; ++s) {
      const DetectResult det = model.subtract_and_detect(y_symbols[s], res.e_hat[s]);
      stream.insert(stream.end(), det.bits.begin(), det.bits.end());
    }
    if (code) {
      const DecodeResult dec = viterbi_decode(*code, stream);
      res.info_bits = dec.info;
      res.coded_bits = dec.coded;
    } else {
      res.info_bits = stream;
      res.coded_bits = std::move(stream);
    }
  };

  // Round 0: plain per-symbol estimation, then detect (and decode).
  for (std::size_t s = 0; s < n_sym; ++s) {
    EstimatorResult r = estimate_nulltone(z_cache[s], basis, settings, round0_prior);
    res.e_hat[s] = std::move(r.e_hat);
    res.states[s] = std::move(r.state);
  }
  detect_all();
  res.rounds_run = 0;

  for (int round = 1; round <= rounds; ++round) {
    for (std::size_t s = 0; s < n_sym; ++s) {
      // Rebuild the transmitted-signal hypothesis from the tentative decisions.
      BitVector bits_s(res.coded_bits.begin() + static_cast<std::ptrdiff_t>(s) * bits_per,
                       res.coded_bits.begin() + static_cast<std::ptrdiff_t>(s + 1) * bits_per);
      const CVec frame = model.build_frame(qpsk_map(bits_s));
      const CVec lam_x = model.channel().cwiseProduct(frame);
      // Full-rank time-domain residual; its energy feeds the prior rates.
      const CVec e_resid = model.idft() * (y_symbols[s] - lam_x);

      GammaHyperprior prior;
      prior.a.resize(n);
      prior.b.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double a0 = round0_prior ? round0_prior->a(i) : 0.0;
        const double b0 = round0_prior ? round0_prior->b(i) : 0.0;
        prior.a(i) = a0 + 0.5;
        prior.b(i) = b0 + 0.5 * std::norm(e_resid(i));
      }

      EstimatorResult r = estimate_nulltone(z_cache[s], basis, settings, &prior);
      res.e_hat[s] = std::move(r.e_hat);
      res.states[s] = std::move(r.state);
    }
    detect_all();
    res.rounds_run = round;
  }
  return res;
}

SequentialResult estimate_sequential(const CVec& z, const SblBasis& basis, const SblSettings& settings) {
  validate_settings(settings);
  if (settings.sigma2_mode == Sigma2Mode::kLearned)
    throw std::invalid_argument("estimate_sequential: requires fixed sigma2");
  const Eigen::Index m = basis.phi.rows();
  const Eigen::Index n = basis.phi.cols();
  if (z.size() != m) throw std::invalid_argument("estimate_sequential: observation length mismatch");

  const double sigma2 = settings.sigma2;
  const CVec d = basis.phi.adjoint() * z;
  const double z_sq = z.squaredNorm();

  SequentialResult res;
  res.state.sigma2 = sigma2;
  res.state.gamma = RVec::Zero(n);
  res.state.mu = CVec::Zero(n);
  res.state.sigma_diag = RVec::Zero(n);
  res.e_hat = CVec::Zero(n);

  // Seed with the coordinate whose projection most exceeds the noise floor.
  int seed_idx = -1;
  double best_proj = sigma2;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (basis.col_norm2(i) <= 0.0) continue;
    const double proj = std::norm(d(i)) / basis.col_norm2(i);
    if (proj > best_proj) {
      best_proj = proj;
      seed_idx = static_cast<int>(i);
    }
  }
  if (seed_idx < 0) {
    // Nothing rises above the noise floor: the empty model is the optimum.
    res.state.converged = true;
    return res;
  }

  std::vector<int> act{seed_idx};
  std::vector<double> alpha{basis.col_norm2(seed_idx) / (best_proj - sigma2)};
  std::vector<char> in_model(n, 0);
  in_model[seed_idx] = 1;

  const int action_cap = std::max(1000, settings.max_iters);
  const double inf = std::numeric_limits<double>::infinity();

  CMat sigma;  // posterior covariance on the active set
  CVec mu;

  auto refit = [&]() {
    const int k = static_cast<int>(act.size());
    CMat h = gather_block(basis.gram, act) / sigma2;
    for (int i = 0; i < k; ++i) h(i, i) += alpha[static_cast<std::size_t>(i)];
    auto llt = checked_llt(h, "estimate_sequential");
    sigma = llt.solve(CMat::Identity(k, k));
    mu = sigma * gather(d, act) / sigma2;
    // Evidence for the trace: det(Sigma_z) = sigma2^m det(H) / prod(alpha).
    double log_alpha_sum = 0.0;
    for (double a : alpha) log_alpha_sum += std::log(a);
    const double logdet_z =
        static_cast<double>(m) * std::log(sigma2) + logdet_from_llt(llt) - log_alpha_sum;
    const double quad = (z_sq - gather(d, act).dot(mu).real()) / sigma2;
    res.state.loglik.push_back(-static_cast<double>(m) * kLogPi - logdet_z - quad);
  };

  refit();

  int actions = 0;
  bool converged = false;
  while (actions < action_cap) {
    const int k = static_cast<int>(act.size());
    // Sparsity/quality factors for every coordinate against the current model.
    CMat c_rows(k, n);
    for (int r = 0; r < k; ++r) c_rows.row(r) = basis.gram.row(act[static_cast<std::size_t>(r)]);
    const CMat t = sigma * c_rows;  // k x n
    const CVec mu_h_c = c_rows.adjoint() * mu;

    int best_idx = -1;
    int best_kind = 0;  // 1 = add, 2 = re-estimate, 3 = delete
    double best_gain = 0.0;
    double best_alpha = 0.0;

    for (Eigen::Index i = 0; i < n; ++i) {
      if (basis.col_norm2(i) <= 0.0) continue;
      double csc = 0.0;
      for (int r = 0; r < k; ++r)
        csc += (std::conj(c_rows(r, i)) * t(r, i)).real();
      const double s_cap = basis.col_norm2(i) / sigma2 - csc / (sigma2 * sigma2);
      const cxd q_cap = (d(i) - mu_h_c(i)) / sigma2;
      const double q_cap2 = std::norm(q_cap);

      double s_f, q2_f;
      double alpha_old = 0.0;
      if (in_model[static_cast<std::size_t>(i)]) {
        // Locate this coordinate's alpha.
        for (int r = 0; r < k; ++r) {
          if (act[static_cast<std::size_t>(r)] == static_cast<int>(i)) {
            alpha_old = alpha[static_cast<std::size_t>(r)];
            break;
          }
        }
        const double denom = std::max(alpha_old - s_cap, kTiny);
        s_f = alpha_old * s_cap / denom;
        q2_f = (alpha_old * alpha_old) / (denom * denom) * q_cap2;
      } else {
        s_f = s_cap;
        q2_f = q_cap2;
      }
      const double theta = q2_f - s_f;

      if (theta > 0.0) {
        const double alpha_new = s_f * s_f / (q2_f - s_f);
        if (!in_model[static_cast<std::size_t>(i)]) {
          if (q_cap2 <= s_cap) continue;  // numerically inconsistent, skip
          const double gain = (q_cap2 - s_cap) / s_cap + std::log(s_cap / q_cap2);
          if (gain > best_gain) {
            best_gain = gain;
            best_idx = static_cast<int>(i);
            best_kind = 1;
            best_alpha = alpha_new;
          }
        } else {
          const double dlog = std::abs(std::log(alpha_new) - std::log(alpha_old));
          if (dlog < settings.seq_tol) continue;  // effectively converged coordinate
          const double delta_inv = 1.0 / alpha_new - 1.0 / alpha_old;
          const double gain =
              q_cap2 * delta_inv / (s_cap * delta_inv + 1.0) - std::log1p(s_cap * delta_inv);
          if (gain > best_gain) {
            best_gain = gain;
            best_idx = static_cast<int>(i);
            best_kind = 2;
            best_alpha = alpha_new;
          }
        }
      } else if (in_model[static_cast<std::size_t>(i)] && k > 1) {
        const double gain = q_cap2 / (s_cap - alpha_old) - std::log1p(-s_cap / alpha_old);
        if (gain > best_gain) {
          best_gain = gain;
          best_idx = static_cast<int>(i);
          best_kind = 3;
          best_alpha = inf;
        }
      }
    }

    if (best_idx < 0 || best_gain <= 0.0) {
      converged = true;
      break;
    }

    if (best_kind == 1) {
      act.push_back(best_idx);
      alpha.push_back(best_alpha);
      in_model[static_cast<std::size_t>(best_idx)] = 1;
    } else if (best_kind == 2) {
      for (std::size_t r = 0; r < act.size(); ++r) {
        if (act[r] == best_idx) {
          alpha[r] = best_alpha;
          break;
        }
      }
    } else {
      for (std::size_t r = 0; r < act.size(); ++r) {
        if (act[r] == best_idx) {
          act.erase(act.begin() + static_cast<std::ptrdiff_t>(r));
          alpha.erase(alpha.begin() + static_cast<std::ptrdiff_t>(r));
          break;
        }
      }
      in_model[static_cast<std::size_t>(best_idx)] = 0;
    }
    ++actions;
    refit();
  }

  res.state.iterations = actions;
  res.state.converged = converged;
  for (std::size_t r = 0; r < act.size(); ++r) {
    res.state.gamma(act[r]) = 1.0 / alpha[r];
    res.state.mu(act[r]) = mu(static_cast<Eigen::Index>(r));
    res.state.sigma_diag(act[r]) = sigma(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r)).real();
  }
  res.e_hat = res.state.mu;
  res.support = act;
  std::sort(res.support.begin(), res.support.end());
  return res;
}

}  // namespace plcsim
