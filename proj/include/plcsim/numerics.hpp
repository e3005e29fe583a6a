#ifndef PLCSIM_NUMERICS_HPP
#define PLCSIM_NUMERICS_HPP

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace plcsim {

using cxd = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;

// Sorted list of tone / sample indices.
using IndexSet = std::vector<int>;

// Thrown when a linear system is numerically singular.
class SingularMatrixError : public std::runtime_error {
 public:
  explicit SingularMatrixError(const std::string& what) : std::runtime_error(what) {}
};

// Unitary DFT matrix: F(j,k) = exp(-i 2 pi j k / n) / sqrt(n).
// Satisfies F * F^H = I, so F^H is the inverse transform.
CMat dft_matrix(int n);

// Rows of m selected by idx, in the given order. Indices must be in range.
CMat submatrix_rows(const CMat& m, const IndexSet& idx);

// Solve a x = b for Hermitian positive semi-definite a via LDLT.
// Throws SingularMatrixError if a pivot falls below 1e-14 relative to the
// mean diagonal magnitude (the matrix is rank deficient at working precision).
CMat hermitian_solve(const CMat& a, const CMat& b);
CVec hermitian_solve(const CMat& a, const CVec& b);

bool all_finite(const CVec& v);
bool all_finite(const CMat& m);
bool all_finite(const RVec& v);

// Small deterministic generator (splitmix64 core). Streams are fully
// specified by this code, so sequences are reproducible across platforms
// and standard library versions. Child streams derived from the original
// seed and a stream index are statistically independent for Monte-Carlo use.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform();

  // Uniform integer in [0, bound), bound > 0. Rejection sampled, no modulo bias.
  std::uint64_t uniform_below(std::uint64_t bound);

  // Independent generator for substream `stream` of this generator's seed.
  // Pure function of (seed, stream): unaffected by draws made so far.
  Rng child(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

// n i.i.d. draws from the circularly-symmetric complex Gaussian CN(0, variance),
// i.e. E|z|^2 = variance with independent real/imaginary parts of variance/2 each.
// variance = 0 yields exact zeros.
CVec sample_circular_gaussian(Rng& rng, int n, double variance);

}  // namespace plcsim

#endif
