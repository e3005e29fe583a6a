#include "plcsim/numerics.hpp"

#include <cmath>
#include <numbers>

namespace plcsim {

CMat dft_matrix(int n) {
  if (n <= 0) throw std::invalid_argument("dft_matrix: n must be positive");
  CMat f(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  const double step = 2.0 * std::numbers::pi / n;
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      // Reduce j*k mod n before forming the angle; keeps the argument small
      // so entries stay accurate for large n.
      const long long m = (static_cast<long long>(j) * k) % n;
      f(j, k) = std::polar(scale, -step * static_cast<double>(m));
    }
  }
  return f;
}

CMat submatrix_rows(const CMat& m, const IndexSet& idx) {
  CMat out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const int i = idx[r];
    if (i < 0 || i >= m.rows())
      throw std::out_of_range("submatrix_rows: row index out of range");
    out.row(static_cast<Eigen::Index>(r)) = m.row(i);
  }
  return out;
}

namespace {

Eigen::LDLT<CMat> checked_ldlt(const CMat& a) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("hermitian_solve: matrix must be square");
  Eigen::LDLT<CMat> ldlt(a);
  if (ldlt.info() != Eigen::Success)
    throw SingularMatrixError("hermitian_solve: factorization failed");
  const auto d = ldlt.vectorD();
  const double scale = std::abs(a.trace().real()) / static_cast<double>(a.rows());
  const double floor = 1e-14 * scale;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    // The diagonal of the Hermitian factorization is real up to round-off.
    if (!(d(i).real() > floor))
      throw SingularMatrixError("hermitian_solve: pivot below tolerance, matrix is numerically singular");
  }
  return ldlt;
}

}  // namespace

CMat hermitian_solve(const CMat& a, const CMat& b) {
  return checked_ldlt(a).solve(b);
}

CVec hermitian_solve(const CMat& a, const CVec& b) {
  return checked_ldlt(a).solve(b);
}

bool all_finite(const CVec& v) { return v.allFinite(); }
bool all_finite(const CMat& m) { return m.allFinite(); }
bool all_finite(const RVec& v) { return v.allFinite(); }

namespace {

inline std::uint64_t splitmix64_step(std::uint64_t& s) {
  s += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stateless mix used to derive child seeds: hash of (seed, stream).
inline std::uint64_t mix_two(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (0xA0761D6478BD642FULL + b * 0xE7037ED1A0B428DBULL);
  (void)splitmix64_step(s);
  return splitmix64_step(s);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

std::uint64_t Rng::next_u64() { return splitmix64_step(state_); }

double Rng::uniform() {
  // 53 high bits -> double in [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_below: bound must be positive");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % bound;
}

Rng Rng::child(std::uint64_t stream) const { return Rng(mix_two(seed_, stream)); }

CVec sample_circular_gaussian(Rng& rng, int n, double variance) {
  if (n < 0) throw std::invalid_argument("sample_circular_gaussian: n must be >= 0");
  if (variance < 0.0) throw std::invalid_argument("sample_circular_gaussian: variance must be >= 0");
  CVec z(n);
  if (variance == 0.0) {
    z.setZero();
    return z;
  }
  for (int i = 0; i < n; ++i) {
    // Polar form: |z|^2 ~ Exp(mean = variance), phase uniform.
    const double u = 1.0 - rng.uniform();  // (0, 1], keeps log finite
    const double r = std::sqrt(-variance * std::log(u));
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    z(i) = std::polar(r, phi);
  }
  return z;
}

}  // namespace plcsim
