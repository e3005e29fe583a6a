#include "plcsim/ofdm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace plcsim {

void OfdmConfig::validate() const {
  if (n_fft <= 0) throw std::invalid_argument("ofdm: n_fft must be positive");
  if (cp_len < 0) throw std::invalid_argument("ofdm: cp_len must be >= 0");
  auto check_sorted = [&](const IndexSet& s, const char* what) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] < 0 || s[i] >= n_fft) throw std::invalid_argument(std::string("ofdm: ") + what + " out of range");
      if (i > 0 && s[i] <= s[i - 1]) throw std::invalid_argument(std::string("ofdm: ") + what + " must be sorted unique");
    }
  };
  check_sorted(data_tones, "data tone");
  check_sorted(pilot_tones, "pilot tone");
  for (int p : pilot_tones) {
    if (std::binary_search(data_tones.begin(), data_tones.end(), p))
      throw std::invalid_argument("ofdm: pilot tones must not overlap data tones");
  }
  if (static_cast<Eigen::Index>(pilot_tones.size()) != pilot_symbols.size())
    throw std::invalid_argument("ofdm: one pilot symbol per pilot tone required");
  if (channel_freq.size() != 0 && channel_freq.size() != n_fft)
    throw std::invalid_argument("ofdm: channel must have one gain per tone");
  if (data_tones.empty()) throw std::invalid_argument("ofdm: need at least one data tone");
  if (data_tones.size() == static_cast<std::size_t>(n_fft))
    throw std::invalid_argument("ofdm: need at least one non-data tone");
}

IndexSet OfdmConfig::nondata_tones() const {
  IndexSet out;
  out.reserve(n_fft - data_tones.size());
  std::size_t d = 0;
  for (int k = 0; k < n_fft; ++k) {
    if (d < data_tones.size() && data_tones[d] == k) {
      ++d;
    } else {
      out.push_back(k);
    }
  }
  return out;
}

OfdmConfig OfdmConfig::typical() {
  OfdmConfig cfg;
  cfg.n_fft = 128;
  cfg.cp_len = 0;
  cfg.data_tones.resize(72);
  for (int i = 0; i < 72; ++i) cfg.data_tones[i] = 32 + i;
  return cfg;
}

CVec qpsk_map(const BitVector& bits) {
  if (bits.size() % 2 != 0) throw std::invalid_argument("qpsk_map: need an even number of bits");
  const double a = 1.0 / std::sqrt(2.0);
  CVec out(bits.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int b1 = bits[2 * i], b0 = bits[2 * i + 1];
    if (b1 > 1 || b0 > 1) throw std::invalid_argument("qpsk_map: bits must be 0 or 1");
    out(static_cast<Eigen::Index>(i)) = cxd(a * (1 - 2 * b1), a * (1 - 2 * b0));
  }
  return out;
}

BitVector qpsk_unmap(const CVec& symbols) {
  BitVector out(2 * symbols.size());
  for (Eigen::Index i = 0; i < symbols.size(); ++i) {
    out[2 * i] = symbols(i).real() < 0.0 ? 1 : 0;
    out[2 * i + 1] = symbols(i).imag() < 0.0 ? 1 : 0;
  }
  return out;
}

TdiConfig TdiConfig::make(int depth, int n_fft, std::uint64_t seed) {
  if (depth <= 0 || n_fft <= 0) throw std::invalid_argument("tdi: depth and n_fft must be positive");
  TdiConfig cfg;
  cfg.depth = depth;
  cfg.seed = seed;
  const std::size_t n = static_cast<std::size_t>(depth) * static_cast<std::size_t>(n_fft);
  cfg.permutation.resize(n);
  for (std::size_t i = 0; i < n; ++i) cfg.permutation[i] = static_cast<int>(i);
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = rng.uniform_below(i + 1);
    std::swap(cfg.permutation[i], cfg.permutation[j]);
  }
  return cfg;
}

CVec tdi_interleave(const CVec& in, const std::vector<int>& perm) {
  if (static_cast<std::size_t>(in.size()) != perm.size())
    throw std::invalid_argument("tdi_interleave: length mismatch");
  CVec out(in.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out(static_cast<Eigen::Index>(i)) = in(perm[i]);
  return out;
}

CVec tdi_deinterleave(const CVec& in, const std::vector<int>& perm) {
  if (static_cast<std::size_t>(in.size()) != perm.size())
    throw std::invalid_argument("tdi_deinterleave: length mismatch");
  CVec out(in.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out(perm[i]) = in(static_cast<Eigen::Index>(i));
  return out;
}

OfdmModel::OfdmModel(OfdmConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  nondata_ = cfg_.nondata_tones();
  f_ = dft_matrix(cfg_.n_fft);
  f_h_ = f_.adjoint();
  f_nondata_ = submatrix_rows(f_, nondata_);
  channel_ = cfg_.channel_freq.size() ? cfg_.channel_freq : CVec::Ones(cfg_.n_fft);

  // Pilot contributions on non-data tones are fixed per configuration.
  CVec pilot_frame = CVec::Zero(cfg_.n_fft);
  for (std::size_t i = 0; i < cfg_.pilot_tones.size(); ++i)
    pilot_frame(cfg_.pilot_tones[i]) = cfg_.pilot_symbols(static_cast<Eigen::Index>(i));
  known_nondata_.resize(static_cast<Eigen::Index>(nondata_.size()));
  for (std::size_t i = 0; i < nondata_.size(); ++i) {
    const int k = nondata_[i];
    known_nondata_(static_cast<Eigen::Index>(i)) = channel_(k) * pilot_frame(k);
  }
}

CVec OfdmModel::build_frame(const CVec& data_symbols) const {
  if (data_symbols.size() != static_cast<Eigen::Index>(cfg_.data_tones.size()))
    throw std::invalid_argument("build_frame: one symbol per data tone required");
  CVec x = CVec::Zero(cfg_.n_fft);
  for (std::size_t i = 0; i < cfg_.data_tones.size(); ++i)
    x(cfg_.data_tones[i]) = data_symbols(static_cast<Eigen::Index>(i));
  for (std::size_t i = 0; i < cfg_.pilot_tones.size(); ++i)
    x(cfg_.pilot_tones[i]) = cfg_.pilot_symbols(static_cast<Eigen::Index>(i));
  return x;
}

CVec OfdmModel::modulate(const CVec& data_symbols) const {
  return f_h_ * build_frame(data_symbols);
}

CVec OfdmModel::apply_channel(const CVec& s, const CVec& impulsive, const CVec& background) const {
  if (s.size() != cfg_.n_fft || impulsive.size() != cfg_.n_fft || background.size() != cfg_.n_fft)
    throw std::invalid_argument("apply_channel: all inputs must span one OFDM symbol");
  // Diagonal in the DFT basis thanks to the cyclic-prefix assumption.
  CVec filtered = f_h_ * (channel_.cwiseProduct(f_ * s));
  return filtered + impulsive + background;
}

CVec OfdmModel::demodulate(const CVec& r) const {
  if (r.size() != cfg_.n_fft) throw std::invalid_argument("demodulate: length mismatch");
  return f_ * r;
}

CVec OfdmModel::observe_nondata(const CVec& y) const {
  if (y.size() != cfg_.n_fft) throw std::invalid_argument("observe_nondata: length mismatch");
  CVec z(static_cast<Eigen::Index>(nondata_.size()));
  for (std::size_t i = 0; i < nondata_.size(); ++i)
    z(static_cast<Eigen::Index>(i)) = y(nondata_[i]);
  z -= known_nondata_;
  return z;
}

DetectResult OfdmModel::subtract_and_detect(const CVec& y, const CVec& e_hat) const {
  if (y.size() != cfg_.n_fft) throw std::invalid_argument("subtract_and_detect: length mismatch");
  if (e_hat.size() != cfg_.n_fft)
    throw std::invalid_argument("subtract_and_detect: impulse estimate must span the full symbol");
  const CVec e_freq = f_ * e_hat;
  DetectResult res;
  res.data_symbols.resize(static_cast<Eigen::Index>(cfg_.data_tones.size()));
  for (std::size_t i = 0; i < cfg_.data_tones.size(); ++i) {
    const int k = cfg_.data_tones[i];
    const cxd g = channel_(k);
    if (std::abs(g) == 0.0) throw std::invalid_argument("subtract_and_detect: zero channel gain on a data tone");
    res.data_symbols(static_cast<Eigen::Index>(i)) = (y(k) - e_freq(k)) / g;
  }
  res.bits = qpsk_unmap(res.data_symbols);
  return res;
}

}  // namespace plcsim
