#ifndef PLCSIM_OFDM_HPP
#define PLCSIM_OFDM_HPP

#include <cstdint>

#include "plcsim/fec.hpp"
#include "plcsim/numerics.hpp"

namespace plcsim {

// Baseband OFDM layout. Tones are 0-based DFT bins. Every tone is either a
// data tone, a pilot tone (fixed known symbol) or a null tone; pilots and
// nulls together form the non-data set used by the estimators. The cyclic
// prefix is assumed long enough for circulant equivalence, so the channel
// acts as a per-tone diagonal and cp_len carries no further meaning here.
struct OfdmConfig {
  int n_fft = 128;
  int cp_len = 0;
  IndexSet data_tones;    // sorted ascending
  IndexSet pilot_tones;   // sorted ascending, disjoint from data_tones
  CVec pilot_symbols;     // one per pilot tone
  CVec channel_freq;      // per-tone gains; empty = flat (all ones)

  void validate() const;

  // Non-data tones (complement of data_tones), sorted ascending.
  IndexSet nondata_tones() const;

  // 128-tone layout with data on tones 32..103 and the 56 edge tones null.
  static OfdmConfig typical();
};

// Gray-mapped QPSK, unit average energy: bit pair (b1, b0) -> ((1-2*b1) + i(1-2*b0)) / sqrt(2).
CVec qpsk_map(const BitVector& bits);
// Nearest-neighbor hard decision, inverse of qpsk_map.
BitVector qpsk_unmap(const CVec& symbols);

// Sample-level random interleaver spanning `depth` OFDM symbols.
struct TdiConfig {
  int depth = 1;
  std::uint64_t seed = 0;
  std::vector<int> permutation;  // size depth * n_fft

  // Build the permutation for the given span via seeded Fisher-Yates.
  static TdiConfig make(int depth, int n_fft, std::uint64_t seed);
};

// out[i] = in[perm[i]] and its inverse. Length must equal the permutation's.
CVec tdi_interleave(const CVec& in, const std::vector<int>& perm);
CVec tdi_deinterleave(const CVec& in, const std::vector<int>& perm);

struct DetectResult {
  CVec data_symbols;  // equalized data-tone decisions input (before slicing)
  BitVector bits;     // hard bits from the sliced symbols
};

// One OFDM symbol path with the transform and index bookkeeping precomputed.
class OfdmModel {
 public:
  explicit OfdmModel(OfdmConfig cfg);

  const OfdmConfig& config() const { return cfg_; }
  const IndexSet& nondata() const { return nondata_; }
  const CMat& dft() const { return f_; }
  const CMat& idft() const { return f_h_; }
  const CVec& channel() const { return channel_; }
  // DFT rows of the non-data tones: the estimator's measurement matrix.
  const CMat& dft_nondata_rows() const { return f_nondata_; }
  // Fixed (channel * pilot) values on the non-data tones, in nondata() order.
  const CVec& known_nondata() const { return known_nondata_; }

  // Frequency-domain frame: data symbols on data tones, pilots on pilot
  // tones, zeros elsewhere.
  CVec build_frame(const CVec& data_symbols) const;

  // Time-domain samples of a frame: s = F^H x.
  CVec modulate(const CVec& data_symbols) const;

  // r = circular_channel(s) + e + n, channel applied per tone.
  CVec apply_channel(const CVec& s, const CVec& impulsive, const CVec& background) const;

  // y = F r, the per-tone receiver observation.
  CVec demodulate(const CVec& r) const;

  // z = y_I - (channel * pilots)_I over the non-data tones: the impulse
  // observation with all known signal content removed.
  CVec observe_nondata(const CVec& y) const;

  // Remove the estimated impulse spectrum, equalize the data tones and slice.
  DetectResult subtract_and_detect(const CVec& y, const CVec& e_hat) const;

  int n_data() const { return static_cast<int>(cfg_.data_tones.size()); }
  int bits_per_symbol() const { return 2 * n_data(); }

 private:
  OfdmConfig cfg_;
  IndexSet nondata_;
  CMat f_;          // unitary DFT
  CMat f_h_;        // inverse transform
  CMat f_nondata_;  // rows of f_ at non-data tones
  CVec known_nondata_;  // (channel * pilot frame) restricted to non-data tones
  CVec channel_;        // per-tone gains, ones if flat
};

}  // namespace plcsim

#endif
