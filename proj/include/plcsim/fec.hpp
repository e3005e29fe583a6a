#ifndef PLCSIM_FEC_HPP
#define PLCSIM_FEC_HPP

#include <cstdint>
#include <utility>
#include <vector>

namespace plcsim {

using BitVector = std::vector<std::uint8_t>;  // one bit per element, 0 or 1

// Rate-1/2 binary convolutional code with zero-flush termination.
// Generators are given MSB-first over the constraint-length window, the MSB
// tapping the newest input bit. Defaults are the familiar 64-state pair
// (133, 171 in octal).
struct ConvCode {
  int constraint_length = 7;
  unsigned g0 = 0133;
  unsigned g1 = 0171;

  int memory() const { return constraint_length - 1; }
  int n_states() const { return 1 << memory(); }

  void validate() const;
};

// Encode info bits, appending constraint_length-1 flush zeros. Output
// interleaves the two generator outputs per step: [g0, g1, g0, g1, ...],
// so |output| = 2 * (|info| + memory).
BitVector conv_encode(const ConvCode& code, const BitVector& info);

struct DecodeResult {
  BitVector info;   // estimated information bits (flush bits stripped)
  BitVector coded;  // re-encoded codeword of the decision, same layout as conv_encode
};

// Hard-decision Viterbi decode of a zero-terminated codeword. Minimizes
// Hamming distance; metric ties are broken toward the smaller predecessor
// window so results are deterministic. Throws std::invalid_argument when the
// input length is odd or too short to contain the flush.
DecodeResult viterbi_decode(const ConvCode& code, const BitVector& received);

}  // namespace plcsim

#endif
