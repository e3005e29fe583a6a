#include "plcsim/fec.hpp"

#include <bit>
#include <limits>
#include <stdexcept>

namespace plcsim {

void ConvCode::validate() const {
  if (constraint_length < 2 || constraint_length > 16)
    throw std::invalid_argument("conv code: constraint length out of range");
  const unsigned window = (1u << constraint_length) - 1u;
  if ((g0 | g1) > window || g0 == 0 || g1 == 0)
    throw std::invalid_argument("conv code: generators must fit the constraint window and be non-zero");
}

namespace {

inline std::uint8_t parity(unsigned v) {
  return static_cast<std::uint8_t>(std::popcount(v) & 1);
}

}  // namespace

BitVector conv_encode(const ConvCode& code, const BitVector& info) {
  code.validate();
  const int mem = code.memory();
  BitVector out;
  out.reserve(2 * (info.size() + static_cast<std::size_t>(mem)));
  unsigned state = 0;  // previous `mem` bits, newest in the MSB
  auto push_step = [&](unsigned bit) {
    const unsigned window = (bit << mem) | state;
    out.push_back(parity(window & code.g0));
    out.push_back(parity(window & code.g1));
    state = window >> 1;
  };
  for (std::uint8_t b : info) {
    if (b > 1) throw std::invalid_argument("conv_encode: bits must be 0 or 1");
    push_step(b);
  }
  for (int i = 0; i < mem; ++i) push_step(0);  // flush back to the zero state
  return out;
}

DecodeResult viterbi_decode(const ConvCode& code, const BitVector& received) {
  code.validate();
  if (received.size() % 2 != 0)
    throw std::invalid_argument("viterbi_decode: codeword length must be even");
  const int mem = code.memory();
  const int steps = static_cast<int>(received.size() / 2);
  if (steps < mem)
    throw std::invalid_argument("viterbi_decode: codeword shorter than the flush");
  const int n_states = code.n_states();

  // Branch outputs indexed by the full constraint window.
  std::vector<std::uint8_t> branch0(2u << mem), branch1(2u << mem);
  for (unsigned w = 0; w < (2u << mem); ++w) {
    branch0[w] = parity(w & code.g0);
    branch1[w] = parity(w & code.g1);
  }

  const int inf = std::numeric_limits<int>::max() / 2;
  std::vector<int> metric(n_states, inf), next_metric(n_states);
  metric[0] = 0;  // encoder starts flushed

  // survivor[t][s] = constraint window chosen entering state s at step t
  std::vector<std::vector<std::uint8_t>> survivor(steps, std::vector<std::uint8_t>(n_states, 0));

  for (int t = 0; t < steps; ++t) {
    const std::uint8_t r0 = received[2 * t], r1 = received[2 * t + 1];
    std::fill(next_metric.begin(), next_metric.end(), inf);
    for (int s = 0; s < n_states; ++s) {
      if (metric[s] >= inf) continue;
      for (unsigned u = 0; u <= 1; ++u) {
        const unsigned w = (u << mem) | static_cast<unsigned>(s);
        const int cost = metric[s] + (branch0[w] != r0) + (branch1[w] != r1);
        const int ns = static_cast<int>(w >> 1);
        // Strict < keeps the first (smaller-window) candidate on ties.
        if (cost < next_metric[ns]) {
          next_metric[ns] = cost;
          survivor[t][ns] = static_cast<std::uint8_t>(w);
        }
      }
    }
    metric.swap(next_metric);
  }

  // Zero-terminated: trace back from the flushed state.
  BitVector inputs(steps);
  int s = 0;
  for (int t = steps - 1; t >= 0; --t) {
    const unsigned w = survivor[t][s];
    inputs[t] = static_cast<std::uint8_t>(w >> mem);
    s = static_cast<int>(w & ((1u << mem) - 1u));
  }

  DecodeResult res;
  res.info.assign(inputs.begin(), inputs.end() - mem);
  res.coded = conv_encode(code, res.info);
  return res;
}

}  // namespace plcsim
