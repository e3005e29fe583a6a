#ifndef PLCSIM_HARNESS_HPP
#define PLCSIM_HARNESS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "plcsim/fec.hpp"
#include "plcsim/noise.hpp"
#include "plcsim/ofdm.hpp"
#include "plcsim/sbl.hpp"

namespace plcsim {

enum class EstimatorKind {
  kNone,        // conventional receiver, no impulse mitigation
  kNulltone,    // evidence maximization on the non-data tones
  kAlltone,     // evidence maximization on all tones
  kFeedback,    // decision-feedback refinement rounds
  kSequential,  // greedy basis-selection backend
  kOracle,      // subtract the true impulsive part, leaving background only
};

std::string estimator_tag(EstimatorKind kind);
EstimatorKind parse_estimator(const std::string& tag);

// One measured BER point, one CSV row.
struct BerRecord {
  std::string estimator;
  std::string noise;
  double snr_db = 0.0;
  std::uint64_t bits = 0;
  std::uint64_t errors = 0;
  double ber = 0.0;
  std::uint64_t symbols = 0;
  std::uint64_t seed = 0;
  double elapsed_s = 0.0;
};

struct TdiSpec {
  int depth = 100;
  std::uint64_t seed = 7;
};

struct ExperimentConfig {
  OfdmConfig ofdm = OfdmConfig::typical();
  NoiseModel noise = GaussianMixtureParams{};
  // Level anchors for the asynchronous impulse process e (at most one may be
  // set, and only with the mixture models). The mixture shape fixes the
  // relative component variances; an anchor fixes the absolute level.
  //
  //   impulse_to_background_db: mean power of e relative to the background
  //     AWGN, so the impulse environment tracks the swept noise floor.
  //   impulse_to_signal_db: mean power of e relative to the received signal
  //     power. The impulse environment then stays put while the SNR axis
  //     sweeps the background floor underneath it, which is how an appliance
  //     at fixed distance behaves. Component 0 of the mixture is treated as
  //     the impulse-free state (e exactly zero there), keeping e sparse.
  //
  // Unset: the model's variances are read directly in units of the
  // background power, component 0 included.
  std::optional<double> impulse_to_background_db;
  std::optional<double> impulse_to_signal_db;
  EstimatorKind estimator = EstimatorKind::kNulltone;

  bool coded = false;
  ConvCode code;
  int feedback_rounds = 2;
  // OFDM symbols per trial block (one codeword when coded). A configured
  // interleaver overrides this with its depth.
  int block_symbols = 1;
  std::optional<TdiSpec> tdi;

  std::vector<double> snr_db;
  std::uint64_t master_seed = 1;

  // A point stops once min_symbols have run and either the error target is
  // met or the symbol cap is hit.
  std::uint64_t min_symbols = 500;
  std::uint64_t min_bit_errors = 200;
  std::uint64_t max_symbols = 2000;

  SblSettings sbl;
  // true: the estimator is given the true background noise power at each SNR
  // point. false: the power is learned per call, starting from the nominal
  // background value.
  bool sigma2_known = true;

  bool record_timing = true;  // false writes elapsed_s as 0 for repeatable files
  int threads = 1;

  void validate() const;

  static ExperimentConfig from_json_file(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text);
};

// Mean transmit power per time-domain sample at the channel output,
// i.e. the numerator of the SNR definition.
double signal_power(const OfdmConfig& cfg);

// Measure one SNR point. snr_index selects the deterministic random
// substream, so a point's result depends only on (config, snr_db, snr_index).
BerRecord run_point(const ExperimentConfig& cfg, double snr_db, int snr_index);

// Run all configured points, writing the CSV atomically after each one.
// When resume is true, points already present in an existing file (matched
// by estimator, noise and SNR) are kept instead of being recomputed.
std::vector<BerRecord> run_sweep(const ExperimentConfig& cfg, const std::string& csv_path,
                                 bool resume = true);

void write_csv(const std::string& path, const std::vector<BerRecord>& records);
std::vector<BerRecord> read_csv(const std::string& path);

// SNR (dB) at which a measured curve crosses target_ber, interpolating
// linearly in (snr, log10 ber) between bracketing points. Throws if the
// curve never reaches the target.
double snr_at_ber(const std::vector<BerRecord>& curve, double target_ber);

// Horizontal distance between two curves at the target BER: positive when
// `improved` reaches it at a lower SNR than `baseline`.
double snr_gain(const std::vector<BerRecord>& baseline, const std::vector<BerRecord>& improved,
                double target_ber);

}  // namespace plcsim

#endif
