#include "plcsim/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace plcsim {

using nlohmann::json;

std::string estimator_tag(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kNone: return "none";
    case EstimatorKind::kNulltone: return "nulltone";
    case EstimatorKind::kAlltone: return "alltone";
    case EstimatorKind::kFeedback: return "decision_feedback";
    case EstimatorKind::kSequential: return "sequential";
    case EstimatorKind::kOracle: return "oracle_subtraction";
  }
  throw std::logic_error("estimator_tag: unknown kind");
}

EstimatorKind parse_estimator(const std::string& tag) {
  if (tag == "none") return EstimatorKind::kNone;
  if (tag == "nulltone") return EstimatorKind::kNulltone;
  if (tag == "alltone") return EstimatorKind::kAlltone;
  if (tag == "decision_feedback" || tag == "feedback") return EstimatorKind::kFeedback;
  if (tag == "sequential") return EstimatorKind::kSequential;
  if (tag == "oracle_subtraction" || tag == "oracle") return EstimatorKind::kOracle;
  throw std::invalid_argument(
      "unknown estimator '" + tag +
      "' (expected none, nulltone, alltone, decision_feedback, sequential or oracle_subtraction)");
}

void ExperimentConfig::validate() const {
  ofdm.validate();
  std::visit([](const auto& p) { p.validate(); }, noise);
  if (impulse_to_background_db && impulse_to_signal_db)
    throw std::invalid_argument("config: give at most one impulse level anchor");
  if ((impulse_to_background_db || impulse_to_signal_db) &&
      !std::holds_alternative<GaussianMixtureParams>(noise) &&
      !std::holds_alternative<MiddletonClassAParams>(noise))
    throw std::invalid_argument(
        "config: impulse level anchors apply only to the asynchronous impulse models");
  if (impulse_to_signal_db) {
    const auto* gm = std::get_if<GaussianMixtureParams>(&noise);
    if (gm && gm->weights.size() < 2)
      throw std::invalid_argument(
          "config: impulse_to_signal_db needs at least one impulsive mixture component");
  }
  if (coded) code.validate();
  if (feedback_rounds < 0) throw std::invalid_argument("config: feedback_rounds must be >= 0");
  if (block_symbols < 1) throw std::invalid_argument("config: block_symbols must be >= 1");
  if (tdi) {
    if (tdi->depth < 1) throw std::invalid_argument("config: interleaver depth must be >= 1");
    if (ofdm.channel_freq.size() != 0)
      for (Eigen::Index i = 0; i < ofdm.channel_freq.size(); ++i)
        if (std::abs(ofdm.channel_freq(i) - cxd(1.0, 0.0)) > 1e-12)
          throw std::invalid_argument("config: the sample interleaver assumes a flat channel");
  }
  if (snr_db.empty()) throw std::invalid_argument("config: snr_db must list at least one point");
  if (min_symbols < 1 || max_symbols < min_symbols)
    throw std::invalid_argument("config: need 1 <= min_symbols <= max_symbols");
  if (min_bit_errors < 1) throw std::invalid_argument("config: min_bit_errors must be >= 1");
  if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
  const int block = tdi ? tdi->depth : block_symbols;
  if (coded) {
    const long long info = static_cast<long long>(block) *
                               static_cast<long long>(ofdm.data_tones.size()) -
                           code.memory();
    if (info < 1)
      throw std::invalid_argument("config: block too short for the code flush");
  }
}

namespace {

RVec parse_real_array(const json& j, const char* what) {
  if (!j.is_array()) throw std::invalid_argument(std::string("config: ") + what + " must be an array");
  RVec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

CVec parse_complex_array(const json& j, const char* what) {
  if (!j.is_array()) throw std::invalid_argument(std::string("config: ") + what + " must be an array");
  CVec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (e.is_number()) {
      v(static_cast<Eigen::Index>(i)) = cxd(e.get<double>(), 0.0);
    } else if (e.is_array() && e.size() == 2) {
      v(static_cast<Eigen::Index>(i)) = cxd(e[0].get<double>(), e[1].get<double>());
    } else {
      throw std::invalid_argument(std::string("config: ") + what +
                                  " entries must be numbers or [re, im] pairs");
    }
  }
  return v;
}

LptvNoiseParams parse_lptv(const json& j, int n_fft, const std::string& base_dir);

NoiseModel parse_noise(const json& j, int n_fft, const std::string& base_dir) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "awgn") {
    AwgnParams p;
    return p;
  }
  if (type == "gm") {
    GaussianMixtureParams p;
    p.weights = parse_real_array(j.at("weights"), "noise.weights");
    p.variances = parse_real_array(j.at("variances"), "noise.variances");
    p.validate();
    for (Eigen::Index i = 0; i < p.variances.size(); ++i)
      if (p.variances(i) <= 0.0)
        throw std::invalid_argument("config: noise.variances must be positive");
    return p;
  }
  if (type == "mca") {
    MiddletonClassAParams p;
    p.overlap_a = j.at("overlap").get<double>();
    p.power_ratio_omega = j.at("power_ratio").get<double>();
    p.truncation = j.value("truncation", 10);
    p.validate();
    return p;
  }
  if (type == "lptv") return parse_lptv(j, n_fft, base_dir);
  throw std::invalid_argument("config: unknown noise type '" + type + "'");
}

LptvNoiseParams parse_lptv(const json& j_in, int n_fft, const std::string& base_dir) {
  json j = j_in;
  if (j.contains("file")) {
    const std::string ref = j.at("file").get<std::string>();
    std::filesystem::path p(ref);
    if (!std::filesystem::exists(p) && !base_dir.empty())
      p = std::filesystem::path(base_dir) / ref;
    std::ifstream in(p);
    if (!in) throw std::invalid_argument("config: cannot open noise file '" + ref + "'");
    in >> j;
    if (j.contains("type") && j.at("type").get<std::string>() != "lptv")
      throw std::invalid_argument("config: noise file '" + ref + "' is not a periodic-noise description");
  }
  LptvNoiseParams p;
  if (j.contains("period")) {
    p.period = j.at("period").get<int>();
  } else {
    p.period = j.at("period_symbols").get<int>() * n_fft;
  }
  p.drive_variance = j.value("drive_variance", 1.0);
  const auto& regions = j.at("regions");
  if (!regions.is_array() || regions.empty())
    throw std::invalid_argument("config: lptv regions must be a non-empty array");
  // Regions are given as fractions of the period; convert to sample ranges.
  double cum = 0.0;
  int cursor = 0;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    LptvNoiseParams::Region r;
    cum += regions[i].at("fraction").get<double>();
    int end = static_cast<int>(std::llround(cum * p.period));
    if (i + 1 == regions.size()) {
      if (std::abs(cum - 1.0) > 1e-9)
        throw std::invalid_argument("config: lptv region fractions must sum to 1");
      end = p.period;
    }
    r.begin = cursor;
    r.end = end;
    r.taps = parse_real_array(regions[i].at("taps"), "lptv taps");
    cursor = end;
    p.regions.push_back(std::move(r));
  }
  p.validate();
  return p;
}

ExperimentConfig config_from_json(const json& j, const std::string& base_dir) {
  ExperimentConfig cfg;

  if (j.contains("ofdm")) {
    const auto& jo = j.at("ofdm");
    OfdmConfig o;
    o.n_fft = jo.value("n_fft", 128);
    o.cp_len = jo.value("cp_len", 0);
    if (jo.contains("data_tones")) {
      for (const auto& t : jo.at("data_tones")) o.data_tones.push_back(t.get<int>());
    } else {
      const int first = jo.value("data_first", 32);
      const int last = jo.value("data_last", 103);
      for (int t = first; t <= last; ++t) o.data_tones.push_back(t);
    }
    if (jo.contains("pilot_tones")) {
      for (const auto& t : jo.at("pilot_tones")) o.pilot_tones.push_back(t.get<int>());
      o.pilot_symbols = parse_complex_array(jo.at("pilot_symbols"), "pilot_symbols");
    }
    if (jo.contains("channel")) o.channel_freq = parse_complex_array(jo.at("channel"), "channel");
    cfg.ofdm = std::move(o);
  }

  if (j.contains("noise")) {
    cfg.noise = parse_noise(j.at("noise"), cfg.ofdm.n_fft, base_dir);
    if (j.at("noise").contains("impulse_to_background_db"))
      cfg.impulse_to_background_db = j.at("noise").at("impulse_to_background_db").get<double>();
    if (j.at("noise").contains("impulse_to_signal_db"))
      cfg.impulse_to_signal_db = j.at("noise").at("impulse_to_signal_db").get<double>();
  }
  if (j.contains("estimator")) cfg.estimator = parse_estimator(j.at("estimator").get<std::string>());

  cfg.coded = j.value("coded", false);
  if (j.contains("code")) {
    const auto& jc = j.at("code");
    cfg.code.constraint_length = jc.value("constraint_length", 7);
    if (jc.contains("generators_octal")) {
      const auto& g = jc.at("generators_octal");
      if (!g.is_array() || g.size() != 2)
        throw std::invalid_argument("config: generators_octal must list two octal strings");
      cfg.code.g0 = static_cast<unsigned>(std::stoul(g[0].get<std::string>(), nullptr, 8));
      cfg.code.g1 = static_cast<unsigned>(std::stoul(g[1].get<std::string>(), nullptr, 8));
    }
  }
  cfg.feedback_rounds = j.value("feedback_rounds", 2);
  cfg.block_symbols = j.value("block_symbols", 1);
  if (j.contains("tdi")) {
    TdiSpec t;
    t.depth = j.at("tdi").value("depth", 100);
    t.seed = j.at("tdi").value("seed", std::uint64_t{7});
    cfg.tdi = t;
  }

  if (j.contains("snr_db"))
    for (const auto& s : j.at("snr_db")) cfg.snr_db.push_back(s.get<double>());

  cfg.master_seed = j.value("master_seed", std::uint64_t{1});
  cfg.min_symbols = j.value("min_symbols", std::uint64_t{500});
  cfg.min_bit_errors = j.value("min_bit_errors", std::uint64_t{200});
  cfg.max_symbols = j.value("max_symbols", std::uint64_t{2000});

  if (j.contains("sbl")) {
    const auto& js = j.at("sbl");
    cfg.sbl.max_iters = js.value("max_iters", 200);
    cfg.sbl.alltone_signal_exact = js.value("alltone_signal_exact", false);
    cfg.sbl.tol = js.value("tol", 1e-4);
    cfg.sbl.gamma_floor = js.value("gamma_floor", 1e-8);
    cfg.sbl.seq_tol = js.value("seq_tol", 1e-6);
  }
  const std::string mode = j.value("sigma2_mode", std::string("known"));
  if (mode == "known") {
    cfg.sigma2_known = true;
  } else if (mode == "learned") {
    cfg.sigma2_known = false;
  } else {
    throw std::invalid_argument("config: sigma2_mode must be 'known' or 'learned'");
  }

  cfg.record_timing = j.value("record_timing", true);
  cfg.threads = j.value("threads", 1);
  cfg.validate();
  return cfg;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config: parse error in '" + path + "': " + e.what());
  }
  return config_from_json(j, std::filesystem::path(path).parent_path().string());
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: parse error: ") + e.what());
  }
  return config_from_json(j, "");
}

double signal_power(const OfdmConfig& cfg) {
  const CVec chan = cfg.channel_freq.size() ? cfg.channel_freq : CVec::Ones(cfg.n_fft);
  double p = 0.0;
  for (int k : cfg.data_tones) p += std::norm(chan(k));  // unit-energy constellation
  for (std::size_t i = 0; i < cfg.pilot_tones.size(); ++i)
    p += std::norm(chan(cfg.pilot_tones[i]) * cfg.pilot_symbols(static_cast<Eigen::Index>(i)));
  return p / static_cast<double>(cfg.n_fft);
}

namespace {

// Everything fixed for one SNR point, shared across its trials.
struct PointContext {
  const ExperimentConfig* cfg = nullptr;
  OfdmModel model;
  SblBasis basis;
  SblSettings settings;
  NoiseModel scaled;  // noise model with absolute variances for this point
  double sigma2_bg = 0.0;
  int block = 1;
  int info_len = 0;
  std::vector<int> perm;  // interleaver permutation, empty when unused

  PointContext(const ExperimentConfig& c, double snr_db)
      : cfg(&c), model(c.ofdm), basis(model.dft_nondata_rows(), model.nondata(), c.ofdm.n_fft) {
    sigma2_bg = signal_power(c.ofdm) / std::pow(10.0, snr_db / 10.0);
    settings = c.sbl;
    settings.sigma2 = sigma2_bg;
    settings.sigma2_mode = c.sigma2_known ? Sigma2Mode::kFixed : Sigma2Mode::kLearned;

    block = c.tdi ? c.tdi->depth : c.block_symbols;
    if (c.coded) info_len = block * model.bits_per_symbol() / 2 - c.code.memory();
    if (c.tdi) perm = TdiConfig::make(c.tdi->depth, c.ofdm.n_fft, c.tdi->seed).permutation;

    // Give the noise model absolute variances. Asynchronous impulse mixtures
    // ride on top of the background AWGN: either pinned to a requested mean
    // power ratio, or read directly in background-power units. The periodic
    // model is a complete noise process of its own, anchored so its quiet
    // region sits at the background level.
    struct Scale {
      double s2;
      double psig;
      const std::optional<double>& ratio_db;
      const std::optional<double>& signal_db;
      GaussianMixtureParams mixture(GaussianMixtureParams q) const {
        if (signal_db) {
          // Impulse-free state: component 0 emits exact zeros, the rest are
          // scaled so the mean power of e sits at the requested level.
          double mean = 0.0;
          for (Eigen::Index k = 1; k < q.weights.size(); ++k) mean += q.weights(k) * q.variances(k);
          const double f = psig * std::pow(10.0, *signal_db / 10.0) / mean;
          q.variances *= f;
          q.variances(0) = 0.0;
        } else if (ratio_db) {
          const double mean = q.weights.cwiseProduct(q.variances).sum();
          q.variances *= s2 * std::pow(10.0, *ratio_db / 10.0) / mean;
        } else {
          q.variances *= s2;
        }
        return q;
      }
      NoiseModel operator()(const AwgnParams&) const { return AwgnParams{s2}; }
      NoiseModel operator()(const GaussianMixtureParams& p) const { return mixture(p); }
      NoiseModel operator()(const MiddletonClassAParams& p) const { return mixture(mca_to_mixture(p)); }
      NoiseModel operator()(const LptvNoiseParams& p) const {
        LptvNoiseParams q = p;
        q.drive_variance = s2 / p.regions[0].taps.squaredNorm();
        return q;
      }
    };
    scaled = std::visit(
        Scale{sigma2_bg, signal_power(c.ofdm), c.impulse_to_background_db, c.impulse_to_signal_db},
        c.noise);
  }
};

BitVector random_bits(Rng& rng, std::size_t n) {
  BitVector b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(rng.next_u64() >> 63);
  return b;
}

struct TrialOut {
  std::uint64_t bits = 0;
  std::uint64_t errors = 0;
  std::uint64_t symbols = 0;
};

TrialOut run_trial(const PointContext& ctx, const Rng& trial_root) {
  const ExperimentConfig& cfg = *ctx.cfg;
  const OfdmModel& model = ctx.model;
  const int n = cfg.ofdm.n_fft;
  const int block = ctx.block;
  const int bits_per = model.bits_per_symbol();

  Rng bits_rng = trial_root.child(0);
  Rng noise_rng = trial_root.child(1);
  Rng phase_rng = trial_root.child(2);
  Rng impulse_rng = trial_root.child(3);

  BitVector ref_bits, tx_stream;
  if (cfg.coded) {
    ref_bits = random_bits(bits_rng, static_cast<std::size_t>(ctx.info_len));
    tx_stream = conv_encode(cfg.code, ref_bits);
  } else {
    ref_bits = random_bits(bits_rng, static_cast<std::size_t>(block) * bits_per);
    tx_stream = ref_bits;
  }

  // Transmit side: per-symbol frames through the (diagonal) channel.
  CVec tx(static_cast<Eigen::Index>(block) * n);
  for (int s = 0; s < block; ++s) {
    BitVector chunk(tx_stream.begin() + static_cast<std::ptrdiff_t>(s) * bits_per,
                    tx_stream.begin() + static_cast<std::ptrdiff_t>(s + 1) * bits_per);
    const CVec frame = model.build_frame(qpsk_map(chunk));
    tx.segment(static_cast<Eigen::Index>(s) * n, n) =
        model.idft() * model.channel().cwiseProduct(frame);
  }
  if (!ctx.perm.empty()) tx = tdi_interleave(tx, ctx.perm);

  // Channel noise covering the whole block contiguously. The asynchronous
  // impulse process is drawn separately and added on top of the background,
  // so its exact realization is available to the oracle estimator. The
  // periodic model generates the complete noise itself; there the oracle
  // removes everything beyond an equivalent background draw.
  CVec w;
  CVec oracle_e;
  const int total = block * n;
  if (const auto* awgn = std::get_if<AwgnParams>(&ctx.scaled)) {
    w = sample_circular_gaussian(noise_rng, total, awgn->variance);
    if (cfg.estimator == EstimatorKind::kOracle) oracle_e = CVec::Zero(total);
  } else if (const auto* gm = std::get_if<GaussianMixtureParams>(&ctx.scaled)) {
    const CVec e = sample_gm(impulse_rng, *gm, total);
    w = sample_circular_gaussian(noise_rng, total, ctx.sigma2_bg) + e;
    if (cfg.estimator == EstimatorKind::kOracle) oracle_e = e;
  } else if (const auto* lptv = std::get_if<LptvNoiseParams>(&ctx.scaled)) {
    const int phase = static_cast<int>(phase_rng.uniform_below(static_cast<std::uint64_t>(lptv->period)));
    w = sample_lptv(noise_rng, *lptv, total, phase);
    if (cfg.estimator == EstimatorKind::kOracle)
      oracle_e = w - sample_circular_gaussian(impulse_rng, total, ctx.sigma2_bg);
  } else {
    throw std::logic_error("run_trial: unscaled noise model");
  }
  if (cfg.estimator == EstimatorKind::kOracle && !ctx.perm.empty())
    oracle_e = tdi_deinterleave(oracle_e, ctx.perm);

  CVec rx = tx + w;
  if (!ctx.perm.empty()) rx = tdi_deinterleave(rx, ctx.perm);

  std::vector<CVec> y(static_cast<std::size_t>(block));
  for (int s = 0; s < block; ++s)
    y[static_cast<std::size_t>(s)] = model.demodulate(rx.segment(static_cast<Eigen::Index>(s) * n, n));

  BitVector decided;
  if (cfg.estimator == EstimatorKind::kFeedback) {
    const DecisionFeedbackResult df = estimate_decision_feedback(
        y, model, ctx.basis, cfg.coded ? &cfg.code : nullptr, cfg.feedback_rounds, ctx.settings);
    decided = df.info_bits;
  } else {
    BitVector stream;
    stream.reserve(static_cast<std::size_t>(block) * bits_per);
    for (int s = 0; s < block; ++s) {
      const CVec& ys = y[static_cast<std::size_t>(s)];
      CVec e_hat;
      switch (cfg.estimator) {
        case EstimatorKind::kNone:
          e_hat = CVec::Zero(n);
          break;
        case EstimatorKind::kNulltone:
          e_hat = estimate_nulltone(model.observe_nondata(ys), ctx.basis, ctx.settings).e_hat;
          break;
        case EstimatorKind::kSequential:
          e_hat = estimate_sequential(model.observe_nondata(ys), ctx.basis, ctx.settings).e_hat;
          break;
        case EstimatorKind::kAlltone:
          e_hat = estimate_alltone(ys, model.dft(), model.channel(), cfg.ofdm.data_tones,
                                   model.nondata(), model.known_nondata(), ctx.settings)
                      .e_hat;
          break;
        case EstimatorKind::kOracle:
          e_hat = oracle_e.segment(static_cast<Eigen::Index>(s) * n, n);
          break;
        case EstimatorKind::kFeedback:
          break;  // handled above
      }
      const DetectResult det = model.subtract_and_detect(ys, e_hat);
      stream.insert(stream.end(), det.bits.begin(), det.bits.end());
    }
    decided = cfg.coded ? viterbi_decode(cfg.code, stream).info : std::move(stream);
  }

  TrialOut out;
  out.symbols = static_cast<std::uint64_t>(block);
  out.bits = ref_bits.size();
  if (decided.size() != ref_bits.size())
    throw std::logic_error("run_trial: decision length mismatch");
  for (std::size_t i = 0; i < ref_bits.size(); ++i) out.errors += decided[i] != ref_bits[i];
  return out;
}

}  // namespace

BerRecord run_point(const ExperimentConfig& cfg, double snr_db, int snr_index) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const PointContext ctx(cfg, snr_db);
  const Rng point_root = Rng(cfg.master_seed).child(static_cast<std::uint64_t>(snr_index));

  std::uint64_t bits = 0, errors = 0, symbols = 0;
  bool done = false;
  std::uint64_t next_trial = 0;

  // Trials run in fixed batches; results fold in trial order and the stop
  // rule is checked per trial, so the outcome is independent of threading.
  constexpr int kBatch = 8;
  std::vector<TrialOut> results(kBatch);
  while (!done) {
    const int workers = std::min(cfg.threads, kBatch);
    if (workers > 1) {
      std::vector<std::thread> pool;
      pool.reserve(static_cast<std::size_t>(workers));
      for (int wix = 0; wix < workers; ++wix) {
        pool.emplace_back([&, wix]() {
          for (int i = wix; i < kBatch; i += workers)
            results[static_cast<std::size_t>(i)] =
                run_trial(ctx, point_root.child(next_trial + static_cast<std::uint64_t>(i)));
        });
      }
      for (auto& th : pool) th.join();
    } else {
      for (int i = 0; i < kBatch; ++i)
        results[static_cast<std::size_t>(i)] =
            run_trial(ctx, point_root.child(next_trial + static_cast<std::uint64_t>(i)));
    }
    for (int i = 0; i < kBatch && !done; ++i) {
      const TrialOut& r = results[static_cast<std::size_t>(i)];
      bits += r.bits;
      errors += r.errors;
      symbols += r.symbols;
      done = symbols >= cfg.min_symbols &&
             (errors >= cfg.min_bit_errors || symbols >= cfg.max_symbols);
    }
    next_trial += kBatch;
  }

  BerRecord rec;
  rec.estimator = estimator_tag(cfg.estimator);
  rec.noise = noise_tag(cfg.noise);
  rec.snr_db = snr_db;
  rec.bits = bits;
  rec.errors = errors;
  rec.ber = bits ? static_cast<double>(errors) / static_cast<double>(bits) : 0.0;
  rec.symbols = symbols;
  rec.seed = cfg.master_seed;
  if (cfg.record_timing) {
    rec.elapsed_s =
        std::chrono::duration_cast<std::chrono::duration<double>>(std::chrono::steady_clock::now() - t0)
            .count();
  }
  return rec;
}

namespace {

std::string format_snr(double snr_db) {
  // 17 significant digits round-trip a double exactly; %g keeps the common
  // short values (10, 9.5) short.
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", snr_db);
  return buf;
}

std::string record_key(const std::string& estimator, const std::string& noise, double snr_db) {
  return estimator + "|" + noise + "|" + format_snr(snr_db);
}

}  // namespace

void write_csv(const std::string& path, const std::vector<BerRecord>& records) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
    out << "estimator,noise,snr_db,bits,errors,ber,symbols,seed,elapsed_s\n";
    char buf[200];
    for (const auto& r : records) {
      std::snprintf(buf, sizeof buf, "%s,%s,%s,%llu,%llu,%.17g,%llu,%llu,%.17g\n", r.estimator.c_str(),
                    r.noise.c_str(), format_snr(r.snr_db).c_str(),
                    static_cast<unsigned long long>(r.bits), static_cast<unsigned long long>(r.errors),
                    r.ber, static_cast<unsigned long long>(r.symbols),
                    static_cast<unsigned long long>(r.seed), r.elapsed_s);
      out << buf;
    }
  }
  std::filesystem::rename(tmp, path);
}

std::vector<BerRecord> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV '" + path + "'");
  if (line != "estimator,noise,snr_db,bits,errors,ber,symbols,seed,elapsed_s")
    throw std::runtime_error("unexpected CSV header in '" + path + "'");
  std::vector<BerRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 9) throw std::runtime_error("malformed CSV row in '" + path + "'");
    BerRecord r;
    r.estimator = fields[0];
    r.noise = fields[1];
    r.snr_db = std::stod(fields[2]);
    r.bits = std::stoull(fields[3]);
    r.errors = std::stoull(fields[4]);
    r.ber = std::stod(fields[5]);
    r.symbols = std::stoull(fields[6]);
    r.seed = std::stoull(fields[7]);
    r.elapsed_s = std::stod(fields[8]);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<BerRecord> run_sweep(const ExperimentConfig& cfg, const std::string& csv_path,
                                 bool resume) {
  cfg.validate();
  if (cfg.snr_db.empty()) throw std::invalid_argument("run_sweep: config lists no SNR points");

  std::map<std::string, BerRecord> have;
  if (resume && std::filesystem::exists(csv_path)) {
    for (auto& r : read_csv(csv_path)) have.emplace(record_key(r.estimator, r.noise, r.snr_db), r);
  }

  const std::string est = estimator_tag(cfg.estimator);
  const std::string noi = noise_tag(cfg.noise);

  std::vector<std::optional<BerRecord>> slots(cfg.snr_db.size());
  for (std::size_t i = 0; i < cfg.snr_db.size(); ++i) {
    const auto it = have.find(record_key(est, noi, cfg.snr_db[i]));
    if (it != have.end()) slots[i] = it->second;
  }

  auto flush = [&]() {
    std::vector<BerRecord> filled;
    for (const auto& s : slots)
      if (s) filled.push_back(*s);
    write_csv(csv_path, filled);
  };

  for (std::size_t i = 0; i < cfg.snr_db.size(); ++i) {
    if (!slots[i]) {
      slots[i] = run_point(cfg, cfg.snr_db[i], static_cast<int>(i));
      flush();
    }
  }
  if (std::none_of(slots.begin(), slots.end(), [](const auto& s) { return !s; })) flush();

  std::vector<BerRecord> out;
  for (auto& s : slots) out.push_back(*s);
  return out;
}

double snr_at_ber(const std::vector<BerRecord>& curve, double target_ber) {
  if (curve.size() < 2) throw std::invalid_argument("snr_at_ber: need at least two points");
  if (!(target_ber > 0.0)) throw std::invalid_argument("snr_at_ber: target must be positive");
  std::vector<BerRecord> pts = curve;
  std::sort(pts.begin(), pts.end(),
            [](const BerRecord& a, const BerRecord& b) { return a.snr_db < b.snr_db; });

  // Zero-error points get a resolution floor so the log interpolation stays finite.
  auto eff_ber = [](const BerRecord& r) {
    const double floor = r.bits ? 0.5 / static_cast<double>(r.bits) : 1e-12;
    return std::max(r.ber, floor);
  };

  const double lt = std::log10(target_ber);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double b0 = std::log10(eff_ber(pts[i]));
    const double b1 = std::log10(eff_ber(pts[i + 1]));
    if ((b0 - lt) * (b1 - lt) <= 0.0 && b0 != b1) {
      return pts[i].snr_db + (lt - b0) * (pts[i + 1].snr_db - pts[i].snr_db) / (b1 - b0);
    }
  }
  throw std::runtime_error("snr_at_ber: curve does not cross the target error rate");
}

double snr_gain(const std::vector<BerRecord>& baseline, const std::vector<BerRecord>& improved,
                double target_ber) {
  auto crossing = [&](const std::vector<BerRecord>& curve, const char* name) {
    try {
      return snr_at_ber(curve, target_ber);
    } catch (const std::runtime_error& err) {
      throw std::runtime_error(std::string("snr_gain: ") + name + " curve" +
                               (curve.empty() ? "" : " (" + curve.front().estimator + ")") +
                               ": " + err.what());
    }
  };
  const double base = crossing(baseline, "baseline");
  const double improved_at = crossing(improved, "improved");
  return base - improved_at;
}

}  // namespace plcsim
