// Command-line front end: BER sweeps, SNR-gain readout and a quick selftest.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "plcsim/harness.hpp"

namespace {

using namespace plcsim;

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    // start:stop:step, inclusive of stop when it lands on the grid
    double start = 0, stop = 0, step = 1;
    if (std::sscanf(text.c_str(), "%lf:%lf:%lf", &start, &stop, &step) != 3 || step <= 0)
      throw std::invalid_argument("--snr range must be start:stop:step with positive step");
    for (double v = start; v <= stop + 1e-9; v += step) out.push_back(v);
  } else {
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(std::stod(item));
    }
  }
  if (out.empty()) throw std::invalid_argument("--snr produced no points");
  return out;
}

std::vector<BerRecord> select_curve(const std::vector<BerRecord>& rows, const std::string& estimator,
                                    const std::string& noise) {
  std::vector<BerRecord> out;
  for (const auto& r : rows) {
    if (r.estimator != estimator) continue;
    if (!noise.empty() && r.noise != noise) continue;
    out.push_back(r);
  }
  if (out.empty())
    throw std::runtime_error("no rows for estimator '" + estimator + "'" +
                             (noise.empty() ? "" : " with noise '" + noise + "'"));
  return out;
}

int cmd_selftest() {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    std::printf("selftest: %-32s %s\n", name, ok ? "ok" : "FAIL");
    if (!ok) ++failures;
  };

  {
    const CMat f = dft_matrix(128);
    check("transform unitarity", (f * f.adjoint() - CMat::Identity(128, 128)).cwiseAbs().maxCoeff() < 1e-12);
  }
  {
    ConvCode code;
    Rng rng(11);
    bool ok = true;
    for (int t = 0; t < 20 && ok; ++t) {
      BitVector msg(64);
      for (auto& b : msg) b = static_cast<std::uint8_t>(rng.next_u64() >> 63);
      BitVector cw = conv_encode(code, msg);
      for (int flip = 0; flip < 3; ++flip) cw[rng.uniform_below(cw.size())] ^= 1;
      ok = viterbi_decode(code, cw).info == msg;
    }
    check("convolutional round trip", ok);
  }
  {
    Rng rng(5);
    CMat phi(8, 16);
    for (int r = 0; r < 8; ++r)
      phi.row(r) = sample_circular_gaussian(rng, 16, 1.0).transpose();
    const CVec z = sample_circular_gaussian(rng, 8, 1.0);
    RVec gamma(16);
    for (int i = 0; i < 16; ++i) gamma(i) = 0.1 + rng.uniform();
    const auto a = sbl_posterior(phi, z, gamma, 0.01);
    const auto b = sbl_posterior_woodbury(phi, z, gamma, 0.01);
    const double rel = (a.sigma - b.sigma).cwiseAbs().maxCoeff() / a.sigma.cwiseAbs().maxCoeff();
    check("posterior route agreement", rel < 1e-10 && (a.mu - b.mu).cwiseAbs().maxCoeff() < 1e-10);
  }
  {
    const OfdmModel model(OfdmConfig::typical());
    const SblBasis basis(model.dft_nondata_rows());
    Rng rng(7);
    CVec e = CVec::Zero(128);
    e(17) = cxd(2.0, -1.0);
    e(60) = cxd(-1.5, 0.5);
    e(101) = cxd(0.8, 2.2);
    const CVec z = basis.phi * e + sample_circular_gaussian(rng, 56, 1e-8);
    SblSettings st;
    st.sigma2 = 1e-8;
    const auto em = estimate_nulltone(z, basis, st);
    const auto seq = estimate_sequential(z, basis, st);
    auto close = [&](const CVec& v) {
      return (v - e).cwiseAbs().maxCoeff() / e.cwiseAbs().maxCoeff() < 1e-3;
    };
    check("sparse recovery (both backends)", close(em.e_hat) && close(seq.e_hat));
  }
  {
    const auto tdi = TdiConfig::make(4, 128, 42);
    Rng rng(3);
    const CVec v = sample_circular_gaussian(rng, 4 * 128, 1.0);
    const CVec rt = tdi_deinterleave(tdi_interleave(v, tdi.permutation), tdi.permutation);
    check("interleaver round trip", (rt - v).cwiseAbs().maxCoeff() == 0.0);
  }

  if (failures) {
    std::printf("selftest: %d failure(s)\n", failures);
    return 2;
  }
  std::printf("selftest: all ok\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OFDM powerline-noise mitigation simulator"};
  app.require_subcommand(1);

  std::string config_path, out_path = "ber.csv";
  std::string snr_text, estimator_text;
  std::uint64_t seed = 0;
  std::uint64_t symbols = 0, errors = 0;
  int threads = 0;
  bool no_timing = false, fresh = false;

  auto* run = app.add_subcommand("run", "Run the configured BER sweep");
  run->add_option("--config", config_path, "experiment JSON file")->required();
  run->add_option("--out", out_path, "output CSV path");
  run->add_option("--seed", seed, "override master seed");
  run->add_option("--snr", snr_text, "override SNR points: list 'a,b,c' or range 'start:stop:step'");
  run->add_option("--estimator", estimator_text, "override estimator");
  run->add_option("--symbols", symbols, "fix both min and max symbols per point");
  run->add_option("--errors", errors, "override target bit errors per point");
  run->add_option("--threads", threads, "worker threads per point");
  run->add_flag("--no-timing", no_timing, "write elapsed_s as 0 for repeatable files");
  run->add_flag("--fresh", fresh, "ignore any existing CSV instead of resuming");

  std::string csv_a, csv_b, baseline_tag = "none", improved_tag, noise_filter;
  double target_ber = 1e-3;
  auto* gain = app.add_subcommand("gain", "Report SNR gain between two measured curves");
  gain->add_option("--csv", csv_a, "CSV with the baseline curve")->required();
  gain->add_option("--csv2", csv_b, "CSV with the improved curve (defaults to --csv)");
  gain->add_option("--baseline", baseline_tag, "baseline estimator tag");
  gain->add_option("--estimator", improved_tag, "improved estimator tag")->required();
  gain->add_option("--noise", noise_filter, "restrict to one noise tag");
  gain->add_option("--ber", target_ber, "target error rate");

  auto* selftest = app.add_subcommand("selftest", "Run quick built-in checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (selftest->parsed()) return cmd_selftest();

    if (run->parsed()) {
      ExperimentConfig cfg = ExperimentConfig::from_json_file(config_path);
      if (run->count("--seed")) cfg.master_seed = seed;
      if (run->count("--snr")) cfg.snr_db = parse_snr_list(snr_text);
      if (run->count("--estimator")) cfg.estimator = parse_estimator(estimator_text);
      if (run->count("--symbols")) {
        cfg.min_symbols = symbols;
        cfg.max_symbols = symbols;
      }
      if (run->count("--errors")) cfg.min_bit_errors = errors;
      if (run->count("--threads")) cfg.threads = threads;
      if (no_timing) cfg.record_timing = false;
      cfg.validate();

      const auto records = run_sweep(cfg, out_path, !fresh);
      for (const auto& r : records)
        std::printf("%s %s snr=%g ber=%.4e (%llu/%llu bits, %llu symbols)\n", r.estimator.c_str(),
                    r.noise.c_str(), r.snr_db, r.ber, static_cast<unsigned long long>(r.errors),
                    static_cast<unsigned long long>(r.bits),
                    static_cast<unsigned long long>(r.symbols));
      std::printf("wrote %s\n", out_path.c_str());
      return 0;
    }

    if (gain->parsed()) {
      const auto rows_a = read_csv(csv_a);
      const auto rows_b = csv_b.empty() ? rows_a : read_csv(csv_b);
      const auto base = select_curve(rows_a, baseline_tag, noise_filter);
      const auto impr = select_curve(rows_b, improved_tag, noise_filter);
      const double s_base = snr_at_ber(base, target_ber);
      const double s_impr = snr_at_ber(impr, target_ber);
      std::printf("baseline %s crosses %.2e at %.3f dB\n", baseline_tag.c_str(), target_ber, s_base);
      std::printf("estimator %s crosses %.2e at %.3f dB\n", improved_tag.c_str(), target_ber, s_impr);
      std::printf("gain_db=%.3f\n", s_base - s_impr);
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
