// Micro-benchmark for the estimator inner loops: per-symbol wall time and
// pass counts under the bursty mixture, across a few SNR points.

#include <chrono>
#include <cstdio>
#include <vector>

#include "plcsim/harness.hpp"

using namespace plcsim;

int main(int argc, char** argv) {
  const int symbols = argc > 1 ? std::atoi(argv[1]) : 50;

  const OfdmModel model(OfdmConfig::typical());
  const SblBasis basis(model.dft_nondata_rows(), model.nondata(), model.config().n_fft);
  GaussianMixtureParams gm;
  gm.weights.resize(3);
  gm.weights << 0.9, 0.07, 0.03;
  gm.variances.resize(3);
  gm.variances << 1.0, 100.0, 1000.0;

  const double psig = signal_power(model.config());

  for (double snr_db : {10.0, 14.0, 18.0, 22.0}) {
    const double s2 = psig / std::pow(10.0, snr_db / 10.0);
    GaussianMixtureParams scaled = gm;
    scaled.variances *= s2;

    SblSettings st;
    st.sigma2 = s2;

    Rng rng(99);
    double t_null = 0, t_all = 0, t_seq = 0;
    long it_null = 0, it_all = 0, it_seq = 0;
    long act_null = 0;
    for (int s = 0; s < symbols; ++s) {
      BitVector bits(static_cast<std::size_t>(model.bits_per_symbol()));
      for (auto& b : bits) b = static_cast<std::uint8_t>(rng.next_u64() >> 63);
      const CVec tx = model.modulate(qpsk_map(bits));
      const CVec w = sample_gm(rng, scaled, model.config().n_fft);
      const CVec y = model.demodulate(tx + w);
      const CVec z = model.observe_nondata(y);

      auto t0 = std::chrono::steady_clock::now();
      const auto rn = estimate_nulltone(z, basis, st);
      auto t1 = std::chrono::steady_clock::now();
      const auto ra = estimate_alltone(y, model.dft(), model.channel(), model.config().data_tones,
                                       model.nondata(), model.known_nondata(), st);
      auto t2 = std::chrono::steady_clock::now();
      const auto rs = estimate_sequential(z, basis, st);
      auto t3 = std::chrono::steady_clock::now();

      t_null += std::chrono::duration<double>(t1 - t0).count();
      t_all += std::chrono::duration<double>(t2 - t1).count();
      t_seq += std::chrono::duration<double>(t3 - t2).count();
      it_null += rn.state.iterations;
      it_all += ra.state.iterations;
      it_seq += rs.state.iterations;
      for (Eigen::Index i = 0; i < rn.state.gamma.size(); ++i) act_null += rn.state.gamma(i) > 0;
    }
    std::printf(
        "snr %4.1f  nulltone %7.2f ms/sym (%5.1f passes, %5.1f active)   alltone %7.2f ms/sym "
        "(%5.1f passes)   sequential %7.2f ms/sym (%5.1f actions)\n",
        snr_db, 1e3 * t_null / symbols, double(it_null) / symbols, double(act_null) / symbols,
        1e3 * t_all / symbols, double(it_all) / symbols, 1e3 * t_seq / symbols,
        double(it_seq) / symbols);
  }
  return 0;
}
