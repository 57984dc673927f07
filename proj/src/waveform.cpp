#include "isac/waveform.hpp"

#include <cmath>
#include <random>

namespace isac {

OfdmConfig default_ofdm_config(Period period) {
  OfdmConfig c;
  if (period == Period::UL) c.n_subcarriers = 1024;
  return c;
}

OfdmParams build_params(const OfdmConfig& c, Period period) {
  require(c.carrier_hz > 0.0, "carrier frequency must be positive");
  require(c.scs_hz > 0.0, "subcarrier spacing must be positive");
  require(c.n_subcarriers >= 2, "need at least 2 subcarriers");
  require(c.n_symbols >= 2, "need at least 2 OFDM symbols");
  require(c.cp_fraction >= 0.0, "cyclic prefix fraction must be non-negative");
  require(c.n_slots >= 1, "need at least one slot");
  OfdmParams p;
  p.period = period;
  p.carrier_hz = c.carrier_hz;
  p.subcarrier_spacing_hz = c.scs_hz;
  p.num_subcarriers = c.n_subcarriers;
  p.num_symbols = c.n_symbols;
  p.num_slots = c.n_slots;
  p.symbol_duration_s = 1.0 / c.scs_hz;
  p.cp_duration_s = c.cp_fraction * p.symbol_duration_s;
  p.total_symbol_s = p.symbol_duration_s + p.cp_duration_s;
  return p;
}

const std::array<cdouble, 4>& qpsk_alphabet() {
  static const std::array<cdouble, 4> points = [] {
    std::array<cdouble, 4> a;
    for (int k = 0; k < 4; ++k) a[k] = std::polar(1.0, kPi / 4.0 * (2 * k + 1));
    return a;
  }();
  return points;
}

TxGrid generate_tx_grid(const OfdmParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x7878));
  std::uniform_int_distribution<int> pick(0, 3);
  const auto& alphabet = qpsk_alphabet();
  TxGrid g;
  g.symbols.resize(params.num_subcarriers, params.num_symbols);
  for (Eigen::Index m = 0; m < g.symbols.cols(); ++m)
    for (Eigen::Index n = 0; n < g.symbols.rows(); ++n) g.symbols(n, m) = alphabet[pick(rng)];
  return g;
}

ResolutionReport resolution_report(const OfdmParams& p) {
  const double c = kSpeedOfLight;
  ResolutionReport r;
  r.range_res_m = c / (2.0 * p.num_subcarriers * p.subcarrier_spacing_hz);
  r.unamb_range_m = c / (2.0 * p.subcarrier_spacing_hz);
  r.velocity_res_mps = c / (2.0 * p.carrier_hz * p.num_symbols * p.total_symbol_s);
  r.unamb_velocity_mps = c / (2.0 * p.carrier_hz * p.total_symbol_s);
  return r;
}

}  // namespace isac
