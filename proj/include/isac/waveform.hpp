#pragma once

#include <array>
#include <cstdint>

#include "isac/types.hpp"

namespace isac {

/// Per-period OFDM numerology as read from configuration.
struct OfdmConfig {
  double carrier_hz = 70e9;
  double scs_hz = 240e3;
  int n_subcarriers = 2048;
  int n_symbols = 224;
  double cp_fraction = 1.0 / 16.0;
  int n_slots = 16;
};

/// Table-I defaults for each period.
OfdmConfig default_ofdm_config(Period period);

struct OfdmParams {
  Period period = Period::DL;
  double carrier_hz = 0.0;
  double subcarrier_spacing_hz = 0.0;
  int num_subcarriers = 0;
  int num_symbols = 0;
  int num_slots = 1;
  double symbol_duration_s = 0.0;  ///< T = 1 / df
  double cp_duration_s = 0.0;
  double total_symbol_s = 0.0;     ///< T_OFDM = T + T_CP

  double bandwidth_hz() const { return num_subcarriers * subcarrier_spacing_hz; }
  double wavelength_m() const { return kSpeedOfLight / carrier_hz; }
};

OfdmParams build_params(const OfdmConfig& config, Period period);

/// Unit-modulus QPSK grid, N_c x N_sym.
struct TxGrid {
  Eigen::MatrixXcd symbols;
};

/// The four QPSK points exp(j*pi/4*(2k+1)).
const std::array<cdouble, 4>& qpsk_alphabet();

TxGrid generate_tx_grid(const OfdmParams& params, std::uint64_t seed);

struct ResolutionReport {
  double range_res_m = 0.0;
  double unamb_range_m = 0.0;
  double velocity_res_mps = 0.0;
  double unamb_velocity_mps = 0.0;
};

ResolutionReport resolution_report(const OfdmParams& params);

}  // namespace isac
