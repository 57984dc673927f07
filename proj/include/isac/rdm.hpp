#pragma once

#include <vector>

#include "isac/channel.hpp"
#include "isac/types.hpp"
#include "isac/waveform.hpp"

namespace isac {

/// Range-Doppler map of one element slice. Rows are range bins alpha, columns
/// Doppler bins with zero velocity at column N_sym/2, so both axes increase.
/// For UL the range axis is the total path length r1 + r2 and the velocity
/// axis the sum of both closing speeds.
struct RangeDopplerMap {
  MatrixXcf values;
  Eigen::MatrixXf power;
  Eigen::VectorXd range_axis;
  Eigen::VectorXd velocity_axis;
};

/// Bin spacings of the map axes for a numerology.
double range_bin_m(const OfdmParams& params);
double velocity_bin_mps(const OfdmParams& params);

/// 1/N_c-normalized IDFT over subcarriers, unnormalized DFT over symbols.
RangeDopplerMap compute_rdm(const MatrixXcf& slice, const OfdmParams& params);

/// Transform only; no power or axes.
MatrixXcf range_doppler_transform(const MatrixXcf& slice);

enum class CfarVariant { OSCA2D, CA2D, CA1D };

struct CfarConfig {
  int window_rows = 9;
  int window_cols = 9;
  int guard_rows = 1;
  int guard_cols = 1;
  double p_fa = 1e-4;
  double os_rank_fraction = 0.75;
  CfarVariant variant = CfarVariant::OSCA2D;

  void validate() const;
};

/// T_f = p_fa^(-1/N) - 1.
double threshold_factor(double p_fa, int n);

/// Multiplier alpha on the mean of per-column order statistics giving false
/// alarm probability p_fa for exponential noise. Column j has n_j reference
/// cells and uses rank k_j (1-based, ascending).
double osca_multiplier(const std::vector<int>& n, const std::vector<int>& k, double p_fa);

struct CfarResult {
  Eigen::MatrixXd threshold;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> hits;
};

/// Column order statistic of rank floor(fraction * n) averaged over the
/// window columns; windows are clamped at the map borders.
CfarResult osca_cfar_2d(const Eigen::MatrixXd& power, const CfarConfig& cfg);

/// Cell averaging over the window minus the guard block.
CfarResult ca_cfar_2d(const Eigen::MatrixXd& power, const CfarConfig& cfg);

struct Cell {
  int row = 0;
  int col = 0;
};

/// Hits that are maxima of their 3x3 neighbourhood, strongest first. Equal
/// neighbours are broken by scan order.
std::vector<Cell> group_peaks(const Eigen::MatrixXd& power, const CfarResult& cfar);

struct RdCell {
  int alpha = 0;
  int beta_col = 0;  ///< map column
  int beta = 0;      ///< signed Doppler bin
  double range_m = 0.0;
  double velocity_mps = 0.0;
  double power = 0.0;
};

/// Element map values at one cell as a P x Q manifold.
MatrixXcd assemble_manifold(const std::vector<RangeDopplerMap>& element_maps, const ArraySpec& array, int alpha,
                            int beta_col);

/// Mean power over element maps.
Eigen::MatrixXd integrate_power(const std::vector<RangeDopplerMap>& element_maps);

}  // namespace isac
