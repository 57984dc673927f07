#pragma once

#include <vector>

#include "isac/channel.hpp"
#include "isac/frames.hpp"
#include "isac/rdm.hpp"
#include "isac/types.hpp"

namespace isac {

struct SmoothedCovariance {
  MatrixXcd matrix;
  int subarray_len = 0;
  int snapshots = 0;  ///< input snapshots times subarrays
};

/// Spatial smoothing over all length-`subarray_len` subarrays of each line
/// snapshot. With forward_backward the backward estimate J R_f* J is averaged
/// in; otherwise R_f alone is returned.
SmoothedCovariance smooth_covariance(const std::vector<VectorXcd>& snapshots, int subarray_len,
                                     bool forward_backward = true);
SmoothedCovariance smooth_covariance(const VectorXcd& snapshot, int subarray_len, bool forward_backward = true);

struct Eigenbasis {
  Eigen::VectorXd values;  ///< ascending
  MatrixXcd vectors;       ///< matching columns
  int source_count = 0;

  int dim() const { return static_cast<int>(values.size()); }
  /// Eigenvectors of the dim - source_count smallest eigenvalues.
  MatrixXcd noise_basis() const;
};

/// Sequential 1D CA test over ascending eigenvalues: the first eigenvalue
/// exceeding T_f(p_fa, k) times the sum of the k smaller ones starts the
/// signal subspace. Eigenvalues below 1e-12 of the largest are floored there.
int count_sources(const Eigen::VectorXd& ascending, double p_fa);

Eigenbasis eigen_decompose(const MatrixXcd& covariance, double p_fa);

/// Trigonometric-polynomial form of a^H(u) U_N U_N^H a(u) for line steering
/// vectors exp(-j*kappa*k*u).
class MusicLine {
 public:
  MusicLine(const MatrixXcd& noise_basis, double spacing_over_lambda);
  /// Pseudo-spectrum 1 / (a^H P_N a) at spatial frequency u.
  double operator()(double u) const;
  /// Normalized projection |U_N^H a(u)| / |a(u)|.
  double residual(double u) const;

 private:
  Eigen::VectorXcd lags_;  ///< sums of P_N diagonals, lag 0..L-1
  double kappa_ = 0.0;
};

/// Moves a product-spectrum peak onto the nearest peaks of both line spectra.
/// In the canonical domain the column line sees only x = cos(t) cos(f) and the
/// row line only y = sin(t) |cos(f)|, so each coordinate climbs independently.
/// The start is returned unchanged if the climb leaves the sector.
ArrayAngles refine_peak(const MusicLine& along_p, const MusicLine& along_q, const ArrayAngles& start);

/// Regular (theta, phi) grid in degrees; values(i, j) belongs to
/// (theta(i), phi(j)).
struct AngleGrid {
  Eigen::VectorXd theta_deg;
  Eigen::VectorXd phi_deg;

  static AngleGrid canonical(double step_deg);
  bool same_as(const AngleGrid& other) const;
};

struct PseudoSpectrum2D {
  AngleGrid grid;
  Eigen::MatrixXd values;
};

enum class LineAxis { AlongP, AlongQ };

/// 1D MUSIC pseudo-spectrum of one manifold line evaluated over a 2D grid.
PseudoSpectrum2D music_spectrum_1d(const MatrixXcd& noise_basis, double spacing_over_lambda, LineAxis axis,
                                   const AngleGrid& grid);
PseudoSpectrum2D music_spectrum_1d(const MusicLine& line, LineAxis axis, const AngleGrid& grid);

/// Hadamard product of the two line spectra.
PseudoSpectrum2D combine_spectra(const PseudoSpectrum2D& row, const PseudoSpectrum2D& col);

struct AngleDetection {
  ArrayAngles angles;
  double value = 0.0;
};

/// 2D CA-CFAR with peak grouping over the pseudo-spectrum.
std::vector<AngleDetection> spectrum_cfar(const PseudoSpectrum2D& spectrum, const CfarConfig& cfg);

struct DoaConfig {
  int subarray_len = 8;
  double grid_step_deg = 0.5;
  CfarConfig spectrum_cfar{9, 9, 2, 2, 1e-3, 0.75, CfarVariant::CA2D};
  double eig_p_fa = 1e-3;
  double min_correlation = 0.7;
  int max_candidates = 24;
  bool forward_backward = true;
};

/// Candidate directions accepted by a least-squares fit of steering vectors to the
/// manifold; each kept direction must correlate with the data left after
/// removing the other fitted components.
std::vector<AngleDetection> validate_candidates(const MatrixXcd& manifold, const ArraySpec& array, double wavelength,
                                                const std::vector<AngleDetection>& candidates,
                                                double min_correlation, int max_sources);

struct Detection4D {
  double range_m = 0.0;
  double velocity_mps = 0.0;
  ArrayAngles aoa;
  Vec3 direction = Vec3::UnitZ();  ///< unit vector in the array frame
  double power = 0.0;
  int alpha = 0;
  int beta = 0;
};

/// One detected range-Doppler cell with its manifold per slot.
struct CellManifolds {
  RdCell cell;
  std::vector<MatrixXcd> slots;
};

/// Product of the row and column MUSIC spectra of one cell.
PseudoSpectrum2D angle_spectrum(const CellManifolds& cell, const ArraySpec& array, double wavelength,
                                const DoaConfig& cfg);

/// Angle estimates for one cell.
std::vector<AngleDetection> estimate_angles(const CellManifolds& cell, const ArraySpec& array, double wavelength,
                                            const DoaConfig& cfg);

std::vector<Detection4D> estimate_4d(const std::vector<CellManifolds>& cells, const ArraySpec& array,
                                     double wavelength, const DoaConfig& cfg);

}  // namespace isac
