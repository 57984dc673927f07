#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "isac/frames.hpp"
#include "isac/scene.hpp"
#include "isac/types.hpp"
#include "isac/waveform.hpp"

namespace isac {

enum class ArrayRole { Tx, Rx, VirtualRx };

/// Uniform planar array of rows x cols elements at spacing_m.
struct ArraySpec {
  int rows = 1;
  int cols = 1;
  double spacing_m = 0.0;
  ArrayRole role = ArrayRole::Rx;

  int size() const { return rows * cols; }
};

/// Virtual receive aperture of a co-designed Tx/Rx pair. The Rx spacing must
/// equal the Tx extent (Tx rows/cols times the Tx spacing) along every Rx
/// dimension that has more than one element.
ArraySpec virtual_aperture(const ArraySpec& tx, const ArraySpec& rx);

/// Quadrant signs (xi, psi) of the element-phase model. Angles exactly at 90
/// degrees take the "< 90" branch, which is where both neighbouring branches
/// agree.
struct QuadrantSigns {
  int xi = 1;
  int psi = 1;
};

inline QuadrantSigns quadrant_signs(double theta, double phi) {
  const double right = deg2rad(90.0);
  const bool theta_low = theta <= right;
  const bool phi_low = phi <= right;
  return {theta_low ? 1 : -1, theta_low == phi_low ? 1 : -1};
}

/// Phase progression per element along the row index p and the column index
/// q, in units of 2*pi*d/lambda.
struct SpatialFrequency {
  double along_p = 0.0;
  double along_q = 0.0;
};

inline SpatialFrequency spatial_frequency(double theta, double phi, QuadrantSigns s) {
  const double cf = std::cos(phi);
  return {s.xi * std::cos(theta) * cf, s.xi * s.psi * std::sin(theta) * cf};
}

inline SpatialFrequency spatial_frequency(double theta, double phi) {
  return spatial_frequency(theta, phi, quadrant_signs(theta, phi));
}

/// Phase of element (p, q) (1-based) relative to element (1, 1) for an
/// arrival at (theta, phi) with explicit quadrant signs.
template <typename Scalar>
std::complex<Scalar> element_phase_signed(Scalar spacing_over_lambda, int p, int q, Scalar theta, Scalar phi,
                                          QuadrantSigns s) {
  using std::cos;
  using std::sin;
  const Scalar two_pi = Scalar(2) * Scalar(kPi);
  const Scalar path = ((p - 1) * cos(theta) + s.psi * (q - 1) * sin(theta)) * cos(phi);
  return std::polar(Scalar(1), -Scalar(s.xi) * two_pi * spacing_over_lambda * path);
}

template <typename Scalar>
std::complex<Scalar> element_phase(const ArraySpec& array, Scalar wavelength, int p, int q, Scalar theta, Scalar phi) {
  require(p >= 1 && p <= array.rows && q >= 1 && q <= array.cols, "element index out of range");
  return element_phase_signed<Scalar>(Scalar(array.spacing_m) / wavelength, p, q, theta, phi,
                                      quadrant_signs(double(theta), double(phi)));
}

/// P x Q phase-difference matrix for one arrival direction.
MatrixXcd steering_matrix(const ArraySpec& array, double wavelength, double theta, double phi);

/// Line steering vector exp(-j*2*pi*(d/lambda)*k*u), k = 0..n-1.
VectorXcd line_steering(int n, double spacing_over_lambda, double u);

/// Row-major flattening of steering_matrix, element index (p-1)*Q + (q-1).
VectorXcd steering_vector(const ArraySpec& array, double wavelength, const ArrayAngles& a);

enum class LinkKind { LoS, NLoS };

struct PathParams {
  double doppler_hz = 0.0;
  double delay_s = 0.0;
  ArrayAngles aoa;
  cdouble attenuation{0.0, 0.0};
  LinkKind kind = LinkKind::LoS;
};

/// Complex reflecting factor beta ~ CN(0, var), fixed per (scene seed,
/// period, scatterer).
cdouble reflecting_factor(std::uint64_t scene_seed, Period period, int scatterer_index, double var);

/// Delay, Doppler, arrival angle and attenuation of every visible path as
/// seen by the receiving node's array.
std::vector<PathParams> path_params(const Scene& scene, const ScattererSet& scatterers,
                                    const std::vector<VisibilityRecord>& records, const SensingNode& rx,
                                    const OfdmParams& params);

/// Complex 4D sensing tensor [N_c][N_sym][P][Q] held as one N_c x N_sym
/// slice per array element.
struct CsiTensor {
  OfdmParams params;
  ArraySpec array;
  std::vector<MatrixXcf> elements;  ///< index (p-1)*Q + (q-1)

  const MatrixXcf& element(int p, int q) const { return elements[static_cast<std::size_t>(p * array.cols + q)]; }
  cfloat operator()(int n, int m, int p, int q) const { return element(p, q)(n, m); }
};

struct CsiOptions {
  double noise_var = 0.0;
  std::uint64_t seed = 0;
  int slot = 0;  ///< slot index; offsets slow time by slot * N_sym symbols
};

/// Noise-free CSI slice of one element (0-based p, q).
MatrixXcf synthesize_element(const std::vector<PathParams>& paths, const OfdmParams& params, const ArraySpec& array,
                             int p, int q, int slot = 0);

/// Complex white noise CN(0, var) for one element slice; independent of the
/// paths so the tensor stays linear in the scatterer set.
void add_element_noise(MatrixXcf& slice, double noise_var, std::uint64_t seed, int slot, int element_index);

CsiTensor build_csi(const std::vector<PathParams>& paths, const OfdmParams& params, const ArraySpec& array,
                    const CsiOptions& opts);

/// Noise variance giving the requested per-element SNR relative to the median
/// path power (unit power when there are no paths).
double noise_var_for_snr(const std::vector<PathParams>& paths, double snr_db);

/// Little-endian dump: five int32 (N_c, N_sym, P, Q, period tag 0=DL 1=UL)
/// followed by complex64 values in [n][m][p][q] order.
void write_csi(const std::string& path, const CsiTensor& tensor);
CsiTensor read_csi(const std::string& path);

struct CommPath {
  cdouble gain{1.0, 0.0};
  double delay_s = 0.0;
  double doppler_hz = 0.0;
  ArrayAngles aoa;
  ArrayAngles aod;
};

/// Received communication vectors y(n, m) = s(n, m) * sum_l g_l * phase_l * a_rx * chi_l + noise.
struct CommSignal {
  int num_subcarriers = 0;
  int num_symbols = 0;
  std::vector<VectorXcd> y;  ///< index n * N_sym + m

  const VectorXcd& at(int n, int m) const { return y[static_cast<std::size_t>(n * num_symbols + m)]; }
};

/// Transmit beamforming gain chi = a(aod)^T w.
cdouble transmit_gain(const ArraySpec& tx, double wavelength, const ArrayAngles& aod, const VectorXcd& w);

/// All-ones beamformer normalized to unit norm.
VectorXcd default_beamformer(const ArraySpec& tx);

CommSignal received_comm_signal(const TxGrid& grid, const OfdmParams& params, const std::vector<CommPath>& paths,
                                const ArraySpec& rx, const ArraySpec& tx, const VectorXcd& w, double noise_var,
                                std::uint64_t seed);

}  // namespace isac
