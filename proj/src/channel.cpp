#include "isac/channel.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>

#include "isac/io.hpp"
#include "isac/parallel.hpp"

namespace isac {

namespace {

bool same_length(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)); }

std::uint64_t period_tag(Period p) { return p == Period::DL ? 0xD1ull : 0x01ull; }

}  // namespace

ArraySpec virtual_aperture(const ArraySpec& tx, const ArraySpec& rx) {
  require(tx.rows >= 1 && tx.cols >= 1 && rx.rows >= 1 && rx.cols >= 1, "array dimensions must be positive");
  require(tx.spacing_m > 0.0 && rx.spacing_m > 0.0, "array spacing must be positive");
  if (rx.cols > 1)
    require(same_length(rx.spacing_m, tx.cols * tx.spacing_m), "rx spacing must equal the tx column extent");
  if (rx.rows > 1)
    require(same_length(rx.spacing_m, tx.rows * tx.spacing_m), "rx spacing must equal the tx row extent");
  return {tx.rows * rx.rows, tx.cols * rx.cols, tx.spacing_m, ArrayRole::VirtualRx};
}

VectorXcd line_steering(int n, double spacing_over_lambda, double u) {
  VectorXcd a(n);
  const double step = -2.0 * kPi * spacing_over_lambda * u;
  for (int k = 0; k < n; ++k) a(k) = std::polar(1.0, step * k);
  return a;
}

MatrixXcd steering_matrix(const ArraySpec& array, double wavelength, double theta, double phi) {
  const double ratio = array.spacing_m / wavelength;
  const SpatialFrequency f = spatial_frequency(theta, phi);
  // separable: column phases along p times row phases along q
  return line_steering(array.rows, ratio, f.along_p) * line_steering(array.cols, ratio, f.along_q).transpose();
}

VectorXcd steering_vector(const ArraySpec& array, double wavelength, const ArrayAngles& a) {
  const MatrixXcd m = steering_matrix(array, wavelength, a.theta, a.phi);
  VectorXcd v(array.size());
  for (int p = 0; p < array.rows; ++p)
    for (int q = 0; q < array.cols; ++q) v(p * array.cols + q) = m(p, q);
  return v;
}

cdouble reflecting_factor(std::uint64_t scene_seed, Period period, int scatterer_index, double var) {
  require(var > 0.0, "reflectivity variance must be positive");
  std::mt19937_64 rng(mix_seed(mix_seed(scene_seed, period_tag(period)), static_cast<std::uint64_t>(scatterer_index)));
  std::normal_distribution<double> g(0.0, std::sqrt(var / 2.0));
  const double re = g(rng);
  return {re, g(rng)};
}

std::vector<PathParams> path_params(const Scene& scene, const ScattererSet& scatterers,
                                    const std::vector<VisibilityRecord>& records, const SensingNode& rx,
                                    const OfdmParams& params) {
  const double lambda = params.wavelength_m();
  const double c = kSpeedOfLight;
  const double four_pi = 4.0 * kPi;
  std::vector<PathParams> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    require(rec.rx_id == rx.id, "record receiver does not match the node");
    PathParams p;
    if (rec.scatterer_index < 0) {
      const SensingNode& tx = scene.node(rec.tx_id);
      const Vec3 d = tx.position - rx.position;
      p.kind = LinkKind::LoS;
      p.delay_s = d.norm() / c;
      p.doppler_hz = 0.0;
      p.aoa = angles_from_direction(rx.to_array_frame(d));
      p.attenuation = lambda / (four_pi * d.norm());
    } else {
      const Scatterer& s = scatterers.at(static_cast<std::size_t>(rec.scatterer_index));
      const Vec3 to_rx = s.position - rx.position;
      const double r_rx = to_rx.norm();
      const double v_rx = -s.velocity.dot(to_rx / r_rx);
      p.aoa = angles_from_direction(rx.to_array_frame(to_rx));
      const cdouble beta = reflecting_factor(scene.seed, params.period, rec.scatterer_index, s.reflect_var);
      if (params.period == Period::DL) {
        p.kind = LinkKind::LoS;
        p.delay_s = 2.0 * r_rx / c;
        p.doppler_hz = 2.0 * v_rx / lambda;
        p.attenuation = beta * std::sqrt(lambda * lambda / (std::pow(four_pi, 3) * std::pow(r_rx, 4)));
      } else {
        const SensingNode& tx = scene.node(rec.tx_id);
        const Vec3 from_tx = s.position - tx.position;
        const double r_tx = from_tx.norm();
        const double v_tx = -s.velocity.dot(from_tx / r_tx);
        p.kind = LinkKind::NLoS;
        p.delay_s = (r_tx + r_rx) / c;
        p.doppler_hz = (v_tx + v_rx) / lambda;
        p.attenuation =
            beta * std::sqrt(lambda * lambda / (std::pow(four_pi, 3) * r_tx * r_tx * r_rx * r_rx));
      }
    }
    out.push_back(p);
  }
  return out;
}

MatrixXcf synthesize_element(const std::vector<PathParams>& paths, const OfdmParams& params, const ArraySpec& array,
                             int p, int q, int slot) {
  const int nc = params.num_subcarriers;
  const int ns = params.num_symbols;
  const int k = static_cast<int>(paths.size());
  if (k == 0) return MatrixXcf::Zero(nc, ns);

  const double ratio = array.spacing_m / params.wavelength_m();
  Eigen::MatrixXcf range(nc, k), doppler(ns, k);
  Eigen::VectorXcf coeff(k);
  const double t0 = static_cast<double>(slot) * ns;
  for (int i = 0; i < k; ++i) {
    const PathParams& path = paths[static_cast<std::size_t>(i)];
    const double dr = -2.0 * kPi * params.subcarrier_spacing_hz * path.delay_s;
    for (int n = 0; n < nc; ++n) range(n, i) = std::polar(1.0, dr * n);
    const double dd = 2.0 * kPi * path.doppler_hz * params.total_symbol_s;
    for (int m = 0; m < ns; ++m) doppler(m, i) = std::polar(1.0, dd * (t0 + m));
    const SpatialFrequency f = spatial_frequency(path.aoa.theta, path.aoa.phi);
    const cdouble phase = std::polar(1.0, -2.0 * kPi * ratio * (p * f.along_p + q * f.along_q));
    coeff(i) = cfloat(path.attenuation * phase);
  }
  return (range * coeff.asDiagonal()) * doppler.transpose();
}

void add_element_noise(MatrixXcf& slice, double noise_var, std::uint64_t seed, int slot, int element_index) {
  if (noise_var <= 0.0) return;
  std::mt19937_64 rng(mix_seed(mix_seed(seed, 0x4E01ull + static_cast<std::uint64_t>(slot)),
                               static_cast<std::uint64_t>(element_index)));
  std::normal_distribution<float> g(0.0f, static_cast<float>(std::sqrt(noise_var / 2.0)));
  cfloat* data = slice.data();
  for (Eigen::Index i = 0; i < slice.size(); ++i) {
    const float re = g(rng);
    data[i] += cfloat(re, g(rng));
  }
}

CsiTensor build_csi(const std::vector<PathParams>& paths, const OfdmParams& params, const ArraySpec& array,
                    const CsiOptions& opts) {
  require(array.rows >= 1 && array.cols >= 1 && array.spacing_m > 0.0, "invalid array");
  require(opts.noise_var >= 0.0, "noise variance must be non-negative");
  CsiTensor t;
  t.params = params;
  t.array = array;
  t.elements.resize(static_cast<std::size_t>(array.size()));
  parallel_for(array.size(), [&](int e) {
    MatrixXcf slice = synthesize_element(paths, params, array, e / array.cols, e % array.cols, opts.slot);
    add_element_noise(slice, opts.noise_var, opts.seed, opts.slot, e);
    t.elements[static_cast<std::size_t>(e)] = std::move(slice);
  });
  return t;
}

double noise_var_for_snr(const std::vector<PathParams>& paths, double snr_db) {
  double ref = 1.0;
  if (!paths.empty()) {
    std::vector<double> power;
    power.reserve(paths.size());
    for (const auto& p : paths) power.push_back(std::norm(p.attenuation));
    const auto mid = power.begin() + static_cast<std::ptrdiff_t>(power.size() / 2);
    std::nth_element(power.begin(), mid, power.end());
    ref = *mid;
  }
  return ref / std::pow(10.0, snr_db / 10.0);
}

static_assert(std::endian::native == std::endian::little, "binary dumps assume a little-endian host");

void write_csi(const std::string& path, const CsiTensor& t) {
  const int nc = t.params.num_subcarriers, ns = t.params.num_symbols;
  const int rows = t.array.rows, cols = t.array.cols;
  const std::int32_t header[5] = {nc, ns, rows, cols, t.params.period == Period::DL ? 0 : 1};
  std::string bytes(sizeof(header) + sizeof(cfloat) * static_cast<std::size_t>(nc) * ns * rows * cols, '\0');
  std::memcpy(bytes.data(), header, sizeof(header));
  auto* out = reinterpret_cast<cfloat*>(bytes.data() + sizeof(header));
  for (int n = 0; n < nc; ++n)
    for (int m = 0; m < ns; ++m)
      for (int p = 0; p < rows; ++p)
        for (int q = 0; q < cols; ++q) *out++ = t(n, m, p, q);
  write_file_atomic(path, bytes);
}

CsiTensor read_csi(const std::string& path) {
  const std::string bytes = read_file(path);
  std::int32_t header[5];
  require(bytes.size() >= sizeof(header), "truncated CSI dump: " + path);
  std::memcpy(header, bytes.data(), sizeof(header));
  const int nc = header[0], ns = header[1], rows = header[2], cols = header[3];
  require(nc > 0 && ns > 0 && rows > 0 && cols > 0, "bad CSI header: " + path);
  const std::size_t count = static_cast<std::size_t>(nc) * ns * rows * cols;
  require(bytes.size() == sizeof(header) + count * sizeof(cfloat), "CSI dump size mismatch: " + path);
  CsiTensor t;
  t.params.period = header[4] == 0 ? Period::DL : Period::UL;
  t.params.num_subcarriers = nc;
  t.params.num_symbols = ns;
  t.array.rows = rows;
  t.array.cols = cols;
  t.elements.assign(static_cast<std::size_t>(rows * cols), MatrixXcf(nc, ns));
  const auto* in = reinterpret_cast<const cfloat*>(bytes.data() + sizeof(header));
  for (int n = 0; n < nc; ++n)
    for (int m = 0; m < ns; ++m)
      for (int e = 0; e < rows * cols; ++e) t.elements[static_cast<std::size_t>(e)](n, m) = *in++;
  return t;
}

cdouble transmit_gain(const ArraySpec& tx, double wavelength, const ArrayAngles& aod, const VectorXcd& w) {
  require(w.size() == tx.size(), "beamformer length does not match the transmit array");
  return steering_vector(tx, wavelength, aod).transpose() * w;
}

VectorXcd default_beamformer(const ArraySpec& tx) {
  return VectorXcd::Constant(tx.size(), cdouble(1.0 / std::sqrt(double(tx.size())), 0.0));
}

CommSignal received_comm_signal(const TxGrid& grid, const OfdmParams& params, const std::vector<CommPath>& paths,
                                const ArraySpec& rx, const ArraySpec& tx, const VectorXcd& w, double noise_var,
                                std::uint64_t seed) {
  require(w.size() == tx.size(), "beamformer length does not match the transmit array");
  require(grid.symbols.rows() == params.num_subcarriers && grid.symbols.cols() == params.num_symbols,
          "symbol grid does not match the numerology");
  const double lambda = params.wavelength_m();
  std::vector<VectorXcd> arrival;
  std::vector<cdouble> chi;
  for (const auto& path : paths) {
    arrival.push_back(steering_vector(rx, lambda, path.aoa));
    chi.push_back(transmit_gain(tx, lambda, path.aod, w));
  }
  CommSignal out;
  out.num_subcarriers = params.num_subcarriers;
  out.num_symbols = params.num_symbols;
  out.y.assign(static_cast<std::size_t>(out.num_subcarriers) * out.num_symbols, VectorXcd::Zero(rx.size()));
  std::mt19937_64 rng(mix_seed(seed, 0xC0A1ull));
  std::normal_distribution<double> g(0.0, std::sqrt(std::max(noise_var, 0.0) / 2.0));
  for (int n = 0; n < out.num_subcarriers; ++n) {
    for (int m = 0; m < out.num_symbols; ++m) {
      VectorXcd& y = out.y[static_cast<std::size_t>(n * out.num_symbols + m)];
      for (std::size_t l = 0; l < paths.size(); ++l) {
        const double ph = -2.0 * kPi * n * params.subcarrier_spacing_hz * paths[l].delay_s +
                          2.0 * kPi * m * params.total_symbol_s * paths[l].doppler_hz;
        y += (grid.symbols(n, m) * paths[l].gain * std::polar(1.0, ph) * chi[l]) * arrival[l];
      }
      if (noise_var > 0.0)
        for (Eigen::Index i = 0; i < y.size(); ++i) {
          const double re = g(rng);
          y(i) += cdouble(re, g(rng));
        }
    }
  }
  return out;
}

}  // namespace isac
