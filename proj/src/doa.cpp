#include "isac/doa.hpp"

#include <algorithm>
#include <tuple>
#include <cmath>
#include <optional>

#include <Eigen/Eigenvalues>

#include "isac/parallel.hpp"

namespace isac {

SmoothedCovariance smooth_covariance(const std::vector<VectorXcd>& snapshots, int subarray_len,
                                     bool forward_backward) {
  require(!snapshots.empty(), "no snapshots to smooth");
  const int n = static_cast<int>(snapshots.front().size());
  require(subarray_len >= 1 && subarray_len <= n, "subarray longer than the line");
  const int subarrays = n - subarray_len + 1;
  MatrixXcd rf = MatrixXcd::Zero(subarray_len, subarray_len);
  for (const auto& x : snapshots) {
    require(x.size() == n, "snapshot length mismatch");
    for (int l = 0; l < subarrays; ++l) {
      const auto seg = x.segment(l, subarray_len);
      rf.noalias() += seg * seg.adjoint();
    }
  }
  SmoothedCovariance out;
  out.subarray_len = subarray_len;
  out.snapshots = static_cast<int>(snapshots.size()) * subarrays;
  rf /= static_cast<double>(out.snapshots);
  if (forward_backward) {
    // J R* J reverses both index orders.
    const MatrixXcd rb = rf.conjugate().reverse();
    out.matrix = 0.5 * (rf + rb);
  } else {
    out.matrix = rf;
  }
  out.matrix = 0.5 * (out.matrix + out.matrix.adjoint()).eval();
  return out;
}

SmoothedCovariance smooth_covariance(const VectorXcd& snapshot, int subarray_len, bool forward_backward) {
  return smooth_covariance(std::vector<VectorXcd>{snapshot}, subarray_len, forward_backward);
}

MatrixXcd Eigenbasis::noise_basis() const {
  require(source_count < dim(), "no noise subspace: source count equals the space dimension");
  return vectors.leftCols(dim() - source_count);
}

int count_sources(const Eigen::VectorXd& ascending, double p_fa) {
  const int n = static_cast<int>(ascending.size());
  if (n < 2) return 0;
  const double top = ascending(n - 1);
  if (!(top > 0.0)) return 0;
  const double floor = 1e-12 * top;
  double sum = std::max(ascending(0), floor);
  for (int k = 1; k < n; ++k) {
    const double v = std::max(ascending(k), floor);
    if (v > threshold_factor(p_fa, k) * sum) return n - k;
    sum += v;
  }
  return 0;
}

Eigenbasis eigen_decompose(const MatrixXcd& covariance, double p_fa) {
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(covariance);
  require(es.info() == Eigen::Success, "eigendecomposition failed");
  Eigenbasis b;
  b.values = es.eigenvalues();
  b.vectors = es.eigenvectors();
  b.source_count = count_sources(b.values, p_fa);
  return b;
}

MusicLine::MusicLine(const MatrixXcd& noise_basis, double spacing_over_lambda)
    : kappa_(2.0 * kPi * spacing_over_lambda) {
  const MatrixXcd proj = noise_basis * noise_basis.adjoint();
  const Eigen::Index l = proj.rows();
  lags_ = Eigen::VectorXcd::Zero(l);
  for (Eigen::Index d = 0; d < l; ++d)
    for (Eigen::Index k = d; k < l; ++k) lags_(d) += proj(k, k - d);
}

double MusicLine::residual(double u) const {
  const cdouble step = std::polar(1.0, kappa_ * u);
  cdouble rot = step;
  double q = lags_(0).real();
  for (Eigen::Index d = 1; d < lags_.size(); ++d, rot *= step) q += 2.0 * (lags_(d) * rot).real();
  return std::sqrt(std::max(q, 0.0) / static_cast<double>(lags_.size()));
}

double MusicLine::operator()(double u) const {
  const double r = residual(u);
  return 1.0 / std::max(r * r * static_cast<double>(lags_.size()), 1e-300);
}

namespace {

// Local minimum of the residual reached by walking downhill from u.
double climb(const MusicLine& line, double u) {
  auto f = [&](double x) { return line.residual(x); };
  double h = 1e-3;
  double dir = f(u + h) < f(u - h) ? 1.0 : -1.0;
  if (std::min(f(u + h), f(u - h)) >= f(u)) {
    h *= 0.5;
    dir = 0.0;
  }
  double a = u - h, b = u + h;
  if (dir != 0.0) {
    double prev = u, cur = u + dir * h;
    while (std::abs(cur) < 1.0 && f(cur + dir * h) < f(cur)) {
      prev = cur;
      cur += dir * h;
      h *= 1.5;
    }
    a = std::min(prev, cur + dir * h);
    b = std::max(prev, cur + dir * h);
  }
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > 1e-12) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

ArrayAngles refine_peak(const MusicLine& along_p, const MusicLine& along_q, const ArrayAngles& start) {
  const Vec3 d0 = direction_from_angles(start);
  const double x = climb(along_p, d0.x());
  const double y = climb(along_q, d0.y());
  const double zz = 1.0 - x * x - y * y;
  if (!(y > 0.0) || !(zz > 0.0)) return start;
  return angles_from_direction(Vec3(x, y, std::sqrt(zz)));
}

AngleGrid AngleGrid::canonical(double step_deg) {
  require(step_deg > 0.0 && step_deg <= 45.0, "grid step must lie in (0, 45] degrees");
  const int nt = static_cast<int>(std::lround(90.0 / step_deg));
  const int np = static_cast<int>(std::lround(180.0 / step_deg)) - 1;
  AngleGrid g;
  g.theta_deg.resize(nt);
  g.phi_deg.resize(np);
  for (int i = 0; i < nt; ++i) g.theta_deg(i) = (i + 1) * step_deg;
  for (int j = 0; j < np; ++j) g.phi_deg(j) = (j + 1) * step_deg;
  return g;
}

bool AngleGrid::same_as(const AngleGrid& o) const {
  return theta_deg.size() == o.theta_deg.size() && phi_deg.size() == o.phi_deg.size() &&
         theta_deg == o.theta_deg && phi_deg == o.phi_deg;
}

PseudoSpectrum2D music_spectrum_1d(const MatrixXcd& noise_basis, double spacing_over_lambda, LineAxis axis,
                                   const AngleGrid& grid) {
  require(noise_basis.cols() >= 1, "no noise subspace: source count equals the space dimension");
  return music_spectrum_1d(MusicLine(noise_basis, spacing_over_lambda), axis, grid);
}

PseudoSpectrum2D music_spectrum_1d(const MusicLine& line, LineAxis axis, const AngleGrid& grid) {
  PseudoSpectrum2D s;
  s.grid = grid;
  s.values.resize(grid.theta_deg.size(), grid.phi_deg.size());
  for (Eigen::Index i = 0; i < grid.theta_deg.size(); ++i)
    for (Eigen::Index j = 0; j < grid.phi_deg.size(); ++j) {
      const SpatialFrequency f = spatial_frequency(deg2rad(grid.theta_deg(i)), deg2rad(grid.phi_deg(j)));
      s.values(i, j) = line(axis == LineAxis::AlongP ? f.along_p : f.along_q);
    }
  return s;
}

PseudoSpectrum2D combine_spectra(const PseudoSpectrum2D& row, const PseudoSpectrum2D& col) {
  require(row.grid.same_as(col.grid) && row.values.rows() == col.values.rows() &&
              row.values.cols() == col.values.cols(),
          "pseudo-spectra are on different grids");
  return {row.grid, row.values.cwiseProduct(col.values)};
}

std::vector<AngleDetection> spectrum_cfar(const PseudoSpectrum2D& s, const CfarConfig& cfg) {
  const CfarResult cfar = ca_cfar_2d(s.values, cfg);
  std::vector<AngleDetection> out;
  for (const Cell& c : group_peaks(s.values, cfar))
    out.push_back({{deg2rad(s.grid.theta_deg(c.row)), deg2rad(s.grid.phi_deg(c.col))}, s.values(c.row, c.col)});
  return out;
}

std::vector<AngleDetection> validate_candidates(const MatrixXcd& manifold, const ArraySpec& array, double wavelength,
                                                const std::vector<AngleDetection>& candidates,
                                                double min_correlation, int max_sources) {
  require(manifold.rows() == array.rows && manifold.cols() == array.cols, "manifold does not match the array");
  VectorXcd y(array.size());
  for (int p = 0; p < array.rows; ++p)
    for (int q = 0; q < array.cols; ++q) y(p * array.cols + q) = manifold(p, q);
  const double y_norm = y.norm();
  if (y_norm == 0.0 || candidates.empty()) return {};

  std::vector<VectorXcd> atoms;
  for (const auto& c : candidates) {
    VectorXcd a = steering_vector(array, wavelength, c.angles);
    atoms.push_back(a / a.norm());
  }
  auto fit = [&](const std::vector<int>& sel) {
    MatrixXcd basis(y.size(), static_cast<Eigen::Index>(sel.size()));
    for (std::size_t k = 0; k < sel.size(); ++k) basis.col(static_cast<Eigen::Index>(k)) = atoms[static_cast<std::size_t>(sel[k])];
    VectorXcd coef = basis.colPivHouseholderQr().solve(y);
    VectorXcd r = y - basis * coef;
    return std::tuple{coef, r, r.norm()};
  };
  auto contains = [](const std::vector<int>& sel, int i) { return std::find(sel.begin(), sel.end(), i) != sel.end(); };
  const int n_cand = static_cast<int>(atoms.size());

  // Forward selection on residual correlation, then single swaps while the fit improves.
  std::vector<int> sel;
  double res = y_norm;
  VectorXcd residual = y;
  while (static_cast<int>(sel.size()) < std::min(max_sources, n_cand) && res > 1e-9 * y_norm) {
    int best = -1;
    double best_corr = 0.0;
    for (int i = 0; i < n_cand; ++i) {
      if (contains(sel, i)) continue;
      const double corr = std::abs(atoms[static_cast<std::size_t>(i)].dot(residual)) / res;
      if (corr > best_corr) best_corr = corr, best = i;
    }
    if (best < 0 || best_corr < 1e-6) break;
    sel.push_back(best);
    std::tie(std::ignore, residual, res) = fit(sel);
  }
  for (bool improved = true; improved;) {
    improved = false;
    for (std::size_t k = 0; k < sel.size(); ++k)
      for (int i = 0; i < n_cand; ++i) {
        if (contains(sel, i)) continue;
        std::vector<int> trial = sel;
        trial[k] = i;
        const double r = std::get<2>(fit(trial));
        if (r < res * (1.0 - 1e-9)) sel = trial, res = r, improved = true;
      }
  }

  // Each component must match the data left after removing the others.
  for (bool dropped = true; dropped && !sel.empty();) {
    dropped = false;
    const auto [coef, rest, rest_norm] = fit(sel);
    std::size_t worst = 0;
    double worst_corr = 2.0;
    for (std::size_t k = 0; k < sel.size(); ++k) {
      const VectorXcd& a = atoms[static_cast<std::size_t>(sel[k])];
      const VectorXcd own = rest + a * coef(static_cast<Eigen::Index>(k));
      const double own_norm = own.norm();
      const double corr = own_norm > 0.0 ? std::abs(a.dot(own)) / own_norm : 0.0;
      if (corr < worst_corr) worst_corr = corr, worst = k;
    }
    if (worst_corr < min_correlation) {
      sel.erase(sel.begin() + static_cast<std::ptrdiff_t>(worst));
      dropped = true;
    }
  }

  std::vector<AngleDetection> accepted;
  for (int i : sel) accepted.push_back(candidates[static_cast<std::size_t>(i)]);
  return accepted;
}

namespace {

struct Line {
  std::optional<MusicLine> music;
  int sources = 0;
};

Line build_line(const CellManifolds& cell, LineAxis axis, double ratio, const DoaConfig& cfg) {
  std::vector<VectorXcd> snaps;
  for (const auto& m : cell.slots) snaps.push_back(axis == LineAxis::AlongP ? VectorXcd(m.col(0)) : VectorXcd(m.row(0).transpose()));
  Line line;
  const int n = static_cast<int>(snaps.front().size());
  if (n < 2) return line;
  const auto cov = smooth_covariance(snaps, std::min(cfg.subarray_len, n), cfg.forward_backward);
  Eigenbasis eb = eigen_decompose(cov.matrix, cfg.eig_p_fa);
  eb.source_count = std::clamp(eb.source_count, 1, eb.dim() - 1);
  line.sources = eb.source_count;
  line.music.emplace(eb.noise_basis(), ratio);
  return line;
}

struct CellLines {
  Line along_p, along_q;
  PseudoSpectrum2D product;
};

CellLines cell_lines(const CellManifolds& cell, const ArraySpec& array, double wavelength, const DoaConfig& cfg) {
  require(!cell.slots.empty(), "cell has no manifolds");
  const double ratio = array.spacing_m / wavelength;
  const AngleGrid grid = AngleGrid::canonical(cfg.grid_step_deg);
  auto spectrum = [&](const Line& line, LineAxis axis) {
    if (!line.music) return PseudoSpectrum2D{grid, Eigen::MatrixXd::Ones(grid.theta_deg.size(), grid.phi_deg.size())};
    return music_spectrum_1d(*line.music, axis, grid);
  };
  CellLines out;
  out.along_p = build_line(cell, LineAxis::AlongP, ratio, cfg);
  out.along_q = build_line(cell, LineAxis::AlongQ, ratio, cfg);
  out.product = combine_spectra(spectrum(out.along_q, LineAxis::AlongQ), spectrum(out.along_p, LineAxis::AlongP));
  return out;
}

}  // namespace

PseudoSpectrum2D angle_spectrum(const CellManifolds& cell, const ArraySpec& array, double wavelength,
                                const DoaConfig& cfg) {
  return cell_lines(cell, array, wavelength, cfg).product;
}

std::vector<AngleDetection> estimate_angles(const CellManifolds& cell, const ArraySpec& array, double wavelength,
                                            const DoaConfig& cfg) {
  require(!cell.slots.empty(), "cell has no manifolds");
  if (array.size() == 1) return {{{deg2rad(90.0), deg2rad(90.0)}, 1.0}};

  const CellLines lines = cell_lines(cell, array, wavelength, cfg);
  const PseudoSpectrum2D& product = lines.product;
  std::vector<AngleDetection> candidates = spectrum_cfar(product, cfg.spectrum_cfar);
  if (candidates.empty()) {
    Eigen::Index i = 0, j = 0;
    product.values.maxCoeff(&i, &j);
    candidates.push_back({{deg2rad(product.grid.theta_deg(i)), deg2rad(product.grid.phi_deg(j))}, product.values(i, j)});
  }
  if (lines.along_p.music && lines.along_q.music)
    for (auto& c : candidates) c.angles = refine_peak(*lines.along_p.music, *lines.along_q.music, c.angles);
  if (static_cast<int>(candidates.size()) > cfg.max_candidates) candidates.resize(static_cast<std::size_t>(cfg.max_candidates));
  return validate_candidates(cell.slots.front(), array, wavelength, candidates, cfg.min_correlation,
                             std::max({lines.along_p.sources, lines.along_q.sources, 1}));
}

std::vector<Detection4D> estimate_4d(const std::vector<CellManifolds>& cells, const ArraySpec& array,
                                     double wavelength, const DoaConfig& cfg) {
  std::vector<std::vector<AngleDetection>> angles(cells.size());
  parallel_for(static_cast<int>(cells.size()), [&](int i) {
    angles[static_cast<std::size_t>(i)] = estimate_angles(cells[static_cast<std::size_t>(i)], array, wavelength, cfg);
  });
  std::vector<Detection4D> out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (const auto& a : angles[i]) {
      Detection4D d;
      d.range_m = cells[i].cell.range_m;
      d.velocity_mps = cells[i].cell.velocity_mps;
      d.aoa = a.angles;
      d.direction = direction_from_angles(a.angles);
      d.power = cells[i].cell.power;
      d.alpha = cells[i].cell.alpha;
      d.beta = cells[i].cell.beta;
      out.push_back(d);
    }
  }
  return out;
}

}  // namespace isac
