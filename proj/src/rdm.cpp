#include "isac/rdm.hpp"

#include <algorithm>
#include <cmath>

#include <unsupported/Eigen/FFT>

namespace isac {

double range_bin_m(const OfdmParams& p) {
  const double path = kSpeedOfLight / (p.num_subcarriers * p.subcarrier_spacing_hz);
  return p.period == Period::DL ? path / 2.0 : path;
}

double velocity_bin_mps(const OfdmParams& p) {
  const double v = kSpeedOfLight / (p.carrier_hz * p.num_symbols * p.total_symbol_s);
  return p.period == Period::DL ? v / 2.0 : v;
}

MatrixXcf range_doppler_transform(const MatrixXcf& slice) {
  const Eigen::Index nc = slice.rows(), ns = slice.cols();
  Eigen::FFT<float> fft;
  MatrixXcf fast(nc, ns);
  std::vector<cfloat> in(static_cast<std::size_t>(nc)), out;
  for (Eigen::Index m = 0; m < ns; ++m) {
    std::copy(slice.col(m).data(), slice.col(m).data() + nc, in.begin());
    fft.inv(out, in);
    std::copy(out.begin(), out.end(), fast.col(m).data());
  }
  MatrixXcf rdm(nc, ns);
  in.resize(static_cast<std::size_t>(ns));
  const Eigen::Index half = ns / 2;
  for (Eigen::Index n = 0; n < nc; ++n) {
    for (Eigen::Index m = 0; m < ns; ++m) in[static_cast<std::size_t>(m)] = fast(n, m);
    fft.fwd(out, in);
    for (Eigen::Index b = 0; b < ns; ++b) rdm(n, b) = out[static_cast<std::size_t>((b - half + ns) % ns)];
  }
  return rdm;
}

RangeDopplerMap compute_rdm(const MatrixXcf& slice, const OfdmParams& params) {
  require(slice.rows() >= 2 && slice.cols() >= 2, "CSI slice must be at least 2x2");
  RangeDopplerMap map;
  map.values = range_doppler_transform(slice);
  map.power = map.values.cwiseAbs2();
  const double dr = range_bin_m(params), dv = velocity_bin_mps(params);
  const Eigen::Index half = slice.cols() / 2;
  map.range_axis = Eigen::VectorXd::LinSpaced(slice.rows(), 0.0, dr * double(slice.rows() - 1));
  map.velocity_axis.resize(slice.cols());
  for (Eigen::Index b = 0; b < slice.cols(); ++b) map.velocity_axis(b) = dv * double(b - half);
  return map;
}

void CfarConfig::validate() const {
  require(p_fa > 0.0 && p_fa < 1.0, "p_fa must lie in (0, 1)");
  require(window_rows % 2 == 1 && window_cols % 2 == 1, "CFAR window dimensions must be odd");
  require(guard_rows >= 0 && guard_cols >= 0, "CFAR guard must be non-negative");
  require(window_rows / 2 > guard_rows && window_cols / 2 >= guard_cols,
          "CFAR window must be larger than the guard region");
  require(os_rank_fraction > 0.0 && os_rank_fraction <= 1.0, "rank fraction must lie in (0, 1]");
}

double threshold_factor(double p_fa, int n) {
  require(p_fa > 0.0 && p_fa < 1.0, "p_fa must lie in (0, 1)");
  require(n >= 1, "reference cell count must be positive");
  return std::pow(p_fa, -1.0 / n) - 1.0;
}

double osca_multiplier(const std::vector<int>& n, const std::vector<int>& k, double p_fa) {
  require(!n.empty() && n.size() == k.size(), "column statistics mismatch");
  const double cols = static_cast<double>(n.size());
  auto log_pfa = [&](double alpha) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n.size(); ++j)
      for (int i = 0; i < k[j]; ++i) acc += std::log((n[j] - i) / (n[j] - i + alpha / cols));
    return acc;
  };
  const double target = std::log(p_fa);
  double lo = 0.0, hi = 1.0;
  while (log_pfa(hi) > target) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (log_pfa(mid) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

int os_rank(int n, double fraction) { return std::clamp(static_cast<int>(std::floor(fraction * n)), 1, n); }

CfarResult empty_result(const Eigen::MatrixXd& power) {
  CfarResult r;
  r.threshold.resize(power.rows(), power.cols());
  r.hits.setConstant(power.rows(), power.cols(), false);
  return r;
}

}  // namespace

CfarResult osca_cfar_2d(const Eigen::MatrixXd& power, const CfarConfig& cfg) {
  cfg.validate();
  const int rows = static_cast<int>(power.rows()), cols = static_cast<int>(power.cols());
  require(cfg.window_rows <= rows && cfg.window_cols <= cols, "CFAR window larger than the map");
  const int hr = cfg.window_rows / 2, hc = cfg.window_cols / 2;
  const int gr = cfg.guard_rows, gc = cfg.guard_cols;

  // Per-cell column statistics for the full column and for a guard column.
  // A sorted (value, row) window slides down each column.
  Eigen::MatrixXd full(rows, cols), guarded(rows, cols);
  std::vector<std::pair<double, int>> window;
  window.reserve(static_cast<std::size_t>(2 * hr + 1));
  auto insert = [&](double v, int r) { window.insert(std::upper_bound(window.begin(), window.end(), std::pair{v, r}), {v, r}); };
  for (int j = 0; j < cols; ++j) {
    const double* col = power.col(j).data();
    window.clear();
    for (int r = 0; r < std::min(rows, hr); ++r) insert(col[r], r);
    for (int i = 0; i < rows; ++i) {
      if (i + hr < rows) insert(col[i + hr], i + hr);
      if (i - hr - 1 >= 0) {
        const std::pair<double, int> gone{col[i - hr - 1], i - hr - 1};
        window.erase(std::lower_bound(window.begin(), window.end(), gone));
      }
      const int n_full = static_cast<int>(window.size());
      const int n_guard = n_full - (std::min(rows - 1, i + gr) - std::max(0, i - gr) + 1);
      full(i, j) = window[static_cast<std::size_t>(os_rank(n_full, cfg.os_rank_fraction) - 1)].first;
      int k = os_rank(n_guard, cfg.os_rank_fraction);
      for (const auto& [v, r] : window)
        if (std::abs(r - i) > gr && --k == 0) {
          guarded(i, j) = v;
          break;
        }
    }
  }

  // Row-wise prefix sums so each window mean is O(1).
  Eigen::MatrixXd full_cum = Eigen::MatrixXd::Zero(rows, cols + 1), guard_cum = Eigen::MatrixXd::Zero(rows, cols + 1);
  for (int j = 0; j < cols; ++j) {
    full_cum.col(j + 1) = full_cum.col(j) + full.col(j);
    guard_cum.col(j + 1) = guard_cum.col(j) + guarded.col(j);
  }

  // Indexed by the window extent on each side; only border cells differ.
  std::vector<double> multipliers(static_cast<std::size_t>((hr + 1) * (hr + 1) * (hc + 1) * (hc + 1)), -1.0);
  auto multiplier = [&](int above, int below, int left, int right) {
    double& a = multipliers[static_cast<std::size_t>(((above * (hr + 1) + below) * (hc + 1) + left) * (hc + 1) + right)];
    if (a >= 0.0) return a;
    const int n_full = above + below + 1;
    const int n_guard = n_full - (std::min(above, gr) + std::min(below, gr) + 1);
    std::vector<int> n, k;
    for (int dj = -left; dj <= right; ++dj) {
      const int nj = std::abs(dj) <= gc ? n_guard : n_full;
      n.push_back(nj);
      k.push_back(os_rank(nj, cfg.os_rank_fraction));
    }
    a = osca_multiplier(n, k, cfg.p_fa);
    return a;
  };

  CfarResult out = empty_result(power);
  for (int i = 0; i < rows; ++i) {
    const int above = std::min(i, hr), below = std::min(rows - 1 - i, hr);
    for (int j = 0; j < cols; ++j) {
      const int left = std::min(j, hc), right = std::min(cols - 1 - j, hc);
      const int c0 = j - left, c1 = j + right;
      const int d0 = std::max(c0, j - gc), d1 = std::min(c1, j + gc);
      const double sum = full_cum(i, c1 + 1) - full_cum(i, c0) - (full_cum(i, d1 + 1) - full_cum(i, d0)) +
                         guard_cum(i, d1 + 1) - guard_cum(i, d0);
      const double mean = sum / (left + right + 1);
      out.threshold(i, j) = multiplier(above, below, left, right) * mean;
      out.hits(i, j) = power(i, j) > out.threshold(i, j);
    }
  }
  return out;
}

CfarResult ca_cfar_2d(const Eigen::MatrixXd& power, const CfarConfig& cfg) {
  cfg.validate();
  const int rows = static_cast<int>(power.rows()), cols = static_cast<int>(power.cols());
  require(cfg.window_rows <= rows && cfg.window_cols <= cols, "CFAR window larger than the map");
  const int hr = cfg.window_rows / 2, hc = cfg.window_cols / 2;
  const int gr = cfg.guard_rows, gc = cfg.guard_cols;

  Eigen::MatrixXd sat = Eigen::MatrixXd::Zero(rows + 1, cols + 1);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) sat(i + 1, j + 1) = power(i, j) + sat(i, j + 1) + sat(i + 1, j) - sat(i, j);
  auto box = [&](int r0, int r1, int c0, int c1) {
    return sat(r1 + 1, c1 + 1) - sat(r0, c1 + 1) - sat(r1 + 1, c0) + sat(r0, c0);
  };

  CfarResult out = empty_result(power);
  for (int i = 0; i < rows; ++i) {
    const int r0 = std::max(0, i - hr), r1 = std::min(rows - 1, i + hr);
    const int g0 = std::max(0, i - gr), g1 = std::min(rows - 1, i + gr);
    for (int j = 0; j < cols; ++j) {
      const int c0 = std::max(0, j - hc), c1 = std::min(cols - 1, j + hc);
      const int d0 = std::max(0, j - gc), d1 = std::min(cols - 1, j + gc);
      const int n_ref = (r1 - r0 + 1) * (c1 - c0 + 1) - (g1 - g0 + 1) * (d1 - d0 + 1);
      const double sum = box(r0, r1, c0, c1) - box(g0, g1, d0, d1);
      out.threshold(i, j) = threshold_factor(cfg.p_fa, n_ref) * sum;
      out.hits(i, j) = power(i, j) > out.threshold(i, j);
    }
  }
  return out;
}

std::vector<Cell> group_peaks(const Eigen::MatrixXd& power, const CfarResult& cfar) {
  const int rows = static_cast<int>(power.rows()), cols = static_cast<int>(power.cols());
  std::vector<Cell> peaks;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      if (!cfar.hits(i, j)) continue;
      const double v = power(i, j);
      bool top = true;
      for (int di = -1; di <= 1 && top; ++di)
        for (int dj = -1; dj <= 1 && top; ++dj) {
          const int r = i + di, c = j + dj;
          if ((di == 0 && dj == 0) || r < 0 || c < 0 || r >= rows || c >= cols) continue;
          const double w = power(r, c);
          const bool earlier = r < i || (r == i && c < j);
          if (w > v || (w == v && earlier)) top = false;
        }
      if (top) peaks.push_back({i, j});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [&](const Cell& a, const Cell& b) { return power(a.row, a.col) > power(b.row, b.col); });
  return peaks;
}

MatrixXcd assemble_manifold(const std::vector<RangeDopplerMap>& maps, const ArraySpec& array, int alpha,
                            int beta_col) {
  require(static_cast<int>(maps.size()) == array.size(), "missing element map for manifold assembly");
  MatrixXcd a(array.rows, array.cols);
  for (int p = 0; p < array.rows; ++p)
    for (int q = 0; q < array.cols; ++q) {
      const auto& m = maps[static_cast<std::size_t>(p * array.cols + q)].values;
      require(alpha >= 0 && alpha < m.rows() && beta_col >= 0 && beta_col < m.cols(), "cell outside the map");
      a(p, q) = cdouble(m(alpha, beta_col));
    }
  return a;
}

Eigen::MatrixXd integrate_power(const std::vector<RangeDopplerMap>& maps) {
  require(!maps.empty(), "no element maps to integrate");
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(maps.front().power.rows(), maps.front().power.cols());
  for (const auto& m : maps) acc += m.power.cast<double>();
  return acc / static_cast<double>(maps.size());
}

}  // namespace isac
