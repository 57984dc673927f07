#include "isac/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "isac/io.hpp"
#include "isac/parallel.hpp"

using nlohmann::json;

namespace isac {

namespace {

const char* variant_name(CfarVariant v) {
  switch (v) {
    case CfarVariant::OSCA2D: return "osca2d";
    case CfarVariant::CA2D: return "ca2d";
    case CfarVariant::CA1D: return "ca1d";
  }
  return "?";
}

CfarVariant variant_from(const std::string& s) {
  if (s == "osca2d") return CfarVariant::OSCA2D;
  if (s == "ca2d") return CfarVariant::CA2D;
  if (s == "ca1d") return CfarVariant::CA1D;
  throw Error("unknown CFAR variant '" + s + "'");
}

// Rejects keys outside `allowed` so typos do not silently fall back to defaults.
void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  require(j.is_object(), where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    require(ok.count(it.key()) == 1, "unknown config key '" + where + "." + it.key() + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_vec(const json& j, const char* key, Vec3& out) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  require(a.is_array() && a.size() == 3, std::string(key) + " must be a 3-vector");
  out = Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

void read_range(const json& j, const char* key, Range& out) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  require(a.is_array() && a.size() == 2, std::string(key) + " must be [lo, hi]");
  out = {a[0].get<double>(), a[1].get<double>()};
}

void read_pair(const json& j, const char* key, int& a, int& b) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  require(v.is_array() && v.size() == 2, std::string(key) + " must be [rows, cols]");
  a = v[0].get<int>();
  b = v[1].get<int>();
}

void read_cfar(const json& j, const std::string& where, CfarConfig& c) {
  check_keys(j, where, {"window", "guard", "p_fa", "os_rank_fraction", "variant"});
  read_pair(j, "window", c.window_rows, c.window_cols);
  read_pair(j, "guard", c.guard_rows, c.guard_cols);
  read(j, "p_fa", c.p_fa);
  read(j, "os_rank_fraction", c.os_rank_fraction);
  if (j.contains("variant")) c.variant = variant_from(j.at("variant").get<std::string>());
}

json cfar_json(const CfarConfig& c) {
  return {{"window", {c.window_rows, c.window_cols}},
          {"guard", {c.guard_rows, c.guard_cols}},
          {"p_fa", c.p_fa},
          {"os_rank_fraction", c.os_rank_fraction},
          {"variant", variant_name(c.variant)}};
}

void read_period(const json& j, const std::string& where, PeriodConfig& p) {
  check_keys(j, where,
             {"carrier_hz", "scs_hz", "n_subcarriers", "n_symbols", "cp_fraction", "n_slots", "tx", "rx",
              "spacing_wavelengths", "rdm_cfar", "doa"});
  read(j, "carrier_hz", p.ofdm.carrier_hz);
  read(j, "scs_hz", p.ofdm.scs_hz);
  read(j, "n_subcarriers", p.ofdm.n_subcarriers);
  read(j, "n_symbols", p.ofdm.n_symbols);
  read(j, "cp_fraction", p.ofdm.cp_fraction);
  read(j, "n_slots", p.ofdm.n_slots);
  read_pair(j, "tx", p.tx_rows, p.tx_cols);
  read_pair(j, "rx", p.rx_rows, p.rx_cols);
  read(j, "spacing_wavelengths", p.spacing_wavelengths);
  if (j.contains("rdm_cfar")) read_cfar(j.at("rdm_cfar"), where + ".rdm_cfar", p.rdm_cfar);
  if (j.contains("doa")) {
    const json& d = j.at("doa");
    check_keys(d, where + ".doa",
               {"subarray_len", "grid_step_deg", "spectrum_cfar", "eig_p_fa", "min_correlation", "max_candidates",
                "forward_backward"});
    read(d, "subarray_len", p.doa.subarray_len);
    read(d, "grid_step_deg", p.doa.grid_step_deg);
    if (d.contains("spectrum_cfar")) read_cfar(d.at("spectrum_cfar"), where + ".doa.spectrum_cfar", p.doa.spectrum_cfar);
    read(d, "eig_p_fa", p.doa.eig_p_fa);
    read(d, "min_correlation", p.doa.min_correlation);
    read(d, "max_candidates", p.doa.max_candidates);
    read(d, "forward_backward", p.doa.forward_backward);
  }
}

json period_json(const PeriodConfig& p) {
  return {{"carrier_hz", p.ofdm.carrier_hz},
          {"scs_hz", p.ofdm.scs_hz},
          {"n_subcarriers", p.ofdm.n_subcarriers},
          {"n_symbols", p.ofdm.n_symbols},
          {"cp_fraction", p.ofdm.cp_fraction},
          {"n_slots", p.ofdm.n_slots},
          {"tx", {p.tx_rows, p.tx_cols}},
          {"rx", {p.rx_rows, p.rx_cols}},
          {"spacing_wavelengths", p.spacing_wavelengths},
          {"rdm_cfar", cfar_json(p.rdm_cfar)},
          {"doa",
           {{"subarray_len", p.doa.subarray_len},
            {"grid_step_deg", p.doa.grid_step_deg},
            {"spectrum_cfar", cfar_json(p.doa.spectrum_cfar)},
            {"eig_p_fa", p.doa.eig_p_fa},
            {"min_correlation", p.doa.min_correlation},
            {"max_candidates", p.doa.max_candidates},
            {"forward_backward", p.doa.forward_backward}}}};
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

}  // namespace

void RunConfig::validate() const {
  require(std::isfinite(snr_db), "snr_db must be finite");
  require(max_cells >= 1, "max_cells must be positive");
  require(ue_gate_bins > 0.0, "ue_gate_bins must be positive");
  require(splits.train >= 0 && splits.val >= 0 && splits.test >= 0 && splits.train + splits.val + splits.test > 0,
          "split weights must be non-negative with a positive sum");
  require(scene.surface_density > 0.0, "surface_density must be positive");
  require(scene.buildings_min >= 0 && scene.buildings_max >= scene.buildings_min, "invalid building count range");
  require(scene.vehicles_min >= 0 && scene.vehicles_max >= scene.vehicles_min, "invalid vehicle count range");
  for (const PeriodConfig* p : {&dl, &ul}) {
    build_params(p->ofdm, Period::DL);
    p->rdm_cfar.validate();
    p->doa.spectrum_cfar.validate();
    require(p->tx_rows >= 1 && p->tx_cols >= 1 && p->rx_rows >= 1 && p->rx_cols >= 1, "array sizes must be positive");
    require(p->spacing_wavelengths > 0.0, "element spacing must be positive");
    require(p->doa.subarray_len >= 1, "subarray length must be positive");
    require(p->doa.min_correlation > 0.0 && p->doa.min_correlation <= 1.0, "min_correlation must lie in (0, 1]");
    require(p->doa.eig_p_fa > 0.0 && p->doa.eig_p_fa < 1.0, "eig_p_fa must lie in (0, 1)");
    require(p->doa.max_candidates >= 1, "max_candidates must be positive");
  }
  if (fusion.radius) require(*fusion.radius >= 0.0, "fusion radius must be non-negative");
}

RunConfig default_run_config() {
  RunConfig c;
  c.dl.ofdm = default_ofdm_config(Period::DL);
  c.ul.ofdm = default_ofdm_config(Period::UL);
  c.ul.tx_rows = c.ul.tx_cols = 1;
  c.ul.rx_rows = c.ul.rx_cols = 8;
  c.ul.doa.subarray_len = 4;
  return c;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c = default_run_config();
  try {
    const json j = json::parse(text);
    check_keys(j, "config",
               {"seed", "snr_db", "max_cells", "ue_gate_bins", "scene", "dl", "ul", "visibility", "fusion", "splits"});
    read(j, "seed", c.seed);
    read(j, "snr_db", c.snr_db);
    read(j, "max_cells", c.max_cells);
    read(j, "ue_gate_bins", c.ue_gate_bins);
    if (j.contains("scene")) {
      const json& s = j.at("scene");
      check_keys(s, "scene",
                 {"world", "buildings", "vehicles", "building_footprint", "building_height", "vehicle_size",
                  "vehicle_speed", "box_clearance", "n_bs", "n_ue", "n_uav", "bs_height", "ue_height", "uav_height",
                  "bs_yaw_jitter_deg", "node_clearance", "max_retries", "surface_density", "reflect_var"});
      SceneConfig& sc = c.scene;
      read_vec(s, "world", sc.world);
      read_pair(s, "buildings", sc.buildings_min, sc.buildings_max);
      read_pair(s, "vehicles", sc.vehicles_min, sc.vehicles_max);
      read_range(s, "building_footprint", sc.building_footprint);
      read_range(s, "building_height", sc.building_height);
      read_vec(s, "vehicle_size", sc.vehicle_size);
      read_range(s, "vehicle_speed", sc.vehicle_speed);
      read(s, "box_clearance", sc.box_clearance);
      read(s, "n_bs", sc.n_bs);
      read(s, "n_ue", sc.n_ue);
      read(s, "n_uav", sc.n_uav);
      read_range(s, "bs_height", sc.bs_height);
      read(s, "ue_height", sc.ue_height);
      read_range(s, "uav_height", sc.uav_height);
      read(s, "bs_yaw_jitter_deg", sc.bs_yaw_jitter_deg);
      read(s, "node_clearance", sc.node_clearance);
      read(s, "max_retries", sc.max_retries);
      read(s, "surface_density", sc.surface_density);
      read(s, "reflect_var", sc.reflect_var);
    }
    if (j.contains("dl")) read_period(j.at("dl"), "dl", c.dl);
    if (j.contains("ul")) read_period(j.at("ul"), "ul", c.ul);
    if (j.contains("visibility")) {
      const json& v = j.at("visibility");
      check_keys(v, "visibility", {"sector_margin_deg", "min_range"});
      read(v, "sector_margin_deg", c.visibility.sector_margin_deg);
      read(v, "min_range", c.visibility.min_range);
    }
    if (j.contains("fusion")) {
      const json& f = j.at("fusion");
      check_keys(f, "fusion", {"radius", "probes", "r_max", "dr", "eps_h", "run"});
      if (f.contains("radius")) {
        const json& r = f.at("radius");
        if (r.is_string()) {
          require(r.get<std::string>() == "auto", "fusion.radius must be \"auto\" or a number");
          c.fusion.radius.reset();
        } else {
          c.fusion.radius = r.get<double>();
        }
      }
      read(f, "probes", c.fusion.auto_opts.probes);
      read(f, "r_max", c.fusion.auto_opts.r_max);
      read(f, "dr", c.fusion.auto_opts.dr);
      read(f, "eps_h", c.fusion.auto_opts.eps_h);
      read(f, "run", c.fusion.auto_opts.run);
    }
    if (j.contains("splits")) {
      const json& s = j.at("splits");
      check_keys(s, "splits", {"train", "val", "test"});
      read(s, "train", c.splits.train);
      read(s, "val", c.splits.val);
      read(s, "test", c.splits.test);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  try {
    return parse_run_config(read_file(path));
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

std::string run_config_to_json(const RunConfig& c) {
  const SceneConfig& s = c.scene;
  json j;
  j["seed"] = c.seed;
  j["snr_db"] = c.snr_db;
  j["max_cells"] = c.max_cells;
  j["ue_gate_bins"] = c.ue_gate_bins;
  j["scene"] = {{"world", vec_json(s.world)},
                {"buildings", {s.buildings_min, s.buildings_max}},
                {"vehicles", {s.vehicles_min, s.vehicles_max}},
                {"building_footprint", range_json(s.building_footprint)},
                {"building_height", range_json(s.building_height)},
                {"vehicle_size", vec_json(s.vehicle_size)},
                {"vehicle_speed", range_json(s.vehicle_speed)},
                {"box_clearance", s.box_clearance},
                {"n_bs", s.n_bs},
                {"n_ue", s.n_ue},
                {"n_uav", s.n_uav},
                {"bs_height", range_json(s.bs_height)},
                {"ue_height", s.ue_height},
                {"uav_height", range_json(s.uav_height)},
                {"bs_yaw_jitter_deg", s.bs_yaw_jitter_deg},
                {"node_clearance", s.node_clearance},
                {"max_retries", s.max_retries},
                {"surface_density", s.surface_density},
                {"reflect_var", s.reflect_var}};
  j["dl"] = period_json(c.dl);
  j["ul"] = period_json(c.ul);
  j["visibility"] = {{"sector_margin_deg", c.visibility.sector_margin_deg}, {"min_range", c.visibility.min_range}};
  j["fusion"] = {{"probes", c.fusion.auto_opts.probes},
                 {"r_max", c.fusion.auto_opts.r_max},
                 {"dr", c.fusion.auto_opts.dr},
                 {"eps_h", c.fusion.auto_opts.eps_h},
                 {"run", c.fusion.auto_opts.run}};
  if (c.fusion.radius)
    j["fusion"]["radius"] = *c.fusion.radius;
  else
    j["fusion"]["radius"] = "auto";
  j["splits"] = {{"train", c.splits.train}, {"val", c.splits.val}, {"test", c.splits.test}};
  return j.dump(2) + "\n";
}

ArraySpec sensing_array(const PeriodConfig& pc, double wavelength, Period period) {
  const double d = pc.spacing_wavelengths * wavelength;
  if (period == Period::UL) return {pc.rx_rows, pc.rx_cols, d, ArrayRole::Rx};
  const ArraySpec tx{pc.tx_rows, pc.tx_cols, d, ArrayRole::Tx};
  const ArraySpec rx{pc.rx_rows, pc.rx_cols, pc.tx_cols * d, ArrayRole::Rx};
  return virtual_aperture(tx, rx);
}

Pose node_pose(const SensingNode& node) { return {node.position, node.orientation}; }

const SensingNode& nearest_bs(const Scene& scene, const Vec3& p) {
  const SensingNode* best = nullptr;
  for (const auto& n : scene.nodes)
    if (n.kind == NodeKind::BS && (!best || (n.position - p).norm() < (best->position - p).norm())) best = &n;
  require(best != nullptr, "scene has no BS to receive the uplink");
  return *best;
}

RdProcessing process_paths(const std::vector<PathParams>& paths, const OfdmParams& params, const ArraySpec& array,
                           const CfarConfig& cfar, double noise_var, std::uint64_t seed, int max_cells) {
  const int elements = array.size();
  const int slots = params.num_slots;
  const int chunk = std::max(1, thread_budget());
  auto element_map = [&](int e, int slot) {
    MatrixXcf slice = synthesize_element(paths, params, array, e / array.cols, e % array.cols, slot);
    add_element_noise(slice, noise_var, seed, slot, e);
    return range_doppler_transform(slice);
  };

  // Maps are kept for the manifold pass when they fit, otherwise recomputed.
  constexpr double kCacheBytes = 256.0 * (1 << 20);
  const bool cache = double(elements) * slots * params.num_subcarriers * params.num_symbols * sizeof(cfloat) <= kCacheBytes;
  std::vector<MatrixXcf> maps(cache ? static_cast<std::size_t>(elements * slots) : 0);

  RdProcessing out;
  out.power = Eigen::MatrixXd::Zero(params.num_subcarriers, params.num_symbols);
  std::vector<Eigen::MatrixXf> part(static_cast<std::size_t>(chunk));
  for (int s = 0; s < slots; ++s)
    for (int e0 = 0; e0 < elements; e0 += chunk) {
      const int n = std::min(chunk, elements - e0);
      parallel_for(n, [&](int i) {
        MatrixXcf rdm = element_map(e0 + i, s);
        part[static_cast<std::size_t>(i)] = rdm.cwiseAbs2();
        if (cache) maps[static_cast<std::size_t>(s * elements + e0 + i)] = std::move(rdm);
      });
      for (int i = 0; i < n; ++i) out.power += part[static_cast<std::size_t>(i)].cast<double>();
    }
  out.power /= static_cast<double>(elements) * slots;

  const CfarResult det = cfar.variant == CfarVariant::OSCA2D ? osca_cfar_2d(out.power, cfar) : ca_cfar_2d(out.power, cfar);
  out.threshold = det.threshold;
  std::vector<Cell> peaks = group_peaks(out.power, det);
  if (static_cast<int>(peaks.size()) > max_cells) peaks.resize(static_cast<std::size_t>(max_cells));

  const double dr = range_bin_m(params), dv = velocity_bin_mps(params);
  const int half = params.num_symbols / 2;
  for (const Cell& c : peaks) {
    CellManifolds cm;
    cm.cell.alpha = c.row;
    cm.cell.beta_col = c.col;
    cm.cell.beta = c.col - half;
    cm.cell.range_m = c.row * dr;
    cm.cell.velocity_mps = cm.cell.beta * dv;
    cm.cell.power = out.power(c.row, c.col);
    cm.slots.assign(static_cast<std::size_t>(slots), MatrixXcd::Zero(array.rows, array.cols));
    out.cells.push_back(std::move(cm));
  }
  if (out.cells.empty()) return out;

  for (int s = 0; s < slots; ++s)
    parallel_for(elements, [&](int e) {
      MatrixXcf fresh;
      if (!cache) fresh = element_map(e, s);
      const MatrixXcf& rdm = cache ? maps[static_cast<std::size_t>(s * elements + e)] : fresh;
      for (auto& cm : out.cells)
        cm.slots[static_cast<std::size_t>(s)](e / array.cols, e % array.cols) = cdouble(rdm(cm.cell.alpha, cm.cell.beta_col));
    });
  return out;
}

SenseResult sense(const Scene& scene, const ScattererSet& scatterers, const RunConfig& cfg, int node_id,
                  Period period) {
  const SensingNode& node = scene.node(node_id);
  if (period == Period::DL)
    require(node.kind == NodeKind::BS, std::string("downlink sensing needs a BS node; node ") +
                                           std::to_string(node_id) + " is a " + to_string(node.kind));
  else
    require(node.kind != NodeKind::BS, "uplink sensing needs a UE or UAV transmitter");
  const SensingNode& rx = period == Period::DL ? node : nearest_bs(scene, node.position);
  const SensingNode& tx = node;
  const PeriodConfig& pc = period == Period::DL ? cfg.dl : cfg.ul;

  const OfdmParams params = build_params(pc.ofdm, period);
  const double lambda = params.wavelength_m();
  const ArraySpec array = sensing_array(pc, lambda, period);
  const auto records = visible_scatterers(scene, scatterers, tx, rx, period, cfg.visibility);
  const auto paths = path_params(scene, scatterers, records, rx, params);

  SenseResult res;
  res.period = period;
  res.rx_id = rx.id;
  res.tx_id = tx.id;
  res.paths = paths.size();
  res.noise_var = noise_var_for_snr(paths, cfg.snr_db);
  const std::uint64_t seed =
      mix_seed(scene.seed, 0x5E45E000ull + static_cast<std::uint64_t>(period == Period::DL ? 0 : 1) +
                               16 * static_cast<std::uint64_t>(rx.id) + 4096 * static_cast<std::uint64_t>(tx.id));
  RdProcessing rd = process_paths(paths, params, array, pc.rdm_cfar, res.noise_var, seed, cfg.max_cells);
  res.power = std::move(rd.power);
  res.threshold = std::move(rd.threshold);
  for (const auto& c : rd.cells) res.cells.push_back(c.cell);
  res.detections = estimate_4d(rd.cells, array, lambda, pc.doa);
  res.manifolds = std::move(rd.cells);
  res.array = array;
  res.wavelength = lambda;

  const Pose pose = node_pose(rx);
  if (period == Period::DL) {
    for (const auto& d : res.detections)
      if (d.range_m > 0.0) res.cloud.add(vue_position(d, pose), d.velocity_mps, rx.id);
    return res;
  }

  // Uplink: the shortest path near the reported UE position is the direct
  // path; it refines the UE estimate and is not an environment point.
  const double gate = std::max(cfg.ue_gate_bins * range_bin_m(params), 1.0);
  std::vector<Vec3> apparent;
  for (const auto& d : res.detections) apparent.push_back(d.range_m > 0.0 ? vue_position(d, pose) : rx.position);
  Vec3 ue = tx.position;
  std::size_t los = res.detections.size();
  for (std::size_t i = 0; i < res.detections.size(); ++i)
    if (res.detections[i].range_m > 0.0 && (los == res.detections.size() || res.detections[i].range_m < res.detections[los].range_m))
      los = i;
  if (los < res.detections.size() && (apparent[los] - tx.position).norm() <= gate) {
    ue = apparent[los];
    res.ue_estimate = ue;
  }
  const double direct = (ue - rx.position).norm();
  for (std::size_t i = 0; i < res.detections.size(); ++i) {
    const auto& d = res.detections[i];
    if (d.range_m <= direct + 1e-9 || (apparent[i] - ue).norm() <= gate) continue;
    Vec3 s;
    try {
      s = resolve_mirror({rx.position, ue, apparent[i]});
    } catch (const Error&) {
      continue;
    }
    const bool inside = (s.array() >= -1.0).all() && (s.array() <= scene.world.array() + 1.0).all();
    if (inside) res.cloud.add(s, d.velocity_mps, tx.id);
  }
  return res;
}

}  // namespace isac
