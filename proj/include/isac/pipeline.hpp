#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "isac/channel.hpp"
#include "isac/doa.hpp"
#include "isac/geometry.hpp"
#include "isac/rdm.hpp"
#include "isac/scene.hpp"
#include "isac/waveform.hpp"

namespace isac {

struct PeriodConfig {
  OfdmConfig ofdm;
  int tx_rows = 8, tx_cols = 8;
  int rx_rows = 2, rx_cols = 2;
  double spacing_wavelengths = 0.5;  ///< element spacing d / lambda
  CfarConfig rdm_cfar;
  DoaConfig doa;
};

struct FusionConfig {
  std::optional<double> radius;  ///< empty selects the radius automatically
  FusionRadiusOptions auto_opts;
};

struct SplitConfig {
  double train = 10000.0;
  double val = 100.0;
  double test = 100.0;
};

struct RunConfig {
  SceneConfig scene;
  PeriodConfig dl;
  PeriodConfig ul;
  double snr_db = 10.0;
  VisibilityOptions visibility;
  FusionConfig fusion;
  SplitConfig splits;
  int max_cells = 256;          ///< strongest range-Doppler cells passed to DoA
  double ue_gate_bins = 3.0;    ///< LoS gate around the reported UE position, in range bins
  std::uint64_t seed = 1;

  void validate() const;
};

/// Table-I numerology with the scene defaults.
RunConfig default_run_config();

/// Parses a JSON document; keys absent from the document keep their defaults
/// and unknown keys are rejected.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);

/// Receive aperture actually used for sensing in a period: the DL virtual
/// array or the UL real Rx array, with spacings in metres.
ArraySpec sensing_array(const PeriodConfig& pc, double wavelength, Period period);

struct SenseResult {
  Period period = Period::DL;
  int rx_id = 0;
  int tx_id = 0;
  std::size_t paths = 0;
  double noise_var = 0.0;
  Eigen::MatrixXd power;      ///< integrated over elements and slots
  Eigen::MatrixXd threshold;  ///< CFAR threshold on `power`
  std::vector<RdCell> cells;
  std::vector<CellManifolds> manifolds;  ///< per cell, same order as `cells`
  ArraySpec array;
  double wavelength = 0.0;
  std::vector<Detection4D> detections;
  std::optional<Vec3> ue_estimate;  ///< UL only
  PointCloud4D cloud;               ///< world frame
};

Pose node_pose(const SensingNode& node);

/// Full chain for one link. DL: `node_id` is a BS acting as Tx and Rx. UL:
/// `node_id` is the transmitting UE/UAV and the nearest BS receives.
SenseResult sense(const Scene& scene, const ScattererSet& scatterers, const RunConfig& cfg, int node_id,
                  Period period);

/// Range-Doppler processing of explicit paths: CSI per slot, element RDMs,
/// integrated-power CFAR and per-slot manifolds of the strongest cells.
struct RdProcessing {
  Eigen::MatrixXd power;
  Eigen::MatrixXd threshold;
  std::vector<CellManifolds> cells;
};

RdProcessing process_paths(const std::vector<PathParams>& paths, const OfdmParams& params, const ArraySpec& array,
                           const CfarConfig& cfar, double noise_var, std::uint64_t seed, int max_cells);

/// Nearest BS to a point.
const SensingNode& nearest_bs(const Scene& scene, const Vec3& p);

}  // namespace isac
