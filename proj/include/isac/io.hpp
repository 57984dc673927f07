#pragma once

#include <string>

#include "isac/geometry.hpp"
#include "isac/pointcloud.hpp"
#include "isac/scene.hpp"

namespace isac {

/// Writes through a sibling temporary file and renames it into place.
/// Missing parent directories are created.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);
void save_scene(const std::string& path, const Scene& scene);
Scene load_scene(const std::string& path);

/// Text cloud: header `# isac-pc4d v1 count=N` then `x y z v node_id` lines.
std::string format_pc4d(const PointCloud4D& cloud);
PointCloud4D parse_pc4d(const std::string& text);
void save_pc4d(const std::string& path, const PointCloud4D& cloud);
PointCloud4D load_pc4d(const std::string& path);

/// ASCII PLY vertex list with x, y, z, velocity, node_id properties.
std::string format_ply(const PointCloud4D& cloud);

/// int32 N followed by N^3 float32 values in storage order.
void save_grid(const std::string& path, const Grid3D& grid);
Grid3D load_grid(const std::string& path);

/// int32 rows, int32 cols, then row-major float32 values.
void save_matrix_f32(const std::string& path, const Eigen::MatrixXd& m);

Points positions_of(const PointCloud4D& cloud);
PointCloud4D cloud_from_positions(const Points& pts, int node_id = 0);

}  // namespace isac
