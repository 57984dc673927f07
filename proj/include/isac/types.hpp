#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace isac {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using cdouble = std::complex<double>;
using cfloat = std::complex<float>;

using MatrixXcd = Eigen::MatrixXcd;
using VectorXcd = Eigen::VectorXcd;
using MatrixXcf = Eigen::MatrixXcf;

/// Propagation speed used throughout the simulator. The rounded value keeps
/// bin arithmetic (e.g. 2*R*df*Nc/c) identical to the hand-computed tables.
inline constexpr double kSpeedOfLight = 3.0e8;
inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

enum class Period { DL, UL };

inline const char* to_string(Period p) { return p == Period::DL ? "dl" : "ul"; }

/// Thrown for violated preconditions and infeasible requests.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(what);
}

/// SplitMix64 finalizer; derives independent stream seeds from (seed, tag).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace isac
