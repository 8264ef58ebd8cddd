#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctbody {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
// N x 3 point/vertex blocks, one row per point.
using Pts = Eigen::Matrix<double, Eigen::Dynamic, 3>;

enum class Axis : int { X = 0, Y = 1, Z = 2 };

inline int axis_index(Axis a) { return static_cast<int>(a); }

enum class ErrorCode {
  Config,
  Io,
  DimensionMismatch,
  InvalidRange,
  EmptyMesh,
  EmptyMask,
  EmptyDepthMap,
  NonPositiveVariance,
  SingularNormalEquations,
  MissingCamera,
  NoValidPixels,
  MissingBeta,
  NoIntersection,
  BadMask,
  Numeric,
  NotConverged,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::Config: return "Config";
    case ErrorCode::Io: return "Io";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidRange: return "InvalidRange";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::EmptyDepthMap: return "EmptyDepthMap";
    case ErrorCode::NonPositiveVariance: return "NonPositiveVariance";
    case ErrorCode::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::MissingCamera: return "MissingCamera";
    case ErrorCode::NoValidPixels: return "NoValidPixels";
    case ErrorCode::MissingBeta: return "MissingBeta";
    case ErrorCode::NoIntersection: return "NoIntersection";
    case ErrorCode::BadMask: return "BadMask";
    case ErrorCode::Numeric: return "Numeric";
    case ErrorCode::NotConverged: return "NotConverged";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Broad categories used for CLI exit codes.
enum class ErrorCategory { Config = 2, Io = 3, Numeric = 4, NotConverged = 5 };

inline ErrorCategory error_category(ErrorCode c) {
  switch (c) {
    case ErrorCode::Config:
    case ErrorCode::InvalidRange:
    case ErrorCode::BadMask:
    case ErrorCode::MissingBeta:
    case ErrorCode::MissingCamera:
      return ErrorCategory::Config;
    case ErrorCode::Io:
      return ErrorCategory::Io;
    case ErrorCode::NotConverged:
      return ErrorCategory::NotConverged;
    default:
      return ErrorCategory::Numeric;
  }
}

inline const char* error_category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Io: return "io";
    case ErrorCategory::NotConverged: return "not-converged";
    default: return "numeric";
  }
}

inline constexpr double kPi = 3.14159265358979323846;

// Deterministic RNG helpers. std::uniform_real_distribution and friends are
// implementation-defined, so all draws go through explicit bit manipulation
// to keep artifacts byte-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (cached pair).
  double normal() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    cache_ = r * std::sin(a);
    has_cache_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) { return n ? next_u64() % n : 0; }

 private:
  std::uint64_t state_;
  bool has_cache_ = false;
  double cache_ = 0.0;
};

inline double mm_to_m(double mm) { return mm * 1e-3; }
inline double m_to_mm(double m) { return m * 1e3; }
inline Vec3 mm_to_m(const Vec3& mm) { return mm * 1e-3; }
inline Vec3 m_to_mm(const Vec3& m) { return m * 1e3; }

// FNV-1a over a byte string; used for config hashing in run manifests.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace ctbody
