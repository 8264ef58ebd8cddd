#pragma once

#include <optional>
#include <string>

#include "ctbody/body_model.hpp"
#include "ctbody/core.hpp"

namespace ctbody {

enum class MixPolicy { CtOnly, DepthOnly, Average };

inline const char* mix_policy_name(MixPolicy p) {
  switch (p) {
    case MixPolicy::CtOnly: return "ct_only";
    case MixPolicy::DepthOnly: return "depth_only";
    case MixPolicy::Average: return "average";
  }
  return "unknown";
}

inline MixPolicy mix_policy_from_name(const std::string& name) {
  if (name == "ct_only") return MixPolicy::CtOnly;
  if (name == "depth_only") return MixPolicy::DepthOnly;
  if (name == "average") return MixPolicy::Average;
  throw Error(ErrorCode::Config, "unknown mix policy: " + name);
}

/// Combines the shape estimates with the pose estimate into final body
/// parameters. Theta and t pass through untouched.
inline BodyParams mix(const std::optional<VecX>& beta_ct, const std::optional<VecX>& beta_depth,
                      const MatX& theta, const Vec3& trans, MixPolicy policy) {
  const auto require = [](const std::optional<VecX>& beta, const char* which) -> const VecX& {
    if (!beta) throw Error(ErrorCode::MissingBeta, std::string("policy requires ") + which);
    return *beta;
  };
  BodyParams out;
  switch (policy) {
    case MixPolicy::CtOnly:
      out.beta = require(beta_ct, "beta from CT");
      break;
    case MixPolicy::DepthOnly:
      out.beta = require(beta_depth, "beta from depth");
      break;
    case MixPolicy::Average: {
      const VecX& a = require(beta_ct, "beta from CT");
      const VecX& b = require(beta_depth, "beta from depth");
      if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch, "beta_ct and beta_depth sizes differ");
      }
      out.beta = 0.5 * (a + b);
      break;
    }
  }
  out.theta = theta;
  out.trans = trans;
  return out;
}

}  // namespace ctbody
