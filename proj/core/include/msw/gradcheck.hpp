#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msw/config.hpp"
#include "msw/data.hpp"
#include "msw/model.hpp"

namespace msw {

// Relative error |a - n| / max(|a|, |n|, kGradErrorFloor).
inline constexpr double kGradErrorFloor = 1e-6;

double relative_error(double analytic, double numeric);

struct ParamGradError {
  std::string name;
  std::size_t size = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradAudit {
  std::vector<ParamGradError> params;
  double max_rel_error = 0.0;
  std::string worst;  // parameter holding max_rel_error
  std::size_t checked = 0;
};

// Compares the backward pass of bce(forward(records)) against central
// differences with the given step, entry by entry, for every parameter.
// With `train` the dropout masks are drawn from `dropout_seed` afresh for
// every evaluation, so all evaluations see the same masks.
GradAudit gradient_audit(const MswConfig& cfg, const ParamStore& params,
                         std::span<const EcgRecord* const> records, double step = 1e-5,
                         bool train = true, std::uint64_t dropout_seed = 0);

// Generic audit point: initialised parameters perturbed with N(0, 0.1^2)
// and `records` random records with N(0, 1) samples and random labels.
GradAudit gradient_audit(const MswConfig& cfg, std::uint64_t seed, std::size_t records = 2,
                         double step = 1e-5);

}  // namespace msw
