#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rfcm/grad_check.hpp"
#include "rfcm/model.hpp"

namespace rfcm {

struct GradSuiteResult {
  std::string name;
  GradCheckReport report;
};

/// Finite-difference checks of every differentiable op on random inputs.
/// Each op's output is contracted with a fixed random tensor so that
/// invariants such as sum(softmax) = 1 do not hide errors.
std::vector<GradSuiteResult> run_ops_gradcheck(std::uint64_t seed, const GradCheckOptions& options = {});

/// Small full model: k=2, widths 16, 2 heads, one layer of each kind,
/// I=8, N_v=30.
ModelConfig gradcheck_model_config();

GradCheckOptions model_gradcheck_options();

/// The total training loss of the small model on a 2-episode batch,
/// checked over every parameter.
GradCheckReport run_model_gradcheck(std::uint64_t seed, const GradCheckOptions& options = model_gradcheck_options());

}  // namespace rfcm
