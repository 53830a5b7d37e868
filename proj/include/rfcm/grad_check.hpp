#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rfcm/autodiff.hpp"

namespace rfcm {

/// A tensor whose entries are perturbed; f must read it through Tape::bind.
struct GradTarget {
  std::string name;
  Tensor* tensor;
};

struct GradCheckEntry {
  std::string target;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> worst;  // descending by rel_error
  std::vector<std::pair<std::string, double>> per_target;  // worst error per target, input order

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// |ad - fd| / (|ad| + |fd| + 1e-12)
double relative_error(double analytic, double numeric);

struct GradCheckOptions {
  double step = 1e-5;
  /// 2: (f(x+h) - f(x-h)) / 2h.  4: the five-point stencil, whose smaller
  /// truncation error allows a larger h and so less cancellation.
  int order = 2;
  std::size_t keep_worst = 10;
};

/// Compares reverse-mode gradients of the scalar f against central
/// differences, element by element.
GradCheckReport grad_check(const std::function<ad::Var(ad::Tape&)>& f, const std::vector<GradTarget>& targets,
                           const GradCheckOptions& options = {});

/// Human-readable summary: worst entries and the per-target maxima.
std::string format_report(const GradCheckReport& report, double tolerance);

}  // namespace rfcm
