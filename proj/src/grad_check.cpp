#include "rfcm/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "rfcm/errors.hpp"

namespace rfcm {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
}

GradCheckReport grad_check(const std::function<ad::Var(ad::Tape&)>& f, const std::vector<GradTarget>& targets,
                           const GradCheckOptions& options) {
  const double step = options.step;
  const std::size_t keep_worst = options.keep_worst;
  if (step <= 0.0) throw ContractError("grad_check step must be positive");
  if (options.order != 2 && options.order != 4) throw ContractError("grad_check order must be 2 or 4");
  std::vector<Tensor> analytic;
  {
    ad::Tape tape;
    const ad::Var loss = f(tape);
    tape.backward(loss);
    for (const auto& t : targets) {
      const Tensor* g = tape.grad_of(*t.tensor);
      analytic.push_back(g ? *g : Tensor(t.tensor->shape()));
    }
  }
  auto evaluate = [&] {
    ad::Tape tape(false);
    const ad::Var loss = f(tape);
    if (loss.value().size() != 1) throw ContractError("grad_check needs a scalar function");
    return loss.value()[0];
  };

  GradCheckReport report;
  std::vector<GradCheckEntry> entries;
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    Tensor& x = *targets[ti].tensor;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      auto at = [&](double offset) {
        x[i] = saved + offset;
        return evaluate();
      };
      double numeric;
      if (options.order == 2) {
        numeric = (at(step) - at(-step)) / (2.0 * step);
      } else {
        numeric = (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
      }
      x[i] = saved;
      GradCheckEntry e{targets[ti].name, i, analytic[ti][i], numeric, 0.0};
      e.rel_error = relative_error(e.analytic, e.numeric);
      worst = std::max(worst, e.rel_error);
      ++report.checked;
      entries.push_back(std::move(e));
      if (entries.size() > 4 * keep_worst + 64) {
        std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(keep_worst), entries.end(),
                          [](const auto& a, const auto& b) { return a.rel_error > b.rel_error; });
        entries.resize(keep_worst);
      }
    }
    report.per_target.emplace_back(targets[ti].name, worst);
    report.max_rel_error = std::max(report.max_rel_error, worst);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.rel_error > b.rel_error; });
  if (entries.size() > keep_worst) entries.resize(keep_worst);
  report.worst = std::move(entries);
  return report;
}

std::string format_report(const GradCheckReport& report, double tolerance) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "checked %zu elements, max relative error %.3e (tolerance %.1e): %s\n",
                report.checked, report.max_rel_error, tolerance, report.passed(tolerance) ? "PASS" : "FAIL");
  out += line;
  out += "per parameter:\n";
  for (const auto& [name, err] : report.per_target) {
    std::snprintf(line, sizeof line, "  %-40s %.3e\n", name.c_str(), err);
    out += line;
  }
  out += "worst elements:\n";
  for (const auto& e : report.worst) {
    std::snprintf(line, sizeof line, "  %s[%zu] analytic %.10e numeric %.10e rel %.3e\n", e.target.c_str(), e.index,
                  e.analytic, e.numeric, e.rel_error);
    out += line;
  }
  return out;
}

}  // namespace rfcm
