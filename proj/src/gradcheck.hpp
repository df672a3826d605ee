#pragma once

// Central finite-difference verification of reverse-mode gradients.
// A check case is a closure that, given the current parameter vectors,
// builds a fresh double-precision tape and returns the scalar loss ref.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace cn::ad {

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t params_checked = 0;
  bool passed = false;
  double tolerance = 0.0;
};

// builder receives the tape and must: create leaves for each parameter
// vector (in order), build the graph, and return {loss ref, {param refs}}.
using GraphBuilder = std::function<std::pair<int, std::vector<int>>(
    Tape<double>&, const std::vector<std::vector<double>>&)>;

inline GradCheckReport grad_check(const std::string& name, const GraphBuilder& build,
                                  std::vector<std::vector<double>> params,
                                  double tolerance, double h = 1e-5) {
  auto eval = [&](const std::vector<std::vector<double>>& p) {
    Tape<double> tape;
    auto [loss, refs] = build(tape, p);
    return tape.at(loss).val[0];
  };

  // analytic gradients
  Tape<double> tape;
  auto [loss, refs] = build(tape, params);
  tape.backward(loss);

  GradCheckReport rep;
  rep.name = name;
  rep.tolerance = tolerance;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t j = 0; j < params[pi].size(); ++j) {
      const double orig = params[pi][j];
      params[pi][j] = orig + h;
      const double fp = eval(params);
      params[pi][j] = orig - h;
      const double fm = eval(params);
      params[pi][j] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = tape.at(refs[pi]).grad[j];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      rep.max_rel_err = std::max(rep.max_rel_err, std::abs(fd - an) / denom);
      ++rep.params_checked;
    }
  }
  rep.passed = rep.max_rel_err < tolerance;
  return rep;
}

}  // namespace cn::ad
