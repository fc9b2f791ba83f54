#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vqsf/ad/ops.hpp"

namespace vqsf::ad {

struct GradCheckOptions {
  double step = 1e-5;        // central-difference h
  double tolerance = 1e-5;   // max relative error
  std::size_t cases = 10;    // random shapes/seeds per op
  std::uint64_t seed = 0;
};

struct GradCheckCase {
  std::string op;
  std::string shapes;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  bool passed() const;
  // Worst error per op, in registry order.
  std::vector<std::pair<std::string, double>> per_op() const;
};

// Largest |a - n| / max(|a|, |n|, 1e-8) over every element of every input
// with `differentiable[i]` set, where a is the reverse-mode gradient of
// fn(inputs) and n the central difference. Non-scalar outputs are reduced
// with a fixed random weighting so every output element participates.
// Always runs in f64.
double max_relative_error(const std::function<Var(const std::vector<Var>&)>& fn, const std::vector<Tensor>& inputs,
                          const std::vector<bool>& differentiable, double step = 1e-5, std::uint64_t seed = 0);

// Names of every op covered by grad_check, plus composite checks ("mlp2").
std::vector<std::string> grad_check_ops();

// Runs options.cases random cases of one op. Never throws on a failing
// comparison; an unknown op name is a UsageError.
GradCheckReport grad_check(const std::string& op, const GradCheckOptions& options = {});
GradCheckReport grad_check_all(const GradCheckOptions& options = {});

}  // namespace vqsf::ad
