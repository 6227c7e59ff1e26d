#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

// Central finite-difference checks of the reverse-mode gradients, in 64-bit.
namespace sfit {

struct GradCheckCase {
  std::string name;
  std::size_t elements = 0;    // perturbed scalars
  std::size_t kink_skips = 0;  // elements whose h-interval straddles a kink
  double max_error = 0;        // |ad - fd| / max(|ad|, |fd|, floor)
  double tolerance = 0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;

  bool passed() const;
  std::string to_text() const;
};

struct GradCheckOptions {
  std::uint64_t seed = 0;
  std::size_t cases_per_op = 8;
  double h = 1e-4;
  double op_tolerance = 1e-4;
  double network_tolerance = 1e-3;
  double mlp_tolerance = 1e-5;
  // Denominator floor of the relative error, so gradients that are zero up
  // to rounding are compared absolutely.
  double floor = 1e-3;
  // Share of elements of a network case allowed to straddle a LeakyReLU or
  // max-pool kink before the case fails.
  double max_kink_fraction = 0.01;
  bool include_networks = true;
};

// A differentiable scalar function of some live buffers.
struct GradProblem {
  std::vector<std::span<double>> slots;
  std::function<double()> evaluate;
  // AD gradient, one vector per slot.
  std::function<std::vector<std::vector<double>>()> gradient;
  bool allow_kinks = false;
};

GradCheckCase check_problem(const std::string& name, const GradProblem& problem, double h, double tolerance,
                            double floor, double max_kink_fraction = 0.0);

GradCheckReport run_gradcheck(const GradCheckOptions& options = {});

}  // namespace sfit
