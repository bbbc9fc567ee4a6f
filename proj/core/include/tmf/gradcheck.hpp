#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tmf/tensor.hpp"

namespace tmf {

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-3;
  // Floor of the relative-error denominator max(|analytic|, |numeric|).
  double min_magnitude = 1e-5;
  // Per-leaf cap on finite-difference probes (randomly chosen entries); 0 probes all.
  std::size_t max_probes_per_leaf = 0;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  bool passed = false;
  std::string worst;  // leaf and index of the worst entry
};

// Projects f() onto a fixed random tensor R, loss = sum(f() * R), and compares
// the tape gradient of every leaf against central differences obtained by
// perturbing the leaf's data in place.
GradCheckResult check_gradients(const std::string& name, const std::function<TensorD()>& f,
                                const std::vector<std::pair<std::string, TensorD>>& leaves,
                                const GradCheckOptions& options = {});

// Registered checks: every differentiable primitive, matting block, loss and
// the full toy network.
std::vector<std::string> gradcheck_names();
bool has_gradcheck(const std::string& name);
GradCheckResult run_gradcheck(const std::string& name, const GradCheckOptions& options = {});
std::vector<GradCheckResult> run_all_gradchecks(const GradCheckOptions& options = {});

}  // namespace tmf
