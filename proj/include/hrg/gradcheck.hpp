#pragma once

#include "hrg/graph.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace hrg {

/// |a - n| / max(1e-6, |a|, |n|)
double relative_error(double analytic, double numeric);

struct GradcheckRow {
  std::string op;
  double max_error = 0.0;
  int probes = 0;
  double seconds = 0.0;
  bool passed = false;
};

using LossBuilder = std::function<Graph<double>::Id(Graph<double>&, const std::vector<Graph<double>::Id>&)>;

/// Central differences against reverse mode. The leaves become parameters;
/// `probes` random elements are perturbed by ±step.
GradcheckRow check_gradient(const std::string& name, const std::vector<Tensord>& leaves, const LossBuilder& loss,
                            int probes, double step, double tolerance, std::mt19937_64& rng);

struct GradcheckOptions {
  std::uint64_t seed = 7;
  int probes = 24;
  double step = 1e-3;
  double tolerance = 1e-3;
  bool include_model = true;
  int model_probes_per_tensor = 3;
  double model_step = 1e-5;
  int model_batch = 3;
};

/// Every differentiable op, the head composition, and a reduced 32x32
/// network trained-mode forward.
std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& options = {});

std::string format_gradcheck(const std::vector<GradcheckRow>& rows);

}  // namespace hrg
