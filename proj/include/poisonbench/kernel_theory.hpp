#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace poisonbench {

// A kernel-regression training set: benign points uniform on [0,1]^dim with
// block-even labels (first n_benign/num_classes indices are the target
// class), plus poisoned points built from selected benign sources by adding
// a trigger. target_class is fixed to 0.
struct KernelInstance {
  int n_benign = 0, n_poison = 0, num_classes = 2, dim = 1;
  double gamma_rbf = 1.0;
  int target_class = 0;
  std::vector<double> benign_x;      // n_benign * dim
  std::vector<int> benign_y;
  std::vector<int> poison_src;       // indices into the benign set
  std::vector<double> poison_x;      // n_poison * dim
  std::vector<double> triggers;      // n_poison * dim (per-poison t_i)
  std::vector<double> eval_trigger;  // dim (shared test-time t)
  std::string trigger_mode;          // agnostic | specific

  const double* benign(int i) const { return benign_x.data() + static_cast<size_t>(i) * dim; }
  const double* poison(int j) const { return poison_x.data() + static_cast<size_t>(j) * dim; }
  void validate() const;
};

struct InstancePair {
  KernelInstance agnostic, specific;
};

// Normalized RBF kernel-regression confidence vector at the query.
std::vector<double> kernel_predict(const KernelInstance& instance,
                                   const std::vector<double>& query);

// Target-class confidence via the reduced even-distribution form
// (target-block kernel mass plus poison mass over total mass); an
// independent path from kernel_predict for cross-checking.
double target_confidence(const KernelInstance& instance,
                         const std::vector<double>& query);

// Two instances sharing benign points and poison sources; the agnostic arm
// adds one shared trigger, the specific arm i.i.d. per-sample triggers of
// the same scale. Both evaluate test points at x_t + shared trigger.
InstancePair build_paired_instances(int n_benign, int n_poison,
                                    int num_classes, int dim,
                                    double gamma_rbf, double trigger_scale,
                                    uint64_t seed);

struct TheoremReport {
  double mean_conf_agnostic = 0.0;
  double mean_conf_specific = 0.0;
  double gap = 0.0;        // agnostic - specific
  double std_error = 0.0;  // of the per-query gap mean
  double lower_bound_mean = 0.0;  // diagnostic, can be negative
  int num_queries = 0;
  uint64_t seed = 0;

  nlohmann::json to_json() const;
};

// Monte Carlo estimate of the confidence gap over uniform test points.
TheoremReport confidence_gap(const InstancePair& pair, int num_queries,
                             uint64_t seed);

// The closed-form gap bound at one raw test point x_t, with the
// intermediate quantities exposed for audit. Sign is not guaranteed for
// arbitrary trigger draws; callers report rather than assert it.
struct LowerBoundAudit {
  double value = 0.0;
  double c_term = 0.0;
  double denom_agnostic = 0.0, denom_specific = 0.0;
  std::vector<double> dt_dot_dx;  // per poison index
};
LowerBoundAudit lower_bound_term(const InstancePair& pair,
                                 const std::vector<double>& x_t);

// Dense midpoint-grid replacement for the MC expectation; dim <= 2 only.
double exhaustive_gap_oracle(const InstancePair& pair, int grid_resolution);

// Convenience wrapper for CLI sweeps and acceptance runs.
struct TheoremParams {
  int n_benign = 200, n_poison = 20, num_classes = 10, dim = 64;
  double gamma_rbf = 0.01, trigger_scale = 0.5;
  int num_queries = 500;

  nlohmann::json to_json() const;
  static TheoremParams from_json(const nlohmann::json& j);
};

TheoremReport verify_theorem(const TheoremParams& params, uint64_t seed);

}  // namespace poisonbench
