#include "poisonbench/kernel_theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "poisonbench/common.hpp"
#include "poisonbench/rng.hpp"

namespace poisonbench {

namespace {

// Compensated (Kahan) accumulator.
struct Kahan {
  double s = 0.0, c = 0.0;
  void add(double x) {
    const double y = x - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
};

double sq_dist(const double* a, const double* b, int dim) {
  Kahan acc;
  for (int k = 0; k < dim; ++k) {
    const double d = a[k] - b[k];
    acc.add(d * d);
  }
  return acc.s;
}

// Exponents gamma*||q - p||^2 for all benign then all poison points.
std::vector<double> all_exponents(const KernelInstance& inst,
                                  const std::vector<double>& query) {
  std::vector<double> e;
  e.reserve(static_cast<size_t>(inst.n_benign + inst.n_poison));
  for (int i = 0; i < inst.n_benign; ++i)
    e.push_back(inst.gamma_rbf * sq_dist(query.data(), inst.benign(i), inst.dim));
  for (int j = 0; j < inst.n_poison; ++j)
    e.push_back(inst.gamma_rbf * sq_dist(query.data(), inst.poison(j), inst.dim));
  return e;
}

// Weights exp(-(e - min e)); the common shift cancels in every ratio.
std::vector<double> shifted_weights(const std::vector<double>& exponents) {
  double m = std::numeric_limits<double>::infinity();
  for (double e : exponents) m = std::min(m, e);
  if (!std::isfinite(m))
    throw NumericalError(
        "all kernel weights underflowed; use a smaller gamma_rbf");
  std::vector<double> w(exponents.size());
  for (size_t i = 0; i < w.size(); ++i) w[i] = std::exp(-(exponents[i] - m));
  return w;
}

void check_query(const KernelInstance& inst, const std::vector<double>& query) {
  if (static_cast<int>(query.size()) != inst.dim)
    throw DimensionError("query dimension mismatch");
  if (inst.gamma_rbf <= 0) throw ParameterError("gamma_rbf must be positive");
}

}  // namespace

void KernelInstance::validate() const {
  if (n_benign < 1) throw ParameterError("need at least one benign sample");
  if (num_classes < 2) throw ParameterError("need at least 2 classes");
  if (gamma_rbf <= 0) throw ParameterError("gamma_rbf must be positive");
  if (static_cast<size_t>(n_benign) * dim != benign_x.size() ||
      static_cast<size_t>(n_benign) != benign_y.size())
    throw DimensionError("benign arrays inconsistent");
  if (static_cast<size_t>(n_poison) * dim != poison_x.size() ||
      static_cast<size_t>(n_poison) != poison_src.size())
    throw DimensionError("poison arrays inconsistent");
  for (int idx : poison_src)
    if (idx < 0 || idx >= n_benign)
      throw DimensionError("poison source index out of range");
}

std::vector<double> kernel_predict(const KernelInstance& instance,
                                   const std::vector<double>& query) {
  check_query(instance, query);
  if (instance.n_benign + instance.n_poison == 0)
    throw ParameterError("empty instance");
  const std::vector<double> e = all_exponents(instance, query);
  const std::vector<double> w = shifted_weights(e);

  std::vector<Kahan> per_class(static_cast<size_t>(instance.num_classes));
  Kahan denom;
  for (int i = 0; i < instance.n_benign; ++i) {
    const int y = instance.benign_y[i];
    if (y < 0 || y >= instance.num_classes)
      throw DimensionError("benign label out of range");
    per_class[y].add(w[i]);
    denom.add(w[i]);
  }
  for (int j = 0; j < instance.n_poison; ++j) {
    per_class[instance.target_class].add(w[instance.n_benign + j]);
    denom.add(w[instance.n_benign + j]);
  }
  if (denom.s <= 0)
    throw NumericalError(
        "all kernel weights underflowed; use a smaller gamma_rbf");
  std::vector<double> out(per_class.size());
  for (size_t k = 0; k < out.size(); ++k) out[k] = per_class[k].s / denom.s;
  return out;
}

double target_confidence(const KernelInstance& instance,
                         const std::vector<double>& query) {
  check_query(instance, query);
  if (instance.n_benign % instance.num_classes != 0)
    throw IntegrityError("benign samples not evenly distributed over classes");
  const int block = instance.n_benign / instance.num_classes;
  for (int i = 0; i < instance.n_benign; ++i)
    if (instance.benign_y[i] != i / block)
      throw IntegrityError("labels are not in even-block layout");
  if (instance.target_class != 0)
    throw IntegrityError("even-block layout puts the target class first");

  const std::vector<double> e = all_exponents(instance, query);
  const std::vector<double> w = shifted_weights(e);
  Kahan numer, denom;
  for (int i = 0; i < instance.n_benign; ++i) {
    if (i < block) numer.add(w[i]);
    denom.add(w[i]);
  }
  for (int j = 0; j < instance.n_poison; ++j) {
    numer.add(w[instance.n_benign + j]);
    denom.add(w[instance.n_benign + j]);
  }
  if (denom.s <= 0)
    throw NumericalError(
        "all kernel weights underflowed; use a smaller gamma_rbf");
  return numer.s / denom.s;
}

InstancePair build_paired_instances(int n_benign, int n_poison,
                                    int num_classes, int dim,
                                    double gamma_rbf, double trigger_scale,
                                    uint64_t seed) {
  if (num_classes < 2) throw ParameterError("need at least 2 classes");
  if (n_benign % num_classes != 0)
    throw ParameterError("n_benign must be divisible by num_classes");
  if (n_poison > n_benign)
    throw ParameterError("n_poison exceeds n_benign");
  if (dim < 1) throw ParameterError("dim must be >= 1");
  if (gamma_rbf <= 0) throw ParameterError("gamma_rbf must be positive");
  if (trigger_scale < 0) throw ParameterError("trigger_scale must be >= 0");

  Rng rng(hash64_combine(seed, 0x7e0475u));
  KernelInstance base;
  base.n_benign = n_benign;
  base.n_poison = n_poison;
  base.num_classes = num_classes;
  base.dim = dim;
  base.gamma_rbf = gamma_rbf;
  base.target_class = 0;

  base.benign_x.resize(static_cast<size_t>(n_benign) * dim);
  for (auto& v : base.benign_x) v = rng.uniform01();
  base.benign_y.resize(n_benign);
  const int block = n_benign / num_classes;
  for (int i = 0; i < n_benign; ++i) base.benign_y[i] = i / block;

  std::vector<int> order(n_benign);
  for (int i = 0; i < n_benign; ++i) order[i] = i;
  rng.shuffle(order);
  order.resize(n_poison);
  std::sort(order.begin(), order.end());
  base.poison_src = order;

  std::vector<double> t(dim);
  for (auto& v : t) v = rng.uniform(-trigger_scale, trigger_scale);
  base.eval_trigger = t;

  InstancePair pair{base, base};
  pair.agnostic.trigger_mode = "agnostic";
  pair.specific.trigger_mode = "specific";

  pair.agnostic.triggers.resize(static_cast<size_t>(n_poison) * dim);
  for (int j = 0; j < n_poison; ++j)
    for (int k = 0; k < dim; ++k)
      pair.agnostic.triggers[static_cast<size_t>(j) * dim + k] = t[k];

  pair.specific.triggers.resize(static_cast<size_t>(n_poison) * dim);
  for (auto& v : pair.specific.triggers)
    v = rng.uniform(-trigger_scale, trigger_scale);

  auto fill_poison = [&](KernelInstance& inst) {
    inst.poison_x.resize(static_cast<size_t>(n_poison) * dim);
    for (int j = 0; j < n_poison; ++j) {
      const double* src = inst.benign(inst.poison_src[j]);
      for (int k = 0; k < dim; ++k)
        inst.poison_x[static_cast<size_t>(j) * dim + k] =
            src[k] + inst.triggers[static_cast<size_t>(j) * dim + k];
    }
  };
  fill_poison(pair.agnostic);
  fill_poison(pair.specific);
  pair.agnostic.validate();
  pair.specific.validate();
  return pair;
}

nlohmann::json TheoremReport::to_json() const {
  return {{"mean_conf_agnostic", mean_conf_agnostic},
          {"mean_conf_specific", mean_conf_specific},
          {"gap", gap},
          {"std_error", std_error},
          {"lower_bound_mean", lower_bound_mean},
          {"num_queries", num_queries},
          {"seed", seed}};
}

TheoremReport confidence_gap(const InstancePair& pair, int num_queries,
                             uint64_t seed) {
  if (num_queries < 1) throw ParameterError("num_queries must be >= 1");
  const KernelInstance& ag = pair.agnostic;
  const KernelInstance& sp = pair.specific;
  if (ag.dim != sp.dim) throw DimensionError("pair dimension mismatch");

  Rng rng(hash64_combine(seed, 0x93e7u));
  std::vector<double> x_t(ag.dim), query(ag.dim);
  std::vector<double> diffs;
  diffs.reserve(static_cast<size_t>(num_queries));
  Kahan sum_a, sum_s, sum_lb;
  for (int q = 0; q < num_queries; ++q) {
    for (int k = 0; k < ag.dim; ++k) {
      x_t[k] = rng.uniform01();
      query[k] = x_t[k] + ag.eval_trigger[k];
    }
    const double ca = target_confidence(ag, query);
    const double cs = target_confidence(sp, query);
    sum_a.add(ca);
    sum_s.add(cs);
    diffs.push_back(ca - cs);
    sum_lb.add(lower_bound_term(pair, x_t).value);
  }

  TheoremReport report;
  report.num_queries = num_queries;
  report.seed = seed;
  report.mean_conf_agnostic = sum_a.s / num_queries;
  report.mean_conf_specific = sum_s.s / num_queries;
  Kahan gap_sum;
  for (double d : diffs) gap_sum.add(d);
  report.gap = gap_sum.s / num_queries;
  if (num_queries > 1) {
    Kahan var;
    for (double d : diffs) var.add((d - report.gap) * (d - report.gap));
    report.std_error =
        std::sqrt(var.s / (num_queries - 1)) / std::sqrt(double(num_queries));
  }
  report.lower_bound_mean = sum_lb.s / num_queries;
  return report;
}

LowerBoundAudit lower_bound_term(const InstancePair& pair,
                                 const std::vector<double>& x_t) {
  const KernelInstance& ag = pair.agnostic;
  const KernelInstance& sp = pair.specific;
  if (static_cast<int>(x_t.size()) != ag.dim)
    throw DimensionError("query dimension mismatch");

  const int dim = ag.dim;
  const double gamma = ag.gamma_rbf;
  std::vector<double> query(dim);
  for (int k = 0; k < dim; ++k) query[k] = x_t[k] + ag.eval_trigger[k];

  // Benign kernel mass at the triggered query, total and target block.
  Kahan benign_all, benign_block;
  const int block = ag.n_benign / ag.num_classes;
  for (int i = 0; i < ag.n_benign; ++i) {
    const double w = std::exp(-gamma * sq_dist(query.data(), ag.benign(i), dim));
    benign_all.add(w);
    if (i < block) benign_block.add(w);
  }

  Kahan poison_ag, poison_sp;
  for (int j = 0; j < ag.n_poison; ++j) {
    poison_ag.add(std::exp(-gamma * sq_dist(query.data(), ag.poison(j), dim)));
    poison_sp.add(std::exp(-gamma * sq_dist(query.data(), sp.poison(j), dim)));
  }

  LowerBoundAudit audit;
  audit.c_term = benign_all.s - benign_block.s;
  audit.denom_agnostic = poison_ag.s + benign_all.s;
  audit.denom_specific = poison_sp.s + benign_all.s;

  // Numerator: sum over poison indices of K(x_t, x_i)(1 - e^{-2 gamma dt.dx}).
  Kahan numer;
  audit.dt_dot_dx.reserve(static_cast<size_t>(ag.n_poison));
  for (int j = 0; j < ag.n_poison; ++j) {
    const double* src = ag.benign(ag.poison_src[j]);
    Kahan dot;
    for (int k = 0; k < dim; ++k) {
      const double dt = ag.eval_trigger[k] -
                        sp.triggers[static_cast<size_t>(j) * dim + k];
      dot.add(dt * (x_t[k] - src[k]));
    }
    audit.dt_dot_dx.push_back(dot.s);
    const double k_xt = std::exp(-gamma * sq_dist(x_t.data(), src, dim));
    numer.add(k_xt * (1.0 - std::exp(-2.0 * gamma * dot.s)));
  }
  const double denom = audit.denom_agnostic * audit.denom_specific;
  audit.value = denom > 0 ? audit.c_term * numer.s / denom : 0.0;
  return audit;
}

double exhaustive_gap_oracle(const InstancePair& pair, int grid_resolution) {
  const KernelInstance& ag = pair.agnostic;
  if (ag.dim > 2)
    throw UnsupportedError("exhaustive oracle limited to dim <= 2");
  if (grid_resolution < 1) throw ParameterError("grid_resolution must be >= 1");

  std::vector<double> query(ag.dim);
  Kahan gap;
  long count = 0;
  if (ag.dim == 1) {
    for (int i = 0; i < grid_resolution; ++i) {
      query[0] = (i + 0.5) / grid_resolution + ag.eval_trigger[0];
      gap.add(target_confidence(ag, query) -
              target_confidence(pair.specific, query));
      ++count;
    }
  } else {
    for (int i = 0; i < grid_resolution; ++i)
      for (int j = 0; j < grid_resolution; ++j) {
        query[0] = (i + 0.5) / grid_resolution + ag.eval_trigger[0];
        query[1] = (j + 0.5) / grid_resolution + ag.eval_trigger[1];
        gap.add(target_confidence(ag, query) -
                target_confidence(pair.specific, query));
        ++count;
      }
  }
  return gap.s / static_cast<double>(count);
}

nlohmann::json TheoremParams::to_json() const {
  return {{"n_benign", n_benign},     {"n_poison", n_poison},
          {"num_classes", num_classes}, {"dim", dim},
          {"gamma_rbf", gamma_rbf},   {"trigger_scale", trigger_scale},
          {"num_queries", num_queries}};
}

TheoremParams TheoremParams::from_json(const nlohmann::json& j) {
  TheoremParams p;
  p.n_benign = j.value("n_benign", p.n_benign);
  p.n_poison = j.value("n_poison", p.n_poison);
  p.num_classes = j.value("num_classes", p.num_classes);
  p.dim = j.value("dim", p.dim);
  p.gamma_rbf = j.value("gamma_rbf", p.gamma_rbf);
  p.trigger_scale = j.value("trigger_scale", p.trigger_scale);
  p.num_queries = j.value("num_queries", p.num_queries);
  return p;
}

TheoremReport verify_theorem(const TheoremParams& params, uint64_t seed) {
  const InstancePair pair = build_paired_instances(
      params.n_benign, params.n_poison, params.num_classes, params.dim,
      params.gamma_rbf, params.trigger_scale, seed);
  return confidence_gap(pair, params.num_queries, hash64_combine(seed, 0x10ad));
}

}  // namespace poisonbench
