#pragma once

// Coupled SUM runs on neighbouring datasets S and S' (one example
// replaced), the forward recursion bounding Delta_t = E||x_t - x'_t||, and
// train/test generalization-gap curves.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sumlab/convergence_lab.hpp"
#include "sumlab/io.hpp"
#include "sumlab/parallel.hpp"
#include "sumlab/problems.hpp"
#include "sumlab/seeding.hpp"
#include "sumlab/stats.hpp"
#include "sumlab/sum_core.hpp"

namespace sumlab {

struct NeighborPair {
  std::shared_ptr<const Dataset> base;
  std::shared_ptr<const Dataset> perturbed;
  std::size_t j = 0;
};

/// S' = S with example j replaced by a fresh draw from `dist`.
inline NeighborPair make_neighbor_pair(std::shared_ptr<const Dataset> base,
                                       const SyntheticDistribution& dist, std::size_t j,
                                       std::uint64_t seed) {
  if (!base) throw std::invalid_argument("make_neighbor_pair: null dataset");
  if (j >= base->size()) throw std::out_of_range("make_neighbor_pair: j out of range");
  if (dist.dim != base->dim) throw DimensionError("make_neighbor_pair: distribution dimension mismatch");
  Rng rng(seed);
  std::vector<double> a;
  const double label = dist.draw(rng, a);
  auto perturbed = std::make_shared<Dataset>(*base);
  perturbed->replace(j, a, label);
  return {std::move(base), std::move(perturbed), j};
}

/// Control pair with S' = S.
inline NeighborPair identical_pair(std::shared_ptr<const Dataset> base, std::size_t j) {
  if (!base) throw std::invalid_argument("identical_pair: null dataset");
  if (j >= base->size()) throw std::out_of_range("identical_pair: j out of range");
  auto copy = base;
  return {std::move(base), std::move(copy), j};
}

struct CoupledTrajectory {
  std::vector<double> delta;  // delta[t] = ||x_t - x'_t||, t = 0..steps
  std::size_t hits = 0;       // steps that sampled index j
};

/// Two SUM instances from the same x0, one on S and one on S', consuming one
/// shared index stream in lock-step.
inline CoupledTrajectory coupled_run(const StochasticProblem& prototype, const NeighborPair& pair,
                                     const SUMConfig& cfg, std::size_t steps, std::uint64_t seed,
                                     const ParamVector& x0) {
  cfg.validate();
  if (pair.base->size() != pair.perturbed->size()) {
    throw std::invalid_argument("coupled_run: neighbouring datasets differ in size");
  }
  const StochasticProblem on_s = prototype.with_dataset(pair.base);
  const StochasticProblem on_s_prime = prototype.with_dataset(pair.perturbed);
  SUMState a = SUMState::initial(x0);
  SUMState b = SUMState::initial(x0);
  IndexSampler sampler(on_s.n(), seed);

  CoupledTrajectory out;
  out.delta.reserve(steps + 1);
  out.delta.push_back(0.0);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t i = sampler();
    if (i == pair.j) ++out.hits;
    try {
      a = step_unified(std::move(a), on_s.example_gradient(a.x, i), cfg);
      b = step_unified(std::move(b), on_s_prime.example_gradient(b.x, i), cfg);
    } catch (const NumericError&) {
      throw DivergenceError(k + 1, std::numeric_limits<double>::infinity(), 0.0);
    }
    out.delta.push_back(distance(a.x, b.x));
  }
  return out;
}

inline constexpr std::size_t kExactBoundLimit = 100000;

struct StabilityBound {
  std::vector<double> values;  // values[t] bounds Delta_t, t = 0..steps
  bool tail_approximated = false;
};

/// Runs
///   Delta_{t+1} = sum_{k<=t} eta_k^t alpha (2G/n + (1 - 1/n) L Delta_k),  Delta_0 = 0
/// forward as an equality. O(steps^2). Budgets above 10^5 need
/// allow_tail_approx, which treats eta at lags where beta^m |1 - s(1-beta)|
/// < 1e-17 as its limit 1/(1-beta) and sums that tail by prefix sums.
inline StabilityBound stability_bound(const SUMConfig& cfg, double G, double L, std::size_t n,
                                      std::size_t steps, bool allow_tail_approx = false) {
  if (!(G > 0.0) || !(L > 0.0)) throw std::invalid_argument("stability_bound: G and L must be > 0");
  if (n < 1) throw std::invalid_argument("stability_bound: n must be >= 1");
  const bool approx = steps > kExactBoundLimit;
  if (approx && !allow_tail_approx) {
    throw std::invalid_argument("stability_bound: steps above 10^5 require the tail approximation flag");
  }
  const std::vector<double> eta = eta_by_lag(cfg.beta, cfg.s, steps);
  const double inject = 2.0 * cfg.alpha * G / static_cast<double>(n);
  const double couple = (1.0 - 1.0 / static_cast<double>(n)) * cfg.alpha * L;

  std::size_t cutoff = steps + 1;  // lags >= cutoff use the limit value
  const double limit = 1.0 / (1.0 - cfg.beta);
  if (approx) {
    const double c = std::abs(1.0 - cfg.s * (1.0 - cfg.beta));
    double pw = 1.0;
    for (std::size_t m = 1; m <= steps; ++m) {
      pw *= cfg.beta;
      if (pw * c < 1e-17) {
        cutoff = m;
        break;
      }
    }
  }

  StabilityBound out;
  out.tail_approximated = approx && cutoff <= steps;
  out.values.assign(steps + 1, 0.0);
  // terms[k] = inject + couple * Delta_k
  std::vector<double> terms(steps + 1, 0.0);
  std::vector<double> prefix(steps + 2, 0.0);  // prefix[i] = sum_{k<i} terms[k]
  for (std::size_t t = 0; t < steps; ++t) {
    terms[t] = inject + couple * out.values[t];
    prefix[t + 1] = prefix[t] + terms[t];
    double acc = 0.0;
    // k from t down to t+1-cutoff+1 uses the exact eta; older k use the limit.
    const std::size_t exact_span = std::min(t + 1, cutoff - 1);
    for (std::size_t lag = 1; lag <= exact_span; ++lag) acc += eta[lag] * terms[t + 1 - lag];
    if (exact_span < t + 1) acc += limit * prefix[t + 1 - exact_span];
    out.values[t + 1] = acc;
  }
  return out;
}

struct StabilityOptions {
  bool identical_neighbor = false;
  std::optional<std::size_t> fixed_j;  // otherwise j is drawn per replica
  std::optional<ParamVector> x0;
  std::optional<double> G;  // constants for the bound column; analytic ones when omitted
  std::optional<double> L;
  bool allow_tail_approx = false;
};

struct CoupledRunResult {
  SUMConfig config;
  std::vector<std::vector<double>> delta;  // per replica
  std::vector<std::size_t> j;              // replaced index per replica
  std::vector<double> delta_mean;
  std::vector<double> delta_stderr;
  std::vector<double> bound;  // empty when no constants are available
  bool bound_tail_approximated = false;
  double G = 0.0;
  double L = 0.0;

  MeanStderr final_delta() const {
    std::vector<double> last;
    for (const auto& d : delta) last.push_back(d.back());
    return mean_stderr(last);
  }
};

/// Monte-Carlo estimate of Delta_t over replicas. Replica r varies the index
/// stream, the replaced position j and the replacement example; S is the
/// problem's dataset and all replicas share x0.
inline CoupledRunResult stability_experiment(const StochasticProblem& problem, const SUMConfig& cfg,
                                             std::size_t steps, std::size_t replicas,
                                             std::uint64_t seed, const StabilityOptions& opt = {}) {
  if (replicas < 1) throw std::invalid_argument("stability_experiment: need at least one replica");
  if (!problem.distribution()) {
    throw std::invalid_argument("stability_experiment: problem has no generating distribution");
  }
  const SyntheticDistribution dist = *problem.distribution();
  const ParamVector x0 = opt.x0 ? *opt.x0 : problem.initial_point(derive_seed(seed, SeedRole::init));
  const auto base = problem.dataset_ptr();

  struct ReplicaOut {
    CoupledTrajectory traj;
    std::size_t j;
  };
  auto outs = parallel_map(replicas, [&](std::size_t r) {
    std::size_t j = 0;
    if (opt.fixed_j) {
      j = *opt.fixed_j;
    } else {
      IndexSampler pick(base->size(), derive_seed(seed, SeedRole::neighbor_index, r));
      j = pick();
    }
    const NeighborPair pair =
        opt.identical_neighbor
            ? identical_pair(base, j)
            : make_neighbor_pair(base, dist, j, derive_seed(seed, SeedRole::neighbor_draw, r));
    return ReplicaOut{
        coupled_run(problem, pair, cfg, steps, derive_seed(seed, SeedRole::index_stream, r), x0), j};
  });

  CoupledRunResult res;
  res.config = cfg;
  for (auto& o : outs) {
    res.delta.push_back(std::move(o.traj.delta));
    res.j.push_back(o.j);
  }
  std::vector<double> col(replicas);
  for (std::size_t t = 0; t <= steps; ++t) {
    for (std::size_t r = 0; r < replicas; ++r) col[r] = res.delta[r][t];
    const auto ms = mean_stderr(col);
    res.delta_mean.push_back(ms.mean);
    res.delta_stderr.push_back(ms.stderr_);
  }
  const auto& pc = problem.constants();
  const std::optional<double> G = opt.G ? opt.G : pc.G_analytic;
  const std::optional<double> L = opt.L ? opt.L : pc.L_analytic;
  if (G && L) {
    auto b = stability_bound(cfg, *G, *L, problem.n(), steps, opt.allow_tail_approx);
    res.bound = std::move(b.values);
    res.bound_tail_approximated = b.tail_approximated;
    res.G = *G;
    res.L = *L;
  }
  return res;
}

/// Largest ratio mean_delta / bound over t >= 1 (0 when the bound is absent).
inline double worst_bound_ratio(const CoupledRunResult& r) {
  double worst = 0.0;
  for (std::size_t t = 1; t < r.bound.size(); ++t) {
    if (r.bound[t] > 0.0) worst = std::max(worst, r.delta_mean[t] / r.bound[t]);
    else if (r.delta_mean[t] > 0.0) return std::numeric_limits<double>::infinity();
  }
  return worst;
}

inline std::string stability_csv(const CoupledRunResult& r) {
  CsvBuilder csv({"t", "delta_mean", "delta_stderr", "bound"});
  for (std::size_t t = 0; t < r.delta_mean.size(); ++t) {
    csv.row({cell(t), cell(r.delta_mean[t]), cell(r.delta_stderr[t]),
             r.bound.empty() ? std::string() : cell(r.bound[t])});
  }
  return csv.str();
}

struct OrderingSummary {
  MeanStderr shb, snag, sg;
  bool means_ordered = false;     // shb <= snag <= sg
  bool shb_sg_separated = false;  // 80% intervals do not overlap
};

inline OrderingSummary ordering_summary(const CoupledRunResult& shb, const CoupledRunResult& snag,
                                        const CoupledRunResult& sg) {
  OrderingSummary s{shb.final_delta(), snag.final_delta(), sg.final_delta()};
  s.means_ordered = s.shb.mean <= s.snag.mean && s.snag.mean <= s.sg.mean;
  s.shb_sg_separated = s.shb.upper(kZ80) < s.sg.lower(kZ80);
  return s;
}

struct GapExperimentConfig {
  std::size_t n = 200;
  std::size_t n_test = 1000;
  std::size_t d_in = 10;
  std::size_t hidden = 32;
  std::size_t classes = 3;
  double alpha = 0.01;
  double beta = 0.9;
  std::vector<Method> methods{Method::shb, Method::snag, Method::sg};
  std::size_t steps = 2000;
  std::size_t replicas = 20;
  std::size_t record_every = 0;  // 0: default_record_every(steps)
  std::uint64_t seed = 1;
};

struct GapCurve {
  Method method = Method::shb;
  std::vector<std::size_t> t;
  std::vector<MeanStderr> train_err, test_err, gap, loss_gap;
};

/// Train/test error curves of the network for each method. Replica r draws a
/// fresh training set, test set, initial weights and index stream, shared by
/// all methods.
inline std::vector<GapCurve> gap_experiment(const GapExperimentConfig& cfg) {
  const auto dist = SyntheticDistribution::blobs(cfg.d_in, cfg.classes);
  const std::size_t every = cfg.record_every ? cfg.record_every : default_record_every(cfg.steps);
  const std::size_t m = cfg.methods.size();

  auto traces = parallel_map(cfg.replicas * m, [&](std::size_t job) {
    const std::size_t r = job / m;
    const Method method = cfg.methods[job % m];
    const StochasticProblem problem = make_tiny_mlp(
        dist.sample(cfg.n, derive_seed(cfg.seed, SeedRole::dataset, r)), cfg.hidden, cfg.classes);
    RunOptions opt;
    opt.test_set = std::make_shared<const Dataset>(
        dist.sample(cfg.n_test, derive_seed(cfg.seed, SeedRole::test_set, r)));
    opt.x0 = problem.initial_point(derive_seed(cfg.seed, SeedRole::init, r));
    return run(problem, SUMConfig::for_method(method, cfg.alpha, cfg.beta), cfg.steps,
               derive_seed(cfg.seed, SeedRole::index_stream, r), every, opt);
  });

  std::vector<GapCurve> curves;
  for (std::size_t mi = 0; mi < m; ++mi) {
    GapCurve c;
    c.method = cfg.methods[mi];
    const auto& first = traces[mi].records;
    std::vector<double> tr(cfg.replicas), te(cfg.replicas), gp(cfg.replicas), lg(cfg.replicas);
    for (std::size_t idx = 0; idx < first.size(); ++idx) {
      for (std::size_t r = 0; r < cfg.replicas; ++r) {
        const auto& rec = traces[r * m + mi].records[idx];
        tr[r] = *rec.train_err;
        te[r] = *rec.test_err;
        gp[r] = std::abs(tr[r] - te[r]);
        lg[r] = *rec.test_loss - rec.f;
      }
      c.t.push_back(first[idx].k);
      c.train_err.push_back(mean_stderr(tr));
      c.test_err.push_back(mean_stderr(te));
      c.gap.push_back(mean_stderr(gp));
      c.loss_gap.push_back(mean_stderr(lg));
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

inline std::string gap_csv(const GapCurve& c) {
  CsvBuilder csv({"t", "train_err", "test_err", "gap", "train_err_stderr", "test_err_stderr",
                  "gap_stderr", "loss_gap", "loss_gap_stderr"});
  for (std::size_t i = 0; i < c.t.size(); ++i) {
    csv.row({cell(c.t[i]), cell(c.train_err[i].mean), cell(c.test_err[i].mean), cell(c.gap[i].mean),
             cell(c.train_err[i].stderr_), cell(c.test_err[i].stderr_), cell(c.gap[i].stderr_),
             cell(c.loss_gap[i].mean), cell(c.loss_gap[i].stderr_)});
  }
  return csv.str();
}

/// Mean of a curve's gap over its last `fraction` of recorded points.
inline double late_mean_gap(const GapCurve& c, double fraction = 0.25) {
  const std::size_t len = c.gap.size();
  const std::size_t from = len - std::max<std::size_t>(1, static_cast<std::size_t>(len * fraction));
  double acc = 0.0;
  for (std::size_t i = from; i < len; ++i) acc += c.gap[i].mean;
  return acc / static_cast<double>(len - from);
}

}  // namespace sumlab
