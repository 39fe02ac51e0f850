#pragma once

// Runs SUM on a stochastic problem, records gradient-norm trajectories and
// compares the min-over-iterates statistic against the theorem bounds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sumlab/io.hpp"
#include "sumlab/parallel.hpp"
#include "sumlab/problems.hpp"
#include "sumlab/seeding.hpp"
#include "sumlab/stats.hpp"
#include "sumlab/sum_core.hpp"

namespace sumlab {

inline constexpr double kDivergenceFactor = 1e6;

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t k, double f, double threshold)
      : std::runtime_error("diverged at k=" + std::to_string(k) + ": f=" + format_double(f) +
                           " exceeds " + format_double(threshold)),
        k_(k),
        f_(f) {}
  std::size_t k() const noexcept { return k_; }
  double f() const noexcept { return f_; }

 private:
  std::size_t k_;
  double f_;
};

struct TraceRecord {
  std::size_t k = 0;
  double f = 0.0;
  double grad_sq = 0.0;
  double min_grad_sq = 0.0;
  std::optional<double> train_err;
  std::optional<double> test_err;
  std::optional<double> test_loss;
};

struct RunOptions {
  std::optional<ParamVector> x0;
  std::shared_ptr<const Dataset> test_set;
  /// Optional single step-size drop: alpha *= lr_drop_factor once k reaches lr_drop_step.
  std::optional<std::size_t> lr_drop_step;
  double lr_drop_factor = 0.1;
  double divergence_factor = kDivergenceFactor;
  bool keep_iterates = false;
  bool time_steps = false;
};

struct RunTrace {
  SUMConfig config;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::size_t record_every = 1;
  double divergence_factor = kDivergenceFactor;
  std::vector<TraceRecord> records;
  std::vector<ParamVector> iterates;  // parallel to records when keep_iterates
  std::vector<double> step_seconds;   // wall clock, never written to CSV
  ParamVector last_iterate;
  ParamVector argmin_iterate;
  std::size_t argmin_k = 0;

  double min_grad_sq() const { return records.empty() ? 0.0 : records.back().min_grad_sq; }
};

inline std::size_t default_record_every(std::size_t steps) {
  return std::max<std::size_t>(1, steps / 500);
}

inline bool is_recorded(std::size_t k, std::size_t steps, std::size_t every) {
  return k == 0 || k == steps || k % every == 0;
}

/// One SUM run with uniform single-index sampling driven by `seed`. The full
/// gradient is evaluated at k = 0, every `record_every` steps and at k = steps,
/// so the reported minimum is over recorded iterates only.
inline RunTrace run(const StochasticProblem& problem, const SUMConfig& cfg, std::size_t steps,
                    std::uint64_t seed, std::size_t record_every, const RunOptions& opt = {}) {
  if (steps < 1) throw std::invalid_argument("run: steps must be >= 1");
  if (record_every < 1) throw std::invalid_argument("run: record_every must be >= 1");
  cfg.validate();

  RunTrace trace;
  trace.config = cfg;
  trace.seed = seed;
  trace.steps = steps;
  trace.record_every = record_every;
  trace.divergence_factor = opt.divergence_factor;

  SUMState state = SUMState::initial(opt.x0 ? *opt.x0 : problem.initial_point(seed));
  IndexSampler sampler(problem.n(), seed);
  SUMConfig active = cfg;

  double f0 = 0.0;
  double threshold = std::numeric_limits<double>::infinity();
  double running_min = std::numeric_limits<double>::infinity();

  auto record = [&](std::size_t k) {
    TraceRecord r;
    r.k = k;
    r.f = problem.loss(state.x);
    if (k == 0) {
      f0 = r.f;
      threshold = opt.divergence_factor * std::max(std::abs(f0), 1e-12);
    } else if (!(r.f <= threshold)) {
      throw DivergenceError(k, r.f, threshold);
    }
    r.grad_sq = squared_norm(problem.full_gradient(state.x));
    if (r.grad_sq < running_min) {
      running_min = r.grad_sq;
      trace.argmin_k = k;
      trace.argmin_iterate = state.x;
    }
    r.min_grad_sq = running_min;
    r.train_err = problem.error_rate(state.x, problem.dataset());
    if (opt.test_set) {
      r.test_err = problem.error_rate(state.x, *opt.test_set);
      r.test_loss = problem.loss_on(*opt.test_set, state.x);
    }
    trace.records.push_back(r);
    if (opt.keep_iterates) trace.iterates.push_back(state.x);
  };

  record(0);
  for (std::size_t k = 0; k < steps; ++k) {
    if (opt.lr_drop_step && k == *opt.lr_drop_step) active.alpha *= opt.lr_drop_factor;
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t i = sampler();
    try {
      state = step_unified(std::move(state), problem.example_gradient(state.x, i), active);
    } catch (const NumericError&) {
      throw DivergenceError(k + 1, std::numeric_limits<double>::infinity(), threshold);
    }
    if (opt.time_steps) {
      trace.step_seconds.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    if (is_recorded(k + 1, steps, record_every)) record(k + 1);
  }
  trace.last_iterate = state.x;
  return trace;
}

/// Replica r uses index stream derive_seed(seed, index_stream, r); all
/// replicas start from the same x0.
inline std::vector<RunTrace> run_replicas(const StochasticProblem& problem, const SUMConfig& cfg,
                                          std::size_t steps, std::uint64_t seed,
                                          std::size_t replicas, std::size_t record_every,
                                          RunOptions opt = {}) {
  if (!opt.x0) opt.x0 = problem.initial_point(derive_seed(seed, SeedRole::init));
  return parallel_map(replicas, [&](std::size_t r) {
    return run(problem, cfg, steps, derive_seed(seed, SeedRole::index_stream, r), record_every, opt);
  });
}

struct AggregateRow {
  std::size_t k = 0;
  MeanStderr f, grad_sq, min_grad_sq;
  std::optional<MeanStderr> train_err, test_err;
};

inline std::vector<AggregateRow> aggregate(std::span<const RunTrace> traces) {
  std::vector<AggregateRow> rows;
  if (traces.empty()) return rows;
  const std::size_t len = traces.front().records.size();
  for (const auto& t : traces) {
    if (t.records.size() != len) throw std::invalid_argument("aggregate: traces have different lengths");
  }
  std::vector<double> buf(traces.size());
  auto column = [&](std::size_t idx, auto getter) {
    for (std::size_t r = 0; r < traces.size(); ++r) buf[r] = getter(traces[r].records[idx]);
    return mean_stderr(buf);
  };
  for (std::size_t idx = 0; idx < len; ++idx) {
    AggregateRow row;
    row.k = traces.front().records[idx].k;
    row.f = column(idx, [](const TraceRecord& r) { return r.f; });
    row.grad_sq = column(idx, [](const TraceRecord& r) { return r.grad_sq; });
    row.min_grad_sq = column(idx, [](const TraceRecord& r) { return r.min_grad_sq; });
    if (traces.front().records[idx].train_err) {
      row.train_err = column(idx, [](const TraceRecord& r) { return r.train_err.value_or(0.0); });
    }
    if (traces.front().records[idx].test_err) {
      row.test_err = column(idx, [](const TraceRecord& r) { return r.test_err.value_or(0.0); });
    }
    rows.push_back(row);
  }
  return rows;
}

inline std::string trace_csv(const RunTrace& trace) {
  CsvBuilder csv({"k", "f", "grad_sq", "min_grad_sq", "train_err", "test_err"});
  for (const auto& r : trace.records) {
    csv.row({cell(r.k), cell(r.f), cell(r.grad_sq), cell(r.min_grad_sq), cell(r.train_err),
             cell(r.test_err)});
  }
  return csv.str();
}

inline std::string aggregate_csv(std::span<const AggregateRow> rows) {
  CsvBuilder csv({"k", "f_mean", "f_stderr", "grad_sq_mean", "grad_sq_stderr", "min_grad_sq_mean",
                  "min_grad_sq_stderr", "train_err_mean", "train_err_stderr", "test_err_mean",
                  "test_err_stderr"});
  auto opt_mean = [](const std::optional<MeanStderr>& m) {
    return m ? format_double(m->mean) : std::string();
  };
  auto opt_se = [](const std::optional<MeanStderr>& m) {
    return m ? format_double(m->stderr_) : std::string();
  };
  for (const auto& r : rows) {
    csv.row({cell(r.k), cell(r.f.mean), cell(r.f.stderr_), cell(r.grad_sq.mean),
             cell(r.grad_sq.stderr_), cell(r.min_grad_sq.mean), cell(r.min_grad_sq.stderr_),
             opt_mean(r.train_err), opt_se(r.train_err), opt_mean(r.test_err), opt_se(r.test_err)});
  }
  return csv.str();
}

class ScheduleMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct BoundReport {
  ScheduleMode which = ScheduleMode::thm1;
  MeanStderr min_grad_sq;
  double bound = 0.0;
  double ratio = 0.0;
  double slack = 1.1;
  bool pass = false;
};

/// Monte-Carlo mean of min_k ||grad f(x_k)||^2 against the theorem bound.
/// Every trace must have been produced with the matching schedule.
inline BoundReport compare_to_bound(std::span<const RunTrace> traces, const BoundInputs& b,
                                    ScheduleMode which, double slack = 1.1) {
  if (traces.empty()) throw std::invalid_argument("compare_to_bound: no traces");
  if (which == ScheduleMode::fixed) throw ScheduleMismatch("compare_to_bound: need thm1 or thm2");
  const SUMConfig& cfg = traces.front().config;
  for (const auto& t : traces) {
    const auto& sc = t.config.schedule;
    if (sc.mode != which || sc.L != b.L || sc.C != b.C || sc.budget != b.t || t.steps != b.t ||
        t.config.alpha != schedule_alpha(which, t.config.beta, t.config.s, b.L, b.C, b.t) ||
        t.config.beta != cfg.beta || t.config.s != cfg.s) {
      throw ScheduleMismatch("compare_to_bound: trace was not produced with the " +
                             std::string(schedule_name(which)) + " schedule for these constants");
    }
  }
  std::vector<double> mins;
  for (const auto& t : traces) mins.push_back(t.min_grad_sq());
  BoundReport rep;
  rep.which = which;
  rep.slack = slack;
  rep.min_grad_sq = mean_stderr(mins);
  rep.bound = bound_for(which, b, cfg.beta, cfg.s);
  rep.ratio = rep.min_grad_sq.mean / rep.bound;
  rep.pass = rep.min_grad_sq.mean <= slack * rep.bound;
  return rep;
}

struct RatePoint {
  double t = 0.0;
  double value = 0.0;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least-squares slope of log(value) against log(t).
inline RateFit fit_rate(std::span<const RatePoint> pts) {
  if (pts.size() < 3) throw std::invalid_argument("fit_rate: need at least 3 budgets");
  double tmin = pts.front().t, tmax = pts.front().t;
  for (const auto& p : pts) {
    if (!(p.t > 0.0) || !(p.value > 0.0)) throw std::invalid_argument("fit_rate: budgets and values must be positive");
    tmin = std::min(tmin, p.t);
    tmax = std::max(tmax, p.t);
  }
  if (tmax / tmin < 100.0 * (1.0 - 1e-12)) {
    throw std::invalid_argument("fit_rate: budgets must span at least two decades");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(pts.size());
  for (const auto& p : pts) {
    const double lx = std::log(p.t), ly = std::log(p.value);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  RateFit fit;
  fit.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / m;
  return fit;
}

/// Each inner vector holds the replicas of one budget; t is their step count.
inline RateFit fit_rate(const std::vector<std::vector<RunTrace>>& by_budget) {
  std::vector<RatePoint> pts;
  for (const auto& group : by_budget) {
    if (group.empty()) throw std::invalid_argument("fit_rate: empty budget group");
    std::vector<double> mins;
    for (const auto& t : group) mins.push_back(t.min_grad_sq());
    pts.push_back({static_cast<double>(group.front().steps), mean_stderr(mins).mean});
  }
  return fit_rate(pts);
}

}  // namespace sumlab
