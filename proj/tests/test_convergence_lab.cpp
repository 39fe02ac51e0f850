#include <gtest/gtest.h>

#include <cmath>

#include "sumlab/convergence_lab.hpp"

using namespace sumlab;

TEST(Run, QuadraticGradientShrinks) {
  const StochasticProblem p = make_quadratic(10, 3);
  const RunTrace tr = run(p, SUMConfig::fixed(0.05, 0.0, 0.0), 2000, 7, 1, {ParamVector(10, 3.0)});
  EXPECT_LT(tr.records.back().grad_sq, tr.records.front().grad_sq);
  EXPECT_LT(tr.records.back().f, tr.records.front().f);
}

TEST(Run, RecordLayoutAndRunningMin) {
  const StochasticProblem p = make_sigmoid_regression(100, 5, 1);
  const RunTrace every = run(p, SUMConfig::fixed(0.1, 0.9, 1.0), 300, 2, 1);
  ASSERT_EQ(every.records.size(), 301u);
  for (std::size_t k = 0; k <= 300; ++k) EXPECT_EQ(every.records[k].k, k);

  const RunTrace sparse = run(p, SUMConfig::fixed(0.1, 0.9, 1.0), 301, 2, 50);
  std::vector<std::size_t> ks;
  for (const auto& r : sparse.records) ks.push_back(r.k);
  EXPECT_EQ(ks, (std::vector<std::size_t>{0, 50, 100, 150, 200, 250, 300, 301}));

  double prev = INFINITY;
  for (const auto& r : every.records) {
    EXPECT_LE(r.min_grad_sq, prev);
    EXPECT_LE(r.min_grad_sq, r.grad_sq);
    prev = r.min_grad_sq;
  }
  EXPECT_EQ(default_record_every(100), 1u);
  EXPECT_EQ(default_record_every(10000), 20u);
}

TEST(Run, ArgminIsFirstMinimum) {
  const StochasticProblem p = make_sigmoid_regression(50, 3, 2);
  const RunTrace tr = run(p, SUMConfig::fixed(0.2, 0.5, 0.0), 400, 3, 4);
  std::size_t first = 0;
  double best = INFINITY;
  for (const auto& r : tr.records) {
    if (r.grad_sq < best) {
      best = r.grad_sq;
      first = r.k;
    }
  }
  EXPECT_EQ(tr.argmin_k, first);
  EXPECT_EQ(squared_norm(p.full_gradient(tr.argmin_iterate)), best);
  EXPECT_EQ(squared_norm(p.full_gradient(tr.last_iterate)), tr.records.back().grad_sq);
}

TEST(Run, DeterministicForSeed) {
  const StochasticProblem p = make_sigmoid_regression(100, 5, 1);
  const SUMConfig cfg = SUMConfig::fixed(0.1, 0.9, 0.0);
  EXPECT_EQ(trace_csv(run(p, cfg, 500, 11, 5)), trace_csv(run(p, cfg, 500, 11, 5)));
  EXPECT_NE(trace_csv(run(p, cfg, 500, 11, 5)), trace_csv(run(p, cfg, 500, 12, 5)));
  const auto a = run_replicas(p, cfg, 200, 4, 6, 10);
  const auto b = run_replicas(p, cfg, 200, 4, 3, 10);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(trace_csv(a[r]), trace_csv(b[r]));
}

TEST(Run, TraceCsvHeader) {
  const StochasticProblem p = make_tiny_mlp(30, 3, 4, 3, 1);
  RunOptions opt;
  opt.test_set = std::make_shared<const Dataset>(SyntheticDistribution::blobs(3, 3).sample(30, 2));
  const std::string csv = trace_csv(run(p, SUMConfig::fixed(0.05, 0.9, 1.0), 10, 1, 5, opt));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,f,grad_sq,min_grad_sq,train_err,test_err");
  const std::string quad = trace_csv(run(make_quadratic(2, 1), SUMConfig::fixed(0.1, 0.0, 0.0), 1, 1, 1));
  EXPECT_EQ(quad.substr(quad.find('\n') + 1).back(), '\n');
  EXPECT_NE(quad.find(",,\n"), std::string::npos);  // regression problems leave error columns empty
}

TEST(Run, DivergenceIsReported) {
  const StochasticProblem p = make_quadratic(3, 1);
  try {
    run(p, SUMConfig::fixed(10.0, 0.0, 0.0), 100, 1, 1, {ParamVector(3, 1.0)});
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.k(), 0u);
    EXPECT_LT(e.k(), 20u);
  }
  EXPECT_THROW(run(p, SUMConfig::fixed(0.1, 0.0, 0.0), 0, 1, 1), std::invalid_argument);
}

TEST(Run, SingleStepSizeDrop) {
  const StochasticProblem p = make_sigmoid_regression(60, 4, 5);
  RunOptions drop;
  drop.lr_drop_step = 0;
  drop.lr_drop_factor = 0.5;
  const auto a = run(p, SUMConfig::fixed(0.2, 0.9, 1.0), 100, 3, 10, drop);
  const auto b = run(p, SUMConfig::fixed(0.1, 0.9, 1.0), 100, 3, 10);
  EXPECT_EQ(trace_csv(a), trace_csv(b));
}

TEST(Run, MethodsConvergeComparably) {
  const StochasticProblem p = make_sigmoid_regression(200, 10, 7);
  double means[3];
  for (std::size_t mi = 0; mi < 3; ++mi) {
    const auto traces =
        run_replicas(p, SUMConfig::for_method(kAllMethods[mi], 0.01, 0.9), 2000, 13, 20, 20);
    double acc = 0.0;
    for (const auto& t : traces) acc += t.min_grad_sq();
    means[mi] = acc / traces.size();
  }
  for (double a : means) {
    for (double b : means) EXPECT_LT(std::abs(a - b), 0.5 * std::min(a, b));
  }
}

TEST(Aggregate, MeansAndStderrs) {
  const StochasticProblem p = make_sigmoid_regression(50, 3, 1);
  const auto traces = run_replicas(p, SUMConfig::fixed(0.1, 0.5, 0.0), 50, 2, 4, 10);
  const auto rows = aggregate(traces);
  ASSERT_EQ(rows.size(), traces[0].records.size());
  double acc = 0.0;
  for (const auto& t : traces) acc += t.records[2].grad_sq;
  EXPECT_NEAR(rows[2].grad_sq.mean, acc / 4.0, 1e-15);
  EXPECT_EQ(rows[2].min_grad_sq.count, 4u);
  const std::string csv = aggregate_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find(',')), "k");
}

TEST(CompareToBound, HandExampleBound) {
  const StochasticProblem p = make_quadratic(2, 1);
  const SUMConfig cfg = SUMConfig::scheduled(ScheduleMode::thm1, 0.0, 0.0, 1.0, 1.0, 99);
  const auto traces = run_replicas(p, cfg, 99, 1, 3, 1);
  const BoundReport rep = compare_to_bound(traces, {1.0, 1.0, 1.0, 1.0, 1.0, 99}, ScheduleMode::thm1);
  EXPECT_NEAR(rep.bound, 0.3, 1e-12);
  EXPECT_EQ(rep.min_grad_sq.count, 3u);
  EXPECT_DOUBLE_EQ(rep.ratio, rep.min_grad_sq.mean / 0.3);
}

TEST(CompareToBound, RejectsMismatchedSchedules) {
  const StochasticProblem p = make_quadratic(2, 1);
  const BoundInputs b{1.0, 1.0, 1.0, 1.0, 1.0, 99};
  const auto fixed = run_replicas(p, SUMConfig::fixed(0.1, 0.0, 0.0), 99, 1, 2, 1);
  EXPECT_THROW(compare_to_bound(fixed, b, ScheduleMode::thm1), ScheduleMismatch);
  const auto thm1 = run_replicas(p, SUMConfig::scheduled(ScheduleMode::thm1, 0.9, 0.0, 1.0, 1.0, 99), 99, 1, 2, 1);
  EXPECT_THROW(compare_to_bound(thm1, b, ScheduleMode::thm2), ScheduleMismatch);
  BoundInputs other = b;
  other.L = 2.0;
  EXPECT_THROW(compare_to_bound(thm1, other, ScheduleMode::thm1), ScheduleMismatch);
  EXPECT_THROW(compare_to_bound(std::span<const RunTrace>(), b, ScheduleMode::thm1), std::invalid_argument);
}

TEST(CompareToBound, SgDropsMomentumTerm) {
  BoundInputs a{1.0, 1.0, 1.0, 0.5, 1.0, 999};
  BoundInputs b = a;
  b.G = 100.0;
  EXPECT_NEAR(bound_thm1(a, 0.9, 10.0), bound_thm1(b, 0.9, 10.0), 1e-12);
}

TEST(CompareToBound, DominatedOnSigmoidRegression) {
  const StochasticProblem p = make_sigmoid_regression(200, 10, 3);
  const auto& pc = p.constants();
  const ParamVector x0(10);
  for (ScheduleMode mode : {ScheduleMode::thm1, ScheduleMode::thm2}) {
    for (double beta : {0.5, 0.9}) {
      for (Method m : kAllMethods) {
        const double s = unification_scalar(m, beta);
        const SUMConfig cfg = SUMConfig::scheduled(mode, beta, s, *pc.L_analytic, 1.0, 2000);
        RunOptions opt;
        opt.keep_iterates = true;
        const auto traces = run_replicas(p, cfg, 2000, 21, 20, 20, opt);
        EstimateRegion region{x0, 1.0, {}};
        for (const auto& t : traces) region.visited.insert(region.visited.end(), t.iterates.begin(), t.iterates.end());
        const auto est = estimate_constants(p, 100, 21, region);
        const BoundInputs b{p.loss(x0), *pc.L_analytic, *pc.G_analytic, est.sigma2, 1.0, 2000};
        const BoundReport rep = compare_to_bound(traces, b, mode);
        EXPECT_TRUE(rep.pass) << schedule_name(mode) << " beta=" << beta << " " << method_name(m)
                              << " ratio=" << rep.ratio;
      }
    }
  }
}

TEST(FitRate, SelfTests) {
  std::vector<RatePoint> inv_sqrt, flat;
  for (double t : {10.0, 100.0, 1000.0, 10000.0}) {
    inv_sqrt.push_back({t, 3.0 / std::sqrt(t)});
    flat.push_back({t, 0.25});
  }
  EXPECT_NEAR(fit_rate(inv_sqrt).slope, -0.5, 1e-12);
  EXPECT_NEAR(fit_rate(inv_sqrt).intercept, std::log(3.0), 1e-12);
  EXPECT_NEAR(fit_rate(flat).slope, 0.0, 1e-12);
}

TEST(FitRate, NeedsEnoughBudgets) {
  const std::vector<RatePoint> two{{10.0, 1.0}, {1000.0, 0.1}};
  EXPECT_THROW(fit_rate(two), std::invalid_argument);
  const std::vector<RatePoint> narrow{{10.0, 1.0}, {100.0, 0.5}, {999.0, 0.1}};
  EXPECT_THROW(fit_rate(narrow), std::invalid_argument);
  const std::vector<RatePoint> negative{{10.0, 1.0}, {100.0, 0.0}, {1000.0, 0.1}};
  EXPECT_THROW(fit_rate(negative), std::invalid_argument);
}

TEST(FitRate, GroupsUseMeanOfMinimum) {
  const StochasticProblem p = make_sigmoid_regression(100, 5, 2);
  std::vector<std::vector<RunTrace>> groups;
  for (std::size_t t : {100u, 1000u, 10000u}) {
    const SUMConfig cfg = SUMConfig::scheduled(ScheduleMode::thm1, 0.9, 1.0, *p.constants().L_analytic, 1.0, t);
    groups.push_back(run_replicas(p, cfg, t, 8, 5, default_record_every(t)));
  }
  const double slope = fit_rate(groups).slope;
  EXPECT_LT(slope, 0.0);
  EXPECT_GT(slope, -2.0);
}
