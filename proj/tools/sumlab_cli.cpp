// sumlab command-line front end.
//
// Exit codes: 0 ok, 1 check failed, 2 configuration error, 3 divergence.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sumlab/convergence_lab.hpp"
#include "sumlab/experiment_config.hpp"
#include "sumlab/identity_checks.hpp"
#include "sumlab/manifest.hpp"
#include "sumlab/stability_lab.hpp"

namespace fs = std::filesystem;
using namespace sumlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

struct FlagSpec {
  const char* flag;
  const char* key;
  const char* help;
};

const FlagSpec kValueFlags[] = {
    {"--problem", "problem", "quadratic | sigreg | mlp"},
    {"--n", "n", "training examples"},
    {"--n-test", "n_test", "test examples (generalize)"},
    {"--dim", "dim", "feature dimension"},
    {"--hidden", "hidden", "hidden units (mlp)"},
    {"--classes", "classes", "classes (mlp)"},
    {"--method", "method", "shb | snag | sg"},
    {"--s", "s", "unification scalar s >= 0"},
    {"--beta", "beta", "momentum constant in [0, 1)"},
    {"--alpha", "alpha", "fixed step size"},
    {"--schedule", "schedule", "thm1 | thm2"},
    {"--L", "L", "smoothness constant"},
    {"--C", "C", "schedule constant"},
    {"--G", "G", "gradient bound (bounds)"},
    {"--sigma2", "sigma2", "gradient noise bound (bounds)"},
    {"--f0", "f0", "f(x0) - f* (bounds)"},
    {"--betas", "betas", "comma-separated beta grid (bounds, equiv-check)"},
    {"--steps", "steps", "iterations t"},
    {"--replicas", "replicas", "Monte-Carlo replicas"},
    {"--seed", "seed", "master seed"},
    {"--record-every", "record_every", "full-gradient cadence, 0 = steps/500"},
    {"--out", "out", "output directory"},
};

struct Invocation {
  Command command;
  std::map<std::string, std::string> values;
  bool all_methods = false;
  bool identical_neighbor = false;
  std::string config_path;
  std::string replay_path;
  double corrupt_s = 0.0;
  CLI::App* app = nullptr;
};

void register_flags(CLI::App* sub, Invocation& inv) {
  for (const auto& f : kValueFlags) sub->add_option(f.flag, inv.values[f.key], f.help);
  sub->add_flag("--all-methods", inv.all_methods, "run shb, snag and sg");
  sub->add_flag("--identical-neighbor", inv.identical_neighbor, "use S' = S (control)");
  sub->add_option("--config", inv.config_path, "key=value config file");
  sub->add_option("--replay", inv.replay_path, "manifest.jsonl of an earlier run");
  sub->add_option("--corrupt-s", inv.corrupt_s)->group("");
}

ExperimentConfig resolve(const Invocation& inv) {
  std::vector<Settings> layers;
  if (!inv.replay_path.empty()) {
    auto [cmd, layer] = manifest_settings(read_file(inv.replay_path), inv.replay_path);
    if (cmd != inv.command) {
      throw ConfigError(inv.replay_path + ": manifest records `" + std::string(command_name(cmd)) +
                        "`, not `" + std::string(command_name(inv.command)) + "`");
    }
    layers.push_back(std::move(layer));
  }
  if (!inv.config_path.empty()) {
    if (!fs::exists(inv.config_path)) throw ConfigError(inv.config_path + ": no such config file");
    layers.push_back(parse_settings(read_file(inv.config_path), inv.config_path));
  }
  Settings flags;
  for (const auto& f : kValueFlags) {
    if (inv.app->count(f.flag) > 0) flags[f.key] = {inv.values.at(f.key), f.flag};
  }
  if (inv.app->count("--all-methods") > 0) {
    flags["all_methods"] = {inv.all_methods ? "true" : "false", "--all-methods"};
  }
  if (inv.app->count("--identical-neighbor") > 0) {
    flags["identical_neighbor"] = {inv.identical_neighbor ? "true" : "false", "--identical-neighbor"};
  }
  layers.push_back(std::move(flags));
  return resolve_config(inv.command, layers);
}

StochasticProblem build_problem(const ExperimentConfig& c) {
  const std::uint64_t ds_seed = derive_seed(c.seed, SeedRole::dataset);
  switch (c.problem) {
    case ProblemKind::quadratic:
      return make_quadratic(SyntheticDistribution::quadratic(c.dim).sample(c.n, ds_seed));
    case ProblemKind::sigreg: return make_sigmoid_regression(c.n, c.dim, ds_seed);
    case ProblemKind::mlp: return make_tiny_mlp(c.n, c.dim, c.hidden, c.classes, ds_seed);
  }
  throw ConfigError("unknown problem");
}

std::vector<std::optional<Method>> selected_methods(const ExperimentConfig& c) {
  if (c.all_methods) return {Method::shb, Method::snag, Method::sg};
  if (c.method) return {*c.method};
  return {std::nullopt};
}

std::string method_tag(const ExperimentConfig& c, std::optional<Method> m) {
  if (m) return std::string(method_name(*m));
  return "s" + format_double(c.s());
}

Json config_json(const SUMConfig& cfg) {
  Json j{{"alpha", cfg.alpha}, {"beta", cfg.beta}, {"s", cfg.s},
         {"schedule", std::string(schedule_name(cfg.schedule.mode))}};
  if (cfg.schedule.mode != ScheduleMode::fixed) {
    j["L"] = cfg.schedule.L;
    j["C"] = cfg.schedule.C;
    j["budget"] = cfg.schedule.budget;
  }
  return j;
}

class Output {
 public:
  explicit Output(const ExperimentConfig& c) : dir_(c.out), manifest_(c) {}

  void file(const std::string& name, const std::string& content) {
    pending_.emplace_back(name, content);
    files_.push_back(name);
  }
  Manifest& manifest() { return manifest_; }

  // Files are only written once the whole command has succeeded.
  void commit() {
    for (const auto& [name, content] : pending_) write_file_atomic(dir_ / name, content);
    manifest_.add({{"record", "outputs"}, {"files", files_}});
    write_file_atomic(dir_ / "manifest.jsonl", manifest_.str());
  }

 private:
  fs::path dir_;
  Manifest manifest_;
  std::vector<std::pair<std::string, std::string>> pending_;
  std::vector<std::string> files_;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int cmd_equiv_check(const ExperimentConfig& c, double corrupt_s) {
  Output out(c);
  IdentitySuiteOptions o;
  o.alpha = c.alpha;
  o.betas = c.betas;
  o.equivalence_steps = c.steps;
  o.aux_steps = c.steps;
  o.reconstruction_steps = std::min<std::size_t>(200, c.steps);
  o.seed = c.seed;
  o.s_offset = corrupt_s;

  const std::uint64_t ds_seed = derive_seed(c.seed, SeedRole::dataset);
  const StochasticProblem problems[] = {
      make_quadratic(SyntheticDistribution::quadratic(c.dim).sample(c.n, ds_seed)),
      make_sigmoid_regression(c.n, c.dim, ds_seed)};

  CsvBuilder csv({"problem", "identity", "beta", "s", "residual", "tolerance", "pass"});
  std::map<std::string, std::pair<double, double>> worst;  // identity -> (residual, tolerance)
  std::vector<std::string> order;
  bool ok = true;
  for (const auto& p : problems) {
    for (const auto& r : run_identity_suite(p, o)) {
      csv.row({r.problem, r.identity, format_double(r.beta), format_double(r.s),
               format_double(r.residual), format_double(r.tolerance), r.pass() ? "1" : "0"});
      if (!worst.count(r.identity)) order.push_back(r.identity);
      auto& w = worst[r.identity];
      w.first = std::max(w.first, r.residual);
      w.second = r.tolerance;
      ok = ok && r.pass();
    }
  }
  std::printf("%-20s %-14s %-10s %s\n", "identity", "max_residual", "tolerance", "status");
  Json summary = Json::object();
  for (const auto& id : order) {
    const auto [res, tol] = worst[id];
    std::printf("%-20s %-14.3e %-10.0e %s\n", id.c_str(), res, tol, res <= tol ? "ok" : "FAIL");
    summary[id] = {{"max_residual", res}, {"tolerance", tol}};
  }
  out.file("equiv_report.csv", csv.str());
  out.manifest().add({{"record", "identities"}, {"pass", ok}, {"max_residuals", summary}});
  if (corrupt_s != 0.0) out.manifest().add({{"record", "test_hooks"}, {"corrupt_s", corrupt_s}});
  out.commit();
  std::printf("%s\n", ok ? "all identities hold" : "identity check FAILED");
  return ok ? kExitOk : kExitFail;
}

int cmd_converge(const ExperimentConfig& c) {
  Output out(c);
  const StochasticProblem problem = build_problem(c);
  const std::size_t every = c.effective_record_every();
  const bool scheduled = c.schedule != ScheduleMode::fixed;
  const ParamVector x0 = problem.initial_point(derive_seed(c.seed, SeedRole::init));
  const double f0 = problem.loss(x0);
  const auto& pc = problem.constants();

  out.manifest().add({{"record", "problem"},
                      {"kind", std::string(kind_name(problem.kind()))},
                      {"n", problem.n()},
                      {"param_dim", problem.dim()},
                      {"dataset_seed", problem.dataset().source_seed},
                      {"radius", problem.dataset().radius},
                      {"f_lower", pc.f_lower},
                      {"f0", f0},
                      {"record_every", every},
                      {"divergence_factor", kDivergenceFactor}});

  CsvBuilder report({"method", "s", "alpha", "min_grad_sq_mean", "min_grad_sq_stderr", "bound",
                     "ratio", "pass"});
  bool ok = true;
  for (const auto& m : selected_methods(c)) {
    const SUMConfig cfg = c.sum_config(m);
    const std::string tag = method_tag(c, m);
    RunOptions opt;
    opt.x0 = x0;
    opt.keep_iterates = scheduled;
    const auto traces = run_replicas(problem, cfg, c.steps, c.seed, c.replicas, every, opt);

    CsvBuilder solutions({"replica", "argmin_k", "argmin_grad_sq", "last_f", "last_grad_sq"});
    for (std::size_t r = 0; r < traces.size(); ++r) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_replica_%03zu.csv", tag.c_str(), r);
      out.file(name, trace_csv(traces[r]));
      solutions.row({cell(r), cell(traces[r].argmin_k), cell(traces[r].min_grad_sq()),
                     cell(traces[r].records.back().f), cell(traces[r].records.back().grad_sq)});
    }
    const auto rows = aggregate(traces);
    out.file(tag + "_aggregate.csv", aggregate_csv(rows));
    out.file(tag + "_solutions.csv", solutions.str());

    std::vector<double> mins;
    for (const auto& t : traces) mins.push_back(t.min_grad_sq());
    const MeanStderr ms = mean_stderr(mins);
    Json rec{{"record", "result"}, {"method", tag}, {"config", config_json(cfg)},
             {"replicas", c.replicas}, {"min_grad_sq_mean", ms.mean}, {"min_grad_sq_stderr", ms.stderr_}};

    if (!scheduled) {
      std::printf("%-6s alpha=%s  mean min ||grad f||^2 = %s +- %s  (fixed step: no theorem bound)\n",
                  tag.c_str(), fmt(cfg.alpha).c_str(), fmt(ms.mean).c_str(), fmt(ms.stderr_).c_str());
      report.row({tag, format_double(cfg.s), format_double(cfg.alpha), format_double(ms.mean),
                  format_double(ms.stderr_), "", "", ""});
      out.manifest().add(std::move(rec));
      continue;
    }

    EstimateRegion region;
    region.center = x0;
    region.radius = 0.0;
    for (const auto& t : traces) {
      for (const auto& x : t.iterates) {
        region.radius = std::max(region.radius, distance(x, x0));
        region.visited.push_back(x);
      }
    }
    region.radius = std::max(region.radius, 1e-3);
    const auto est = estimate_constants(problem, 100, c.seed, region);
    BoundInputs b;
    b.f0_minus_fstar = std::max(0.0, f0 - pc.f_lower);
    b.L = c.L;
    b.G = pc.G_analytic.value_or(std::max(est.G, 1e-12));
    b.sigma2 = est.sigma2;
    b.C = c.C;
    b.t = c.steps;
    const BoundReport rep = compare_to_bound(traces, b, c.schedule);
    ok = ok && rep.pass;
    const bool regional = !pc.G_analytic;
    std::printf("%-6s alpha=%s  mean min ||grad f||^2 = %s +- %s  bound = %s  ratio = %s  %s%s\n",
                tag.c_str(), fmt(cfg.alpha).c_str(), fmt(ms.mean).c_str(), fmt(ms.stderr_).c_str(),
                fmt(rep.bound).c_str(), fmt(rep.ratio).c_str(), rep.pass ? "pass" : "FAIL",
                regional ? "  (regional constants)" : "");
    report.row({tag, format_double(cfg.s), format_double(cfg.alpha), format_double(ms.mean),
                format_double(ms.stderr_), format_double(rep.bound), format_double(rep.ratio),
                rep.pass ? "1" : "0"});
    rec["constants"] = {{"f0_minus_fstar", b.f0_minus_fstar}, {"L", b.L}, {"G", b.G},
                        {"G_source", pc.G_analytic ? "analytic" : "regional estimate"},
                        {"sigma2", b.sigma2}, {"sigma2_source", "max exact variance over visited iterates and ball"},
                        {"C", b.C}, {"t", b.t}};
    rec["bound"] = {{"which", std::string(schedule_name(c.schedule))}, {"value", rep.bound},
                    {"ratio", rep.ratio}, {"slack", rep.slack}, {"pass", rep.pass}};
    out.manifest().add(std::move(rec));
  }
  out.file("bound_report.csv", report.str());
  out.commit();
  return ok ? kExitOk : kExitFail;
}

int cmd_stability(const ExperimentConfig& c) {
  Output out(c);
  const StochasticProblem problem = build_problem(c);
  StabilityOptions opt;
  opt.identical_neighbor = c.identical_neighbor;
  opt.allow_tail_approx = c.steps > kExactBoundLimit;

  std::map<Method, CoupledRunResult> by_method;
  bool ok = true;
  for (const auto& m : selected_methods(c)) {
    const std::string tag = method_tag(c, m);
    const SUMConfig cfg = c.sum_config(m);
    CoupledRunResult res = stability_experiment(problem, cfg, c.steps, c.replicas, c.seed, opt);
    out.file("stability_" + tag + ".csv", stability_csv(res));
    const MeanStderr fin = res.final_delta();
    const bool has_bound = !res.bound.empty();
    const double ratio = worst_bound_ratio(res);
    bool pass = !has_bound || ratio <= 1.1;
    if (c.identical_neighbor) {
      for (const auto& d : res.delta) {
        for (double v : d) pass = pass && v == 0.0;
      }
    }
    ok = ok && pass;
    std::printf("%-6s final mean delta = %s +- %s  worst delta/bound = %s  %s\n", tag.c_str(),
                fmt(fin.mean).c_str(), fmt(fin.stderr_).c_str(),
                has_bound ? fmt(ratio).c_str() : "n/a", pass ? "pass" : "FAIL");
    Json rec{{"record", "result"}, {"method", tag}, {"config", config_json(cfg)},
             {"replicas", c.replicas}, {"identical_neighbor", c.identical_neighbor},
             {"final_delta_mean", fin.mean}, {"final_delta_stderr", fin.stderr_}};
    if (has_bound) {
      rec["bound"] = {{"G", res.G}, {"L", res.L}, {"source", "analytic"},
                      {"tail_approximated", res.bound_tail_approximated},
                      {"worst_ratio", ratio}, {"slack", 1.1}, {"pass", pass}};
    }
    out.manifest().add(std::move(rec));
    if (m) by_method.emplace(*m, std::move(res));
  }
  if (by_method.size() == 3) {
    const auto s = ordering_summary(by_method.at(Method::shb), by_method.at(Method::snag),
                                    by_method.at(Method::sg));
    CsvBuilder csv({"method", "final_delta_mean", "final_delta_stderr", "lower80", "upper80"});
    const std::pair<const char*, MeanStderr> rows[] = {{"shb", s.shb}, {"snag", s.snag}, {"sg", s.sg}};
    for (const auto& [name, ms] : rows) {
      csv.row({name, format_double(ms.mean), format_double(ms.stderr_), format_double(ms.lower(kZ80)),
               format_double(ms.upper(kZ80))});
    }
    out.file("ordering.csv", csv.str());
    std::printf("ordering shb <= snag <= sg on means: %s; shb/sg 80%% intervals separated: %s\n",
                s.means_ordered ? "yes" : "no", s.shb_sg_separated ? "yes" : "no");
    out.manifest().add({{"record", "ordering"},
                        {"means_ordered", s.means_ordered},
                        {"shb_sg_separated", s.shb_sg_separated},
                        {"confidence", 0.8}});
  }
  out.commit();
  return ok ? kExitOk : kExitFail;
}

int cmd_generalize(const ExperimentConfig& c) {
  Output out(c);
  GapExperimentConfig g;
  g.n = c.n;
  g.n_test = c.n_test;
  g.d_in = c.dim;
  g.hidden = c.hidden;
  g.classes = c.classes;
  g.alpha = c.alpha;
  g.beta = c.beta;
  g.methods.clear();
  for (const auto& m : selected_methods(c)) g.methods.push_back(*m);
  g.steps = c.steps;
  g.replicas = c.replicas;
  g.record_every = c.effective_record_every();
  g.seed = c.seed;
  const auto curves = gap_experiment(g);
  for (const auto& curve : curves) {
    const std::string tag(method_name(curve.method));
    out.file("gap_" + tag + ".csv", gap_csv(curve));
    const double late = late_mean_gap(curve);
    std::printf("%-6s final train err = %s  test err = %s  late mean |gap| = %s\n", tag.c_str(),
                fmt(curve.train_err.back().mean).c_str(), fmt(curve.test_err.back().mean).c_str(),
                fmt(late).c_str());
    out.manifest().add({{"record", "result"},
                        {"method", tag},
                        {"config", config_json(SUMConfig::for_method(curve.method, c.alpha, c.beta))},
                        {"final_train_err", curve.train_err.back().mean},
                        {"final_test_err", curve.test_err.back().mean},
                        {"late_mean_gap", late},
                        {"late_fraction", 0.25}});
  }
  out.commit();
  return kExitOk;
}

int cmd_bounds(const ExperimentConfig& c) {
  Output out(c);
  BoundInputs b{c.f0, c.L, c.G, c.sigma2, c.C, c.steps};
  CsvBuilder csv({"beta", "method", "s", "gap_sq", "alpha_thm1", "bound_thm1", "alpha_thm2",
                  "bound_thm2", "thm1_ordered"});
  std::printf("t = %zu, L = %s, G = %s, sigma2 = %s, f0 - f* = %s, C = %s\n", c.steps,
              fmt(c.L).c_str(), fmt(c.G).c_str(), fmt(c.sigma2).c_str(), fmt(c.f0).c_str(),
              fmt(c.C).c_str());
  std::printf("%-6s %-6s %-10s %-12s %-14s %-14s %s\n", "beta", "method", "s", "gap_sq",
              "bound_thm1", "bound_thm2", "order");
  Json table = Json::array();
  for (double beta : c.betas) {
    double vals[3];
    for (std::size_t i = 0; i < 3; ++i) vals[i] = bound_thm1(b, beta, unification_scalar(kAllMethods[i], beta));
    const bool ordered = vals[0] >= vals[1] && vals[1] >= vals[2];
    for (Method m : kAllMethods) {
      const double s = unification_scalar(m, beta);
      const double b1 = bound_thm1(b, beta, s), b2 = bound_thm2(b, beta, s);
      const double a1 = schedule_alpha(ScheduleMode::thm1, beta, s, c.L, c.C, c.steps);
      const double a2 = schedule_alpha(ScheduleMode::thm2, beta, s, c.L, c.C, c.steps);
      const std::string name(method_name(m));
      std::printf("%-6s %-6s %-10s %-12s %-14s %-14s %s\n", fmt(beta).c_str(), name.c_str(),
                  fmt(s).c_str(), fmt(momentum_gap_sq(beta, s)).c_str(), fmt(b1).c_str(),
                  fmt(b2).c_str(), m == Method::shb ? (ordered ? "shb >= snag >= sg" : "NOT ordered") : "");
      csv.row({format_double(beta), name, format_double(s), format_double(momentum_gap_sq(beta, s)),
               format_double(a1), format_double(b1), format_double(a2), format_double(b2),
               ordered ? "1" : "0"});
      table.push_back({{"beta", beta}, {"method", name}, {"bound_thm1", b1}, {"bound_thm2", b2}});
    }
  }
  out.file("bounds.csv", csv.str());
  out.manifest().add({{"record", "bounds"}, {"rows", table}});
  out.commit();
  return kExitOk;
}

int dispatch(const Invocation& inv) {
  const ExperimentConfig c = resolve(inv);
  switch (c.command) {
    case Command::equiv_check: return cmd_equiv_check(c, inv.corrupt_s);
    case Command::converge: return cmd_converge(c);
    case Command::stability: return cmd_stability(c);
    case Command::generalize: return cmd_generalize(c);
    case Command::bounds: return cmd_bounds(c);
  }
  return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic unified momentum experiments"};
  app.require_subcommand(1);
  const std::pair<Command, const char*> subs[] = {
      {Command::equiv_check, "check the SUM equivalence and auxiliary-sequence identities"},
      {Command::converge, "run SUM and compare min ||grad f||^2 to the theorem bounds"},
      {Command::stability, "coupled runs on neighbouring datasets"},
      {Command::generalize, "train/test error gap of the tiny network"},
      {Command::bounds, "tabulate the convergence bounds over a beta grid"}};
  std::vector<std::unique_ptr<Invocation>> invs;
  for (const auto& [cmd, help] : subs) {
    auto inv = std::make_unique<Invocation>();
    inv->command = cmd;
    inv->app = app.add_subcommand(std::string(command_name(cmd)), help);
    register_flags(inv->app, *inv);
    invs.push_back(std::move(inv));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  for (const auto& inv : invs) {
    if (!inv->app->parsed()) continue;
    try {
      return dispatch(*inv);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfig;
    } catch (const DivergenceError& e) {
      std::cerr << "divergence: " << e.what() << "\n";
      return kExitDiverged;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitFail;
    }
  }
  return kExitConfig;
}
