#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "sumlab/problems.hpp"
#include "sumlab/seeding.hpp"
#include "sumlab/sum_core.hpp"

namespace sumlab {

/// Deviation of a literal method implementation from step_unified.
/// `step` compares one update applied to the same state; `run` compares two
/// independent trajectories fed the same index stream.
struct EquivalenceResult {
  Method method = Method::shb;
  double max_step = 0.0;
  double max_run = 0.0;
};

/// Runs step_unified with s = unification_scalar(m, beta) + s_offset next to
/// the method's literal forms. A nonzero s_offset is a negative control.
inline EquivalenceResult check_equivalence(const StochasticProblem& p, Method m, double alpha,
                                           double beta, std::size_t steps, std::uint64_t seed,
                                           double s_offset = 0.0) {
  const SUMConfig cfg = SUMConfig::fixed(alpha, beta, unification_scalar(m, beta) + s_offset);
  const ParamVector x0 = p.initial_point(derive_seed(seed, SeedRole::init));
  IndexSampler sampler(p.n(), derive_seed(seed, SeedRole::equiv));

  EquivalenceResult res;
  res.method = m;
  SUMState u = SUMState::initial(x0);
  ParamVector ys_prev = x0;  // ys_{k-1}, used to read off the Nesterov velocity

  // Literal trajectories.
  ParamVector a_x = x0, a_prev = x0;                 // heavy-ball, two iterates
  ParamVector b_x = x0, b_v(x0.size());              // heavy-ball, velocity
  ParamVector c_y = x0, c_v(x0.size());              // Nesterov, velocity
  ParamVector d_x = x0, d_y = x0;                    // Nesterov, two sequences
  ParamVector e_x = x0;                              // plain SG
  const double sg_alpha = sg_effective_alpha(alpha, beta);

  auto track = [](double& slot, double v) { slot = std::max(slot, v); };

  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t i = sampler();
    const ParamVector g = p.example_gradient(u.x, i);
    SUMState next = step_unified(u, g, cfg);

    switch (m) {
      case Method::shb: {
        track(res.max_step, max_abs_diff(step_shb(u.x, u.x_prev, g, alpha, beta), next.x));
        ParamVector a_next = step_shb(a_x, a_prev, p.example_gradient(a_x, i), alpha, beta);
        a_prev = std::move(a_x);
        a_x = std::move(a_next);
        auto [bx, bv] = step_shb_velocity(b_x, b_v, p.example_gradient(b_x, i), alpha, beta);
        b_x = std::move(bx);
        b_v = std::move(bv);
        track(res.max_run, std::max(max_abs_diff(a_x, next.x), max_abs_diff(b_x, next.x)));
        break;
      }
      case Method::snag: {
        auto [tx, ty] = step_snag_two_sequence(u.x, u.ys, g, alpha, beta);
        track(res.max_step, std::max(max_abs_diff(tx, next.x), max_abs_diff(ty, next.ys)));
        const ParamVector v_k = u.ys - ys_prev;
        auto [vy, vv] = step_snag(u.ys, v_k, g, alpha, beta);
        track(res.max_step, std::max(max_abs_diff(vy, next.ys),
                                     max_abs_diff(snag_lookahead(vy, vv, beta), next.x)));

        const ParamVector look = snag_lookahead(c_y, c_v, beta);
        auto [cy, cv] = step_snag(c_y, c_v, p.example_gradient(look, i), alpha, beta);
        c_y = std::move(cy);
        c_v = std::move(cv);
        auto [dx, dy] = step_snag_two_sequence(d_x, d_y, p.example_gradient(d_x, i), alpha, beta);
        d_x = std::move(dx);
        d_y = std::move(dy);
        track(res.max_run, std::max({max_abs_diff(snag_lookahead(c_y, c_v, beta), next.x),
                                     max_abs_diff(c_y, next.ys), max_abs_diff(d_x, next.x),
                                     max_abs_diff(d_y, next.ys)}));
        break;
      }
      case Method::sg: {
        track(res.max_step, max_abs_diff(step_sg(u.x, g, sg_alpha), next.x));
        e_x = step_sg(e_x, p.example_gradient(e_x, i), sg_alpha);
        track(res.max_run, max_abs_diff(e_x, next.x));
        break;
      }
    }
    ys_prev = u.ys;
    u = std::move(next);
  }
  return res;
}

struct AuxRecursionResult {
  double z_residual = 0.0;  // max ||z_{k+1} - z_k + alpha/(1-beta) g_k|| / (1 + ||z_k||)
  double v_residual = 0.0;  // max ||v_{k+1} - beta v_k - ((1-beta)s - 1) alpha g_k|| / (1 + ||v_k||)
};

inline AuxRecursionResult check_aux_recursions(const StochasticProblem& p, double beta, double s, double alpha,
                                   std::size_t steps, std::uint64_t seed) {
  const SUMConfig cfg = SUMConfig::fixed(alpha, beta, s);
  SUMState st = SUMState::initial(p.initial_point(derive_seed(seed, SeedRole::init)));
  IndexSampler sampler(p.n(), derive_seed(seed, SeedRole::equiv));
  std::optional<ParamVector> prev_grad;
  AuxSequences aux = aux_sequences(st, prev_grad, cfg);
  AuxRecursionResult res;
  const double z_step = alpha / (1.0 - beta);
  const double v_step = ((1.0 - beta) * s - 1.0) * alpha;
  for (std::size_t k = 0; k < steps; ++k) {
    ParamVector g = p.example_gradient(st.x, sampler());
    st = step_unified(std::move(st), g, cfg);
    AuxSequences next = aux_sequences(st, g, cfg);

    ParamVector z_pred = aux.z;
    z_pred.axpy(-z_step, g);
    ParamVector v_pred = beta * aux.v;
    v_pred.axpy(v_step, g);
    res.z_residual = std::max(res.z_residual, distance(next.z, z_pred) / (1.0 + norm(aux.z)));
    res.v_residual = std::max(res.v_residual, distance(next.v, v_pred) / (1.0 + norm(aux.v)));
    aux = std::move(next);
    prev_grad = std::move(g);
  }
  return res;
}

/// Relative error ||x_steps - reconstruct|| / ||x_steps|| after `steps` steps.
inline double check_reconstruction(const StochasticProblem& p, double beta, double s, double alpha,
                           std::size_t steps, std::uint64_t seed) {
  const SUMConfig cfg = SUMConfig::fixed(alpha, beta, s);
  const ParamVector x0 = p.initial_point(derive_seed(seed, SeedRole::init));
  SUMState st = SUMState::initial(x0, true);
  IndexSampler sampler(p.n(), derive_seed(seed, SeedRole::equiv));
  for (std::size_t k = 0; k < steps; ++k) {
    st = step_unified(std::move(st), p.example_gradient(st.x, sampler()), cfg);
  }
  const ParamVector rebuilt = cumulative_reconstruct(x0, *st.grad_history, beta, s, alpha, steps - 1);
  const double scale = norm(st.x);
  const double err = distance(rebuilt, st.x);
  return scale > 0.0 ? err / scale : err;
}

struct IdentityRow {
  std::string problem;
  std::string identity;
  double beta = 0.0;
  double s = 0.0;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass() const { return residual <= tolerance; }
};

struct IdentitySuiteOptions {
  double alpha = 0.02;
  std::vector<double> betas{0.0, 0.5, 0.9};
  std::size_t equivalence_steps = 1000;
  std::size_t aux_steps = 1000;
  std::size_t reconstruction_steps = 200;
  std::uint64_t seed = 1;
  double s_offset = 0.0;  // injected into the equivalence runs only
};

inline constexpr double kStepTolerance = 1e-10;
inline constexpr double kRunTolerance = 1e-8;
inline constexpr double kAuxTolerance = 1e-12;
inline constexpr double kReconstructionTolerance = 1e-8;

/// The s grid checked for the auxiliary-sequence identities.
inline std::vector<double> identity_s_grid(double beta) {
  return {0.0, 1.0, 2.0, 1.0 / (1.0 - beta)};
}

inline std::vector<IdentityRow> run_identity_suite(const StochasticProblem& p,
                                                   const IdentitySuiteOptions& o) {
  std::vector<IdentityRow> rows;
  const std::string name(kind_name(p.kind()));
  for (double beta : o.betas) {
    for (Method m : kAllMethods) {
      const auto eq = check_equivalence(p, m, o.alpha, beta, o.equivalence_steps, o.seed, o.s_offset);
      const double s = unification_scalar(m, beta);
      const std::string tag = "equiv_" + std::string(method_name(m));
      rows.push_back({name, tag + "_step", beta, s, eq.max_step, kStepTolerance});
      rows.push_back({name, tag + "_run", beta, s, eq.max_run, kRunTolerance});
    }
    for (double s : identity_s_grid(beta)) {
      const auto l1 = check_aux_recursions(p, beta, s, o.alpha, o.aux_steps, o.seed);
      rows.push_back({name, "aux_z", beta, s, l1.z_residual, kAuxTolerance});
      rows.push_back({name, "aux_v", beta, s, l1.v_residual, kAuxTolerance});
      rows.push_back({name, "cumulative", beta, s,
                      check_reconstruction(p, beta, s, o.alpha, o.reconstruction_steps, o.seed), kReconstructionTolerance});
    }
  }
  return rows;
}

}  // namespace sumlab
