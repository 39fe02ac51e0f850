#pragma once

// Unified stochastic momentum (SUM):
//
//   y_{k+1}   = x_k - alpha * g_k
//   ys_{k+1}  = x_k - s * alpha * g_k
//   x_{k+1}   = y_{k+1} + beta * (ys_{k+1} - ys_k),     ys_0 = x_0
//
// s = 0 gives stochastic heavy-ball, s = 1 stochastic Nesterov and
// s = 1/(1-beta) plain stochastic gradient with step alpha/(1-beta).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sumlab/param_vector.hpp"

namespace sumlab {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Method { shb, snag, sg };

inline constexpr Method kAllMethods[] = {Method::shb, Method::snag, Method::sg};

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::shb: return "shb";
    case Method::snag: return "snag";
    case Method::sg: return "sg";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view name) {
  if (name == "shb") return Method::shb;
  if (name == "snag") return Method::snag;
  if (name == "sg") return Method::sg;
  return std::nullopt;
}

/// The value of s that turns SUM into the named method.
inline double unification_scalar(Method m, double beta) {
  switch (m) {
    case Method::shb: return 0.0;
    case Method::snag: return 1.0;
    case Method::sg: return 1.0 / (1.0 - beta);
  }
  return 0.0;
}

enum class ScheduleMode { fixed, thm1, thm2 };

inline std::string_view schedule_name(ScheduleMode m) {
  switch (m) {
    case ScheduleMode::fixed: return "fixed";
    case ScheduleMode::thm1: return "thm1";
    case ScheduleMode::thm2: return "thm2";
  }
  return "?";
}

inline std::optional<ScheduleMode> parse_schedule(std::string_view name) {
  if (name == "fixed") return ScheduleMode::fixed;
  if (name == "thm1") return ScheduleMode::thm1;
  if (name == "thm2") return ScheduleMode::thm2;
  return std::nullopt;
}

/// Step size prescribed by the convergence theorems for a budget of t
/// iterations. thm1 ignores s; thm2 shrinks the smoothness cap by
/// 1 + ((1-beta)s - 1)^2.
inline double schedule_alpha(ScheduleMode mode, double beta, double s, double L, double C,
                             std::size_t t) {
  if (!(L > 0.0) || !(C > 0.0)) throw ConfigError("schedule_alpha: L and C must be positive");
  if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("schedule_alpha: beta must lie in [0, 1)");
  if (!(s >= 0.0)) throw ConfigError("schedule_alpha: s must be non-negative");
  const double rate_cap = C / std::sqrt(static_cast<double>(t) + 1.0);
  switch (mode) {
    case ScheduleMode::thm1:
      return std::min((1.0 - beta) / (2.0 * L), rate_cap);
    case ScheduleMode::thm2: {
      const double gap = (1.0 - beta) * s - 1.0;
      return std::min((1.0 - beta) / (2.0 * L * (1.0 + gap * gap)), rate_cap);
    }
    case ScheduleMode::fixed:
      break;
  }
  throw ConfigError("schedule_alpha: fixed mode has no derived step size");
}

/// Schedule tag carried by a config. For thm1/thm2 the step size is derived
/// from (L, C, budget).
struct Schedule {
  ScheduleMode mode = ScheduleMode::fixed;
  double L = 0.0;
  double C = 0.0;
  std::size_t budget = 0;

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

/// One member of the SUM family.
struct SUMConfig {
  double alpha = 0.0;
  double beta = 0.0;
  double s = 0.0;
  Schedule schedule{};

  static SUMConfig fixed(double alpha, double beta, double s) {
    SUMConfig cfg{alpha, beta, s, {}};
    cfg.validate();
    return cfg;
  }

  static SUMConfig for_method(Method m, double alpha, double beta) {
    return fixed(alpha, beta, unification_scalar(m, beta));
  }

  static SUMConfig scheduled(ScheduleMode mode, double beta, double s, double L, double C,
                             std::size_t budget) {
    if (mode == ScheduleMode::fixed) throw ConfigError("scheduled(): mode must be thm1 or thm2");
    SUMConfig cfg{schedule_alpha(mode, beta, s, L, C, budget), beta, s,
                  Schedule{mode, L, C, budget}};
    cfg.validate();
    return cfg;
  }

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("SUMConfig: alpha must be > 0");
    if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("SUMConfig: beta must lie in [0, 1)");
    if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("SUMConfig: s must be >= 0");
    if (schedule.mode != ScheduleMode::fixed) {
      const double derived =
          schedule_alpha(schedule.mode, beta, s, schedule.L, schedule.C, schedule.budget);
      if (derived != alpha) {
        throw ConfigError("SUMConfig: alpha does not match its " +
                          std::string(schedule_name(schedule.mode)) + " schedule");
      }
    }
  }

  friend bool operator==(const SUMConfig&, const SUMConfig&) = default;
};

struct GradientRecord {
  std::size_t k = 0;
  ParamVector grad;
};

/// Iterate x_k together with the auxiliary iterate ys_k. x_prev is kept so
/// the auxiliary sequences can be evaluated from their defining formula.
struct SUMState {
  std::size_t k = 0;
  ParamVector x;
  ParamVector x_prev;
  ParamVector ys;
  std::optional<std::vector<GradientRecord>> grad_history;

  static SUMState initial(ParamVector x0, bool record_history = false) {
    x0.ensure_finite("SUMState::initial");
    SUMState st;
    st.x_prev = x0;
    st.ys = x0;
    st.x = std::move(x0);
    if (record_history) st.grad_history.emplace();
    return st;
  }
};

/// Advance one SUM step. Consumes its input; use the const& overload to
/// keep the original state.
inline SUMState step_unified(SUMState&& state, const ParamVector& grad, const SUMConfig& cfg) {
  state.x.check_same_dim(grad, "step_unified");
  const std::size_t d = grad.size();
  ParamVector x_next(d);
  ParamVector ys_next(d);
  const double a = cfg.alpha;
  const double sa = cfg.s * cfg.alpha;
  for (std::size_t i = 0; i < d; ++i) {
    const double y = state.x[i] - a * grad[i];
    ys_next[i] = state.x[i] - sa * grad[i];
    x_next[i] = y + cfg.beta * (ys_next[i] - state.ys[i]);
  }
  x_next.ensure_finite("step_unified");
  if (state.grad_history) state.grad_history->push_back({state.k, grad});
  state.x_prev = std::move(state.x);
  state.x = std::move(x_next);
  state.ys = std::move(ys_next);
  ++state.k;
  return std::move(state);
}

inline SUMState step_unified(const SUMState& state, const ParamVector& grad,
                             const SUMConfig& cfg) {
  SUMState copy = state;
  return step_unified(std::move(copy), grad, cfg);
}

/// Heavy-ball in its two-iterate form: x_k - alpha g + beta (x_k - x_{k-1}).
/// At k = 0 pass x_km1 = x_k.
inline ParamVector step_shb(const ParamVector& x_k, const ParamVector& x_km1,
                            const ParamVector& grad, double alpha, double beta) {
  x_k.check_same_dim(x_km1, "step_shb");
  x_k.check_same_dim(grad, "step_shb");
  ParamVector out(x_k.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x_k[i] - alpha * grad[i] + beta * (x_k[i] - x_km1[i]);
  }
  out.ensure_finite("step_shb");
  return out;
}

/// Heavy-ball in velocity form: v' = beta v - alpha g, x' = x + v'.
inline std::pair<ParamVector, ParamVector> step_shb_velocity(const ParamVector& x,
                                                             const ParamVector& v,
                                                             const ParamVector& grad,
                                                             double alpha, double beta) {
  x.check_same_dim(v, "step_shb_velocity");
  x.check_same_dim(grad, "step_shb_velocity");
  ParamVector v_next(x.size());
  ParamVector x_next(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    v_next[i] = beta * v[i] - alpha * grad[i];
    x_next[i] = x[i] + v_next[i];
  }
  x_next.ensure_finite("step_shb_velocity");
  return {std::move(x_next), std::move(v_next)};
}

/// Nesterov in velocity form. The gradient must be evaluated at y + beta v.
/// Returns (y_{k+1}, v_{k+1}).
inline std::pair<ParamVector, ParamVector> step_snag(const ParamVector& y_k, const ParamVector& v_k,
                                                     const ParamVector& grad_at_lookahead,
                                                     double alpha, double beta) {
  y_k.check_same_dim(v_k, "step_snag");
  y_k.check_same_dim(grad_at_lookahead, "step_snag");
  ParamVector v_next(y_k.size());
  ParamVector y_next(y_k.size());
  for (std::size_t i = 0; i < y_k.size(); ++i) {
    v_next[i] = beta * v_k[i] - alpha * grad_at_lookahead[i];
    y_next[i] = y_k[i] + v_next[i];
  }
  y_next.ensure_finite("step_snag");
  return {std::move(y_next), std::move(v_next)};
}

/// Point at which step_snag expects its gradient.
inline ParamVector snag_lookahead(const ParamVector& y_k, const ParamVector& v_k, double beta) {
  ParamVector out = y_k;
  out.axpy(beta, v_k);
  return out;
}

/// Nesterov in its two-sequence form: y' = x - alpha g, x' = y' + beta (y' - y).
/// Returns (x_{k+1}, y_{k+1}); y_0 = x_0.
inline std::pair<ParamVector, ParamVector> step_snag_two_sequence(const ParamVector& x_k,
                                                                  const ParamVector& y_k,
                                                                  const ParamVector& grad,
                                                                  double alpha, double beta) {
  x_k.check_same_dim(y_k, "step_snag_two_sequence");
  x_k.check_same_dim(grad, "step_snag_two_sequence");
  ParamVector y_next(x_k.size());
  ParamVector x_next(x_k.size());
  for (std::size_t i = 0; i < x_k.size(); ++i) {
    y_next[i] = x_k[i] - alpha * grad[i];
    x_next[i] = y_next[i] + beta * (y_next[i] - y_k[i]);
  }
  x_next.ensure_finite("step_snag_two_sequence");
  return {std::move(x_next), std::move(y_next)};
}

inline double sg_effective_alpha(double alpha, double beta) { return alpha / (1.0 - beta); }

inline ParamVector step_sg(const ParamVector& x, const ParamVector& grad, double effective_alpha) {
  if (!(effective_alpha > 0.0)) throw ConfigError("step_sg: effective_alpha must be > 0");
  x.check_same_dim(grad, "step_sg");
  ParamVector out = x;
  out.axpy(-effective_alpha, grad);
  out.ensure_finite("step_sg");
  return out;
}

/// p_k, v_k and z_k = x_k + p_k derived from a SUM state.
struct AuxSequences {
  ParamVector p;
  ParamVector v;
  ParamVector z;
};

/// p_k = beta/(1-beta) (x_k - x_{k-1} + s alpha g_{k-1}) for k >= 1 and 0 at
/// k = 0; v_k = (1-beta)/beta p_k. When beta = 0, v_k is taken as the
/// bracket itself so it stays defined.
inline AuxSequences aux_sequences(const SUMState& state, const std::optional<ParamVector>& prev_grad,
                                  const SUMConfig& cfg) {
  const std::size_t d = state.x.size();
  if (state.k == 0) {
    return {ParamVector(d), ParamVector(d), state.x};
  }
  if (!prev_grad) {
    throw std::invalid_argument("aux_sequences: previous gradient required for k >= 1");
  }
  state.x.check_same_dim(*prev_grad, "aux_sequences");
  ParamVector bracket(d);
  const double sa = cfg.s * cfg.alpha;
  for (std::size_t i = 0; i < d; ++i) {
    bracket[i] = state.x[i] - state.x_prev[i] + sa * (*prev_grad)[i];
  }
  const double ratio = cfg.beta / (1.0 - cfg.beta);
  ParamVector p = ratio * bracket;
  ParamVector v = cfg.beta > 0.0 ? ((1.0 - cfg.beta) / cfg.beta) * p : std::move(bracket);
  ParamVector z = state.x + p;
  return {std::move(p), std::move(v), std::move(z)};
}

namespace detail {

inline constexpr double kFlushBelow = 1e-300;

/// beta^m by repeated multiplication; values under 1e-300 flush to zero.
inline double flushed_power(double beta, std::size_t m) {
  double p = 1.0;
  for (std::size_t i = 0; i < m; ++i) {
    p *= beta;
    if (p < kFlushBelow) return 0.0;
  }
  return p;
}

}  // namespace detail

/// Tail term beta^{t-k+1} (1 - s(1-beta)) / (1-beta) that separates eta_k^t
/// from its limit 1/(1-beta).
inline double eta_deficit(double beta, double s, std::size_t t, std::size_t k) {
  if (k > t) throw std::invalid_argument("eta_coefficient: k must not exceed t");
  const double pw = detail::flushed_power(beta, t - k + 1);
  return pw * (1.0 - s * (1.0 - beta)) / (1.0 - beta);
}

/// Weight eta_k^t of gradient g_k in x_{t+1} = x_0 - sum_k eta_k^t alpha g_k.
inline double eta_coefficient(double beta, double s, std::size_t t, std::size_t k) {
  if (k > t) throw std::invalid_argument("eta_coefficient: k must not exceed t");
  const double pw = detail::flushed_power(beta, t - k + 1);
  return (1.0 - pw * (1.0 - s * (1.0 - beta))) / (1.0 - beta);
}

/// eta indexed by lag m = t - k + 1, for m = 1..max_lag. Entry [m] equals
/// eta_coefficient(beta, s, t, t + 1 - m); entry [0] is unused.
inline std::vector<double> eta_by_lag(double beta, double s, std::size_t max_lag) {
  std::vector<double> out(max_lag + 1, 0.0);
  const double c = 1.0 - s * (1.0 - beta);
  double pw = 1.0;
  for (std::size_t m = 1; m <= max_lag; ++m) {
    if (pw != 0.0) {
      pw *= beta;
      if (pw < detail::kFlushBelow) pw = 0.0;
    }
    out[m] = (1.0 - pw * c) / (1.0 - beta);
  }
  return out;
}

/// x_{t+1} rebuilt from x_0 and the gradients g_0..g_t of a run.
inline ParamVector cumulative_reconstruct(const ParamVector& x0,
                                          std::span<const GradientRecord> history, double beta,
                                          double s, double alpha, std::size_t t) {
  if (history.size() < t + 1) {
    throw std::invalid_argument("cumulative_reconstruct: history holds " +
                                std::to_string(history.size()) + " gradients, need " +
                                std::to_string(t + 1));
  }
  const std::vector<double> eta = eta_by_lag(beta, s, t + 1);
  ParamVector out = x0;
  for (std::size_t tau = 0; tau <= t; ++tau) {
    if (history[tau].k != tau) throw std::invalid_argument("cumulative_reconstruct: history out of order");
    out.axpy(-eta[t - tau + 1] * alpha, history[tau].grad);
  }
  out.ensure_finite("cumulative_reconstruct");
  return out;
}

/// Problem constants entering the convergence bounds.
struct BoundInputs {
  double f0_minus_fstar = 0.0;
  double L = 1.0;
  double G = 1.0;
  double sigma2 = 0.0;
  double C = 1.0;
  std::size_t t = 0;

  void validate() const {
    if (!std::isfinite(f0_minus_fstar) || f0_minus_fstar < 0.0)
      throw ConfigError("BoundInputs: f0 - f* must be finite and >= 0");
    if (!(L > 0.0) || !std::isfinite(L)) throw ConfigError("BoundInputs: L must be > 0");
    if (!(G > 0.0) || !std::isfinite(G)) throw ConfigError("BoundInputs: G must be > 0");
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw ConfigError("BoundInputs: sigma2 must be >= 0");
    if (!(C > 0.0) || !std::isfinite(C)) throw ConfigError("BoundInputs: C must be > 0");
  }
};

/// ((1-beta)s - 1)^2: 1 for heavy-ball, beta^2 for Nesterov, 0 for SG.
inline double momentum_gap_sq(double beta, double s) {
  const double g = (1.0 - beta) * s - 1.0;
  return g * g;
}

/// Upper bound on min_{k<=t} E||grad f(x_k)||^2 under the thm1 schedule.
inline double bound_thm1(const BoundInputs& b, double beta, double s) {
  b.validate();
  const double tp1 = static_cast<double>(b.t) + 1.0;
  const double omb = 1.0 - beta;
  const double lead = 2.0 * b.f0_minus_fstar * omb / tp1 *
                      std::max(2.0 * b.L / omb, std::sqrt(tp1) / b.C);
  const double noise = b.L * beta * beta * momentum_gap_sq(beta, s) * (b.G * b.G + b.sigma2) +
                       b.L * b.sigma2 * omb * omb;
  return lead + b.C / std::sqrt(tp1) * noise / (omb * omb * omb);
}

/// Upper bound under the thm2 schedule.
inline double bound_thm2(const BoundInputs& b, double beta, double s) {
  b.validate();
  const double tp1 = static_cast<double>(b.t) + 1.0;
  const double omb = 1.0 - beta;
  const double lambda =
      std::max(2.0 * b.L * (1.0 + momentum_gap_sq(beta, s)) / omb, std::sqrt(tp1) / b.C);
  const double lead = 2.0 * b.f0_minus_fstar * omb / tp1 * lambda;
  const double noise = b.L * beta * beta * (b.G * b.G + b.sigma2) + b.L * b.sigma2 * omb * omb;
  return lead + b.C / std::sqrt(tp1) * noise / (omb * omb * omb);
}

inline double bound_for(ScheduleMode which, const BoundInputs& b, double beta, double s) {
  switch (which) {
    case ScheduleMode::thm1: return bound_thm1(b, beta, s);
    case ScheduleMode::thm2: return bound_thm2(b, beta, s);
    case ScheduleMode::fixed: break;
  }
  throw ConfigError("bound_for: fixed schedule has no theorem bound");
}

}  // namespace sumlab
