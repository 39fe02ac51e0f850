#pragma once

// Finite-sum objectives f(x) = (1/n) sum_i loss(x, q_i) with per-example
// gradients, the synthetic distributions that generate their data, and
// estimation of the constants (L, G, sigma^2) used by the bounds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sumlab/io.hpp"
#include "sumlab/param_vector.hpp"
#include "sumlab/seeding.hpp"

namespace sumlab {

enum class ProblemKind { quadratic, sigreg, mlp };

inline std::string_view kind_name(ProblemKind k) {
  switch (k) {
    case ProblemKind::quadratic: return "quadratic";
    case ProblemKind::sigreg: return "sigreg";
    case ProblemKind::mlp: return "mlp";
  }
  return "?";
}

inline std::optional<ProblemKind> parse_kind(std::string_view s) {
  if (s == "quadratic") return ProblemKind::quadratic;
  if (s == "sigreg") return ProblemKind::sigreg;
  if (s == "mlp") return ProblemKind::mlp;
  return std::nullopt;
}

inline constexpr double kDefaultRadius = 5.0;
inline constexpr double kSigregLabelNoise = 0.1;
inline constexpr double kMlpWeightDecay = 0.0005;

/// Labelled examples, stored row-major.
struct Dataset {
  ProblemKind kind = ProblemKind::quadratic;
  std::size_t dim = 0;
  std::uint64_t source_seed = 0;
  double radius = kDefaultRadius;
  std::vector<double> features;
  std::vector<double> labels;

  std::size_t size() const noexcept { return labels.size(); }

  std::span<const double> feature(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }

  void push_back(std::span<const double> a, double label) {
    if (a.size() != dim) throw DimensionError("Dataset::push_back: feature dimension mismatch");
    features.insert(features.end(), a.begin(), a.end());
    labels.push_back(label);
  }

  void replace(std::size_t j, std::span<const double> a, double label) {
    if (j >= size()) throw std::out_of_range("Dataset::replace: index out of range");
    if (a.size() != dim) throw DimensionError("Dataset::replace: feature dimension mismatch");
    std::copy(a.begin(), a.end(), features.begin() + static_cast<std::ptrdiff_t>(j * dim));
    labels[j] = label;
  }

  bool example_equal(const Dataset& o, std::size_t i) const {
    if (labels[i] != o.labels[i]) return false;
    const auto a = feature(i);
    const auto b = o.feature(i);
    return std::equal(a.begin(), a.end(), b.begin());
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Text form: header `n d seed R kind`, then one example per line with the
/// features followed by the label. Doubles use shortest round-trip decimals.
inline std::string export_dataset(const Dataset& ds) {
  std::string out = std::to_string(ds.size()) + ' ' + std::to_string(ds.dim) + ' ' +
                    std::to_string(ds.source_seed) + ' ' + format_double(ds.radius) + ' ' +
                    std::string(kind_name(ds.kind)) + '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.feature(i)) {
      out += format_double(v);
      out += ' ';
    }
    out += format_double(ds.labels[i]);
    out += '\n';
  }
  return out;
}

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Dataset import_dataset(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset: missing header");
  std::istringstream hdr(line);
  std::size_t n = 0;
  std::string seed_tok, radius_tok, kind_tok;
  Dataset ds;
  if (!(hdr >> n >> ds.dim >> seed_tok >> radius_tok >> kind_tok)) {
    throw FormatError("dataset: malformed header, expected `n d seed R kind`");
  }
  try {
    ds.source_seed = std::stoull(seed_tok);
  } catch (const std::exception&) {
    throw FormatError("dataset: bad seed in header");
  }
  const auto radius = parse_double(radius_tok);
  const auto kind = parse_kind(kind_tok);
  if (!radius || !kind) throw FormatError("dataset: bad radius or kind in header");
  ds.radius = *radius;
  ds.kind = *kind;
  ds.features.reserve(n * ds.dim);
  ds.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw FormatError("dataset: expected " + std::to_string(n) + " examples");
    std::istringstream row(line);
    std::string tok;
    std::vector<double> vals;
    while (row >> tok) {
      const auto v = parse_double(tok);
      if (!v) throw FormatError("dataset: line " + std::to_string(i + 2) + ": bad number `" + tok + "`");
      vals.push_back(*v);
    }
    if (vals.size() != ds.dim + 1) {
      throw FormatError("dataset: line " + std::to_string(i + 2) + ": expected " +
                        std::to_string(ds.dim + 1) + " fields");
    }
    ds.labels.push_back(vals.back());
    vals.pop_back();
    ds.features.insert(ds.features.end(), vals.begin(), vals.end());
  }
  return ds;
}

/// Generating distribution for one problem kind. Fully determined by its
/// fields, so a dataset header is enough to rebuild it.
struct SyntheticDistribution {
  ProblemKind kind = ProblemKind::sigreg;
  std::size_t dim = 1;
  std::size_t classes = 2;
  double radius = kDefaultRadius;
  double label_noise = 0.0;
  double separation = 1.5;   // sigreg: distance of each cluster mean from the origin
  double noise_scale = 1.0;  // per-coordinate std of the feature noise
  double blob_spread = 2.0;  // mlp: expected norm of a class center

  static SyntheticDistribution quadratic(std::size_t d) {
    return {ProblemKind::quadratic, d, 1, kDefaultRadius, 0.0, 0.0, 1.0, 0.0};
  }
  static SyntheticDistribution sigreg(std::size_t d) {
    return {ProblemKind::sigreg, d, 2, kDefaultRadius, kSigregLabelNoise, 1.5, 1.0, 0.0};
  }
  static SyntheticDistribution blobs(std::size_t d, std::size_t classes) {
    return {ProblemKind::mlp, d, classes, kDefaultRadius, 0.0, 0.0, 1.0, 2.0};
  }

  /// Draw one example into `a`; returns its label.
  double draw(Rng& rng, std::vector<double>& a) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    a.assign(dim, 0.0);
    double label = 0.0;
    switch (kind) {
      case ProblemKind::quadratic:
        for (double& v : a) v = noise_scale * normal(rng);
        break;
      case ProblemKind::sigreg: {
        std::bernoulli_distribution coin(0.5);
        const bool positive = coin(rng);
        const double shift = (positive ? 1.0 : -1.0) * separation / std::sqrt(double(dim));
        for (double& v : a) v = shift + noise_scale * normal(rng);
        std::bernoulli_distribution flip(label_noise);
        label = (positive != flip(rng)) ? 1.0 : 0.0;
        break;
      }
      case ProblemKind::mlp: {
        std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
        const std::size_t c = pick(rng);
        const auto centers = blob_centers();
        for (std::size_t i = 0; i < dim; ++i) a[i] = centers[c * dim + i] + noise_scale * normal(rng);
        label = static_cast<double>(c);
        break;
      }
    }
    clamp_norm(a);
    return label;
  }

  Dataset sample(std::size_t n, std::uint64_t seed) const {
    Dataset ds;
    ds.kind = kind;
    ds.dim = dim;
    ds.source_seed = seed;
    ds.radius = radius;
    ds.features.reserve(n * dim);
    ds.labels.reserve(n);
    Rng rng(seed);
    std::vector<double> a;
    for (std::size_t i = 0; i < n; ++i) {
      const double label = draw(rng, a);
      ds.push_back(a, label);
    }
    return ds;
  }

  /// Class centers of the blob distribution; a fixed function of (dim, classes).
  std::vector<double> blob_centers() const {
    Rng rng(mix64(0xB10B5ULL ^ (dim << 16) ^ classes));
    std::normal_distribution<double> normal(0.0, blob_spread / std::sqrt(double(dim)));
    std::vector<double> c(classes * dim);
    for (double& v : c) v = normal(rng);
    return c;
  }

 private:
  void clamp_norm(std::vector<double>& a) const {
    double sq = 0.0;
    for (double v : a) sq += v * v;
    const double nrm = std::sqrt(sq);
    if (nrm > radius) {
      const double scale = radius / nrm;
      for (double& v : a) v *= scale;
    }
  }
};

namespace detail {

inline double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double dot_span(std::span<const double> a, const ParamVector& x, std::size_t offset = 0) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * x[offset + i];
  return acc;
}

}  // namespace detail

/// loss_i(x) = 0.5 ||x - c_i||^2. L = 1 exactly.
struct QuadraticModel {
  std::size_t param_dim(const Dataset& ds) const { return ds.dim; }

  double example_loss(const Dataset& ds, const ParamVector& x, std::size_t i) const {
    const auto c = ds.feature(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) acc += (x[j] - c[j]) * (x[j] - c[j]);
    return 0.5 * acc;
  }

  void accumulate_gradient(const Dataset& ds, const ParamVector& x, std::size_t i, double scale,
                           ParamVector& out) const {
    const auto c = ds.feature(i);
    for (std::size_t j = 0; j < c.size(); ++j) out[j] += scale * (x[j] - c[j]);
  }

  std::optional<bool> misclassified(const Dataset&, const ParamVector&, std::size_t) const {
    return std::nullopt;
  }
};

/// Largest |d^2/dz^2 (sigmoid(z) - b)^2| over z and b in {0, 1}. With
/// u = sigmoid(z) and b = 0 the second derivative is 4u^2 - 10u^3 + 6u^4,
/// maximised at u = (15 - sqrt(33)) / 24.
inline double sigreg_curvature_constant() {
  const double u = (15.0 - std::sqrt(33.0)) / 24.0;
  return 4.0 * u * u - 10.0 * u * u * u + 6.0 * u * u * u * u;
}

/// loss_i(x) = (sigmoid(a_i . x) - b_i)^2, non-convex with bounded gradient.
struct SigmoidModel {
  std::size_t param_dim(const Dataset& ds) const { return ds.dim; }

  double example_loss(const Dataset& ds, const ParamVector& x, std::size_t i) const {
    const double r = detail::logistic(detail::dot_span(ds.feature(i), x)) - ds.labels[i];
    return r * r;
  }

  void accumulate_gradient(const Dataset& ds, const ParamVector& x, std::size_t i, double scale,
                           ParamVector& out) const {
    const auto a = ds.feature(i);
    const double sg = detail::logistic(detail::dot_span(a, x));
    const double coef = scale * 2.0 * (sg - ds.labels[i]) * sg * (1.0 - sg);
    for (std::size_t j = 0; j < a.size(); ++j) out[j] += coef * a[j];
  }

  std::optional<bool> misclassified(const Dataset& ds, const ParamVector& x, std::size_t i) const {
    const bool predicted = detail::dot_span(ds.feature(i), x) > 0.0;
    return predicted != (ds.labels[i] > 0.5);
  }
};

/// One-hidden-layer tanh network with softmax cross-entropy and an L2
/// penalty (weight_decay / 2) ||W||^2 on both weight matrices.
///
/// Parameter layout: W1 (hidden x d_in, row-major), b1 (hidden),
/// W2 (classes x hidden, row-major), b2 (classes).
struct MlpModel {
  std::size_t d_in = 0;
  std::size_t hidden = 0;
  std::size_t classes = 0;
  double weight_decay = kMlpWeightDecay;

  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return hidden * d_in; }
  std::size_t w2_offset() const { return b1_offset() + hidden; }
  std::size_t b2_offset() const { return w2_offset() + classes * hidden; }
  std::size_t param_dim() const { return b2_offset() + classes; }
  std::size_t param_dim(const Dataset&) const { return param_dim(); }

  void validate(const Dataset& ds) const {
    if (ds.dim != d_in) throw DimensionError("MlpModel: dataset dimension does not match d_in");
    if (hidden == 0 || hidden > 64) throw DimensionError("MlpModel: hidden must lie in [1, 64]");
    if (classes < 2 || classes > 10) throw DimensionError("MlpModel: classes must lie in [2, 10]");
    for (double y : ds.labels) {
      if (y < 0.0 || y >= static_cast<double>(classes) || y != std::floor(y)) {
        throw DimensionError("MlpModel: label outside [0, classes)");
      }
    }
  }

  double penalty(const ParamVector& x) const {
    double acc = 0.0;
    for (std::size_t j = w1_offset(); j < b1_offset(); ++j) acc += x[j] * x[j];
    for (std::size_t j = w2_offset(); j < b2_offset(); ++j) acc += x[j] * x[j];
    return 0.5 * weight_decay * acc;
  }

  // Fills hidden activations and logits for example i.
  void forward(const Dataset& ds, const ParamVector& x, std::size_t i, std::vector<double>& h,
               std::vector<double>& logits) const {
    const auto a = ds.feature(i);
    h.assign(hidden, 0.0);
    logits.assign(classes, 0.0);
    for (std::size_t u = 0; u < hidden; ++u) {
      double z = x[b1_offset() + u];
      const std::size_t row = w1_offset() + u * d_in;
      for (std::size_t j = 0; j < d_in; ++j) z += x[row + j] * a[j];
      h[u] = std::tanh(z);
    }
    for (std::size_t c = 0; c < classes; ++c) {
      double o = x[b2_offset() + c];
      const std::size_t row = w2_offset() + c * hidden;
      for (std::size_t u = 0; u < hidden; ++u) o += x[row + u] * h[u];
      logits[c] = o;
    }
  }

  static double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    double acc = 0.0;
    for (double o : v) acc += std::exp(o - m);
    return m + std::log(acc);
  }

  double example_loss(const Dataset& ds, const ParamVector& x, std::size_t i) const {
    std::vector<double> h, logits;
    forward(ds, x, i, h, logits);
    const auto y = static_cast<std::size_t>(ds.labels[i]);
    return log_sum_exp(logits) - logits[y] + penalty(x);
  }

  void accumulate_gradient(const Dataset& ds, const ParamVector& x, std::size_t i, double scale,
                           ParamVector& out) const {
    std::vector<double> h, logits;
    forward(ds, x, i, h, logits);
    const auto y = static_cast<std::size_t>(ds.labels[i]);
    const double lse = log_sum_exp(logits);
    std::vector<double> d_out(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      d_out[c] = std::exp(logits[c] - lse) - (c == y ? 1.0 : 0.0);
    }
    std::vector<double> d_hidden(hidden, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t row = w2_offset() + c * hidden;
      out[b2_offset() + c] += scale * d_out[c];
      for (std::size_t u = 0; u < hidden; ++u) {
        out[row + u] += scale * (d_out[c] * h[u] + weight_decay * x[row + u]);
        d_hidden[u] += x[row + u] * d_out[c];
      }
    }
    const auto a = ds.feature(i);
    for (std::size_t u = 0; u < hidden; ++u) {
      const double dz = d_hidden[u] * (1.0 - h[u] * h[u]);
      out[b1_offset() + u] += scale * dz;
      const std::size_t row = w1_offset() + u * d_in;
      for (std::size_t j = 0; j < d_in; ++j) {
        out[row + j] += scale * (dz * a[j] + weight_decay * x[row + j]);
      }
    }
  }

  std::size_t predict(const Dataset& ds, const ParamVector& x, std::size_t i) const {
    std::vector<double> h, logits;
    forward(ds, x, i, h, logits);
    return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }

  std::optional<bool> misclassified(const Dataset& ds, const ParamVector& x, std::size_t i) const {
    return predict(ds, x, i) != static_cast<std::size_t>(ds.labels[i]);
  }

  /// Glorot-style normal initialisation; biases start at zero.
  ParamVector initial_weights(std::uint64_t seed) const {
    ParamVector x(param_dim());
    Rng rng(seed);
    std::normal_distribution<double> w1(0.0, 1.0 / std::sqrt(double(d_in)));
    std::normal_distribution<double> w2(0.0, 1.0 / std::sqrt(double(hidden)));
    for (std::size_t j = w1_offset(); j < b1_offset(); ++j) x[j] = w1(rng);
    for (std::size_t j = w2_offset(); j < b2_offset(); ++j) x[j] = w2(rng);
    return x;
  }
};

/// Constants known in closed form for a problem, if any.
struct ProblemConstants {
  std::optional<double> L_analytic;
  std::optional<double> G_analytic;
  double f_lower = 0.0;
};

struct GradientSample {
  std::size_t index = 0;
  ParamVector grad;
  std::size_t k = 0;
};

/// A finite-sum objective over a dataset. Immutable once built; evaluation
/// is reentrant.
class StochasticProblem {
 public:
  using Model = std::variant<QuadraticModel, SigmoidModel, MlpModel>;

  StochasticProblem(std::shared_ptr<const Dataset> data, Model model, ProblemConstants constants,
                    std::optional<SyntheticDistribution> distribution = std::nullopt)
      : data_(std::move(data)),
        model_(std::move(model)),
        constants_(constants),
        distribution_(distribution) {
    if (!data_ || data_->size() < 2) throw std::invalid_argument("StochasticProblem: need n >= 2");
    if (const auto* mlp = std::get_if<MlpModel>(&model_)) mlp->validate(*data_);
  }

  ProblemKind kind() const {
    return std::visit(
        [](const auto& m) {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, QuadraticModel>) return ProblemKind::quadratic;
          else if constexpr (std::is_same_v<M, SigmoidModel>) return ProblemKind::sigreg;
          else return ProblemKind::mlp;
        },
        model_);
  }

  const Dataset& dataset() const noexcept { return *data_; }
  std::shared_ptr<const Dataset> dataset_ptr() const noexcept { return data_; }
  const Model& model() const noexcept { return model_; }
  const ProblemConstants& constants() const noexcept { return constants_; }
  const std::optional<SyntheticDistribution>& distribution() const noexcept { return distribution_; }

  std::size_t n() const noexcept { return data_->size(); }
  std::size_t dim() const {
    return std::visit([&](const auto& m) { return m.param_dim(*data_); }, model_);
  }

  double example_loss(const ParamVector& x, std::size_t i) const {
    check_x(x);
    return std::visit([&](const auto& m) { return m.example_loss(*data_, x, i); }, model_);
  }

  double loss(const ParamVector& x) const { return loss_on(*data_, x); }

  /// Mean loss of the model at x on another dataset of the same kind.
  double loss_on(const Dataset& ds, const ParamVector& x) const {
    check_x(x);
    return std::visit(
        [&](const auto& m) {
          double acc = 0.0;
          for (std::size_t i = 0; i < ds.size(); ++i) acc += m.example_loss(ds, x, i);
          return acc / static_cast<double>(ds.size());
        },
        model_);
  }

  ParamVector example_gradient(const ParamVector& x, std::size_t i) const {
    check_x(x);
    if (i >= n()) throw std::out_of_range("example_gradient: index out of range");
    ParamVector g(x.size());
    std::visit([&](const auto& m) { m.accumulate_gradient(*data_, x, i, 1.0, g); }, model_);
    return g;
  }

  ParamVector full_gradient(const ParamVector& x) const {
    check_x(x);
    ParamVector g(x.size());
    const double w = 1.0 / static_cast<double>(n());
    std::visit(
        [&](const auto& m) {
          for (std::size_t i = 0; i < n(); ++i) m.accumulate_gradient(*data_, x, i, w, g);
        },
        model_);
    return g;
  }

  /// (1/n) sum_i ||g_i(x) - grad f(x)||^2, computed by enumerating all examples.
  double exact_variance(const ParamVector& x) const {
    const ParamVector mean = full_gradient(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < n(); ++i) acc += squared_norm(example_gradient(x, i) - mean);
    return acc / static_cast<double>(n());
  }

  GradientSample sample_gradient(const ParamVector& x, std::size_t k, IndexSampler& sampler) const {
    const std::size_t i = sampler();
    return {i, example_gradient(x, i), k};
  }

  /// Fraction of misclassified examples of `ds`, or nullopt for regression problems.
  std::optional<double> error_rate(const ParamVector& x, const Dataset& ds) const {
    check_x(x);
    return std::visit(
        [&](const auto& m) -> std::optional<double> {
          std::size_t wrong = 0;
          for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto miss = m.misclassified(ds, x, i);
            if (!miss) return std::nullopt;
            wrong += *miss ? 1 : 0;
          }
          return static_cast<double>(wrong) / static_cast<double>(ds.size());
        },
        model_);
  }

  /// Default starting point: the origin for quadratic and sigmoid problems,
  /// random weights for the network.
  ParamVector initial_point(std::uint64_t seed) const {
    if (const auto* mlp = std::get_if<MlpModel>(&model_)) return mlp->initial_weights(seed);
    return ParamVector(dim());
  }

  /// Same kind and hyperparameters over different data.
  StochasticProblem with_dataset(Dataset ds) const {
    return with_dataset(std::make_shared<const Dataset>(std::move(ds)));
  }
  StochasticProblem with_dataset(std::shared_ptr<const Dataset> ds) const {
    ProblemConstants c = constants_;
    if (kind() == ProblemKind::quadratic) c.f_lower = quadratic_min_value(*ds);
    return StochasticProblem(std::move(ds), model_, c, distribution_);
  }

  /// Minimum of the quadratic objective: mean squared spread of the centers / 2.
  static double quadratic_min_value(const Dataset& ds) {
    const ParamVector mean = quadratic_minimizer(ds);
    double acc = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto c = ds.feature(i);
      for (std::size_t j = 0; j < ds.dim; ++j) acc += (c[j] - mean[j]) * (c[j] - mean[j]);
    }
    return 0.5 * acc / static_cast<double>(ds.size());
  }

  static ParamVector quadratic_minimizer(const Dataset& ds) {
    ParamVector mean(ds.dim);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto c = ds.feature(i);
      for (std::size_t j = 0; j < ds.dim; ++j) mean[j] += c[j];
    }
    mean *= 1.0 / static_cast<double>(ds.size());
    return mean;
  }

 private:
  void check_x(const ParamVector& x) const {
    if (x.size() != dim()) {
      throw DimensionError("StochasticProblem: parameter dimension " + std::to_string(x.size()) +
                           " does not match " + std::to_string(dim()));
    }
  }

  std::shared_ptr<const Dataset> data_;
  Model model_;
  ProblemConstants constants_;
  std::optional<SyntheticDistribution> distribution_;
};

/// Quadratic over explicit centers.
inline StochasticProblem make_quadratic(Dataset centers) {
  if (centers.dim < 1) throw DimensionError("make_quadratic: d must be >= 1");
  centers.kind = ProblemKind::quadratic;
  ProblemConstants c{1.0, std::nullopt, StochasticProblem::quadratic_min_value(centers)};
  const std::size_t d = centers.dim;
  return StochasticProblem(std::make_shared<const Dataset>(std::move(centers)), QuadraticModel{}, c,
                           SyntheticDistribution::quadratic(d));
}

inline StochasticProblem make_quadratic(std::size_t d, std::uint64_t seed, std::size_t n = 50) {
  if (d < 1) throw DimensionError("make_quadratic: d must be >= 1");
  return make_quadratic(SyntheticDistribution::quadratic(d).sample(n, seed));
}

/// Analytic constants of sigmoid regression for features bounded by R:
/// G = R/2 and L = sigreg_curvature_constant() * R^2.
inline ProblemConstants sigreg_constants(double radius) {
  return {sigreg_curvature_constant() * radius * radius, 0.5 * radius, 0.0};
}

inline StochasticProblem make_sigmoid_regression(Dataset ds) {
  ds.kind = ProblemKind::sigreg;
  const auto c = sigreg_constants(ds.radius);
  const std::size_t d = ds.dim;
  return StochasticProblem(std::make_shared<const Dataset>(std::move(ds)), SigmoidModel{}, c,
                           SyntheticDistribution::sigreg(d));
}

inline StochasticProblem make_sigmoid_regression(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n < 2 || d < 1) throw DimensionError("make_sigmoid_regression: need n >= 2 and d >= 1");
  return make_sigmoid_regression(SyntheticDistribution::sigreg(d).sample(n, seed));
}

inline StochasticProblem make_tiny_mlp(Dataset ds, std::size_t hidden, std::size_t classes) {
  ds.kind = ProblemKind::mlp;
  MlpModel m{ds.dim, hidden, classes, kMlpWeightDecay};
  const std::size_t d = ds.dim;
  return StochasticProblem(std::make_shared<const Dataset>(std::move(ds)), m,
                           ProblemConstants{std::nullopt, std::nullopt, 0.0},
                           SyntheticDistribution::blobs(d, classes));
}

inline StochasticProblem make_tiny_mlp(std::size_t n, std::size_t d_in, std::size_t hidden,
                                       std::size_t classes, std::uint64_t seed) {
  if (n > 10000) throw DimensionError("make_tiny_mlp: n must be <= 10^4");
  if (hidden == 0 || hidden > 64) throw DimensionError("make_tiny_mlp: hidden must lie in [1, 64]");
  if (classes < 2 || classes > 10) throw DimensionError("make_tiny_mlp: classes must lie in [2, 10]");
  if (d_in < 1) throw DimensionError("make_tiny_mlp: d_in must be >= 1");
  return make_tiny_mlp(SyntheticDistribution::blobs(d_in, classes).sample(n, seed), hidden, classes);
}

/// Where estimate_constants looks: a ball around `center` plus any points
/// an optimizer actually visited.
struct EstimateRegion {
  ParamVector center;
  double radius = 1.0;
  std::vector<ParamVector> visited;
};

struct ConstantEstimates {
  double L = 0.0;
  double G = 0.0;
  double sigma2 = 0.0;
  bool L_analytic = false;
};

/// Empirical constants over `samples` random points in the region (and all
/// visited points). L uses the analytic value when the problem has one.
inline ConstantEstimates estimate_constants(const StochasticProblem& p, std::size_t samples,
                                            std::uint64_t seed, const EstimateRegion& region) {
  if (samples < 100) throw std::invalid_argument("estimate_constants: need at least 100 samples");
  if (!std::isfinite(region.radius) || region.radius < 0.0 ||
      (region.radius == 0.0 && region.visited.empty())) {
    throw std::invalid_argument("estimate_constants: degenerate sampling region");
  }
  const std::size_t d = p.dim();
  if (region.center.size() != d) throw DimensionError("estimate_constants: center dimension mismatch");

  Rng rng(derive_seed(seed, SeedRole::estimate));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto random_direction = [&] {
    ParamVector u(d);
    double sq = 0.0;
    do {
      sq = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        u[i] = normal(rng);
        sq += u[i] * u[i];
      }
    } while (sq == 0.0);
    return (1.0 / std::sqrt(sq)) * u;
  };

  std::vector<ParamVector> points = region.visited;
  for (std::size_t s = 0; s < samples; ++s) {
    const double r = region.radius * std::pow(unif(rng), 1.0 / static_cast<double>(d));
    points.push_back(region.center + r * random_direction());
  }

  ConstantEstimates est;
  est.L_analytic = p.constants().L_analytic.has_value();
  if (est.L_analytic) est.L = *p.constants().L_analytic;
  const double probe = std::max(1e-3 * region.radius, 1e-6);
  for (const auto& x : points) {
    const ParamVector gx = p.full_gradient(x);
    est.G = std::max(est.G, norm(gx));
    est.sigma2 = std::max(est.sigma2, p.exact_variance(x));
    if (!est.L_analytic) {
      const ParamVector y = x + probe * random_direction();
      est.L = std::max(est.L, distance(p.full_gradient(y), gx) / distance(y, x));
    }
  }
  return est;
}

}  // namespace sumlab
