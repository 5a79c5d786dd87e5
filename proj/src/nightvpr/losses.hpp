#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nightvpr/encoder.hpp"

namespace nightvpr::losses {

using encoder::Descriptor;

inline constexpr double kProbFloor = 1e-12;

// Cosine classifier: one unit-norm weight row per class, scale s, margin m.
struct ClassifierHead {
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::vector<double> w;  // classes x dim, row-major
  double s = 30.0;
  double m = 0.4;

  // Seeded Gaussian rows, normalized and rounded to f32.
  static ClassifierHead init(std::size_t classes, std::size_t dim, double s, double m,
                             std::uint64_t seed);

  std::span<const double> row(std::size_t j) const { return {&w[j * dim], dim}; }
  std::span<double> row(std::size_t j) { return {&w[j * dim], dim}; }

  // Rescales every row to unit length (f32-representable result).
  void normalize_rows();
  void validate() const;

  friend bool operator==(const ClassifierHead&, const ClassifierHead&) = default;
};

struct SoftenedDistribution {
  std::vector<double> probs;
};

enum class AlphaMode { Fixed, Auto };

struct LossConfig {
  double alpha = 30.0;
  AlphaMode alpha_mode = AlphaMode::Fixed;
  double s = 30.0;
  double m = 0.4;
  // KL over Bernoulli(p_gt) instead of the full class distribution.
  bool ikt_scalar_mode = false;

  void validate() const;
};

// W_j . x for every class j.
std::vector<double> cosines(std::span<const double> x, const ClassifierHead& head);

// s (cos_j - m [j == label]).
std::vector<double> margin_logits(std::span<const double> cos, std::size_t label,
                                  const ClassifierHead& head);

struct LossResult {
  double loss = 0.0;
  double lmc = 0.0;
  double ikt = 0.0;
  std::vector<std::vector<double>> d_x;  // per batch element
  std::vector<double> d_w;               // classes x dim
};

// Mean large-margin-cosine loss over the batch with exact gradients.
LossResult lmc_loss(std::span<const Descriptor> batch, std::span<const std::size_t> labels,
                    const ClassifierHead& head);

// Softmax of the margin-adjusted scaled logits, floored at kProbFloor.
SoftenedDistribution softened_probs(std::span<const double> x, std::size_t label,
                                    const ClassifierHead& head);

struct IktResult {
  double loss = 0.0;
  std::vector<double> d_logits;  // gradient w.r.t. the night logits
};

// D_KL(p_day || p_night) over the full distribution. The gradient assumes
// p_night is the softmax of the logits being differentiated. Throws if
// p_night[j] == 0 where p_day[j] > 0.
IktResult ikt_loss(const SoftenedDistribution& p_day, const SoftenedDistribution& p_night);

// KL between Bernoulli(p_day[label]) and Bernoulli(p_night[label]).
IktResult ikt_loss_scalar(const SoftenedDistribution& p_day,
                          const SoftenedDistribution& p_night, std::size_t label);

// L_LMC + alpha * mean_i D_KL(p_day_i || p_night_i). p_day is a constant.
LossResult combined_loss(std::span<const Descriptor> batch,
                         std::span<const std::size_t> labels, const ClassifierHead& head,
                         std::span<const SoftenedDistribution> p_day, double alpha,
                         bool scalar_mode = false);

// alpha such that alpha * ikt == lmc; falls back to `fallback` when ikt is
// negligible.
double auto_alpha(double lmc, double ikt, double fallback);

}  // namespace nightvpr::losses
