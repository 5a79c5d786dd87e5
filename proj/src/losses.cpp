#include "nightvpr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nightvpr/error.hpp"
#include "nightvpr/random.hpp"
#include "nightvpr/seed.hpp"

namespace nightvpr::losses {

ClassifierHead ClassifierHead::init(std::size_t classes, std::size_t dim, double s,
                                    double m, std::uint64_t seed) {
  if (classes == 0 || dim == 0) throw usage_error("classifier head needs classes and dim");
  ClassifierHead h;
  h.classes = classes;
  h.dim = dim;
  h.s = s;
  h.m = m;
  h.w.resize(classes * dim);
  Rng rng(sub_seed(seed, "head-init"));
  for (double& v : h.w) v = rng.normal();
  h.normalize_rows();
  h.validate();
  return h;
}

void ClassifierHead::normalize_rows() {
  for (std::size_t j = 0; j < classes; ++j) {
    auto r = row(j);
    double sq = 0.0;
    for (double v : r) sq += v * v;
    const double n = std::sqrt(sq);
    if (!(n > 0.0) || !std::isfinite(n))
      throw divergence_error("classifier row " + std::to_string(j) + " degenerate");
    for (double& v : r) v = static_cast<float>(v / n);
  }
}

void ClassifierHead::validate() const {
  if (w.size() != classes * dim || classes == 0 || dim == 0)
    throw data_error("classifier head shape inconsistent");
  if (!(s > 0.0) || !std::isfinite(s)) throw data_error("head scale s must be > 0");
  if (!(m >= 0.0 && m < 1.0)) throw data_error("head margin m must lie in [0, 1)");
  for (std::size_t j = 0; j < classes; ++j) {
    double sq = 0.0;
    for (double v : row(j)) sq += v * v;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-5)
      throw data_error("classifier row " + std::to_string(j) + " is not unit norm");
  }
}

void LossConfig::validate() const {
  if (!std::isfinite(alpha) || alpha < 0.0) throw usage_error("alpha must be finite and >= 0");
  if (!(s > 0.0)) throw usage_error("s must be > 0");
  if (!(m >= 0.0 && m < 1.0)) throw usage_error("m must lie in [0, 1)");
}

std::vector<double> cosines(std::span<const double> x, const ClassifierHead& head) {
  if (x.size() != head.dim)
    throw data_error("descriptor dim " + std::to_string(x.size()) + " != head dim " +
                     std::to_string(head.dim));
  std::vector<double> out(head.classes);
  for (std::size_t j = 0; j < head.classes; ++j) {
    const auto r = head.row(j);
    double acc = 0.0;
    for (std::size_t k = 0; k < head.dim; ++k) acc += r[k] * x[k];
    out[j] = acc;
  }
  return out;
}

std::vector<double> margin_logits(std::span<const double> cos, std::size_t label,
                                  const ClassifierHead& head) {
  if (label >= head.classes)
    throw data_error("label " + std::to_string(label) + " out of range [0, " +
                     std::to_string(head.classes) + ")");
  std::vector<double> z(cos.size());
  for (std::size_t j = 0; j < cos.size(); ++j)
    z[j] = head.s * (cos[j] - (j == label ? head.m : 0.0));
  return z;
}

namespace {

std::vector<double> softmax(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    p[j] = std::exp(z[j] - mx);
    sum += p[j];
  }
  for (double& v : p) v /= sum;
  return p;
}

double log_sum_exp(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

void check_batch(std::span<const Descriptor> batch, std::span<const std::size_t> labels) {
  if (batch.empty()) throw data_error("empty batch");
  if (batch.size() != labels.size()) throw data_error("batch/label size mismatch");
}

// Adds dcos_j routed to the descriptor and head gradients for one element.
void backprop_cosines(std::span<const double> x, std::span<const double> dcos,
                      const ClassifierHead& head, std::vector<double>& dx,
                      std::vector<double>& dw) {
  for (std::size_t j = 0; j < head.classes; ++j) {
    const double g = dcos[j];
    if (g == 0.0) continue;
    const auto r = head.row(j);
    double* gw = &dw[j * head.dim];
    for (std::size_t k = 0; k < head.dim; ++k) {
      dx[k] += g * r[k];
      gw[k] += g * x[k];
    }
  }
}

}  // namespace

LossResult lmc_loss(std::span<const Descriptor> batch, std::span<const std::size_t> labels,
                    const ClassifierHead& head) {
  return combined_loss(batch, labels, head, {}, 0.0);
}

SoftenedDistribution softened_probs(std::span<const double> x, std::size_t label,
                                    const ClassifierHead& head) {
  const auto z = margin_logits(cosines(x, head), label, head);
  SoftenedDistribution d{softmax(z)};
  for (double& p : d.probs) p = std::max(p, kProbFloor);
  return d;
}

IktResult ikt_loss(const SoftenedDistribution& p_day, const SoftenedDistribution& p_night) {
  if (p_day.probs.size() != p_night.probs.size() || p_day.probs.empty())
    throw data_error("IKT distributions differ in class count");
  IktResult r;
  r.d_logits.resize(p_day.probs.size());
  for (std::size_t j = 0; j < p_day.probs.size(); ++j) {
    const double p = p_day.probs[j];
    const double q = p_night.probs[j];
    if (p > 0.0) {
      if (!(q > 0.0))
        throw divergence_error("infinite KL divergence: night probability is zero at class " +
                               std::to_string(j));
      r.loss += p * (std::log(p) - std::log(q));
    }
    r.d_logits[j] = q - p;
  }
  return r;
}

IktResult ikt_loss_scalar(const SoftenedDistribution& p_day,
                          const SoftenedDistribution& p_night, std::size_t label) {
  if (p_day.probs.size() != p_night.probs.size() || label >= p_day.probs.size())
    throw data_error("IKT distributions differ in class count");
  // The complements are summed from the other classes rather than taken as
  // 1 - p, which loses every digit once the true class saturates.
  double a_rest = 0.0, q_rest = 0.0;
  for (std::size_t j = 0; j < p_day.probs.size(); ++j)
    if (j != label) {
      a_rest += p_day.probs[j];
      q_rest += p_night.probs[j];
    }
  const double a = std::clamp(p_day.probs[label], kProbFloor, 1.0 - kProbFloor);
  const double q = std::clamp(p_night.probs[label], kProbFloor, 1.0 - kProbFloor);
  a_rest = std::clamp(a_rest, kProbFloor, 1.0 - kProbFloor);
  q_rest = std::clamp(q_rest, kProbFloor, 1.0 - kProbFloor);
  IktResult r;
  r.loss = a * (std::log(a) - std::log(q)) + a_rest * (std::log(a_rest) - std::log(q_rest));
  // dKL/dq = (q - a) / (q (1 - q)), dq/dz_j = q ([j == label] - p_j)
  r.d_logits.resize(p_day.probs.size());
  for (std::size_t j = 0; j < r.d_logits.size(); ++j) {
    const double dq = j == label ? q_rest : -p_night.probs[j];
    r.d_logits[j] = (a_rest - q_rest) / q_rest * dq;
  }
  return r;
}

LossResult combined_loss(std::span<const Descriptor> batch,
                         std::span<const std::size_t> labels, const ClassifierHead& head,
                         std::span<const SoftenedDistribution> p_day, double alpha,
                         bool scalar_mode) {
  check_batch(batch, labels);
  const bool with_ikt = !p_day.empty();
  if (with_ikt && p_day.size() != batch.size())
    throw data_error("day distributions not aligned with batch");
  if (!std::isfinite(alpha)) throw usage_error("alpha must be finite");

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  LossResult r;
  r.d_x.assign(batch.size(), std::vector<double>(head.dim, 0.0));
  r.d_w.assign(head.classes * head.dim, 0.0);

  std::vector<double> dz(head.classes), dcos(head.classes);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto x = batch[i].span();
    const std::size_t y = labels[i];
    const auto z = margin_logits(cosines(x, head), y, head);
    const auto p = softmax(z);

    const double li = log_sum_exp(z) - z[y];
    r.lmc += li * inv_n;
    for (std::size_t j = 0; j < head.classes; ++j)
      dz[j] = (p[j] - (j == y ? 1.0 : 0.0)) * inv_n;

    if (with_ikt) {
      SoftenedDistribution q{p};
      for (double& v : q.probs) v = std::max(v, kProbFloor);
      const IktResult k = scalar_mode ? ikt_loss_scalar(p_day[i], q, y) : ikt_loss(p_day[i], q);
      r.ikt += k.loss * inv_n;
      if (alpha != 0.0)
        for (std::size_t j = 0; j < head.classes; ++j)
          dz[j] += alpha * k.d_logits[j] * inv_n;
    }

    for (std::size_t j = 0; j < head.classes; ++j) dcos[j] = head.s * dz[j];
    backprop_cosines(x, dcos, head, r.d_x[i], r.d_w);
  }
  r.loss = r.lmc + alpha * r.ikt;
  return r;
}

double auto_alpha(double lmc, double ikt, double fallback) {
  if (!(ikt > 1e-12) || !std::isfinite(lmc)) return fallback;
  return lmc / ikt;
}

}  // namespace nightvpr::losses
