#include "nightvpr/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "nightvpr/error.hpp"
#include "nightvpr/random.hpp"
#include "nightvpr/seed.hpp"

namespace nightvpr::encoder {

namespace {

void fill_uniform(std::vector<double>& v, std::size_t n, double bound, Rng& rng) {
  v.resize(n);
  for (double& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
}

void check_shape(const RasterImage& img, const EncoderParams& params) {
  params.validate();
  if (img.empty()) throw data_error("empty image");
  if (img.height() % params.patch_size != 0 || img.width() % params.patch_size != 0)
    throw data_error("image side not divisible by patch_size " +
                     std::to_string(params.patch_size));
}

}  // namespace

EncoderParams EncoderParams::init(std::size_t patch_size, std::size_t feat_dim,
                                  std::size_t out_dim, std::uint64_t seed) {
  EncoderParams p;
  p.patch_size = patch_size;
  p.feat_dim = feat_dim;
  p.out_dim = out_dim;
  if (patch_size == 0 || feat_dim == 0 || out_dim == 0)
    throw usage_error("encoder dimensions must be positive");
  Rng rng(sub_seed(seed, "encoder-init"));
  const double b_in = 1.0 / std::sqrt(static_cast<double>(p.in_dim()));
  const double b_feat = 1.0 / std::sqrt(static_cast<double>(feat_dim));
  fill_uniform(p.w1, p.in_dim() * feat_dim, b_in, rng);
  fill_uniform(p.b1, feat_dim, b_in, rng);
  fill_uniform(p.w2, feat_dim * out_dim, b_feat, rng);
  fill_uniform(p.b2, out_dim, b_feat, rng);
  p.gem_p = 3.0;
  return p;
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z = *this;
  std::fill(z.w1.begin(), z.w1.end(), 0.0);
  std::fill(z.b1.begin(), z.b1.end(), 0.0);
  std::fill(z.w2.begin(), z.w2.end(), 0.0);
  std::fill(z.b2.begin(), z.b2.end(), 0.0);
  z.gem_p = 0.0;
  return z;
}

void EncoderParams::validate() const {
  if (patch_size == 0 || feat_dim == 0 || out_dim == 0)
    throw data_error("encoder dimensions must be positive");
  if (w1.size() != in_dim() * feat_dim || b1.size() != feat_dim ||
      w2.size() != feat_dim * out_dim || b2.size() != out_dim)
    throw data_error("encoder tensor shapes inconsistent with declared dims");
  if (!(gem_p > 0.0)) throw data_error("gem_p must be > 0");
}

std::vector<EncoderParams::Tensor> EncoderParams::tensors() {
  return {{"W1", w1}, {"b1", b1}, {"gem_p", std::span<double>(&gem_p, 1)},
          {"W2", w2}, {"b2", b2}};
}

std::vector<EncoderParams::ConstTensor> EncoderParams::tensors() const {
  return {{"W1", w1}, {"b1", b1}, {"gem_p", std::span<const double>(&gem_p, 1)},
          {"W2", w2}, {"b2", b2}};
}

std::size_t EncoderParams::parameter_count() const {
  return w1.size() + b1.size() + 1 + w2.size() + b2.size();
}

std::vector<float> Descriptor::to_float() const {
  return {values.begin(), values.end()};
}

std::vector<double> gem_pool(std::span<const double> features, std::size_t rows,
                             std::size_t cols, double p) {
  if (!(p > 0.0)) throw usage_error("GeM exponent must be > 0");
  if (rows == 0 || features.size() != rows * cols)
    throw data_error("GeM input shape mismatch");
  std::vector<double> sums(cols, 0.0);
  for (std::size_t m = 0; m < rows; ++m)
    for (std::size_t d = 0; d < cols; ++d)
      sums[d] += std::pow(std::max(features[m * cols + d], kGemEps), p);
  for (double& s : sums) s = std::pow(s / static_cast<double>(rows), 1.0 / p);
  return sums;
}

ForwardTrace forward_trace(const RasterImage& img, const EncoderParams& params) {
  check_shape(img, params);
  const std::size_t ps = params.patch_size;
  const std::size_t in_dim = params.in_dim();
  const std::size_t feat = params.feat_dim;
  const std::size_t gy = img.height() / ps;
  const std::size_t gx = img.width() / ps;

  ForwardTrace t;
  t.patches = gy * gx;
  t.inputs.resize(t.patches * in_dim);
  for (std::size_t py = 0; py < gy; ++py)
    for (std::size_t px = 0; px < gx; ++px) {
      double* u = &t.inputs[(py * gx + px) * in_dim];
      for (std::size_t y = 0; y < ps; ++y)
        for (std::size_t x = 0; x < ps; ++x)
          for (std::size_t c = 0; c < 3; ++c)
            *u++ = img.at(py * ps + y, px * ps + x, c);
    }

  t.pre.resize(t.patches * feat);
  t.clamped.resize(t.patches * feat);
  for (std::size_t m = 0; m < t.patches; ++m) {
    double* a = &t.pre[m * feat];
    std::copy(params.b1.begin(), params.b1.end(), a);
    const double* u = &t.inputs[m * in_dim];
    for (std::size_t i = 0; i < in_dim; ++i) {
      const double ui = u[i];
      if (ui == 0.0) continue;
      const double* w = &params.w1[i * feat];
      for (std::size_t f = 0; f < feat; ++f) a[f] += ui * w[f];
    }
    // max(max(0, a), eps) == max(a, eps)
    for (std::size_t f = 0; f < feat; ++f)
      t.clamped[m * feat + f] = std::max(a[f], kGemEps);
  }

  t.pooled = gem_pool(t.clamped, t.patches, feat, params.gem_p);

  t.projected = params.b2;
  for (std::size_t f = 0; f < feat; ++f) {
    const double g = t.pooled[f];
    const double* w = &params.w2[f * params.out_dim];
    for (std::size_t k = 0; k < params.out_dim; ++k) t.projected[k] += g * w[k];
  }
  double sq = 0.0;
  for (double v : t.projected) sq += v * v;
  t.norm = std::sqrt(sq);
  if (!(t.norm > 0.0) || !std::isfinite(t.norm))
    throw divergence_error("encoder output has zero or non-finite norm");
  t.output.values.resize(params.out_dim);
  for (std::size_t k = 0; k < params.out_dim; ++k)
    t.output.values[k] = t.projected[k] / t.norm;
  return t;
}

Descriptor forward(const RasterImage& img, const EncoderParams& params) {
  return forward_trace(img, params).output;
}

EncoderParams backward(const ForwardTrace& t, const EncoderParams& params,
                       std::span<const double> upstream) {
  const std::size_t feat = params.feat_dim;
  const std::size_t out = params.out_dim;
  const std::size_t in_dim = params.in_dim();
  if (upstream.size() != out) throw data_error("upstream gradient size mismatch");

  EncoderParams g = params.zeros_like();

  // d(y / |y|) = (I - o o^T) / |y|
  const auto& o = t.output.values;
  double radial = 0.0;
  for (std::size_t k = 0; k < out; ++k) radial += o[k] * upstream[k];
  std::vector<double> dy(out);
  for (std::size_t k = 0; k < out; ++k) dy[k] = (upstream[k] - o[k] * radial) / t.norm;

  std::vector<double> dpool(feat, 0.0);
  for (std::size_t f = 0; f < feat; ++f) {
    const double pooled = t.pooled[f];
    const double* w = &params.w2[f * out];
    double* gw = &g.w2[f * out];
    double acc = 0.0;
    for (std::size_t k = 0; k < out; ++k) {
      gw[k] = pooled * dy[k];
      acc += w[k] * dy[k];
    }
    dpool[f] = acc;
  }
  g.b2 = dy;

  // GeM: g = (S/M)^(1/p), S = sum c^p.
  //   dg/dc = g^(1-p) c^(p-1) / M
  //   dg/dp = g * (-ln(S/M) / p^2 + sum(c^p ln c) / (p S))
  const double p = params.gem_p;
  const double inv_m = 1.0 / static_cast<double>(t.patches);
  std::vector<double> scale(feat), power_sum(feat, 0.0), log_sum(feat, 0.0);
  for (std::size_t m = 0; m < t.patches; ++m)
    for (std::size_t f = 0; f < feat; ++f) {
      const double c = t.clamped[m * feat + f];
      const double cp = std::pow(c, p);
      power_sum[f] += cp;
      log_sum[f] += cp * std::log(c);
    }
  double dp = 0.0;
  for (std::size_t f = 0; f < feat; ++f) {
    const double pooled = t.pooled[f];
    scale[f] = dpool[f] * std::pow(pooled, 1.0 - p) * inv_m;
    const double mean = power_sum[f] * inv_m;
    dp += dpool[f] * pooled *
          (-std::log(mean) / (p * p) + log_sum[f] / (p * power_sum[f]));
  }
  g.gem_p = dp;

  std::vector<double> da(feat);
  for (std::size_t m = 0; m < t.patches; ++m) {
    const double* pre = &t.pre[m * feat];
    const double* c = &t.clamped[m * feat];
    bool any = false;
    for (std::size_t f = 0; f < feat; ++f) {
      da[f] = pre[f] > kGemEps ? scale[f] * std::pow(c[f], p - 1.0) : 0.0;
      any = any || da[f] != 0.0;
    }
    if (!any) continue;
    for (std::size_t f = 0; f < feat; ++f) g.b1[f] += da[f];
    const double* u = &t.inputs[m * in_dim];
    for (std::size_t i = 0; i < in_dim; ++i) {
      const double ui = u[i];
      if (ui == 0.0) continue;
      double* gw = &g.w1[i * feat];
      for (std::size_t f = 0; f < feat; ++f) gw[f] += ui * da[f];
    }
  }
  return g;
}

EncoderParams backward(const RasterImage& img, const EncoderParams& params,
                       std::span<const double> upstream) {
  return backward(forward_trace(img, params), params, upstream);
}

void accumulate(EncoderParams& acc, const EncoderParams& grad, double scale) {
  auto dst = acc.tensors();
  const auto src = grad.tensors();
  for (std::size_t t = 0; t < dst.size(); ++t) {
    if (dst[t].values.size() != src[t].values.size())
      throw data_error("gradient shape mismatch");
    for (std::size_t i = 0; i < dst[t].values.size(); ++i)
      dst[t].values[i] += scale * src[t].values[i];
  }
}

}  // namespace nightvpr::encoder
