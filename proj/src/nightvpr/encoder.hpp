#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "nightvpr/image.hpp"

namespace nightvpr::encoder {

inline constexpr double kGemEps = 1e-6;

// Weights of the patch-linear embedding network
//   patchify -> W1, b1 -> max(0, .) -> GeM(p) -> W2, b2 -> L2 normalize.
// Values are kept representable in f32 so checkpoints round-trip exactly;
// arithmetic runs in double.
struct EncoderParams {
  std::size_t patch_size = 4;
  std::size_t feat_dim = 64;
  std::size_t out_dim = 64;
  std::vector<double> w1;  // in_dim x feat_dim, row-major
  std::vector<double> b1;  // feat_dim
  double gem_p = 3.0;
  std::vector<double> w2;  // feat_dim x out_dim, row-major
  std::vector<double> b2;  // out_dim

  std::size_t in_dim() const noexcept { return 3 * patch_size * patch_size; }

  // Seeded uniform +-1/sqrt(fan_in) for weights and biases; gem_p = 3.
  static EncoderParams init(std::size_t patch_size, std::size_t feat_dim,
                            std::size_t out_dim, std::uint64_t seed);

  // Same shapes, every value zero (gem_p included). Used for gradients.
  EncoderParams zeros_like() const;

  void validate() const;

  struct Tensor {
    std::string_view name;
    std::span<double> values;
  };
  struct ConstTensor {
    std::string_view name;
    std::span<const double> values;
  };
  // Declared order: W1, b1, gem_p, W2, b2.
  std::vector<Tensor> tensors();
  std::vector<ConstTensor> tensors() const;
  std::size_t parameter_count() const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

struct Descriptor {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  std::span<const double> span() const noexcept { return values; }
  std::vector<float> to_float() const;

  friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

// Generalized mean per column of an M x D row-major block. Inputs are
// clamped to kGemEps first. Throws for p <= 0.
std::vector<double> gem_pool(std::span<const double> features, std::size_t rows,
                             std::size_t cols, double p);

// Intermediate values kept for the reverse pass.
struct ForwardTrace {
  std::size_t patches = 0;
  std::vector<double> inputs;      // patches x in_dim
  std::vector<double> pre;         // patches x feat_dim, before activation
  std::vector<double> clamped;     // max(pre, eps)
  std::vector<double> pooled;      // feat_dim
  std::vector<double> projected;   // out_dim, before normalization
  double norm = 0.0;
  Descriptor output;
};

Descriptor forward(const RasterImage& img, const EncoderParams& params);
ForwardTrace forward_trace(const RasterImage& img, const EncoderParams& params);

// Gradients of <upstream, forward(img)> with respect to every parameter.
EncoderParams backward(const ForwardTrace& trace, const EncoderParams& params,
                       std::span<const double> upstream);
EncoderParams backward(const RasterImage& img, const EncoderParams& params,
                       std::span<const double> upstream);

// Accumulates `grad` into `acc` (same shapes).
void accumulate(EncoderParams& acc, const EncoderParams& grad, double scale = 1.0);

}  // namespace nightvpr::encoder
