#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "nightvpr/dataset.hpp"
#include "nightvpr/encoder.hpp"
#include "nightvpr/losses.hpp"
#include "nightvpr/store.hpp"

namespace nightvpr::trainer {

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 1;
  std::size_t batch_size = 32;
  losses::LossConfig loss;
  std::uint64_t seed = 0;
  bool freeze_head = false;
  bool recompute_day_probs = true;
  Optimizer optimizer = Optimizer::Sgd;

  void validate() const;
};

struct EncoderShape {
  std::size_t patch_size = 4;
  std::size_t feat_dim = 64;
  std::size_t out_dim = 64;
};

// Day descriptors of the pre-trained model, keyed by record id.
struct DayCache {
  std::vector<std::string> ids;
  std::vector<encoder::Descriptor> descriptors;
  std::unordered_map<std::string, std::size_t> index;

  std::size_t size() const noexcept { return ids.size(); }
  const encoder::Descriptor& at(const std::string& id) const;

  store::DescriptorDB to_db(const store::Fingerprint& model) const;
  static DayCache from_db(const store::DescriptorDB& db);
};

struct StepLog {
  int epoch = 0;
  std::size_t step = 0;
  double lmc = 0.0;
  double ikt = 0.0;
  double loss = 0.0;
};

struct TrainLog {
  double alpha = 0.0;  // resolved value (auto mode fills it at step 0)
  std::vector<StepLog> steps;
  std::vector<double> epoch_loss;  // mean combined loss per epoch

  nlohmann::json to_json() const;
};

// Encodes `day` with the pre-trained model. The day ids must match
// `night_ids` one-to-one; a missing or extra id is a data error naming it.
DayCache build_day_cache(const ImageSet& day, const std::vector<std::string>& night_ids,
                         const store::Checkpoint& pretrained);

// LMC-only training of a freshly initialized encoder and head on labeled
// day images. Classes = max label + 1.
store::Checkpoint pretrain_day(const ImageSet& day, const EncoderShape& shape,
                               const TrainConfig& cfg, TrainLog* log = nullptr);

// Fine-tunes a copy of `pretrained` on night-style images with
// L_LMC + alpha L_IKT. `cache` may be null only when the IKT term is off
// (fixed alpha of zero). No augmentation is applied.
store::Checkpoint finetune_night(const ImageSet& night, const store::Checkpoint& pretrained,
                                 const DayCache* cache, const TrainConfig& cfg,
                                 TrainLog* log = nullptr);

// Combined objective and full gradients for one batch, as used by the
// training loop. Exposed for end-to-end gradient checks.
struct BatchGradient {
  losses::LossResult loss;
  encoder::EncoderParams encoder_grad;
};
BatchGradient batch_gradient(std::span<const RasterImage* const> images,
                             std::span<const std::size_t> labels,
                             const encoder::EncoderParams& params,
                             const losses::ClassifierHead& head,
                             std::span<const losses::SoftenedDistribution> p_day, double alpha,
                             bool scalar_mode);

}  // namespace nightvpr::trainer
