#include "nightvpr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "nightvpr/error.hpp"
#include "nightvpr/parallel.hpp"
#include "nightvpr/random.hpp"
#include "nightvpr/seed.hpp"

namespace nightvpr::trainer {

using encoder::Descriptor;
using encoder::EncoderParams;
using losses::ClassifierHead;
using losses::SoftenedDistribution;

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw usage_error("lr must be > 0");
  if (epochs < 0) throw usage_error("epochs must be >= 0");
  if (batch_size == 0) throw usage_error("batch_size must be positive");
  loss.validate();
}

const Descriptor& DayCache::at(const std::string& id) const {
  const auto it = index.find(id);
  if (it == index.end()) throw data_error("day cache has no descriptor for id \"" + id + "\"");
  return descriptors[it->second];
}

store::DescriptorDB DayCache::to_db(const store::Fingerprint& model) const {
  store::DescriptorDB db;
  db.dim = descriptors.empty() ? 0 : static_cast<std::uint32_t>(descriptors.front().size());
  db.ids = ids;
  db.encoder_fingerprint = model;
  for (const auto& d : descriptors) {
    const auto f = d.to_float();
    db.vectors.insert(db.vectors.end(), f.begin(), f.end());
  }
  return db;
}

DayCache DayCache::from_db(const store::DescriptorDB& db) {
  DayCache c;
  c.ids = db.ids;
  for (std::size_t i = 0; i < db.count(); ++i) {
    const auto r = db.row(i);
    c.descriptors.push_back(Descriptor{{r.begin(), r.end()}});
    c.index.emplace(db.ids[i], i);
  }
  return c;
}

nlohmann::json TrainLog::to_json() const {
  nlohmann::json j;
  j["alpha"] = alpha;
  j["epoch_loss"] = epoch_loss;
  auto& steps_json = j["steps"] = nlohmann::json::array();
  for (const auto& s : steps)
    steps_json.push_back(
        {{"epoch", s.epoch}, {"step", s.step}, {"L_LMC", s.lmc}, {"L_IKT", s.ikt}, {"L", s.loss}});
  return j;
}

DayCache build_day_cache(const ImageSet& day, const std::vector<std::string>& night_ids,
                         const store::Checkpoint& pretrained) {
  std::unordered_map<std::string, std::size_t> day_index;
  for (std::size_t i = 0; i < day.size(); ++i) day_index.emplace(day.record(i).id, i);
  std::unordered_set<std::string> wanted(night_ids.begin(), night_ids.end());
  for (const auto& id : night_ids)
    if (!day_index.contains(id))
      throw data_error("day manifest is missing id \"" + id + "\" required by night manifest");
  for (const auto& r : day.manifest.records)
    if (!wanted.contains(r.id))
      throw data_error("day manifest has extra id \"" + r.id + "\" absent from night manifest");

  DayCache cache;
  cache.ids = night_ids;
  cache.descriptors.resize(night_ids.size());
  parallel_for(night_ids.size(), [&](std::size_t i) {
    cache.descriptors[i] =
        encoder::forward(day.images[day_index.at(night_ids[i])], pretrained.params);
  });
  for (std::size_t i = 0; i < cache.ids.size(); ++i) cache.index.emplace(cache.ids[i], i);
  return cache;
}

BatchGradient batch_gradient(std::span<const RasterImage* const> images,
                             std::span<const std::size_t> labels, const EncoderParams& params,
                             const ClassifierHead& head,
                             std::span<const SoftenedDistribution> p_day, double alpha,
                             bool scalar_mode) {
  const std::size_t n = images.size();
  std::vector<encoder::ForwardTrace> traces(n);
  parallel_for(n, [&](std::size_t i) { traces[i] = encoder::forward_trace(*images[i], params); });
  std::vector<Descriptor> batch(n);
  for (std::size_t i = 0; i < n; ++i) batch[i] = traces[i].output;

  BatchGradient out;
  out.loss = losses::combined_loss(batch, labels, head, p_day, alpha, scalar_mode);

  std::vector<EncoderParams> per_sample(n);
  parallel_for(n, [&](std::size_t i) {
    per_sample[i] = encoder::backward(traces[i], params, out.loss.d_x[i]);
  });
  // Fixed record-order reduction keeps results independent of thread count.
  out.encoder_grad = params.zeros_like();
  for (const auto& g : per_sample) encoder::accumulate(out.encoder_grad, g);
  return out;
}

namespace {

// Plain SGD or Adam over a flat list of parameter spans. Updated values are
// rounded to f32 so that checkpoints hold exactly what was trained.
class Stepper {
 public:
  Stepper(Optimizer kind, double lr) : kind_(kind), lr_(lr) {}

  void apply(std::size_t slot, std::span<double> values, std::span<const double> grad) {
    if (kind_ == Optimizer::Sgd) {
      for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = static_cast<float>(values[i] - lr_ * grad[i]);
      return;
    }
    if (m_.size() <= slot) {
      m_.resize(slot + 1);
      v_.resize(slot + 1);
    }
    auto& m = m_[slot];
    auto& v = v_[slot];
    if (m.empty()) {
      m.assign(values.size(), 0.0);
      v.assign(values.size(), 0.0);
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * grad[i];
      v[i] = b2 * v[i] + (1 - b2) * grad[i] * grad[i];
      values[i] = static_cast<float>(values[i] - lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps));
    }
  }

  void next_step() { ++t_; }

 private:
  Optimizer kind_;
  double lr_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

constexpr double kMinGemP = 0.1;

struct RunState {
  EncoderParams params;
  ClassifierHead head;
};

void train(RunState& st, const ImageSet& data, const DayCache* cache, const TrainConfig& cfg,
           bool with_ikt, TrainLog* log) {
  const auto labels = data.labels();
  for (auto y : labels)
    if (y >= st.head.classes)
      throw data_error("label " + std::to_string(y) + " exceeds classifier classes " +
                       std::to_string(st.head.classes));
  const std::size_t n = data.size();
  if (n == 0) throw data_error("empty training set");

  std::vector<const Descriptor*> day(n, nullptr);
  if (with_ikt) {
    if (!cache) throw usage_error("IKT term requires a day cache");
    for (std::size_t i = 0; i < n; ++i) day[i] = &cache->at(data.record(i).id);
  }
  // Frozen mode: distributions fixed against the head as it was at step 0.
  std::vector<SoftenedDistribution> frozen;
  if (with_ikt && !cfg.recompute_day_probs) {
    frozen.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      frozen[i] = losses::softened_probs(day[i]->span(), labels[i], st.head);
  }

  TrainLog local;
  TrainLog& out = log ? *log : local;
  out = TrainLog{};
  double alpha = with_ikt ? cfg.loss.alpha : 0.0;
  bool alpha_resolved = !(with_ikt && cfg.loss.alpha_mode == losses::AlphaMode::Auto);
  out.alpha = alpha;

  Stepper stepper(cfg.optimizer, cfg.lr);
  std::vector<std::size_t> order(n);
  std::size_t global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(sub_seed(sub_seed(cfg.seed, "shuffle"), static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_sum = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::vector<const RasterImage*> imgs;
      std::vector<std::size_t> ys;
      std::vector<SoftenedDistribution> p_day;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        imgs.push_back(&data.images[i]);
        ys.push_back(labels[i]);
        if (with_ikt)
          p_day.push_back(cfg.recompute_day_probs
                              ? losses::softened_probs(day[i]->span(), labels[i], st.head)
                              : frozen[i]);
      }

      if (!alpha_resolved) {
        const auto probe = batch_gradient(imgs, ys, st.params, st.head, p_day, 0.0,
                                          cfg.loss.ikt_scalar_mode);
        alpha = losses::auto_alpha(probe.loss.lmc, probe.loss.ikt, cfg.loss.alpha);
        alpha_resolved = true;
        out.alpha = alpha;
      }

      auto g = batch_gradient(imgs, ys, st.params, st.head, p_day, alpha,
                              cfg.loss.ikt_scalar_mode);
      if (!std::isfinite(g.loss.loss))
        throw divergence_error("training loss became non-finite at epoch " +
                               std::to_string(epoch) + " step " + std::to_string(global_step));

      stepper.next_step();
      auto params = st.params.tensors();
      const auto grads = std::as_const(g.encoder_grad).tensors();
      for (std::size_t t = 0; t < params.size(); ++t)
        stepper.apply(t, params[t].values, grads[t].values);
      st.params.gem_p = std::max(st.params.gem_p, kMinGemP);
      if (!cfg.freeze_head) {
        stepper.apply(params.size(), st.head.w, g.loss.d_w);
        st.head.normalize_rows();
      }

      out.steps.push_back({epoch, global_step, g.loss.lmc, g.loss.ikt, g.loss.loss});
      epoch_sum += g.loss.loss;
      ++epoch_steps;
      ++global_step;
    }
    out.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_steps));
  }
}

nlohmann::json config_json(const TrainConfig& cfg) {
  return {{"lr", cfg.lr},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"seed", cfg.seed},
          {"freeze_head", cfg.freeze_head},
          {"recompute_day_probs", cfg.recompute_day_probs},
          {"optimizer", cfg.optimizer == Optimizer::Adam ? "adam" : "sgd"},
          {"alpha", cfg.loss.alpha},
          {"alpha_mode", cfg.loss.alpha_mode == losses::AlphaMode::Auto ? "auto" : "fixed"},
          {"s", cfg.loss.s},
          {"m", cfg.loss.m},
          {"ikt_scalar_mode", cfg.loss.ikt_scalar_mode}};
}

}  // namespace

store::Checkpoint pretrain_day(const ImageSet& day, const EncoderShape& shape,
                               const TrainConfig& cfg, TrainLog* log) {
  cfg.validate();
  const auto labels = day.labels();
  if (labels.empty()) throw data_error("empty pretraining set");
  const std::size_t classes = *std::max_element(labels.begin(), labels.end()) + 1;

  RunState st{EncoderParams::init(shape.patch_size, shape.feat_dim, shape.out_dim,
                                  sub_seed(cfg.seed, "pretrain")),
              ClassifierHead::init(classes, shape.out_dim, cfg.loss.s, cfg.loss.m,
                                   sub_seed(cfg.seed, "pretrain"))};
  train(st, day, nullptr, cfg, false, log);

  store::Checkpoint c;
  c.params = std::move(st.params);
  c.head = std::move(st.head);
  c.hyperparameters = config_json(cfg);
  c.hyperparameters["stage"] = "pretrain";
  return c;
}

store::Checkpoint finetune_night(const ImageSet& night, const store::Checkpoint& pretrained,
                                 const DayCache* cache, const TrainConfig& cfg, TrainLog* log) {
  cfg.validate();
  if (!pretrained.head) throw data_error("pre-trained checkpoint has no classifier head");
  const bool with_ikt =
      cfg.loss.alpha_mode == losses::AlphaMode::Auto || cfg.loss.alpha != 0.0;
  if (with_ikt) {
    if (!cache) throw usage_error("IKT fine-tuning needs a day cache");
    for (const auto& r : night.manifest.records) (void)cache->at(r.id);
  }

  RunState st{pretrained.params, *pretrained.head};
  st.head.s = cfg.loss.s;
  st.head.m = cfg.loss.m;
  train(st, night, cache, cfg, with_ikt, log);

  store::Checkpoint c;
  c.params = std::move(st.params);
  c.head = std::move(st.head);
  c.hyperparameters = config_json(cfg);
  c.hyperparameters["stage"] = "finetune";
  c.hyperparameters["initialized_from"] = store::to_hex(pretrained.fingerprint());
  return c;
}

}  // namespace nightvpr::trainer
