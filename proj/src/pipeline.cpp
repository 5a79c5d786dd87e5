#include "nightvpr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "nightvpr/error.hpp"
#include "nightvpr/eval.hpp"
#include "nightvpr/parallel.hpp"
#include "nightvpr/retrieval.hpp"
#include "nightvpr/seed.hpp"

namespace nightvpr::pipeline {

namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* context) {
  if (j.is_null()) return;
  if (!j.is_object()) throw usage_error(std::string(context) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw usage_error(std::string("unknown key '") + key + "' in " + context);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.is_null() || !j.contains(key) || j[key].is_null()) return;
  try {
    out = j[key].get<T>();
  } catch (const json::exception&) {
    throw usage_error(std::string("bad value for '") + key + "': " + j[key].dump());
  }
}

std::string required_path(const json& req, const char* key) {
  if (!req.contains(key) || !req[key].is_string() || req[key].get<std::string>().empty())
    throw usage_error(std::string("missing required '") + key + "'");
  return req[key].get<std::string>();
}

std::optional<std::string> optional_path(const json& req, const char* key) {
  if (!req.contains(key) || req[key].is_null()) return std::nullopt;
  if (!req[key].is_string()) throw usage_error(std::string("'") + key + "' must be a string");
  return req[key].get<std::string>();
}

void write_step_log(const trainer::TrainLog& log, const std::optional<std::string>& path) {
  if (!path) return;
  std::ofstream out(*path, std::ios::trunc);
  if (!out) throw data_error("cannot write training log " + *path);
  for (const auto& s : log.steps)
    out << json{{"epoch", s.epoch}, {"step", s.step}, {"L_LMC", s.lmc},
                {"L_IKT", s.ikt}, {"L", s.loss}, {"alpha", log.alpha}}.dump()
        << '\n';
}

json log_summary(const trainer::TrainLog& log) {
  json j;
  j["alpha"] = log.alpha;
  j["steps"] = log.steps.size();
  j["epoch_loss"] = log.epoch_loss;
  if (!log.steps.empty()) {
    j["first_step"] = {{"L_LMC", log.steps.front().lmc}, {"L_IKT", log.steps.front().ikt},
                       {"L", log.steps.front().loss}};
    j["last_step"] = {{"L_LMC", log.steps.back().lmc}, {"L_IKT", log.steps.back().ikt},
                      {"L", log.steps.back().loss}};
  }
  return j;
}

std::vector<std::size_t> parse_ns(const json& req) {
  std::vector<std::size_t> ns = {1, 5, 10};
  read(req, "ns", ns);
  if (ns.empty()) throw usage_error("ns must list at least one N");
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  if (ns.front() == 0) throw usage_error("N must be >= 1");
  return ns;
}

bool routes_to_night(geo::DomainTag tag, bool twilight_to_night) {
  return tag == geo::DomainTag::Night || (tag == geo::DomainTag::Twilight && twilight_to_night);
}

struct EvalRun {
  eval::RecallReport report;
  std::vector<retrieval::RankedList> rankings;  // per query, manifest order
  std::vector<geo::DomainTag> domains;
};

// Routes every query, searches the matching database and scores recall per
// domain. With od_mode all queries search `day_db`; otherwise night-routed
// queries search `night_db`.
EvalRun evaluate_sets(const store::DescriptorDB& day_db, const store::DescriptorDB* night_db,
                      const store::Manifest& db_manifest, const ImageSet& queries,
                      const retrieval::RoutingConfig& routing, const std::vector<std::size_t>& ns,
                      double threshold_m) {
  retrieval::check_database(day_db, routing);
  if (day_db.count() != db_manifest.records.size())
    throw data_error("database rows do not match its manifest");
  for (std::size_t i = 0; i < day_db.count(); ++i)
    if (day_db.ids[i] != db_manifest.records[i].id)
      throw data_error("database id " + day_db.ids[i] + " does not match manifest order");
  if (!routing.od_mode) {
    if (!night_db) throw usage_error("non-OD evaluation needs a night-model database");
    if (night_db->encoder_fingerprint != routing.night_model->fingerprint())
      throw data_error("night database was not built by the night model");
    if (night_db->ids != day_db.ids) throw data_error("night and day databases differ in ids");
  }

  const std::size_t nq = queries.size();
  const std::size_t k = std::max<std::size_t>(1, ns.back());
  EvalRun run;
  run.rankings.resize(nq);
  run.domains.resize(nq);
  std::vector<std::vector<std::size_t>> pos(nq);
  parallel_for(nq, [&](std::size_t q) {
    const auto& meta = queries.record(q);
    const auto routed = retrieval::route_query(queries.images[q], meta, routing);
    run.domains[q] = routed.domain;
    const bool night = routes_to_night(routed.domain, routing.twilight_to_night);
    const auto& db = (!routing.od_mode && night) ? *night_db : day_db;
    if (db.count() > 0) run.rankings[q] = retrieval::top_k(db, routed.descriptor.to_float(), k);
    pos[q] = eval::positives(meta, db_manifest, threshold_m);
  });

  run.report.threshold_m = threshold_m;
  run.report.ns = ns;
  run.report.od_mode = routing.od_mode;
  for (auto tag : {geo::DomainTag::Day, geo::DomainTag::Twilight, geo::DomainTag::Night}) {
    std::vector<retrieval::RankedList> r;
    std::vector<std::vector<std::size_t>> p;
    for (std::size_t q = 0; q < nq; ++q)
      if (run.domains[q] == tag) {
        r.push_back(run.rankings[q]);
        p.push_back(pos[q]);
      }
    if (!r.empty()) run.report.subsets[tag] = eval::recall_at_n(r, p, ns);
  }
  return run;
}

store::Checkpoint load_model(const json& req, const char* key) {
  return store::load_checkpoint(required_path(req, key));
}

}  // namespace

// ---------------------------------------------------------------------------
// Config codecs

synthdata::SynthConfig synth_config(const json& j) {
  check_keys(j, {"n_places", "views_per_place", "image_size", "jitter", "spacing_m", "seed"},
             "synth config");
  synthdata::SynthConfig c;
  read(j, "n_places", c.n_places);
  read(j, "views_per_place", c.views_per_place);
  read(j, "image_size", c.image_size);
  read(j, "jitter", c.jitter);
  read(j, "spacing_m", c.spacing_m);
  read(j, "seed", c.seed);
  c.validate();
  return c;
}

json to_json(const synthdata::SynthConfig& c) {
  return {{"n_places", c.n_places},   {"views_per_place", c.views_per_place},
          {"image_size", c.image_size}, {"jitter", c.jitter},
          {"spacing_m", c.spacing_m}, {"seed", c.seed}};
}

nightgen::NightParams night_params(const json& j) {
  check_keys(j,
             {"gamma", "brightness", "temp_shift", "bloom_count", "bloom_intensity",
              "noise_sigma", "seed"},
             "night params");
  nightgen::NightParams p;
  read(j, "gamma", p.gamma);
  read(j, "brightness", p.brightness);
  read(j, "temp_shift", p.temp_shift);
  read(j, "bloom_count", p.bloom_count);
  read(j, "bloom_intensity", p.bloom_intensity);
  read(j, "noise_sigma", p.noise_sigma);
  read(j, "seed", p.seed);
  p.validate();
  return p;
}

json to_json(const nightgen::NightParams& p) {
  return {{"gamma", p.gamma},
          {"brightness", p.brightness},
          {"temp_shift", p.temp_shift},
          {"bloom_count", p.bloom_count},
          {"bloom_intensity", p.bloom_intensity},
          {"noise_sigma", p.noise_sigma},
          {"seed", p.seed}};
}

trainer::TrainConfig train_config(const json& j) {
  check_keys(j,
             {"lr", "epochs", "batch_size", "seed", "freeze_head", "recompute_day_probs",
              "optimizer", "alpha", "alpha_mode", "s", "m", "ikt_scalar_mode"},
             "train config");
  trainer::TrainConfig c;
  read(j, "lr", c.lr);
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "seed", c.seed);
  read(j, "freeze_head", c.freeze_head);
  read(j, "recompute_day_probs", c.recompute_day_probs);
  read(j, "alpha", c.loss.alpha);
  read(j, "s", c.loss.s);
  read(j, "m", c.loss.m);
  read(j, "ikt_scalar_mode", c.loss.ikt_scalar_mode);
  std::string opt = "sgd", mode = "fixed";
  read(j, "optimizer", opt);
  read(j, "alpha_mode", mode);
  if (opt == "sgd")
    c.optimizer = trainer::Optimizer::Sgd;
  else if (opt == "adam")
    c.optimizer = trainer::Optimizer::Adam;
  else
    throw usage_error("optimizer must be 'sgd' or 'adam'");
  if (mode == "fixed")
    c.loss.alpha_mode = losses::AlphaMode::Fixed;
  else if (mode == "auto")
    c.loss.alpha_mode = losses::AlphaMode::Auto;
  else
    throw usage_error("alpha_mode must be 'fixed' or 'auto'");
  c.validate();
  return c;
}

json to_json(const trainer::TrainConfig& c) {
  return {{"lr", c.lr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"freeze_head", c.freeze_head},
          {"recompute_day_probs", c.recompute_day_probs},
          {"optimizer", c.optimizer == trainer::Optimizer::Adam ? "adam" : "sgd"},
          {"alpha", c.loss.alpha},
          {"alpha_mode", c.loss.alpha_mode == losses::AlphaMode::Auto ? "auto" : "fixed"},
          {"s", c.loss.s},
          {"m", c.loss.m},
          {"ikt_scalar_mode", c.loss.ikt_scalar_mode}};
}

trainer::EncoderShape encoder_shape(const json& j) {
  check_keys(j, {"patch_size", "feat_dim", "out_dim"}, "encoder config");
  trainer::EncoderShape s;
  read(j, "patch_size", s.patch_size);
  read(j, "feat_dim", s.feat_dim);
  read(j, "out_dim", s.out_dim);
  if (s.patch_size == 0 || s.feat_dim == 0 || s.out_dim == 0)
    throw usage_error("encoder dimensions must be positive");
  return s;
}

json to_json(const trainer::EncoderShape& s) {
  return {{"patch_size", s.patch_size}, {"feat_dim", s.feat_dim}, {"out_dim", s.out_dim}};
}

geo::SolarConfig solar_config(const json& j) {
  check_keys(j, {"day_elevation_deg", "night_elevation_deg"}, "solar config");
  geo::SolarConfig s;
  read(j, "day_elevation_deg", s.day_elevation_deg);
  read(j, "night_elevation_deg", s.night_elevation_deg);
  s.validate();
  return s;
}

json to_json(const geo::SolarConfig& s) {
  return {{"day_elevation_deg", s.day_elevation_deg},
          {"night_elevation_deg", s.night_elevation_deg}};
}

// ---------------------------------------------------------------------------
// Commands

ImageSet night_version(const ImageSet& day, const nightgen::NightParams& params) {
  ImageSet out;
  out.manifest = day.manifest;
  out.images.resize(day.size());
  parallel_for(day.size(), [&](std::size_t i) {
    auto p = params;
    p.seed = sub_seed(params.seed, day.record(i).id);
    out.images[i] = nightgen::night_transform(day.images[i], p);
  });
  for (auto& r : out.manifest.records) {
    r.domain = geo::DomainTag::Night;
    r.utc.reset();
  }
  return out;
}

json run_synth(const json& req) {
  check_keys(req, {"config", "out"}, "synth request");
  const auto cfg = synth_config(req.value("config", json::object()));
  const fs::path out = required_path(req, "out");
  auto set = synthdata::generate(cfg);
  const auto n = set.size();
  save_image_set(std::move(set), out / "manifest.jsonl", out / "images");
  return {{"manifest", (out / "manifest.jsonl").string()}, {"records", n},
          {"places", cfg.n_places}, {"resolved", {{"config", to_json(cfg)}}}};
}

json run_gen_night(const json& req) {
  check_keys(req, {"manifest", "out", "params"}, "gen-night request");
  const auto params = night_params(req.value("params", json::object()));
  const fs::path out = required_path(req, "out");
  const auto day = load_image_set(required_path(req, "manifest"));
  auto night = night_version(day, params);

  // Translation faithfulness against the source images.
  double l2 = 0.0, psnr = 0.0, ssim = 0.0;
  std::size_t ssim_n = 0;
  for (std::size_t i = 0; i < day.size(); ++i) {
    l2 += nightgen::pixel_l2(day.images[i], night.images[i]);
    psnr += nightgen::psnr_db(day.images[i], night.images[i]);
    if (day.images[i].height() >= 11 && day.images[i].width() >= 11) {
      ssim += nightgen::ssim(day.images[i], night.images[i]);
      ++ssim_n;
    }
  }
  const double n = std::max<std::size_t>(1, day.size());
  json metrics = {{"l2", l2 / n}, {"psnr_db", psnr / n}};
  metrics["ssim"] = ssim_n ? json(ssim / static_cast<double>(ssim_n)) : json(nullptr);

  const auto count = night.size();
  save_image_set(std::move(night), out / "manifest.jsonl", out / "images");
  return {{"manifest", (out / "manifest.jsonl").string()},
          {"records", count},
          {"faithfulness", metrics},
          {"resolved", {{"params", to_json(params)}}}};
}

json run_pretrain(const json& req) {
  check_keys(req, {"manifest", "out", "encoder", "train", "log"}, "pretrain request");
  const auto shape = encoder_shape(req.value("encoder", json::object()));
  const auto cfg = train_config(req.value("train", json::object()));
  const auto day = load_image_set(required_path(req, "manifest"));
  trainer::TrainLog log;
  auto ckpt = trainer::pretrain_day(day, shape, cfg, &log);
  const auto out = required_path(req, "out");
  store::save_checkpoint(ckpt, out);
  write_step_log(log, optional_path(req, "log"));
  return {{"checkpoint", out},
          {"fingerprint", store::to_hex(ckpt.fingerprint())},
          {"classes", ckpt.head->classes},
          {"training", log_summary(log)},
          {"resolved", {{"encoder", to_json(shape)}, {"train", to_json(cfg)}}}};
}

json run_cache_day(const json& req) {
  check_keys(req, {"day_manifest", "night_manifest", "model", "out"}, "cache-day request");
  const auto model = load_model(req, "model");
  const auto day = load_image_set(required_path(req, "day_manifest"));
  const auto night = store::read_manifest(required_path(req, "night_manifest"));
  std::vector<std::string> ids;
  for (const auto& r : night.records) ids.push_back(r.id);
  const auto cache = trainer::build_day_cache(day, ids, model);
  const auto out = required_path(req, "out");
  store::save_db(cache.to_db(model.fingerprint()), out);
  return {{"cache", out}, {"descriptors", cache.size()},
          {"model_fingerprint", store::to_hex(model.fingerprint())}};
}

json run_finetune(const json& req) {
  check_keys(req, {"manifest", "model", "cache", "out", "train", "log"}, "finetune request");
  const auto cfg = train_config(req.value("train", json::object()));
  const auto pretrained = load_model(req, "model");
  const auto night = load_image_set(required_path(req, "manifest"));
  std::optional<trainer::DayCache> cache;
  if (const auto p = optional_path(req, "cache")) {
    const auto db = store::load_db(*p);
    if (db.encoder_fingerprint != pretrained.fingerprint())
      throw data_error("day cache was not produced by the given pre-trained model");
    cache = trainer::DayCache::from_db(db);
  }
  trainer::TrainLog log;
  auto ckpt = trainer::finetune_night(night, pretrained, cache ? &*cache : nullptr, cfg, &log);
  const auto out = required_path(req, "out");
  store::save_checkpoint(ckpt, out);
  write_step_log(log, optional_path(req, "log"));
  return {{"checkpoint", out},
          {"fingerprint", store::to_hex(ckpt.fingerprint())},
          {"training", log_summary(log)},
          {"resolved", {{"train", to_json(cfg)}}}};
}

json run_build_db(const json& req) {
  check_keys(req, {"manifest", "model", "out"}, "build-db request");
  const auto model = load_model(req, "model");
  const auto set = load_image_set(required_path(req, "manifest"));
  const auto db = retrieval::build_db(set, model);
  const auto out = required_path(req, "out");
  store::save_db(db, out);
  return {{"db", out}, {"count", db.count()}, {"dim", db.dim},
          {"encoder_fingerprint", store::to_hex(db.encoder_fingerprint)}};
}

namespace {

struct QuerySetup {
  store::Checkpoint day_model;
  std::optional<store::Checkpoint> night_model;
  retrieval::RoutingConfig routing;
  store::DescriptorDB db;
  std::optional<store::DescriptorDB> night_db;
};

void setup_routing(const json& req, QuerySetup& s) {
  s.day_model = load_model(req, "model");
  if (optional_path(req, "night_model")) s.night_model = load_model(req, "night_model");
  s.routing.day_model = &s.day_model;
  s.routing.night_model = s.night_model ? &*s.night_model : &s.day_model;
  read(req, "od", s.routing.od_mode);
  read(req, "twilight_to_night", s.routing.twilight_to_night);
  s.routing.solar = solar_config(req.value("solar", json::object()));
  s.db = store::load_db(required_path(req, "db"));
  if (const auto p = optional_path(req, "night_db")) s.night_db = store::load_db(*p);
  if (!s.routing.od_mode && !s.night_model) s.night_db = s.db;
}

}  // namespace

json run_query(const json& req) {
  check_keys(req,
             {"db", "night_db", "queries", "model", "night_model", "k", "od", "solar",
              "twilight_to_night", "out"},
             "query request");
  QuerySetup s;
  setup_routing(req, s);
  retrieval::check_database(s.db, s.routing);
  std::size_t k = 10;
  read(req, "k", k);
  if (k == 0) throw usage_error("k must be >= 1");
  const auto queries = load_image_set(required_path(req, "queries"));
  if (!s.routing.od_mode && !s.night_db) throw usage_error("non-OD queries need night_db");

  std::vector<json> lines(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) {
    const auto routed = retrieval::route_query(queries.images[q], queries.record(q), s.routing);
    const bool night = routes_to_night(routed.domain, s.routing.twilight_to_night);
    const auto& db = (!s.routing.od_mode && night) ? *s.night_db : s.db;
    json hits = json::array();
    if (db.count() > 0)
      for (const auto& h : retrieval::top_k(db, routed.descriptor.to_float(), k).hits)
        hits.push_back({{"id", h.id}, {"sim", h.similarity}});
    lines[q] = {{"query_id", queries.record(q).id},
                {"domain", std::string(geo::to_string(routed.domain))},
                {"hits", hits}};
  });

  json result = {{"queries", queries.size()}, {"k", k}, {"od", s.routing.od_mode}};
  if (const auto out = optional_path(req, "out")) {
    std::ofstream f(*out, std::ios::trunc);
    if (!f) throw data_error("cannot write " + *out);
    for (const auto& l : lines) f << l.dump() << '\n';
    result["results_file"] = *out;
  } else {
    result["results"] = lines;
  }
  return result;
}

json run_evaluate(const json& req) {
  check_keys(req,
             {"db", "night_db", "db_manifest", "queries", "model", "night_model", "ns",
              "threshold_m", "od", "solar", "twilight_to_night"},
             "evaluate request");
  QuerySetup s;
  setup_routing(req, s);
  const auto ns = parse_ns(req);
  double threshold = eval::kDefaultThresholdM;
  read(req, "threshold_m", threshold);
  if (!(threshold >= 0.0)) throw usage_error("threshold_m must be >= 0");
  const auto db_manifest = store::read_manifest(required_path(req, "db_manifest"));
  const auto queries = load_image_set(required_path(req, "queries"));
  const auto run = evaluate_sets(s.db, s.night_db ? &*s.night_db : nullptr, db_manifest, queries,
                                 s.routing, ns, threshold);
  return {{"report", run.report.to_json()},
          {"table", eval::render_report(run.report)},
          {"resolved",
           {{"ns", ns},
            {"threshold_m", threshold},
            {"od", s.routing.od_mode},
            {"twilight_to_night", s.routing.twilight_to_night},
            {"solar", to_json(s.routing.solar)}}}};
}

json run_metrics(const json& req) {
  check_keys(req, {"a", "b", "reference", "test"}, "metrics request");
  auto triple = [](const RasterImage& a, const RasterImage& b) {
    json j = {{"l2", nightgen::pixel_l2(a, b)}, {"psnr_db", nightgen::psnr_db(a, b)}};
    j["ssim"] = (a.height() >= 11 && a.width() >= 11) ? json(nightgen::ssim(a, b)) : json(nullptr);
    return j;
  };
  if (req.contains("a") || req.contains("b"))
    return triple(read_ppm(required_path(req, "a")), read_ppm(required_path(req, "b")));

  const auto ref = load_image_set(required_path(req, "reference"));
  const auto test = load_image_set(required_path(req, "test"));
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < test.size(); ++i) by_id.emplace(test.record(i).id, i);
  double l2 = 0, psnr = 0, ssim = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const auto it = by_id.find(ref.record(i).id);
    if (it == by_id.end()) throw data_error("test manifest lacks id " + ref.record(i).id);
    const auto t = triple(ref.images[i], test.images[it->second]);
    l2 += t["l2"].get<double>();
    psnr += t["psnr_db"].get<double>();
    ssim += t["ssim"].is_null() ? 0.0 : t["ssim"].get<double>();
    ++n;
  }
  if (n == 0) throw data_error("no image pairs to compare");
  const double d = static_cast<double>(n);
  return {{"pairs", n}, {"l2", l2 / d}, {"psnr_db", psnr / d}, {"ssim", ssim / d}};
}

json run_solar(const json& req) {
  check_keys(req, {"lat", "lon", "utc", "solar"}, "solar request");
  if (!req.contains("lat") || !req.contains("lon") || !req.contains("utc"))
    throw usage_error("solar needs lat, lon and utc");
  double lat = 0, lon = 0;
  read(req, "lat", lat);
  read(req, "lon", lon);
  const auto p = geo::GeoPoint::make(lat, lon);
  const auto t = geo::parse_utc(req["utc"].get<std::string>());
  const auto cfg = solar_config(req.value("solar", json::object()));
  const double elev = geo::solar_elevation_deg(p, t);
  const auto events = geo::sun_events(p, std::chrono::floor<std::chrono::days>(t));
  auto fmt = [](const std::optional<geo::UtcTime>& e) {
    return e ? json(geo::format_utc(*e)) : json(nullptr);
  };
  return {{"elevation_deg", elev},
          {"geometric_elevation_deg", geo::geometric_solar_elevation_deg(p, t)},
          {"domain", std::string(geo::to_string(geo::classify_elevation(elev, cfg)))},
          {"sunrise", fmt(events.sunrise)},
          {"sunset", fmt(events.sunset)}};
}

// ---------------------------------------------------------------------------
// Ablation

json ablation_defaults() {
  synthdata::SynthConfig synth;
  synth.n_places = 100;
  synth.views_per_place = 5;
  synth.image_size = 32;
  synth.jitter = 0.5;

  trainer::EncoderShape shape;
  shape.patch_size = 4;
  shape.feat_dim = 64;
  shape.out_dim = 64;

  trainer::TrainConfig pre;
  pre.optimizer = trainer::Optimizer::Adam;
  pre.lr = 3e-3;
  pre.epochs = 60;
  pre.batch_size = 32;

  trainer::TrainConfig fine;
  fine.optimizer = trainer::Optimizer::Adam;
  fine.lr = 1e-3;
  fine.epochs = 5;
  fine.batch_size = 32;
  fine.loss.alpha_mode = losses::AlphaMode::Auto;
  fine.freeze_head = true;

  return {{"seeds", {0, 1, 2, 3, 4}},
          {"synth", to_json(synth)},
          {"night", to_json(nightgen::NightParams{})},
          {"encoder", to_json(shape)},
          {"pretrain", to_json(pre)},
          {"finetune", to_json(fine)},
          {"ns", {1, 5, 10}},
          {"threshold_m", eval::kDefaultThresholdM}};
}

namespace {

struct AblationRow {
  const char* name;
  bool day;
  bool night;
  bool ikt;
};

constexpr AblationRow kRows[] = {
    {"day (baseline)", true, false, false},
    {"day+night (GKT)", true, true, false},
    {"night (GKT)", false, true, false},
    {"night+IKT", false, true, true},
};

json recall_json(const eval::SubsetRecall& s) {
  json r = json::object();
  for (const auto& [n, v] : s.recall_at) r[std::to_string(n)] = v;
  return r;
}

bool same_rankings(const std::vector<retrieval::RankedList>& a,
                   const std::vector<retrieval::RankedList>& b,
                   const std::vector<geo::DomainTag>& domains, geo::DomainTag tag) {
  for (std::size_t q = 0; q < a.size(); ++q) {
    if (domains[q] != tag) continue;
    if (a[q].hits != b[q].hits) return false;
  }
  return true;
}

json run_ablation_seed(const json& cfg, std::uint64_t seed) {
  auto synth = synth_config(cfg.at("synth"));
  synth.seed = sub_seed(seed, "synth");
  if (synth.views_per_place < 2) throw usage_error("ablation needs >= 2 views per place");
  auto night = night_params(cfg.at("night"));
  const auto shape = encoder_shape(cfg.at("encoder"));
  auto pre_cfg = train_config(cfg.at("pretrain"));
  pre_cfg.seed = sub_seed(seed, "pretrain");
  auto fine_cfg = train_config(cfg.at("finetune"));
  fine_cfg.seed = sub_seed(seed, "finetune");
  std::vector<std::size_t> ns = parse_ns(cfg);
  double threshold = eval::kDefaultThresholdM;
  read(cfg, "threshold_m", threshold);

  // Last view of every place is the query; the rest are database/training.
  const auto all = synthdata::generate(synth);
  ImageSet train_day, query_day;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const bool is_query = (i % synth.views_per_place) == synth.views_per_place - 1;
    auto& dst = is_query ? query_day : train_day;
    dst.manifest.records.push_back(all.record(i));
    dst.images.push_back(all.images[i]);
  }
  night.seed = sub_seed(seed, "train-night");
  const auto train_night = night_version(train_day, night);
  night.seed = sub_seed(seed, "query-night");
  auto query_night = night_version(query_day, night);

  ImageSet queries = query_day;
  for (std::size_t i = 0; i < query_night.size(); ++i) {
    auto rec = query_night.record(i);
    rec.id += "_night";
    queries.manifest.records.push_back(rec);
    queries.images.push_back(query_night.images[i]);
  }

  ImageSet mixed = train_day;
  for (std::size_t i = 0; i < train_night.size(); ++i) {
    auto rec = train_night.record(i);
    rec.id += "_night";
    mixed.manifest.records.push_back(rec);
    mixed.images.push_back(train_night.images[i]);
  }

  const auto pretrained = trainer::pretrain_day(train_day, shape, pre_cfg);
  const auto day_db = retrieval::build_db(train_day, pretrained);

  std::vector<std::string> night_ids;
  for (const auto& r : train_night.manifest.records) night_ids.push_back(r.id);
  const auto cache = trainer::build_day_cache(train_day, night_ids, pretrained);

  json rows = json::array();
  std::vector<retrieval::RankedList> baseline_rankings;
  std::vector<geo::DomainTag> domains;
  bool day_path_identical = true;
  for (const auto& row : kRows) {
    store::Checkpoint model;
    trainer::TrainLog log;
    if (!row.night) {
      model = pretrained;
    } else {
      auto c = fine_cfg;
      if (!row.ikt) {
        c.loss.alpha_mode = losses::AlphaMode::Fixed;
        c.loss.alpha = 0.0;
      }
      model = trainer::finetune_night(row.day ? mixed : train_night, pretrained,
                                      row.ikt ? &cache : nullptr, c, &log);
    }

    retrieval::RoutingConfig routing;
    routing.day_model = &pretrained;
    routing.night_model = &model;
    routing.od_mode = true;
    const auto od = evaluate_sets(day_db, nullptr, train_day.manifest, queries, routing, ns,
                                  threshold);
    routing.od_mode = false;
    const auto night_db = row.night ? retrieval::build_db(train_day, model) : day_db;
    const auto no_od = evaluate_sets(day_db, &night_db, train_day.manifest, queries, routing, ns,
                                     threshold);

    if (baseline_rankings.empty()) {
      baseline_rankings = od.rankings;
      domains = od.domains;
    } else {
      day_path_identical = day_path_identical &&
                           same_rankings(baseline_rankings, od.rankings, domains,
                                         geo::DomainTag::Day);
    }

    auto cell = [](const EvalRun& r) {
      json c = json::object();
      for (const auto& [tag, s] : r.report.subsets)
        c[std::string(geo::to_string(tag))] = recall_json(s);
      return c;
    };
    json row_json = {{"name", row.name}, {"train_day", row.day}, {"train_night", row.night},
                     {"ikt", row.ikt},   {"od", cell(od)},        {"no_od", cell(no_od)}};
    if (row.night) row_json["training"] = log_summary(log);
    rows.push_back(row_json);
  }
  return {{"seed", seed}, {"rows", rows}, {"day_rankings_identical", day_path_identical}};
}

std::string ablation_table(const json& mean_rows, const std::vector<std::size_t>& ns) {
  std::ostringstream out;
  out << "Training set    IKT  OD   night R@";
  for (std::size_t i = 0; i < ns.size(); ++i) out << (i ? "/" : "") << ns[i];
  out << "      day R@";
  for (std::size_t i = 0; i < ns.size(); ++i) out << (i ? "/" : "") << ns[i];
  out << '\n';
  for (const char* mode : {"od", "no_od"}) {
    for (const auto& row : mean_rows) {
      if (std::string(mode) == "no_od" && !row["train_night"].get<bool>()) continue;
      std::string sets = std::string(row["train_day"].get<bool>() ? "Day " : "    ") +
                         (row["train_night"].get<bool>() ? "Night" : "     ");
      char prefix[64];
      std::snprintf(prefix, sizeof prefix, "%-15s %-4s %-4s ", sets.c_str(),
                    row["ikt"].get<bool>() ? "yes" : "", std::string(mode) == "od" ? "yes" : "");
      auto fmt = [&](const char* subset) {
        std::vector<std::optional<double>> v;
        const auto& c = row[mode];
        for (auto n : ns) {
          if (c.contains(subset))
            v.emplace_back(c[subset][std::to_string(n)].get<double>());
          else
            v.emplace_back();
        }
        return eval::format_recalls(v);
      };
      char line[160];
      std::snprintf(line, sizeof line, "%s %-18s  %s\n", prefix, fmt("night").c_str(),
                    fmt("day").c_str());
      out << line;
    }
  }
  return out.str();
}

}  // namespace

json run_ablate(const json& request) {
  check_keys(request,
             {"seeds", "synth", "night", "encoder", "pretrain", "finetune", "ns", "threshold_m"},
             "ablation config");
  json cfg = ablation_defaults();
  for (const auto& [key, value] : request.items()) {
    if (value.is_object() && cfg[key].is_object())
      cfg[key].update(value);
    else
      cfg[key] = value;
  }
  const auto seeds = cfg.at("seeds").get<std::vector<std::uint64_t>>();
  if (seeds.empty()) throw usage_error("ablation needs at least one seed");
  const auto ns = parse_ns(cfg);

  const auto start = std::chrono::steady_clock::now();
  json per_seed = json::array();
  for (auto s : seeds) per_seed.push_back(run_ablation_seed(cfg, s));

  // Mean over seeds, cell by cell.
  json mean_rows = per_seed[0]["rows"];
  bool identical = true;
  for (std::size_t r = 0; r < mean_rows.size(); ++r)
    for (const char* mode : {"od", "no_od"})
      for (auto& [subset, recalls] : mean_rows[r][mode].items())
        for (auto& [n, v] : recalls.items()) {
          double sum = 0.0;
          for (const auto& ps : per_seed) sum += ps["rows"][r][mode][subset][n].get<double>();
          v = sum / static_cast<double>(per_seed.size());
        }
  for (auto& row : mean_rows) row.erase("training");
  for (const auto& ps : per_seed) identical = identical && ps["day_rankings_identical"].get<bool>();

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {{"config", cfg},
          {"mean", mean_rows},
          {"per_seed", per_seed},
          {"day_rankings_identical", identical},
          {"runtime_s", seconds},
          {"table", ablation_table(mean_rows, ns)}};
}

json run_command(const std::string& command, const json& request) {
  if (command == "synth") return run_synth(request);
  if (command == "gen-night") return run_gen_night(request);
  if (command == "pretrain") return run_pretrain(request);
  if (command == "cache-day") return run_cache_day(request);
  if (command == "finetune") return run_finetune(request);
  if (command == "build-db") return run_build_db(request);
  if (command == "query") return run_query(request);
  if (command == "evaluate") return run_evaluate(request);
  if (command == "metrics") return run_metrics(request);
  if (command == "solar") return run_solar(request);
  if (command == "ablate") return run_ablate(request);
  throw usage_error("unknown command '" + command + "'");
}

}  // namespace nightvpr::pipeline
