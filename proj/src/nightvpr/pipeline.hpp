#pragma once

#include <json.hpp>

#include "nightvpr/geo.hpp"
#include "nightvpr/nightgen.hpp"
#include "nightvpr/synthdata.hpp"
#include "nightvpr/trainer.hpp"

// Orchestration behind the command-line tool: every command takes a
// resolved JSON request and returns a JSON result. The request is echoed in
// the result so that each run can be reproduced from its own output.
namespace nightvpr::pipeline {

using nlohmann::json;

// Config decoding. Unknown keys are usage errors; missing keys keep defaults.
synthdata::SynthConfig synth_config(const json& j);
nightgen::NightParams night_params(const json& j);
trainer::TrainConfig train_config(const json& j);
trainer::EncoderShape encoder_shape(const json& j);
geo::SolarConfig solar_config(const json& j);

json to_json(const synthdata::SynthConfig& c);
json to_json(const nightgen::NightParams& p);
json to_json(const trainer::TrainConfig& c);
json to_json(const trainer::EncoderShape& s);
json to_json(const geo::SolarConfig& s);

// Night version of a day set: per-record seed derived from (params.seed, id),
// ids and labels kept, domain set to night.
ImageSet night_version(const ImageSet& day, const nightgen::NightParams& params);

json run_synth(const json& request);
json run_gen_night(const json& request);
json run_pretrain(const json& request);
json run_cache_day(const json& request);
json run_finetune(const json& request);
json run_build_db(const json& request);
json run_query(const json& request);
json run_evaluate(const json& request);
json run_metrics(const json& request);
json run_solar(const json& request);

// Training-strategy ablation on synthetic data. See ablation_defaults() for the
// request layout.
json ablation_defaults();
json run_ablate(const json& request);

// Dispatches by command name ("synth", "gen-night", ...).
json run_command(const std::string& command, const json& request);

}  // namespace nightvpr::pipeline
