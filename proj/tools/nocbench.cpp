// nocbench: command-line front end over the nightvpr C API.
//
// Every subcommand builds a JSON request from an optional --config file
// overlaid with explicit flags (flags win) and prints the resolved request
// next to the result.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "nightvpr/nightvpr.h"

using nlohmann::json;

namespace {

enum class LogLevel { Error, Warn, Info, Debug };
LogLevel g_level = LogLevel::Warn;

void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= g_level) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

// Sets a slash-separated path in `j`, creating objects on the way.
void set_path(json& j, const std::string& path, json value) {
  json* cur = &j;
  std::size_t start = 0;
  for (;;) {
    const auto slash = path.find('/', start);
    const auto key = path.substr(start, slash - start);
    if (slash == std::string::npos) {
      (*cur)[key] = std::move(value);
      return;
    }
    cur = &(*cur)[key];
    start = slash + 1;
  }
}

struct Command {
  CLI::App* app = nullptr;
  std::string name;
  json flags = json::object();
  std::string config_path;
  std::string seed_path;  // where --seed lands, if anywhere
  bool text = false;      // print the rendered table instead of JSON
  std::string params_path;  // gen-night: NightParams file

  template <class T>
  CLI::Option* opt(const std::string& flag, const std::string& path, const std::string& help) {
    return app->add_option_function<T>(
        flag, [this, path](const T& v) { set_path(flags, path, v); }, help);
  }
  void flag(const std::string& flag, const std::string& path, bool value,
            const std::string& help) {
    app->add_flag_callback(flag, [this, path, value] { set_path(flags, path, value); }, help);
  }
};

void train_options(Command& c) {
  c.opt<double>("--lr", "train/lr", "learning rate");
  c.opt<int>("--epochs", "train/epochs", "training epochs");
  c.opt<std::size_t>("--batch-size", "train/batch_size", "mini-batch size");
  c.opt<std::string>("--optimizer", "train/optimizer", "sgd or adam");
  c.opt<double>("--scale", "train/s", "LMC scale s");
  c.opt<double>("--margin", "train/m", "LMC margin m");
  c.flag("--freeze-head", "train/freeze_head", true, "keep classifier weights fixed");
}

void solar_options(Command& c) {
  c.opt<double>("--day-elevation", "solar/day_elevation_deg", "day threshold in degrees");
  c.opt<double>("--night-elevation", "solar/night_elevation_deg", "night threshold in degrees");
}

void routing_options(Command& c) {
  c.opt<std::string>("--db", "db", "descriptor database (built with the day model)");
  c.opt<std::string>("--night-db", "night_db", "database built with the night model (no OD)");
  c.opt<std::string>("--queries", "queries", "query manifest");
  c.opt<std::string>("--model", "model", "day (pre-trained) checkpoint");
  c.opt<std::string>("--night-model", "night_model", "night (fine-tuned) checkpoint");
  c.flag("--od", "od", true, "search the original day database (default)");
  c.flag("--no-od", "od", false, "search a database rebuilt with the night model");
  c.flag("--twilight-as-day", "twilight_to_night", false, "route twilight queries as day");
  solar_options(c);
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  try {
    auto j = json::parse(in);
    if (!j.is_object()) throw std::runtime_error("config " + path + " is not a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nocbench: night-time visual place recognition benchmark tools"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string level = "warn";
  app.add_option("--seed", seed, "root seed for data generation and training");
  app.add_option("--threads", threads, "maximum worker threads")->check(CLI::PositiveNumber);
  app.add_option("--log-level", level, "error, warn, info or debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  std::vector<std::unique_ptr<Command>> commands;
  auto add = [&](const std::string& name, const std::string& help, const std::string& seed_path) {
    auto c = std::make_unique<Command>();
    c->name = name;
    c->seed_path = seed_path;
    c->app = app.add_subcommand(name, help);
    c->app->add_option("--config", c->config_path, "JSON request; flags override its values");
    commands.push_back(std::move(c));
    return commands.back().get();
  };

  {
    auto c = add("synth", "generate a labeled synthetic place dataset", "config/seed");
    c->opt<std::string>("--out", "out", "output directory");
    c->opt<std::size_t>("--n-places", "config/n_places", "number of places");
    c->opt<std::size_t>("--views", "config/views_per_place", "views per place");
    c->opt<std::size_t>("--image-size", "config/image_size", "square image side in pixels");
    c->opt<double>("--jitter", "config/jitter", "view jitter in [0, 1]");
    c->opt<double>("--spacing-m", "config/spacing_m", "distance between place anchors");
  }
  {
    auto c = add("gen-night", "render night-style versions of a manifest", "params/seed");
    c->opt<std::string>("--manifest", "manifest", "day manifest");
    c->opt<std::string>("--out", "out", "output directory");
    c->app->add_option("--params", c->params_path, "NightParams JSON file");
    c->opt<double>("--gamma", "params/gamma", "gamma exponent");
    c->opt<double>("--brightness", "params/brightness", "brightness gain");
    c->opt<double>("--temp-shift", "params/temp_shift", "colour temperature shift");
    c->opt<int>("--bloom-count", "params/bloom_count", "light blooms per image");
    c->opt<double>("--bloom-intensity", "params/bloom_intensity", "bloom peak intensity");
    c->opt<double>("--noise-sigma", "params/noise_sigma", "sensor noise sigma");
  }
  {
    auto c = add("pretrain", "train the day model with the LMC loss", "train/seed");
    c->opt<std::string>("--manifest", "manifest", "labeled day manifest");
    c->opt<std::string>("--out", "out", "checkpoint path");
    c->opt<std::string>("--log", "log", "per-step JSON lines log");
    c->opt<std::size_t>("--patch-size", "encoder/patch_size", "patch side in pixels");
    c->opt<std::size_t>("--feat-dim", "encoder/feat_dim", "local feature width");
    c->opt<std::size_t>("--out-dim", "encoder/out_dim", "descriptor dimension");
    train_options(*c);
  }
  {
    auto c = add("cache-day", "store pre-trained day descriptors for the night set", "");
    c->opt<std::string>("--day-manifest", "day_manifest", "day manifest");
    c->opt<std::string>("--night-manifest", "night_manifest", "night manifest (ids)");
    c->opt<std::string>("--model", "model", "pre-trained checkpoint");
    c->opt<std::string>("--out", "out", "cache path");
  }
  {
    auto c = add("finetune", "fine-tune on night images with LMC + alpha IKT", "train/seed");
    c->opt<std::string>("--manifest", "manifest", "night manifest");
    c->opt<std::string>("--model", "model", "pre-trained checkpoint");
    c->opt<std::string>("--cache", "cache", "day descriptor cache (required for IKT)");
    c->opt<std::string>("--out", "out", "checkpoint path");
    c->opt<std::string>("--log", "log", "per-step JSON lines log");
    c->app->add_option_function<std::string>(
        "--alpha",
        [c](const std::string& v) {
          if (v == "auto") {
            set_path(c->flags, "train/alpha_mode", "auto");
            return;
          }
          std::size_t used = 0;
          double a = 0;
          try {
            a = std::stod(v, &used);
          } catch (const std::exception&) {
            used = 0;
          }
          if (used != v.size()) throw CLI::ValidationError("--alpha", "expects a number or 'auto'");
          set_path(c->flags, "train/alpha_mode", "fixed");
          set_path(c->flags, "train/alpha", a);
        },
        "IKT weight, or 'auto' for L_LMC/L_IKT at the first step");
    c->flag("--ikt-scalar", "train/ikt_scalar_mode", true, "Bernoulli IKT on the true class");
    c->flag("--no-recompute-day-probs", "train/recompute_day_probs", false,
            "compute day probabilities once with the initial head");
    train_options(*c);
  }
  {
    auto c = add("build-db", "encode a manifest into a descriptor database", "");
    c->opt<std::string>("--manifest", "manifest", "database manifest");
    c->opt<std::string>("--model", "model", "checkpoint");
    c->opt<std::string>("--out", "out", "database path");
  }
  {
    auto c = add("query", "retrieve top-k database entries per query", "");
    routing_options(*c);
    c->opt<std::size_t>("-k,--k", "k", "hits per query");
    c->opt<std::string>("--out", "out", "JSON lines output (default: inline)");
  }
  {
    auto c = add("evaluate", "recall@N per domain subset", "");
    routing_options(*c);
    c->opt<std::string>("--db-manifest", "db_manifest", "manifest the database was built from");
    c->opt<std::vector<std::size_t>>("--ns", "ns", "recall cut-offs")->delimiter(',');
    c->opt<double>("--threshold-m", "threshold_m", "positive radius in metres");
    c->app->add_flag("--text", c->text, "print the recall table instead of JSON");
  }
  {
    auto c = add("metrics", "L2, PSNR and SSIM between images or manifests", "");
    c->opt<std::string>("--a", "a", "first PPM image");
    c->opt<std::string>("--b", "b", "second PPM image");
    c->opt<std::string>("--reference", "reference", "reference manifest");
    c->opt<std::string>("--test", "test", "test manifest (matched by id)");
  }
  {
    auto c = add("solar", "sun elevation and domain for a place and time", "");
    c->opt<double>("--lat", "lat", "latitude in degrees");
    c->opt<double>("--lon", "lon", "longitude in degrees");
    c->opt<std::string>("--utc", "utc", "time as YYYY-MM-DDTHH:MM:SSZ");
    solar_options(*c);
  }
  {
    auto c = add("ablate", "training-set / IKT / OD ablation on synthetic data", "");
    c->opt<std::vector<std::uint64_t>>("--seeds", "seeds", "seeds to average")->delimiter(',');
    c->app->add_flag("--text", c->text, "print the table instead of JSON");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  g_level = level == "error" ? LogLevel::Error
            : level == "warn" ? LogLevel::Warn
            : level == "info" ? LogLevel::Info
                              : LogLevel::Debug;
  if (threads && nvpr_set_threads(*threads) != NVPR_OK) {
    log(LogLevel::Error, nvpr_last_error());
    return 2;
  }

  for (const auto& c : commands) {
    if (!c->app->parsed()) continue;
    json request = json::object();
    try {
      if (!c->config_path.empty()) request = load_config(c->config_path);
      if (!c->params_path.empty()) request["params"] = load_config(c->params_path);
    } catch (const std::exception& e) {
      log(LogLevel::Error, e.what());
      return 2;
    }
    if (seed) {
      if (c->name == "ablate")
        c->flags["seeds"] = json::array({*seed});
      else if (!c->seed_path.empty())
        set_path(c->flags, c->seed_path, *seed);
    }
    request.merge_patch(c->flags);
    log(LogLevel::Info, "running " + c->name);
    log(LogLevel::Debug, "request " + request.dump());

    char* response = nullptr;
    const auto status = nvpr_run_command(c->name.c_str(), request.dump().c_str(), &response);
    if (status != NVPR_OK) {
      log(LogLevel::Error, nvpr_last_error());
      return static_cast<int>(status);
    }
    auto result = json::parse(response);
    nvpr_string_free(response);
    // Defaults filled in by the library join the echoed request.
    if (result.contains("resolved")) {
      request.merge_patch(result["resolved"]);
      result.erase("resolved");
    }

    if (c->text && result.contains("table")) {
      std::cout << result["table"].get<std::string>();
    } else {
      json out = {{"command", c->name}, {"config", request}, {"result", result}};
      if (c->name == "ablate") out["config"] = result["config"];
      std::cout << out.dump(2) << '\n';
    }
    return 0;
  }
  return 2;
}
