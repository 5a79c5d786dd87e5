#include "nightvpr/nightvpr.h"

#include <cstring>
#include <new>
#include <string>

#include "nightvpr/encoder.hpp"
#include "nightvpr/error.hpp"
#include "nightvpr/geo.hpp"
#include "nightvpr/parallel.hpp"
#include "nightvpr/pipeline.hpp"
#include "nightvpr/retrieval.hpp"
#include "nightvpr/store.hpp"

struct nvpr_db {
  nightvpr::store::DescriptorDB db;
};

struct nvpr_model {
  nightvpr::store::Checkpoint ckpt;
};

namespace {

thread_local std::string g_last_error;

template <class F>
nvpr_status guarded(F&& fn) {
  try {
    g_last_error.clear();
    fn();
    return NVPR_OK;
  } catch (const nightvpr::Error& e) {
    g_last_error = e.what();
    switch (e.kind()) {
      case nightvpr::ErrorKind::Usage: return NVPR_ERR_USAGE;
      case nightvpr::ErrorKind::Data: return NVPR_ERR_DATA;
      case nightvpr::ErrorKind::Divergence: return NVPR_ERR_DIVERGENCE;
    }
    return NVPR_ERR_INTERNAL;
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return NVPR_ERR_USAGE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NVPR_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return NVPR_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw nightvpr::usage_error(std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* nvpr_last_error(void) { return g_last_error.c_str(); }

const char* nvpr_version(void) { return "0.1.0"; }

nvpr_status nvpr_set_threads(size_t n) {
  return guarded([&] {
    if (n == 0) throw nightvpr::usage_error("thread count must be >= 1");
    nightvpr::set_max_threads(static_cast<unsigned>(n));
  });
}

void nvpr_string_free(char* s) { delete[] s; }

nvpr_status nvpr_run_command(const char* name, const char* request_json, char** response_json) {
  return guarded([&] {
    require(name, "name");
    require(response_json, "response_json");
    *response_json = nullptr;
    const auto req = request_json && *request_json ? nlohmann::json::parse(request_json)
                                                   : nlohmann::json::object();
    *response_json = dup_string(nightvpr::pipeline::run_command(name, req).dump());
  });
}

nvpr_status nvpr_db_load(const char* path, nvpr_db** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto h = std::make_unique<nvpr_db>();
    h->db = nightvpr::store::load_db(path);
    *out = h.release();
  });
}

nvpr_status nvpr_db_save(const nvpr_db* db, const char* path) {
  return guarded([&] {
    require(db, "db");
    require(path, "path");
    nightvpr::store::save_db(db->db, path);
  });
}

size_t nvpr_db_count(const nvpr_db* db) { return db ? db->db.count() : 0; }
size_t nvpr_db_dim(const nvpr_db* db) { return db ? db->db.dim : 0; }

const char* nvpr_db_id(const nvpr_db* db, size_t i) {
  if (!db || i >= db->db.ids.size()) return nullptr;
  return db->db.ids[i].c_str();
}

nvpr_status nvpr_db_search(const nvpr_db* db, const float* query, size_t dim, size_t k,
                           nvpr_hit* hits, size_t* n_out) {
  return guarded([&] {
    require(db, "db");
    require(query, "query");
    require(hits, "hits");
    require(n_out, "n_out");
    *n_out = 0;
    const auto list = nightvpr::retrieval::top_k(db->db, {query, dim}, k);
    for (std::size_t i = 0; i < list.hits.size(); ++i)
      hits[i] = {list.hits[i].index, list.hits[i].similarity};
    *n_out = list.hits.size();
  });
}

void nvpr_db_free(nvpr_db* db) { delete db; }

nvpr_status nvpr_model_load(const char* path, nvpr_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto h = std::make_unique<nvpr_model>();
    h->ckpt = nightvpr::store::load_checkpoint(path);
    *out = h.release();
  });
}

size_t nvpr_model_dim(const nvpr_model* m) { return m ? m->ckpt.params.out_dim : 0; }

nvpr_status nvpr_model_fingerprint(const nvpr_model* m, char out[65]) {
  return guarded([&] {
    require(m, "model");
    require(out, "out");
    const auto hex = nightvpr::store::to_hex(m->ckpt.fingerprint());
    std::memcpy(out, hex.c_str(), 65);
  });
}

nvpr_status nvpr_model_encode(const nvpr_model* m, const float* rgb, size_t height, size_t width,
                              float* out, size_t out_dim) {
  return guarded([&] {
    require(m, "model");
    require(rgb, "rgb");
    require(out, "out");
    if (out_dim != m->ckpt.params.out_dim)
      throw nightvpr::usage_error("output buffer has dim " + std::to_string(out_dim) +
                                  ", model produces " + std::to_string(m->ckpt.params.out_dim));
    nightvpr::RasterImage img(height, width);
    std::memcpy(img.pixels().data(), rgb, img.size() * sizeof(float));
    img.validate();
    const auto d = nightvpr::encoder::forward(img, m->ckpt.params).to_float();
    std::memcpy(out, d.data(), d.size() * sizeof(float));
  });
}

void nvpr_model_free(nvpr_model* m) { delete m; }

nvpr_status nvpr_haversine_m(double lat1, double lon1, double lat2, double lon2, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = nightvpr::geo::haversine_m(nightvpr::geo::GeoPoint::make(lat1, lon1),
                                      nightvpr::geo::GeoPoint::make(lat2, lon2));
  });
}

nvpr_status nvpr_solar_elevation_deg(double lat, double lon, const char* utc, double* out) {
  return guarded([&] {
    require(utc, "utc");
    require(out, "out");
    *out = nightvpr::geo::solar_elevation_deg(nightvpr::geo::GeoPoint::make(lat, lon),
                                              nightvpr::geo::parse_utc(utc));
  });
}

nvpr_status nvpr_classify(double lat, double lon, const char* utc, double day_elevation_deg,
                          double night_elevation_deg, const char** out) {
  return guarded([&] {
    require(utc, "utc");
    require(out, "out");
    nightvpr::geo::SolarConfig cfg;
    cfg.day_elevation_deg = day_elevation_deg;
    cfg.night_elevation_deg = night_elevation_deg;
    cfg.validate();
    const auto tag = nightvpr::geo::classify_domain(nightvpr::geo::GeoPoint::make(lat, lon),
                                                    nightvpr::geo::parse_utc(utc), cfg);
    switch (tag) {
      case nightvpr::geo::DomainTag::Day: *out = "day"; break;
      case nightvpr::geo::DomainTag::Twilight: *out = "twilight"; break;
      case nightvpr::geo::DomainTag::Night: *out = "night"; break;
    }
  });
}

}  // extern "C"
