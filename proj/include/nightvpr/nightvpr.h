/* C interface to the nightvpr library. Handles are opaque; every call
 * returns a status code and leaves a message in nvpr_last_error() on
 * failure. Strings returned through char** are freed with nvpr_string_free. */
#ifndef NIGHTVPR_H
#define NIGHTVPR_H

#include <stddef.h>
#include <stdint.h>

#if defined(NVPR_BUILDING_LIBRARY)
#define NVPR_API __attribute__((visibility("default")))
#else
#define NVPR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nvpr_status {
  NVPR_OK = 0,
  NVPR_ERR_USAGE = 2,      /* bad arguments or configuration */
  NVPR_ERR_DATA = 3,       /* malformed or inconsistent input data */
  NVPR_ERR_DIVERGENCE = 4, /* training produced non-finite values */
  NVPR_ERR_INTERNAL = 5
} nvpr_status;

typedef struct nvpr_db nvpr_db;
typedef struct nvpr_model nvpr_model;

typedef struct nvpr_hit {
  size_t index;
  float similarity;
} nvpr_hit;

/* Message for the last failed call on this thread; empty if none. */
NVPR_API const char* nvpr_last_error(void);
NVPR_API const char* nvpr_version(void);
/* Upper bound on worker threads (>= 1). */
NVPR_API nvpr_status nvpr_set_threads(size_t n);

NVPR_API void nvpr_string_free(char* s);

/* Runs a command ("synth", "evaluate", ...) on a JSON request and returns
 * the JSON result in *response_json. */
NVPR_API nvpr_status nvpr_run_command(const char* name, const char* request_json,
                                      char** response_json);

/* Descriptor databases. */
NVPR_API nvpr_status nvpr_db_load(const char* path, nvpr_db** out);
NVPR_API nvpr_status nvpr_db_save(const nvpr_db* db, const char* path);
NVPR_API size_t nvpr_db_count(const nvpr_db* db);
NVPR_API size_t nvpr_db_dim(const nvpr_db* db);
/* Borrowed pointer, valid until the handle is freed. */
NVPR_API const char* nvpr_db_id(const nvpr_db* db, size_t i);
/* Writes min(k, count) hits; *n_out receives the number written. */
NVPR_API nvpr_status nvpr_db_search(const nvpr_db* db, const float* query, size_t dim, size_t k,
                                    nvpr_hit* hits, size_t* n_out);
NVPR_API void nvpr_db_free(nvpr_db* db);

/* Encoder checkpoints. */
NVPR_API nvpr_status nvpr_model_load(const char* path, nvpr_model** out);
NVPR_API size_t nvpr_model_dim(const nvpr_model* m);
/* Lowercase hex SHA-256 of the tensor blob, 65 bytes including the NUL. */
NVPR_API nvpr_status nvpr_model_fingerprint(const nvpr_model* m, char out[65]);
/* Encodes an interleaved RGB image with values in [0, 1]. */
NVPR_API nvpr_status nvpr_model_encode(const nvpr_model* m, const float* rgb, size_t height,
                                       size_t width, float* out, size_t out_dim);
NVPR_API void nvpr_model_free(nvpr_model* m);

/* Geodesy and solar. `utc` is "YYYY-MM-DDTHH:MM:SSZ". */
NVPR_API nvpr_status nvpr_haversine_m(double lat1, double lon1, double lat2, double lon2,
                                      double* out);
NVPR_API nvpr_status nvpr_solar_elevation_deg(double lat, double lon, const char* utc,
                                              double* out);
/* Writes "day", "twilight" or "night" (static string) to *out. */
NVPR_API nvpr_status nvpr_classify(double lat, double lon, const char* utc,
                                   double day_elevation_deg, double night_elevation_deg,
                                   const char** out);

#ifdef __cplusplus
}
#endif

#endif
