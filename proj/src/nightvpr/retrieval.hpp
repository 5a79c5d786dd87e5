#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nightvpr/dataset.hpp"
#include "nightvpr/encoder.hpp"
#include "nightvpr/geo.hpp"
#include "nightvpr/store.hpp"

namespace nightvpr::retrieval {

struct Hit {
  std::size_t index = 0;
  std::string id;
  float similarity = 0.0f;

  friend bool operator==(const Hit&, const Hit&) = default;
};

// Similarities non-increasing; equal similarities ordered by ascending index.
struct RankedList {
  std::vector<Hit> hits;
};

// Dot product of two unit vectors, accumulated in double in index order.
// Every search path uses this kernel, so scores are bit-identical.
float similarity(std::span<const float> a, std::span<const float> b);

// Encodes every image with `model`; rows follow manifest order.
store::DescriptorDB build_db(const ImageSet& set, const store::Checkpoint& model);

// Exact top-k by dot product. Throws on dim mismatch or k == 0.
RankedList top_k(const store::DescriptorDB& db, std::span<const float> query, std::size_t k);

// Many queries (row-major, n x dim) against the same database; blocked over
// query and database tiles, parallel across query tiles.
std::vector<RankedList> top_k_batch(const store::DescriptorDB& db,
                                    std::span<const float> queries, std::size_t k);

struct RoutingConfig {
  const store::Checkpoint* day_model = nullptr;
  const store::Checkpoint* night_model = nullptr;
  bool od_mode = true;
  geo::SolarConfig solar;
  bool twilight_to_night = true;

  void validate() const;
};

struct RoutedQuery {
  encoder::Descriptor descriptor;
  geo::DomainTag domain = geo::DomainTag::Day;
};

// Explicit tag wins; otherwise utc + geographic position through the solar
// classifier. Throws a data error when neither is available.
geo::DomainTag resolve_domain(const store::ImageRecord& meta, const geo::SolarConfig& solar);

// Night (and by default twilight) queries go through the night model, day
// queries through the day model.
RoutedQuery route_query(const RasterImage& img, const store::ImageRecord& meta,
                        const RoutingConfig& routing);

// In original-database mode the database must carry the day model's
// fingerprint; throws otherwise.
void check_database(const store::DescriptorDB& db, const RoutingConfig& routing);

}  // namespace nightvpr::retrieval
