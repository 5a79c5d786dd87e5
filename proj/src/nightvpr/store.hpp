#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "nightvpr/encoder.hpp"
#include "nightvpr/geo.hpp"
#include "nightvpr/losses.hpp"

namespace nightvpr::store {

using Fingerprint = std::array<std::uint8_t, 32>;

Fingerprint sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(const Fingerprint& fp);
Fingerprint from_hex(const std::string& hex);

// ---------------------------------------------------------------------------
// Manifests: JSON Lines, one ImageRecord per line.

enum class CoordMode { Geo, Planar };

using Position = std::variant<geo::GeoPoint, geo::PlanarPoint>;

struct ImageRecord {
  std::string id;
  std::string image_ref;  // path, relative to the manifest's directory
  Position position = geo::PlanarPoint{};
  std::optional<geo::UtcTime> utc;
  std::optional<std::size_t> label;
  std::optional<geo::DomainTag> domain;

  CoordMode coord_mode() const {
    return std::holds_alternative<geo::GeoPoint>(position) ? CoordMode::Geo
                                                           : CoordMode::Planar;
  }

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct Manifest {
  CoordMode coord_mode = CoordMode::Planar;
  std::vector<ImageRecord> records;

  // Unique ids and a uniform coordinate mode; throws a data error otherwise.
  void validate() const;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

nlohmann::ordered_json record_to_json(const ImageRecord& r);
ImageRecord record_from_json(const nlohmann::json& j);

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& m, const std::filesystem::path& path);

// Distance between two positions of the same mode (haversine or planar).
double distance_m(const Position& a, const Position& b);

// ---------------------------------------------------------------------------
// Descriptor database.
//
//   "NVPR" | u32 version | u32 dim | u64 count | count*dim f32
//   | count * (u32 length, UTF-8 bytes) | 32-byte fingerprint
//
// All integers and floats little-endian.

inline constexpr std::uint32_t kDbVersion = 1;

struct DescriptorDB {
  std::uint32_t dim = 0;
  std::vector<float> vectors;  // count x dim, row-major
  std::vector<std::string> ids;
  Fingerprint encoder_fingerprint{};

  std::size_t count() const noexcept { return ids.size(); }
  std::span<const float> row(std::size_t i) const { return {&vectors[i * dim], dim}; }

  // dim > 0, aligned ids, unit-norm rows within 1e-4.
  void validate() const;

  friend bool operator==(const DescriptorDB&, const DescriptorDB&) = default;
};

std::vector<std::uint8_t> serialize_db(const DescriptorDB& db);
DescriptorDB deserialize_db(std::span<const std::uint8_t> bytes);
void save_db(const DescriptorDB& db, const std::filesystem::path& path);
DescriptorDB load_db(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Checkpoints: JSON header at `path`, raw little-endian f32 tensors at
// `path` + ".bin" in order W1, b1, gem_p, W2, b2[, head W].

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  encoder::EncoderParams params;
  std::optional<losses::ClassifierHead> head;
  int format_version = kCheckpointVersion;
  nlohmann::json hyperparameters = nlohmann::json::object();

  // SHA-256 of the serialized tensor blob.
  Fingerprint fingerprint() const;
  std::vector<std::uint8_t> tensor_blob() const;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.params == b.params && a.head == b.head &&
           a.format_version == b.format_version;
  }
};

std::filesystem::path blob_path(const std::filesystem::path& header);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nightvpr::store
