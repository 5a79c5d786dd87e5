#include "nightvpr/store.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include "nightvpr/error.hpp"

namespace nightvpr::store {

using nlohmann::json;

Fingerprint sha256(std::span<const std::uint8_t> bytes) {
  Fingerprint out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size())
    throw data_error("SHA-256 computation failed");
  return out;
}

std::string to_hex(const Fingerprint& fp) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (auto b : fp) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 15]);
  }
  return s;
}

Fingerprint from_hex(const std::string& hex) {
  if (hex.size() != 64) throw data_error("fingerprint must be 64 hex characters");
  Fingerprint fp{};
  auto nibble = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw data_error("fingerprint has non-hex character");
  };
  for (std::size_t i = 0; i < 32; ++i)
    fp[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  return fp;
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw data_error("failed writing " + path.string());
}

// Little-endian encoding independent of host byte order.
class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > remaining()) throw data_error("truncated file");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{s[i]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{s[i]} << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

void Manifest::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (r.id.empty()) throw data_error("record with empty id");
    if (!seen.insert(r.id).second) throw data_error("duplicate id \"" + r.id + "\"");
    if (r.coord_mode() != coord_mode)
      throw data_error("mixed coordinate modes in manifest (record \"" + r.id + "\")");
  }
}

nlohmann::ordered_json record_to_json(const ImageRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["image"] = r.image_ref;
  if (const auto* g = std::get_if<geo::GeoPoint>(&r.position)) {
    j["lat"] = g->lat;
    j["lon"] = g->lon;
  } else {
    const auto& p = std::get<geo::PlanarPoint>(r.position);
    j["x_m"] = p.x_m;
    j["y_m"] = p.y_m;
  }
  if (r.utc) j["utc"] = geo::format_utc(*r.utc);
  if (r.label) j["label"] = *r.label;
  if (r.domain) j["domain"] = std::string(geo::to_string(*r.domain));
  return j;
}

ImageRecord record_from_json(const json& j) {
  if (!j.is_object()) throw data_error("record is not a JSON object");
  auto number = [&](const char* key) {
    const auto& v = j.at(key);
    if (!v.is_number()) throw data_error(std::string("field '") + key + "' must be a number");
    return v.get<double>();
  };

  ImageRecord r;
  if (!j.contains("id") || !j["id"].is_string()) throw data_error("record needs string 'id'");
  r.id = j["id"].get<std::string>();
  if (j.contains("image")) {
    if (!j["image"].is_string()) throw data_error("field 'image' must be a string");
    r.image_ref = j["image"].get<std::string>();
  }

  const bool has_geo = j.contains("lat") || j.contains("lon");
  const bool has_planar = j.contains("x_m") || j.contains("y_m");
  if (has_geo == has_planar)
    throw data_error("record \"" + r.id + "\" needs exactly one of lat/lon or x_m/y_m");
  if (has_geo)
    r.position = geo::GeoPoint::make(number("lat"), number("lon"));
  else
    r.position = geo::PlanarPoint::make(number("x_m"), number("y_m"));

  if (j.contains("utc") && !j["utc"].is_null()) {
    if (!j["utc"].is_string()) throw data_error("field 'utc' must be an ISO-8601 string");
    r.utc = geo::parse_utc(j["utc"].get<std::string>());
  }
  if (j.contains("label") && !j["label"].is_null()) {
    const auto& v = j["label"];
    if (!v.is_number_integer() || v.get<long long>() < 0)
      throw data_error("field 'label' must be a non-negative integer");
    r.label = v.get<std::size_t>();
  }
  if (j.contains("domain") && !j["domain"].is_null()) {
    if (!j["domain"].is_string()) throw data_error("field 'domain' must be a string");
    r.domain = geo::parse_domain(j["domain"].get<std::string>());
  }
  return r;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw data_error(path.string() + ":" + std::to_string(line_no) +
                       ": malformed record: " + e.what());
    } catch (const Error& e) {
      throw data_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!m.records.empty()) m.coord_mode = m.records.front().coord_mode();
  m.validate();
  return m;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  m.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write manifest " + path.string());
  for (const auto& r : m.records) out << record_to_json(r).dump() << '\n';
  if (!out) throw data_error("failed writing manifest " + path.string());
}

double distance_m(const Position& a, const Position& b) {
  if (a.index() != b.index()) throw data_error("coordinate mode mismatch");
  if (const auto* ga = std::get_if<geo::GeoPoint>(&a))
    return geo::haversine_m(*ga, std::get<geo::GeoPoint>(b));
  return geo::planar_m(std::get<geo::PlanarPoint>(a), std::get<geo::PlanarPoint>(b));
}

// ---------------------------------------------------------------------------
// DescriptorDB

void DescriptorDB::validate() const {
  if (dim == 0) throw data_error("descriptor db dim must be positive");
  if (vectors.size() != ids.size() * dim)
    throw data_error("descriptor db payload does not match count x dim");
  for (std::size_t i = 0; i < count(); ++i) {
    double sq = 0.0;
    for (float v : row(i)) sq += static_cast<double>(v) * v;
    if (!(std::abs(std::sqrt(sq) - 1.0) <= 1e-4))
      throw data_error("descriptor row " + std::to_string(i) + " (" + ids[i] +
                       ") violates unit norm");
  }
}

std::vector<std::uint8_t> serialize_db(const DescriptorDB& db) {
  db.validate();
  Writer w;
  w.raw({reinterpret_cast<const std::uint8_t*>("NVPR"), 4});
  w.u32(kDbVersion);
  w.u32(db.dim);
  w.u64(db.count());
  for (float v : db.vectors) w.f32(v);
  for (const auto& id : db.ids) {
    w.u32(static_cast<std::uint32_t>(id.size()));
    w.raw({reinterpret_cast<const std::uint8_t*>(id.data()), id.size()});
  }
  w.raw(db.encoder_fingerprint);
  return w.take();
}

DescriptorDB deserialize_db(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4);
  if (std::memcmp(magic.data(), "NVPR", 4) != 0) throw data_error("bad magic: not an NVPR descriptor database");
  const auto version = r.u32();
  if (version != kDbVersion)
    throw data_error("unsupported descriptor db version " + std::to_string(version));
  DescriptorDB db;
  db.dim = r.u32();
  const auto count = r.u64();
  if (db.dim == 0) throw data_error("descriptor db dim must be positive");
  // Guard before allocating: the payload alone must fit in what is left.
  if (count > r.remaining() / (std::uint64_t{db.dim} * 4))
    throw data_error("truncated descriptor payload: header declares " +
                     std::to_string(count) + " x " + std::to_string(db.dim));
  db.vectors.resize(count * db.dim);
  for (float& v : db.vectors) v = r.f32();
  db.ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.u32();
    const auto s = r.take(len);
    db.ids.emplace_back(reinterpret_cast<const char*>(s.data()), s.size());
  }
  const auto fp = r.take(32);
  std::copy(fp.begin(), fp.end(), db.encoder_fingerprint.begin());
  if (r.remaining() != 0) throw data_error("trailing bytes after descriptor db");
  db.validate();
  return db;
}

void save_db(const DescriptorDB& db, const std::filesystem::path& path) {
  write_file(path, serialize_db(db));
}

DescriptorDB load_db(const std::filesystem::path& path) {
  try {
    return deserialize_db(read_file(path));
  } catch (const Error& e) {
    throw data_error(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Checkpoint

std::vector<std::uint8_t> Checkpoint::tensor_blob() const {
  params.validate();
  Writer w;
  for (const auto& t : params.tensors())
    for (double v : t.values) w.f32(static_cast<float>(v));
  if (head)
    for (double v : head->w) w.f32(static_cast<float>(v));
  return w.take();
}

Fingerprint Checkpoint::fingerprint() const { return sha256(tensor_blob()); }

std::filesystem::path blob_path(const std::filesystem::path& header) {
  auto p = header;
  p += ".bin";
  return p;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const auto blob = c.tensor_blob();
  const auto& p = c.params;
  nlohmann::ordered_json h;
  h["format_version"] = c.format_version;
  h["encoder"] = {{"patch_size", p.patch_size}, {"feat_dim", p.feat_dim}, {"out_dim", p.out_dim}};
  h["tensors"] = nlohmann::ordered_json::array({
      {{"name", "W1"}, {"shape", {p.in_dim(), p.feat_dim}}},
      {{"name", "b1"}, {"shape", {p.feat_dim}}},
      {{"name", "gem_p"}, {"shape", nlohmann::ordered_json::array({1})}},
      {{"name", "W2"}, {"shape", {p.feat_dim, p.out_dim}}},
      {{"name", "b2"}, {"shape", {p.out_dim}}},
  });
  if (c.head) {
    h["head"] = {{"classes", c.head->classes}, {"dim", c.head->dim}, {"s", c.head->s},
                 {"m", c.head->m}};
    h["tensors"].push_back({{"name", "head_W"}, {"shape", {c.head->classes, c.head->dim}}});
  } else {
    h["head"] = nullptr;
  }
  h["blob"] = blob_path(path).filename().string();
  h["blob_bytes"] = blob.size();
  h["fingerprint"] = to_hex(sha256(blob));
  h["hyperparameters"] = c.hyperparameters;

  write_file(blob_path(path), blob);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write checkpoint " + path.string());
  out << h.dump(2) << '\n';
  if (!out) throw data_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  json h;
  {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open checkpoint " + path.string());
    try {
      h = json::parse(in);
    } catch (const json::exception& e) {
      throw data_error("malformed checkpoint header " + path.string() + ": " + e.what());
    }
  }

  Checkpoint c;
  try {
    c.format_version = h.at("format_version").get<int>();
    if (c.format_version != kCheckpointVersion)
      throw data_error("unsupported checkpoint version " + std::to_string(c.format_version));
    const auto& e = h.at("encoder");
    c.params.patch_size = e.at("patch_size").get<std::size_t>();
    c.params.feat_dim = e.at("feat_dim").get<std::size_t>();
    c.params.out_dim = e.at("out_dim").get<std::size_t>();
    if (h.contains("head") && !h["head"].is_null()) {
      losses::ClassifierHead head;
      head.classes = h["head"].at("classes").get<std::size_t>();
      head.dim = h["head"].at("dim").get<std::size_t>();
      head.s = h["head"].at("s").get<double>();
      head.m = h["head"].at("m").get<double>();
      c.head = head;
    }
    if (h.contains("hyperparameters")) c.hyperparameters = h["hyperparameters"];
  } catch (const json::exception& ex) {
    throw data_error("checkpoint header " + path.string() + ": " + ex.what());
  }

  auto& p = c.params;
  if (p.patch_size == 0 || p.feat_dim == 0 || p.out_dim == 0)
    throw data_error("checkpoint declares a zero dimension");
  const std::size_t n_params =
      p.in_dim() * p.feat_dim + p.feat_dim + 1 + p.feat_dim * p.out_dim + p.out_dim;
  const std::size_t n_head = c.head ? c.head->classes * c.head->dim : 0;
  if (c.head && c.head->dim != p.out_dim)
    throw data_error("checkpoint head dim " + std::to_string(c.head->dim) +
                     " != encoder out_dim " + std::to_string(p.out_dim));

  const auto blob = read_file(blob_path(path));
  if (blob.size() != 4 * (n_params + n_head))
    throw data_error("checkpoint shape error: declared dims need " +
                     std::to_string(4 * (n_params + n_head)) + " bytes, blob has " +
                     std::to_string(blob.size()));
  if (h.contains("fingerprint") && h["fingerprint"].get<std::string>() != to_hex(sha256(blob)))
    throw data_error("checkpoint fingerprint does not match " + blob_path(path).string());

  Reader r(blob);
  auto fill = [&](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (double& x : v) x = r.f32();
  };
  fill(p.w1, p.in_dim() * p.feat_dim);
  fill(p.b1, p.feat_dim);
  p.gem_p = r.f32();
  fill(p.w2, p.feat_dim * p.out_dim);
  fill(p.b2, p.out_dim);
  if (c.head) {
    fill(c.head->w, n_head);
    c.head->validate();
  }
  p.validate();
  return c;
}

}  // namespace nightvpr::store
