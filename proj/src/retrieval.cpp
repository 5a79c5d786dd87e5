#include "nightvpr/retrieval.hpp"

#include <algorithm>
#include <queue>

#include "nightvpr/error.hpp"
#include "nightvpr/parallel.hpp"

namespace nightvpr::retrieval {

float similarity(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return static_cast<float>(acc);
}

store::DescriptorDB build_db(const ImageSet& set, const store::Checkpoint& model) {
  model.params.validate();
  store::DescriptorDB db;
  db.dim = static_cast<std::uint32_t>(model.params.out_dim);
  db.encoder_fingerprint = model.fingerprint();
  db.ids.resize(set.size());
  db.vectors.resize(set.size() * db.dim);
  parallel_for(set.size(), [&](std::size_t i) {
    const auto d = encoder::forward(set.images[i], model.params);
    db.ids[i] = set.record(i).id;
    for (std::size_t k = 0; k < db.dim; ++k) db.vectors[i * db.dim + k] = static_cast<float>(d.values[k]);
  });
  db.validate();
  return db;
}

namespace {

struct Scored {
  float sim;
  std::size_t index;
};

// True when a ranks ahead of b.
bool ahead(const Scored& a, const Scored& b) {
  return a.sim > b.sim || (a.sim == b.sim && a.index < b.index);
}

// Bounded selection: the heap top is the worst retained candidate.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

  void offer(Scored s) {
    if (heap_.size() < k_) {
      heap_.push_back(s);
      std::push_heap(heap_.begin(), heap_.end(), ahead);
    } else if (ahead(s, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), ahead);
      heap_.back() = s;
      std::push_heap(heap_.begin(), heap_.end(), ahead);
    }
  }

  std::vector<Scored> sorted() && {
    std::sort(heap_.begin(), heap_.end(), ahead);
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  std::vector<Scored> heap_;
};

constexpr std::size_t kQueryTile = 8;
constexpr std::size_t kRowTile = 512;

void check_query(const store::DescriptorDB& db, std::size_t dim, std::size_t k) {
  if (k == 0) throw usage_error("k must be >= 1");
  if (dim != db.dim)
    throw data_error("query dim " + std::to_string(dim) + " != db dim " + std::to_string(db.dim));
}

RankedList to_list(const store::DescriptorDB& db, std::vector<Scored> best) {
  RankedList out;
  out.hits.reserve(best.size());
  for (const auto& s : best) out.hits.push_back({s.index, db.ids[s.index], s.sim});
  return out;
}

}  // namespace

RankedList top_k(const store::DescriptorDB& db, std::span<const float> query, std::size_t k) {
  check_query(db, query.size(), k);
  const std::size_t n = db.count();
  const std::size_t tiles = (n + kRowTile - 1) / kRowTile;
  std::vector<std::vector<Scored>> partial(tiles);
  parallel_for(tiles, [&](std::size_t t) {
    TopK sel(k);
    const std::size_t end = std::min(n, (t + 1) * kRowTile);
    for (std::size_t i = t * kRowTile; i < end; ++i) sel.offer({similarity(query, db.row(i)), i});
    partial[t] = std::move(sel).sorted();
  });
  TopK merged(k);
  for (const auto& p : partial)
    for (const auto& s : p) merged.offer(s);
  return to_list(db, std::move(merged).sorted());
}

std::vector<RankedList> top_k_batch(const store::DescriptorDB& db, std::span<const float> queries,
                                    std::size_t k) {
  if (db.dim == 0) throw data_error("db dim must be positive");
  if (queries.size() % db.dim != 0) throw data_error("query block is not a multiple of db dim");
  check_query(db, db.dim, k);
  const std::size_t nq = queries.size() / db.dim;
  const std::size_t n = db.count();
  std::vector<RankedList> out(nq);
  const std::size_t q_tiles = (nq + kQueryTile - 1) / kQueryTile;
  parallel_for(q_tiles, [&](std::size_t qt) {
    const std::size_t q0 = qt * kQueryTile;
    const std::size_t q1 = std::min(nq, q0 + kQueryTile);
    std::vector<TopK> sel(q1 - q0, TopK(k));
    for (std::size_t r0 = 0; r0 < n; r0 += kRowTile) {
      const std::size_t r1 = std::min(n, r0 + kRowTile);
      for (std::size_t q = q0; q < q1; ++q) {
        const auto qv = queries.subspan(q * db.dim, db.dim);
        for (std::size_t i = r0; i < r1; ++i) sel[q - q0].offer({similarity(qv, db.row(i)), i});
      }
    }
    for (std::size_t q = q0; q < q1; ++q) out[q] = to_list(db, std::move(sel[q - q0]).sorted());
  });
  return out;
}

void RoutingConfig::validate() const {
  if (!day_model || !night_model) throw usage_error("routing needs both day and night models");
  if (day_model->params.out_dim != night_model->params.out_dim)
    throw data_error("day and night models differ in out_dim");
  solar.validate();
}

geo::DomainTag resolve_domain(const store::ImageRecord& meta, const geo::SolarConfig& solar) {
  if (meta.domain) return *meta.domain;
  if (meta.utc) {
    if (const auto* p = std::get_if<geo::GeoPoint>(&meta.position))
      return geo::classify_domain(*p, *meta.utc, solar);
    throw data_error("record \"" + meta.id +
                     "\" has utc but planar coordinates; cannot derive day/night");
  }
  throw data_error("record \"" + meta.id + "\" has neither a domain tag nor a utc timestamp");
}

RoutedQuery route_query(const RasterImage& img, const store::ImageRecord& meta,
                        const RoutingConfig& routing) {
  routing.validate();
  RoutedQuery q;
  q.domain = resolve_domain(meta, routing.solar);
  const bool night = q.domain == geo::DomainTag::Night ||
                     (q.domain == geo::DomainTag::Twilight && routing.twilight_to_night);
  const auto& model = night ? *routing.night_model : *routing.day_model;
  q.descriptor = encoder::forward(img, model.params);
  return q;
}

void check_database(const store::DescriptorDB& db, const RoutingConfig& routing) {
  routing.validate();
  if (routing.od_mode && db.encoder_fingerprint != routing.day_model->fingerprint())
    throw data_error("original-database mode requires a database built by the day model");
}

}  // namespace nightvpr::retrieval
