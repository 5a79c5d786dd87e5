#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "nightvpr/error.hpp"
#include "nightvpr/retrieval.hpp"
#include "oracles.hpp"

using namespace nightvpr;
using namespace nightvpr::retrieval;

namespace {

store::DescriptorDB random_db(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  store::DescriptorDB db;
  db.dim = static_cast<std::uint32_t>(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (double v : oracle::random_unit(rng, dim)) db.vectors.push_back(static_cast<float>(v));
    db.ids.push_back("r" + std::to_string(i));
  }
  return db;
}

std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

store::DescriptorDB one_hot_db() {
  store::DescriptorDB db;
  db.dim = 3;
  db.vectors = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  db.ids = {"a", "b", "c"};
  return db;
}

store::Checkpoint model(std::uint64_t seed) {
  store::Checkpoint c;
  c.params = encoder::EncoderParams::init(4, 8, 6, seed);
  return c;
}

store::ImageRecord rec(const std::string& id) {
  store::ImageRecord r;
  r.id = id;
  r.image_ref = id + ".ppm";
  return r;
}

}  // namespace

TEST_CASE("one-hot database") {
  const auto db = one_hot_db();
  const std::vector<float> q = {0, 1, 0};
  const auto r = top_k(db, q, 3);
  REQUIRE(r.hits.size() == 3);
  CHECK(r.hits[0].index == 1);
  CHECK(r.hits[0].id == "b");
  CHECK(r.hits[0].similarity == 1.0f);
  // The other two tie at zero and come back in index order.
  CHECK(r.hits[1].index == 0);
  CHECK(r.hits[2].index == 2);
  CHECK(top_k(db, q, 10).hits.size() == 3);
}

TEST_CASE("ties are broken by ascending index") {
  store::DescriptorDB db;
  db.dim = 2;
  for (int i = 0; i < 1200; ++i) {
    db.vectors.insert(db.vectors.end(), {0.6f, 0.8f});
    db.ids.push_back(std::to_string(i));
  }
  const std::vector<float> q = {1, 0};
  const auto r = top_k(db, q, 700);
  for (std::size_t i = 0; i < r.hits.size(); ++i) CHECK(r.hits[i].index == i);
  const auto b = top_k_batch(db, q, 700);
  CHECK(b[0].hits == r.hits);
}

TEST_CASE("top_k agrees with a full sort") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 2000, dim = 1 + rng() % 40, k = 1 + rng() % 30;
    const auto db = random_db(rng, n, dim);
    const auto q = to_float(oracle::random_unit(rng, dim));
    const auto ours = top_k(db, q, k);
    const auto ref = oracle::naive_top_k(db.vectors, dim, q, k);
    REQUIRE(ours.hits.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(ours.hits[i].index == ref[i].index);
      CHECK(ours.hits[i].similarity == ref[i].sim);
    }
    for (std::size_t i = 1; i < ours.hits.size(); ++i)
      CHECK(ours.hits[i - 1].similarity >= ours.hits[i].similarity);
  }
}

TEST_CASE("batched search equals single-query search") {
  std::mt19937_64 rng(2);
  const auto db = random_db(rng, 1500, 16);
  std::vector<float> queries;
  for (int i = 0; i < 37; ++i)
    for (double v : oracle::random_unit(rng, 16)) queries.push_back(static_cast<float>(v));
  const auto batch = top_k_batch(db, queries, 10);
  REQUIRE(batch.size() == 37);
  for (std::size_t q = 0; q < 37; ++q)
    CHECK(batch[q].hits == top_k(db, std::span(queries).subspan(q * 16, 16), 10).hits);
}

TEST_CASE("search errors and empty database") {
  const auto db = one_hot_db();
  const std::vector<float> q2 = {1, 0};
  CHECK_THROWS_AS(top_k(db, q2, 1), Error);
  const std::vector<float> q3 = {1, 0, 0};
  CHECK_THROWS_AS(top_k(db, q3, 0), Error);
  const std::vector<float> q4 = {1, 0, 0, 0};
  CHECK_THROWS_AS(top_k_batch(db, q4, 1), Error);
  store::DescriptorDB empty;
  empty.dim = 3;
  CHECK(top_k(empty, q3, 5).hits.empty());
  CHECK(similarity(q3, q3) == 1.0f);
}

TEST_CASE("build_db") {
  std::mt19937_64 rng(3);
  ImageSet set;
  set.manifest.coord_mode = store::CoordMode::Planar;
  for (int i = 0; i < 7; ++i) {
    set.manifest.records.push_back(rec("x" + std::to_string(i)));
    set.images.push_back(testing::random_image(rng, 8, 8));
  }
  const auto m = model(5);
  const auto db = build_db(set, m);
  CHECK(db.count() == 7);
  CHECK(db.dim == 6);
  CHECK(db.ids[3] == "x3");
  CHECK(db.encoder_fingerprint == m.fingerprint());
  for (std::size_t i = 0; i < db.count(); ++i) {
    double n = 0;
    for (float v : db.row(i)) n += static_cast<double>(v) * v;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-4);
    const auto d = encoder::forward(set.images[i], m.params);
    for (std::size_t k = 0; k < 6; ++k) CHECK(db.row(i)[k] == static_cast<float>(d.values[k]));
  }
  CHECK(build_db(set, m) == db);
  ImageSet none;
  const auto e = build_db(none, m);
  CHECK(e.count() == 0);
  CHECK(e.dim == 6);
}

TEST_CASE("routing uses the tagged domain") {
  std::mt19937_64 rng(4);
  const auto day = model(1), night = model(2);
  RoutingConfig cfg;
  cfg.day_model = &day;
  cfg.night_model = &night;
  const auto img = testing::random_image(rng, 8, 8);
  auto r = rec("q");

  r.domain = geo::DomainTag::Day;
  auto q = route_query(img, r, cfg);
  CHECK(q.domain == geo::DomainTag::Day);
  CHECK(q.descriptor == encoder::forward(img, day.params));

  r.domain = geo::DomainTag::Night;
  q = route_query(img, r, cfg);
  CHECK(q.descriptor == encoder::forward(img, night.params));

  r.domain = geo::DomainTag::Twilight;
  CHECK(route_query(img, r, cfg).descriptor == encoder::forward(img, night.params));
  cfg.twilight_to_night = false;
  CHECK(route_query(img, r, cfg).descriptor == encoder::forward(img, day.params));
}

TEST_CASE("routing by solar position") {
  std::mt19937_64 rng(5);
  const auto day = model(1), night = model(2);
  RoutingConfig cfg;
  cfg.day_model = &day;
  cfg.night_model = &night;
  const auto img = testing::random_image(rng, 8, 8);
  auto r = rec("tokyo");
  r.position = geo::GeoPoint::make(35.68, 139.69);
  r.utc = geo::parse_utc("2023-06-21T14:40:00Z");  // local solar midnight
  auto q = route_query(img, r, cfg);
  CHECK(q.domain == geo::DomainTag::Night);
  CHECK(q.descriptor == encoder::forward(img, night.params));
  r.utc = geo::parse_utc("2023-06-21T02:40:00Z");
  CHECK(route_query(img, r, cfg).domain == geo::DomainTag::Day);

  // Explicit tag wins over the timestamp.
  r.domain = geo::DomainTag::Night;
  CHECK(route_query(img, r, cfg).domain == geo::DomainTag::Night);

  auto planar = rec("p");
  planar.utc = r.utc;
  CHECK_THROWS_AS(route_query(img, planar, cfg), Error);
  CHECK_THROWS_AS(route_query(img, rec("bare"), cfg), Error);
}

TEST_CASE("routing validation and database checks") {
  const auto day = model(1), night = model(2);
  RoutingConfig cfg;
  cfg.day_model = &day;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.night_model = &night;
  CHECK_NOTHROW(cfg.validate());

  store::Checkpoint wide;
  wide.params = encoder::EncoderParams::init(4, 8, 9, 1);
  cfg.night_model = &wide;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.night_model = &night;

  store::DescriptorDB db;
  db.dim = 6;
  db.encoder_fingerprint = day.fingerprint();
  CHECK_NOTHROW(check_database(db, cfg));
  db.encoder_fingerprint = night.fingerprint();
  CHECK_THROWS_AS(check_database(db, cfg), Error);
  cfg.od_mode = false;
  CHECK_NOTHROW(check_database(db, cfg));
}
