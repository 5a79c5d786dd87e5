#include <doctest.h>

#include <chrono>
#include <random>

#include "nightvpr/error.hpp"
#include "nightvpr/geo.hpp"
#include "oracles.hpp"

using namespace nightvpr;
using namespace nightvpr::geo;
using namespace std::chrono;

namespace {

oracle::CivilTime civil(UtcTime t) {
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  return {static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
          static_cast<int>(static_cast<unsigned>(ymd.day())),
          duration<double>(t - day).count() / 3600.0};
}

UtcTime at(int y, unsigned m, unsigned d, int hh, int mm = 0, int ss = 0) {
  return UtcTime(sys_days(year{y} / m / d)) + hours(hh) + minutes(mm) + seconds(ss);
}

}  // namespace

TEST_CASE("haversine closed forms") {
  const auto o = GeoPoint::make(0, 0);
  CHECK(haversine_m(o, o) == 0.0);
  CHECK(std::abs(haversine_m(o, GeoPoint::make(1, 0)) - 111194.93) < 0.01);
  CHECK(std::abs(haversine_m(o, GeoPoint::make(1, 0)) - oracle::kPi * kEarthRadiusM / 180.0) < 0.01);
  CHECK(std::abs(haversine_m(o, GeoPoint::make(0, 180)) - 20015086.8) < 0.1);
  CHECK(std::abs(haversine_m(o, GeoPoint::make(0, 180)) - oracle::kPi * kEarthRadiusM) < 0.1);
}

TEST_CASE("haversine symmetry and triangle inequality") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
  for (int i = 0; i < 500; ++i) {
    const auto a = GeoPoint::make(lat(rng), lon(rng));
    const auto b = GeoPoint::make(lat(rng), lon(rng));
    const auto c = GeoPoint::make(lat(rng), lon(rng));
    CHECK(haversine_m(a, b) == haversine_m(b, a));
    CHECK(haversine_m(a, b) >= 0.0);
    const double ac = haversine_m(a, c);
    CHECK(ac <= (haversine_m(a, b) + haversine_m(b, c)) * (1 + 1e-6));
  }
}

TEST_CASE("planar distance") {
  CHECK(planar_m(PlanarPoint::make(0, 0), PlanarPoint::make(0, 0)) == 0.0);
  CHECK(planar_m(PlanarPoint::make(0, 0), PlanarPoint::make(3, 4)) == 5.0);
  CHECK(planar_m(PlanarPoint::make(10, 0), PlanarPoint::make(10, 25)) == 25.0);
}

TEST_CASE("point validation") {
  CHECK_THROWS_AS(GeoPoint::make(91.0, 0), Error);
  CHECK_THROWS_AS(GeoPoint::make(0, -180.5), Error);
  CHECK_THROWS_AS(GeoPoint::make(std::nan(""), 0), Error);
  CHECK_THROWS_AS(PlanarPoint::make(std::numeric_limits<double>::infinity(), 0), Error);
  CHECK_NOTHROW(GeoPoint::make(-90, 180));
}

TEST_CASE("solar elevation fixtures") {
  const auto o = GeoPoint::make(0, 0);
  const double noon = solar_elevation_deg(o, at(2024, 3, 20, 12, 7));
  CHECK(noon >= 89.0);
  CHECK(noon <= 90.0);
  const double midnight = solar_elevation_deg(o, at(2024, 3, 20, 0, 7));
  CHECK(midnight <= -89.0);
  CHECK(midnight >= -90.0);
}

TEST_CASE("solar elevation: antipodal longitude, 12 h shift") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lat(-80, 80), lon(-180, 0), sec(0, 86400.0 * 365 * 50);
  for (int i = 0; i < 100; ++i) {
    const auto la = lat(rng), lo = lon(rng);
    const auto t = at(1970, 1, 1, 0) + seconds(static_cast<long>(sec(rng)));
    const double a = geometric_solar_elevation_deg(GeoPoint::make(la, lo), t);
    const double b = geometric_solar_elevation_deg(GeoPoint::make(la, lo + 180), t + hours(12));
    CHECK(std::abs(a - b) < 0.5);
  }
}

TEST_CASE("solar elevation matches the fractional-year oracle within 0.2 deg") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lat(-89, 89), lon(-180, 180), sec(0, 86400.0 * 365 * 120);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto p = GeoPoint::make(lat(rng), lon(rng));
    const auto t = at(1905, 1, 1, 0) + seconds(static_cast<long>(sec(rng)));
    const double ours = solar_elevation_deg(p, t);
    const double ref = oracle::apparent_elevation_deg(p.lat, p.lon, civil(t));
    worst = std::max(worst, std::abs(ours - ref));
  }
  CHECK(worst < 0.2);
}

TEST_CASE("solar elevation range checks") {
  const auto p = GeoPoint::make(10, 10);
  CHECK_THROWS_AS(solar_elevation_deg(p, at(1899, 12, 31, 12)), Error);
  CHECK_THROWS_AS(solar_elevation_deg(p, at(2101, 1, 1, 12)), Error);
  CHECK_NOTHROW(solar_elevation_deg(p, at(1900, 1, 1, 12)));
}

TEST_CASE("sun events within 5 minutes of the oracle") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lat(-60, 60), lon(-180, 180);
  std::uniform_int_distribution<int> dayoff(0, 365 * 60);
  for (int i = 0; i < 25; ++i) {
    const auto p = GeoPoint::make(lat(rng), lon(rng));
    const sys_days day = sys_days(year{1990} / 1 / 1) + days(dayoff(rng));
    const year_month_day ymd{day};
    const auto ev = sun_events(p, day);
    REQUIRE(ev.sunrise.has_value());
    REQUIRE(ev.sunset.has_value());
    const auto ref = oracle::sun_times(p.lat, p.lon, static_cast<int>(ymd.year()),
                                       static_cast<int>(static_cast<unsigned>(ymd.month())),
                                       static_cast<int>(static_cast<unsigned>(ymd.day())));
    const double rise = duration<double>(*ev.sunrise - day).count() / 60.0;
    const double set = duration<double>(*ev.sunset - day).count() / 60.0;
    CHECK(std::abs(rise - ref.sunrise_min) < 5.0);
    CHECK(std::abs(set - ref.sunset_min) < 5.0);
    // Crossing really sits at the -0.833 deg level.
    CHECK(std::abs(geometric_solar_elevation_deg(p, *ev.sunrise) + 0.833) < 0.02);
  }
}

TEST_CASE("polar day and night have no events") {
  const auto north = GeoPoint::make(80, 0);
  const auto summer = sun_events(north, sys_days(year{2023} / 6 / 21));
  CHECK_FALSE(summer.sunrise.has_value());
  CHECK_FALSE(summer.sunset.has_value());
  const auto winter = sun_events(north, sys_days(year{2023} / 12 / 21));
  CHECK_FALSE(winter.sunrise.has_value());
}

TEST_CASE("classification thresholds") {
  const SolarConfig def;
  CHECK(classify_elevation(-3.0, def) == DomainTag::Twilight);
  CHECK(classify_elevation(-10.0, def) == DomainTag::Night);
  CHECK(classify_elevation(10.0, def) == DomainTag::Day);
  SolarConfig forced{-40.0, -50.0};
  CHECK(classify_elevation(30.0, forced) == DomainTag::Day);
  // Boundaries belong to twilight.
  CHECK(classify_elevation(0.0, def) == DomainTag::Twilight);
  CHECK(classify_elevation(-6.0, def) == DomainTag::Twilight);
  CHECK_THROWS_AS((SolarConfig{-6.0, 0.0}.validate()), Error);
}

TEST_CASE("classification is monotone in elevation") {
  const SolarConfig cfg;
  int prev = 0;
  for (double e = -90; e <= 90; e += 0.25) {
    const int rank = static_cast<int>(classify_elevation(e, cfg) == DomainTag::Night ? 0
                                      : classify_elevation(e, cfg) == DomainTag::Twilight ? 1
                                                                                          : 2);
    CHECK(rank >= prev);
    prev = rank;
  }
}

TEST_CASE("classify_domain at local solar midnight and noon") {
  const auto tokyo = GeoPoint::make(35.68, 139.69);
  // Local solar midnight is near 14:40 UTC.
  CHECK(classify_domain(tokyo, at(2023, 6, 21, 14, 40), SolarConfig{}) == DomainTag::Night);
  CHECK(classify_domain(tokyo, at(2023, 6, 21, 2, 40), SolarConfig{}) == DomainTag::Day);
}

TEST_CASE("utc parsing") {
  CHECK(parse_utc("2024-03-20T12:07:00Z") == at(2024, 3, 20, 12, 7));
  CHECK(parse_utc("2024-03-20T12:07:00") == at(2024, 3, 20, 12, 7));
  CHECK(format_utc(at(2024, 3, 20, 12, 7, 5)) == "2024-03-20T12:07:05Z");
  CHECK_THROWS_AS(parse_utc("2024-02-30T00:00:00Z"), Error);
  CHECK_THROWS_AS(parse_utc("noon"), Error);
  CHECK_THROWS_AS(parse_utc("2024-03-20T25:00:00Z"), Error);
}

TEST_CASE("domain names") {
  for (auto t : {DomainTag::Day, DomainTag::Twilight, DomainTag::Night})
    CHECK(parse_domain(to_string(t)) == t);
  CHECK_THROWS_AS(parse_domain("dusk"), Error);
}
