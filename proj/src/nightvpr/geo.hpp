#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace nightvpr::geo {

inline constexpr double kEarthRadiusM = 6'371'000.0;

using UtcTime = std::chrono::sys_seconds;

struct GeoPoint {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]

  // Throws a data error for NaN or out-of-range coordinates.
  static GeoPoint make(double lat, double lon);
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct PlanarPoint {
  double x_m = 0.0;  // meters east
  double y_m = 0.0;  // meters north

  static PlanarPoint make(double x_m, double y_m);
  friend bool operator==(const PlanarPoint&, const PlanarPoint&) = default;
};

enum class DomainTag { Day, Twilight, Night };

std::string_view to_string(DomainTag tag);
DomainTag parse_domain(std::string_view text);

struct SolarConfig {
  double day_elevation_deg = 0.0;
  double night_elevation_deg = -6.0;  // civil twilight

  // night_elevation_deg < day_elevation_deg, both finite.
  void validate() const;
};

double haversine_m(const GeoPoint& a, const GeoPoint& b);
double planar_m(const PlanarPoint& a, const PlanarPoint& b);

// Geometric (unrefracted) solar elevation following the NOAA spreadsheet
// formulation. Throws for timestamps outside 1900..2100.
double geometric_solar_elevation_deg(const GeoPoint& p, UtcTime utc);

// Apparent elevation: geometric plus NOAA's standard refraction correction.
double solar_elevation_deg(const GeoPoint& p, UtcTime utc);

DomainTag classify_elevation(double elevation_deg, const SolarConfig& cfg);
DomainTag classify_domain(const GeoPoint& p, UtcTime utc,
                          const SolarConfig& cfg);

struct SunEvents {
  std::optional<UtcTime> sunrise;
  std::optional<UtcTime> sunset;
};

// Crossings of geometric elevation -0.833 deg around the local solar noon of
// the given UTC calendar day. Empty optionals mean polar day/night.
SunEvents sun_events(const GeoPoint& p, std::chrono::sys_days day);

// ISO-8601 "YYYY-MM-DDTHH:MM:SSZ" (the trailing Z is optional on input).
UtcTime parse_utc(std::string_view text);
std::string format_utc(UtcTime t);

}  // namespace nightvpr::geo
