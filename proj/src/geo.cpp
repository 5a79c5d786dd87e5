#include "nightvpr/geo.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "nightvpr/error.hpp"

namespace nightvpr::geo {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double rad(double deg) { return deg * kDeg; }
double deg(double rad) { return rad / kDeg; }

// Valid range for the solar series: 1900-01-01 .. 2100-12-31.
constexpr std::chrono::sys_days kMinDay =
    std::chrono::year{1900} / std::chrono::January / 1;
constexpr std::chrono::sys_days kMaxDay =
    std::chrono::year{2101} / std::chrono::January / 1;

}  // namespace

GeoPoint GeoPoint::make(double lat, double lon) {
  if (!(lat >= -90.0 && lat <= 90.0))
    throw data_error("latitude out of range [-90, 90]: " + std::to_string(lat));
  if (!(lon >= -180.0 && lon <= 180.0))
    throw data_error("longitude out of range [-180, 180]: " +
                     std::to_string(lon));
  return {lat, lon};
}

PlanarPoint PlanarPoint::make(double x_m, double y_m) {
  if (!std::isfinite(x_m) || !std::isfinite(y_m))
    throw data_error("planar coordinates must be finite");
  return {x_m, y_m};
}

std::string_view to_string(DomainTag tag) {
  switch (tag) {
    case DomainTag::Day: return "day";
    case DomainTag::Twilight: return "twilight";
    case DomainTag::Night: return "night";
  }
  return "day";
}

DomainTag parse_domain(std::string_view text) {
  if (text == "day") return DomainTag::Day;
  if (text == "twilight") return DomainTag::Twilight;
  if (text == "night") return DomainTag::Night;
  throw data_error("unknown domain tag '" + std::string(text) + "'");
}

void SolarConfig::validate() const {
  if (!std::isfinite(day_elevation_deg) || !std::isfinite(night_elevation_deg))
    throw usage_error("solar thresholds must be finite");
  if (!(night_elevation_deg < day_elevation_deg))
    throw usage_error("night_elevation_deg must be below day_elevation_deg");
}

double haversine_m(const GeoPoint& a, const GeoPoint& b) {
  const double dlat = rad(b.lat - a.lat);
  const double dlon = rad(b.lon - a.lon);
  const double u = std::sin(dlat / 2);
  const double v = std::sin(dlon / 2);
  // Symmetric in (a, b): both cos factors commute and u, v enter squared.
  double h = u * u + std::cos(rad(a.lat)) * std::cos(rad(b.lat)) * v * v;
  h = std::min(1.0, std::max(0.0, h));
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

double planar_m(const PlanarPoint& a, const PlanarPoint& b) {
  return std::hypot(b.x_m - a.x_m, b.y_m - a.y_m);
}

double geometric_solar_elevation_deg(const GeoPoint& p, UtcTime utc) {
  using namespace std::chrono;
  if (utc < kMinDay || utc >= kMaxDay)
    throw data_error("timestamp outside supported years 1900..2100");

  const double unix_s = static_cast<double>(utc.time_since_epoch().count());
  const double jd = unix_s / 86400.0 + 2440587.5;
  const double jc = (jd - 2451545.0) / 36525.0;

  const double mean_long =
      std::fmod(280.46646 + jc * (36000.76983 + jc * 0.0003032), 360.0);
  const double mean_anom = 357.52911 + jc * (35999.05029 - 0.0001537 * jc);
  const double ecc = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc);
  const double m = rad(mean_anom);
  const double eq_center = std::sin(m) * (1.914602 - jc * (0.004817 + 0.000014 * jc)) +
                           std::sin(2 * m) * (0.019993 - 0.000101 * jc) +
                           std::sin(3 * m) * 0.000289;
  const double true_long = mean_long + eq_center;
  const double omega = rad(125.04 - 1934.136 * jc);
  const double app_long = true_long - 0.00569 - 0.00478 * std::sin(omega);
  const double mean_obliq =
      23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) /
                 60.0;
  const double obliq = mean_obliq + 0.00256 * std::cos(omega);
  const double decl = std::asin(std::sin(rad(obliq)) * std::sin(rad(app_long)));

  const double y = std::pow(std::tan(rad(obliq) / 2), 2);
  const double l0 = rad(mean_long);
  const double eq_time_min =
      4.0 * deg(y * std::sin(2 * l0) - 2 * ecc * std::sin(m) +
                4 * ecc * y * std::sin(m) * std::cos(2 * l0) -
                0.5 * y * y * std::sin(4 * l0) - 1.25 * ecc * ecc * std::sin(2 * m));

  const auto day_start = floor<days>(utc);
  const double minutes = static_cast<double>((utc - day_start).count()) / 60.0;
  double true_solar = std::fmod(minutes + eq_time_min + 4.0 * p.lon, 1440.0);
  if (true_solar < 0) true_solar += 1440.0;
  const double hour_angle =
      true_solar / 4.0 < 0 ? true_solar / 4.0 + 180.0 : true_solar / 4.0 - 180.0;

  const double lat = rad(p.lat);
  double cos_zenith = std::sin(lat) * std::sin(decl) +
                      std::cos(lat) * std::cos(decl) * std::cos(rad(hour_angle));
  cos_zenith = std::min(1.0, std::max(-1.0, cos_zenith));
  return 90.0 - deg(std::acos(cos_zenith));
}

double solar_elevation_deg(const GeoPoint& p, UtcTime utc) {
  const double e = geometric_solar_elevation_deg(p, utc);
  double refraction_arcsec = 0.0;
  if (e > 85.0) {
    refraction_arcsec = 0.0;
  } else if (e > 5.0) {
    const double t = std::tan(rad(e));
    refraction_arcsec = 58.1 / t - 0.07 / (t * t * t) + 0.000086 / std::pow(t, 5);
  } else if (e > -0.575) {
    refraction_arcsec = 1735.0 + e * (-518.2 + e * (103.4 + e * (-12.79 + e * 0.711)));
  } else {
    refraction_arcsec = -20.772 / std::tan(rad(e));
  }
  return e + refraction_arcsec / 3600.0;
}

DomainTag classify_elevation(double elevation_deg, const SolarConfig& cfg) {
  if (elevation_deg > cfg.day_elevation_deg) return DomainTag::Day;
  if (elevation_deg < cfg.night_elevation_deg) return DomainTag::Night;
  return DomainTag::Twilight;
}

DomainTag classify_domain(const GeoPoint& p, UtcTime utc,
                          const SolarConfig& cfg) {
  cfg.validate();
  return classify_elevation(solar_elevation_deg(p, utc), cfg);
}

SunEvents sun_events(const GeoPoint& p, std::chrono::sys_days day) {
  using namespace std::chrono;
  constexpr double kHorizon = -0.833;
  const auto noon =
      UtcTime(day) + seconds(static_cast<long>(std::lround((720.0 - 4.0 * p.lon) * 60.0)));
  auto f = [&](UtcTime t) {
    return geometric_solar_elevation_deg(p, t) - kHorizon;
  };

  // Scan a half-day on one side of noon in 10 minute steps, then bisect the
  // first sign change to one second.
  auto crossing = [&](int direction) -> std::optional<UtcTime> {
    constexpr seconds kStep{600};
    UtcTime prev = noon;
    double f_prev = f(prev);
    for (int i = 1; i <= 72; ++i) {
      const UtcTime cur = noon + direction * i * kStep;
      const double f_cur = f(cur);
      if ((f_prev > 0) != (f_cur > 0)) {
        UtcTime lo = direction > 0 ? prev : cur;
        UtcTime hi = direction > 0 ? cur : prev;
        const bool lo_positive = f(lo) > 0;
        while (hi - lo > seconds{1}) {
          const UtcTime mid = lo + (hi - lo) / 2;
          if ((f(mid) > 0) == lo_positive)
            lo = mid;
          else
            hi = mid;
        }
        return lo;
      }
      prev = cur;
      f_prev = f_cur;
    }
    return std::nullopt;
  };

  return {crossing(-1), crossing(+1)};
}

UtcTime parse_utc(std::string_view text) {
  using namespace std::chrono;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char tail = '\0';
  const std::string buf(text);
  const int n = std::sscanf(buf.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d,
                            &h, &mi, &s, &tail);
  if (n < 6 || (n == 7 && tail != 'Z'))
    throw data_error("bad UTC timestamp '" + buf + "' (want YYYY-MM-DDTHH:MM:SSZ)");
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60)
    throw data_error("invalid UTC timestamp '" + buf + "'");
  return UtcTime(sys_days(ymd)) + hours(h) + minutes(mi) + seconds(s);
}

std::string format_utc(UtcTime t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  hh_mm_ss hms{t - day};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()),
                static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

}  // namespace nightvpr::geo
