#include "nightvpr/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_set>

#include "nightvpr/error.hpp"
#include "nightvpr/retrieval.hpp"

namespace nightvpr::eval {

std::vector<std::size_t> positives(const store::ImageRecord& query, const store::Manifest& db,
                                   double threshold_m) {
  if (!db.records.empty() && query.coord_mode() != db.coord_mode)
    throw data_error("query \"" + query.id + "\" coordinate mode differs from database");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < db.records.size(); ++i)
    if (store::distance_m(query.position, db.records[i].position) <= threshold_m)
      out.push_back(i);
  return out;
}

SubsetRecall recall_at_n(std::span<const retrieval::RankedList> ranked,
                         std::span<const std::vector<std::size_t>> positives,
                         std::span<const std::size_t> ns) {
  if (ns.empty()) throw usage_error("recall needs at least one N");
  if (ranked.size() != positives.size())
    throw data_error("ranked lists and positive sets differ in length");
  SubsetRecall out;
  std::map<std::size_t, std::size_t> hits;
  for (auto n : ns) {
    if (n == 0) throw usage_error("N must be >= 1");
    hits[n] = 0;
  }
  for (std::size_t q = 0; q < ranked.size(); ++q) {
    if (positives[q].empty()) {
      ++out.n_excluded;
      continue;
    }
    ++out.n_queries;
    const std::unordered_set<std::size_t> pos(positives[q].begin(), positives[q].end());
    const auto& list = ranked[q].hits;
    // Rank of the first positive hit, if any.
    std::size_t first = list.size();
    for (std::size_t r = 0; r < list.size(); ++r)
      if (pos.contains(list[r].index)) {
        first = r;
        break;
      }
    for (auto& [n, count] : hits)
      if (first < n) ++count;
  }
  for (const auto& [n, count] : hits)
    out.recall_at[n] = out.n_queries == 0
                           ? 0.0
                           : static_cast<double>(count) / static_cast<double>(out.n_queries);
  return out;
}

bool RecallReport::is_monotone() const {
  for (const auto& [tag, s] : subsets) {
    double prev = 0.0;
    for (const auto& [n, r] : s.recall_at) {
      if (r < 0.0 || r > 1.0 || r < prev) return false;
      prev = r;
    }
  }
  return true;
}

nlohmann::ordered_json RecallReport::to_json() const {
  nlohmann::ordered_json j;
  j["threshold_m"] = threshold_m;
  j["ns"] = ns;
  j["od_mode"] = od_mode;
  auto& subs = j["subsets"] = nlohmann::ordered_json::object();
  for (const auto& [tag, s] : subsets) {
    nlohmann::ordered_json r = nlohmann::ordered_json::object();
    for (const auto& [n, v] : s.recall_at) r[std::to_string(n)] = v;
    subs[std::string(geo::to_string(tag))] = {
        {"n_queries", s.n_queries}, {"n_excluded_no_positive", s.n_excluded}, {"recall_at", r}};
  }
  return j;
}

std::map<geo::DomainTag, std::vector<std::string>> segment_queries(
    const store::Manifest& queries, const geo::SolarConfig& solar) {
  std::map<geo::DomainTag, std::vector<std::string>> out;
  for (const auto& r : queries.records) out[retrieval::resolve_domain(r, solar)].push_back(r.id);
  return out;
}

std::string format_recalls(std::span<const std::optional<double>> recalls) {
  std::string out;
  for (std::size_t i = 0; i < recalls.size(); ++i) {
    if (i) out += " / ";
    if (recalls[i]) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%.1f", 100.0 * *recalls[i]);
      out += buf;
    } else {
      out += "—";
    }
  }
  return out;
}

std::string render_report(const RecallReport& report) {
  std::string header = "subset     queries  R@";
  for (std::size_t i = 0; i < report.ns.size(); ++i)
    header += (i ? " / R@" : "") + std::to_string(report.ns[i]);
  std::string out = header + "\n";
  for (auto tag : {geo::DomainTag::Day, geo::DomainTag::Twilight, geo::DomainTag::Night}) {
    const auto it = report.subsets.find(tag);
    if (it == report.subsets.end()) continue;
    const auto& s = it->second;
    std::vector<std::optional<double>> vals;
    for (auto n : report.ns) {
      if (s.n_queries == 0 || !s.recall_at.contains(n))
        vals.emplace_back();
      else
        vals.emplace_back(s.recall_at.at(n));
    }
    char prefix[48];
    std::snprintf(prefix, sizeof prefix, "%-10s %7zu  ", std::string(geo::to_string(tag)).c_str(),
                  s.n_queries);
    out += prefix + format_recalls(vals) + "\n";
  }
  return out;
}

}  // namespace nightvpr::eval
