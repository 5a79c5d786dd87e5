#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nightvpr/geo.hpp"
#include "nightvpr/retrieval.hpp"
#include "nightvpr/store.hpp"

namespace nightvpr::eval {

inline constexpr double kDefaultThresholdM = 25.0;

// Indices of database records within threshold_m of the query (closed
// boundary). Throws on coordinate mode mismatch.
std::vector<std::size_t> positives(const store::ImageRecord& query, const store::Manifest& db,
                                   double threshold_m = kDefaultThresholdM);

struct SubsetRecall {
  std::size_t n_queries = 0;   // queries counted in the denominator
  std::size_t n_excluded = 0;  // queries without any positive
  std::map<std::size_t, double> recall_at;
};

// Fraction of queries whose top-N hits intersect their positive set, for
// every N. Queries with no positives are excluded and counted.
SubsetRecall recall_at_n(std::span<const retrieval::RankedList> ranked,
                         std::span<const std::vector<std::size_t>> positives,
                         std::span<const std::size_t> ns);

struct RecallReport {
  std::map<geo::DomainTag, SubsetRecall> subsets;
  double threshold_m = kDefaultThresholdM;
  std::vector<std::size_t> ns;
  bool od_mode = true;

  // Recall within [0, 1] and non-decreasing in N for every subset.
  bool is_monotone() const;
  nlohmann::ordered_json to_json() const;
};

// Partition of query ids by domain (explicit tag or solar classification).
std::map<geo::DomainTag, std::vector<std::string>> segment_queries(
    const store::Manifest& queries, const geo::SolarConfig& solar);

// "53.0 / 71.2 / 76.4"; missing values render as an em dash.
std::string format_recalls(std::span<const std::optional<double>> recalls);

// One line per subset: name, query count and the recall values.
std::string render_report(const RecallReport& report);

}  // namespace nightvpr::eval
