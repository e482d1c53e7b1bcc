#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "drivestyle/dataset.hpp"
#include "drivestyle/sim.hpp"

namespace drivestyle {

struct Histogram {
  std::vector<double> edges;   // strictly increasing, bins + 1 entries
  std::vector<double> masses;  // sums to 1
  std::size_t sample_count = 0;
};

/// `bins` equal-width bins over [low, high].
std::vector<double> uniform_edges(double low, double high, int bins);

/// Normalized histogram; samples outside the edges fall into the end bins.
/// Throws DataError for no samples and UsageError for invalid edges.
Histogram build_histogram(std::span<const double> samples, std::span<const double> edges);

/// Jensen-Shannon distance with base-2 logarithms, in [0, 1]. Throws
/// UsageError when the edges differ.
double jsd(const Histogram& p, const Histogram& q);
/// Hellinger distance, in [0, 1].
double hellinger(const Histogram& p, const Histogram& q);

struct MacroRates {
  double goal = 0.0;
  double off_road = 0.0;
  double collision = 0.0;
  double censored = 0.0;
};

/// Event counts over `total_agents`; agents without an event are censored.
/// Throws UsageError when total_agents < 1 or events outnumber agents.
MacroRates macroscopic_rates(std::span<const TerminationEvent> events, int total_agents);

enum class Metric : int { kSpeed = 0, kDistance = 1, kThw = 2, kIttc = 3 };
inline constexpr int kMetricCount = 4;
inline constexpr std::array<Metric, kMetricCount> kAllMetrics{Metric::kSpeed, Metric::kDistance, Metric::kThw,
                                                             Metric::kIttc};
std::string_view metric_name(Metric metric);

struct MetricSamples {
  std::array<std::vector<double>, kMetricCount> values;
  const std::vector<double>& operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
  std::vector<double>& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
};

/// Per step and agent: speed; minimum center distance to any other alive
/// agent; THW and iTTC against the same-lane lead when there is one.
/// Logs are processed in parallel and concatenated in input order.
MetricSamples scenario_metric_samples(std::span<const Episode> logs);
MetricSamples scenario_metric_samples_serial(std::span<const Episode> logs);

struct MetricEdges {
  std::array<std::vector<double>, kMetricCount> edges;
  /// speed 0-50 m/s, distance 0-200 m, THW 0-10 s, iTTC 0-2 1/s; 50 bins each.
  static MetricEdges defaults();
  nlohmann::json to_json() const;
  static MetricEdges from_json(const nlohmann::json& doc);
};

struct MetricComparison {
  bool available = false;  // both sides have samples
  Histogram generated;
  Histogram reference;
  double jsd = 0.0;
  double hellinger = 0.0;
};

struct MetricsReport {
  std::array<MetricComparison, kMetricCount> metrics;
  MacroRates rates;
  bool rates_available = true;  // false when the generated logs carry no termination events
  int generated_agents = 0;
  int reference_agents = 0;

  nlohmann::json to_json() const;
};

/// Distribution distances between generated logs and reference episodes, and
/// macroscopic rates of the generated side. Throws DataError when either side
/// is empty or the road layouts differ.
MetricsReport compare_reports(std::span<const Episode> generated, std::span<const TerminationEvent> events,
                              int generated_agents, std::span<const Episode> reference, const MetricEdges& edges);

/// edge_low,edge_high,mass_generated,mass_reference
void write_histogram_csv(const MetricComparison& comparison, const std::filesystem::path& path);

struct RatesRow {
  std::string method;
  MacroRates rates;
};
/// Plain-text table of rates in percent with two decimals.
std::string format_rates_table(std::span<const RatesRow> rows);

}  // namespace drivestyle
