#include "drivestyle/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "drivestyle/error.hpp"
#include "drivestyle/styles.hpp"

namespace drivestyle {

std::vector<double> uniform_edges(double low, double high, int bins) {
  if (bins < 1 || !(high > low)) throw UsageError("uniform_edges needs bins >= 1 and high > low");
  std::vector<double> e(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) e[static_cast<std::size_t>(i)] = low + (high - low) * i / bins;
  return e;
}

Histogram build_histogram(std::span<const double> samples, std::span<const double> edges) {
  if (edges.size() < 2) throw UsageError("a histogram needs at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw UsageError("histogram edges must be strictly increasing");
  }
  if (samples.empty()) throw DataError("cannot build a histogram from zero samples");
  Histogram h;
  h.edges.assign(edges.begin(), edges.end());
  const std::size_t bins = edges.size() - 1;
  std::vector<std::size_t> counts(bins, 0);
  for (double x : samples) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), x);
    std::size_t bin = it == edges.begin() ? 0 : static_cast<std::size_t>(it - edges.begin()) - 1;
    bin = std::min(bin, bins - 1);
    ++counts[bin];
  }
  h.sample_count = samples.size();
  h.masses.resize(bins);
  const auto n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < bins; ++i) h.masses[i] = static_cast<double>(counts[i]) / n;
  return h;
}

namespace {

void check_same_edges(const Histogram& p, const Histogram& q) {
  if (p.edges != q.edges || p.masses.size() != q.masses.size()) {
    throw UsageError("histograms must share bin edges");
  }
}

double kl_to_mixture(const std::vector<double>& p, const std::vector<double>& m) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log2(p[i] / m[i]);
  }
  return kl;
}

}  // namespace

double jsd(const Histogram& p, const Histogram& q) {
  check_same_edges(p, q);
  std::vector<double> m(p.masses.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (p.masses[i] + q.masses[i]);
  const double div = 0.5 * kl_to_mixture(p.masses, m) + 0.5 * kl_to_mixture(q.masses, m);
  return std::sqrt(std::clamp(div, 0.0, 1.0));
}

double hellinger(const Histogram& p, const Histogram& q) {
  check_same_edges(p, q);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.masses.size(); ++i) {
    const double d = std::sqrt(p.masses[i]) - std::sqrt(q.masses[i]);
    acc += d * d;
  }
  return std::min(1.0, std::sqrt(acc) / std::sqrt(2.0));
}

MacroRates macroscopic_rates(std::span<const TerminationEvent> events, int total_agents) {
  if (total_agents < 1) throw UsageError("macroscopic rates need at least one agent");
  if (events.size() > static_cast<std::size_t>(total_agents)) {
    throw UsageError("more termination events than agents");
  }
  std::array<int, 3> counts{};
  for (const auto& e : events) ++counts[static_cast<std::size_t>(e.kind)];
  const auto n = static_cast<double>(total_agents);
  MacroRates r;
  r.goal = counts[static_cast<std::size_t>(EventKind::kGoalReached)] / n;
  r.off_road = counts[static_cast<std::size_t>(EventKind::kOffRoad)] / n;
  r.collision = counts[static_cast<std::size_t>(EventKind::kCollision)] / n;
  r.censored = static_cast<double>(total_agents - static_cast<int>(events.size())) / n;
  return r;
}

std::string_view metric_name(Metric metric) {
  switch (metric) {
    case Metric::kSpeed: return "speed";
    case Metric::kDistance: return "distance";
    case Metric::kThw: return "thw";
    case Metric::kIttc: return "ittc";
  }
  return "unknown";
}

namespace {

void append_log_samples(const Episode& log, MetricSamples& out) {
  for (int step = 0; step < log.step_count(); ++step) {
    const Scene scene = scene_at(log, step);
    const auto& s = scene.states;
    for (std::size_t i = 0; i < s.size(); ++i) {
      out[Metric::kSpeed].push_back(s[i].speed);
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (j != i) nearest = std::min(nearest, std::hypot(s[j].x - s[i].x, s[j].y - s[i].y));
      }
      if (std::isfinite(nearest)) out[Metric::kDistance].push_back(nearest);
      const auto lead = lead_gap(s, i, log.layout);
      if (lead && lead->distance > 0.0) {
        const RiskMetrics m = compute_risk_metrics(lead, s[i].speed);
        out[Metric::kThw].push_back(m.thw);
        out[Metric::kIttc].push_back(m.ittc);
      }
    }
  }
}

MetricSamples concat(std::vector<MetricSamples>& parts) {
  MetricSamples all;
  for (auto& p : parts) {
    for (std::size_t m = 0; m < all.values.size(); ++m) {
      all.values[m].insert(all.values[m].end(), p.values[m].begin(), p.values[m].end());
    }
  }
  return all;
}

}  // namespace

MetricSamples scenario_metric_samples(std::span<const Episode> logs) {
  std::vector<MetricSamples> parts(logs.size());
  const auto n = static_cast<std::ptrdiff_t>(logs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    append_log_samples(logs[static_cast<std::size_t>(i)], parts[static_cast<std::size_t>(i)]);
  }
  return concat(parts);
}

MetricSamples scenario_metric_samples_serial(std::span<const Episode> logs) {
  std::vector<MetricSamples> parts(logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) append_log_samples(logs[i], parts[i]);
  return concat(parts);
}

MetricEdges MetricEdges::defaults() {
  MetricEdges e;
  e.edges[0] = uniform_edges(0.0, 50.0, 50);
  e.edges[1] = uniform_edges(0.0, 200.0, 50);
  e.edges[2] = uniform_edges(0.0, 10.0, 50);
  e.edges[3] = uniform_edges(0.0, 2.0, 50);
  return e;
}

nlohmann::json MetricEdges::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (Metric m : kAllMetrics) doc[std::string(metric_name(m))] = edges[static_cast<std::size_t>(m)];
  return doc;
}

MetricEdges MetricEdges::from_json(const nlohmann::json& doc) {
  MetricEdges e = defaults();
  if (!doc.is_object()) throw ParseError("evaluation.edges", "expected an object");
  for (Metric m : kAllMetrics) {
    const std::string name(metric_name(m));
    if (!doc.contains(name)) continue;
    const auto& v = doc.at(name);
    const std::string field = "evaluation.edges." + name;
    if (v.is_object()) {
      if (!v.contains("low") || !v.contains("high") || !v.contains("bins")) {
        throw ParseError(field, "expected {low, high, bins} or an edge list");
      }
      e.edges[static_cast<std::size_t>(m)] =
          uniform_edges(v.at("low").get<double>(), v.at("high").get<double>(), v.at("bins").get<int>());
    } else if (v.is_array()) {
      e.edges[static_cast<std::size_t>(m)] = v.get<std::vector<double>>();
    } else {
      throw ParseError(field, "expected {low, high, bins} or an edge list");
    }
  }
  return e;
}

namespace {

nlohmann::json histogram_json(const Histogram& h) {
  return {{"edges", h.edges}, {"masses", h.masses}, {"sample_count", h.sample_count}};
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json doc;
  nlohmann::json ms = nlohmann::json::object();
  for (Metric m : kAllMetrics) {
    const auto& c = metrics[static_cast<std::size_t>(m)];
    nlohmann::json entry;
    entry["available"] = c.available;
    if (c.available) {
      entry["jsd"] = c.jsd;
      entry["hellinger"] = c.hellinger;
      entry["generated"] = histogram_json(c.generated);
      entry["reference"] = histogram_json(c.reference);
    } else {
      entry["jsd"] = nullptr;
      entry["hellinger"] = nullptr;
    }
    ms[std::string(metric_name(m))] = entry;
  }
  doc["metrics"] = ms;
  if (rates_available) {
    doc["rates"] = {{"goal_reaching", rates.goal},
                    {"off_road", rates.off_road},
                    {"collision", rates.collision},
                    {"censored", rates.censored}};
  } else {
    doc["rates"] = nullptr;
  }
  doc["generated_agents"] = generated_agents;
  doc["reference_agents"] = reference_agents;
  return doc;
}

MetricsReport compare_reports(std::span<const Episode> generated, std::span<const TerminationEvent> events,
                              int generated_agents, std::span<const Episode> reference, const MetricEdges& edges) {
  if (generated.empty()) throw DataError("no generated logs to evaluate");
  if (reference.empty()) throw DataError("no reference episodes to evaluate against");
  const RoadLayout& layout = reference.front().layout;
  for (const auto& g : generated) {
    if (!(g.layout == layout)) throw DataError("generated log '" + g.id + "' has a different road layout");
  }
  for (const auto& r : reference) {
    if (!(r.layout == layout)) throw DataError("reference episode '" + r.id + "' has a different road layout");
  }
  MetricsReport report;
  const MetricSamples gen = scenario_metric_samples(generated);
  const MetricSamples ref = scenario_metric_samples(reference);
  for (Metric m : kAllMetrics) {
    auto& c = report.metrics[static_cast<std::size_t>(m)];
    if (gen[m].empty() || ref[m].empty()) continue;
    const auto& e = edges.edges[static_cast<std::size_t>(m)];
    c.available = true;
    c.generated = build_histogram(gen[m], e);
    c.reference = build_histogram(ref[m], e);
    c.jsd = jsd(c.generated, c.reference);
    c.hellinger = hellinger(c.generated, c.reference);
  }
  report.generated_agents = generated_agents;
  for (const auto& r : reference) report.reference_agents += static_cast<int>(r.tracks.size());
  report.rates = macroscopic_rates(events, generated_agents);
  return report;
}

void write_histogram_csv(const MetricComparison& c, const std::filesystem::path& path) {
  if (!c.available) throw UsageError("no histogram to export for an unavailable metric");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.precision(17);
  out << "edge_low,edge_high,mass_generated,mass_reference\n";
  for (std::size_t i = 0; i < c.generated.masses.size(); ++i) {
    out << c.generated.edges[i] << ',' << c.generated.edges[i + 1] << ',' << c.generated.masses[i] << ','
        << c.reference.masses[i] << '\n';
  }
}

std::string format_rates_table(std::span<const RatesRow> rows) {
  std::size_t width = std::string_view("Method").size();
  for (const auto& r : rows) width = std::max(width, r.method.size());
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-*s  %12s  %12s  %12s\n", static_cast<int>(width), "Method", "Goal (%)",
                "Off-road (%)", "Collision (%)");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %12.2f  %12.2f  %12.2f\n", static_cast<int>(width), r.method.c_str(),
                  100.0 * r.rates.goal, 100.0 * r.rates.off_road, 100.0 * r.rates.collision);
    os << buf;
  }
  return os.str();
}

}  // namespace drivestyle
