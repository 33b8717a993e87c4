#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "naturalmos/errors.hpp"
#include "naturalmos/manifest.hpp"

namespace naturalmos {

/// Sample Pearson correlation. Requires at least 3 points and nonzero
/// variance on both sides; a constant sequence is a loud error rather than a
/// silent NaN.
inline double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("pearson_r: length mismatch " + std::to_string(x.size()) +
                                " vs " + std::to_string(y.size()));
  if (x.size() < 3)
    throw std::invalid_argument("pearson_r: need at least 3 points, got " +
                                std::to_string(x.size()));
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw NumericError("pearson_r: constant sequence has no defined correlation");
  return sxy / std::sqrt(sxx * syy);
}

/// Root-mean-square error, no mapping applied.
inline double rmse(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size())
    throw std::invalid_argument("rmse: length mismatch " + std::to_string(pred.size()) +
                                " vs " + std::to_string(target.size()));
  if (pred.empty()) throw std::invalid_argument("rmse: empty sequences");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

struct SystemAggregate {
  std::string dataset_id;
  std::string system_id;
  double mean_pred = 0.0;
  double mean_mos = 0.0;
  std::size_t n_files = 0;

  bool operator==(const SystemAggregate&) const = default;
};

/// Groups by (dataset_id, system_id) and pairs the mean prediction with the
/// mean subjective score per system. Deterministic (key-sorted) order.
inline std::vector<SystemAggregate> aggregate_per_system(
    const std::map<std::string, double>& predictions, const DatasetManifest& manifest) {
  struct Acc {
    double pred = 0.0, mos = 0.0;
    std::size_t n = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> groups;
  for (const auto& e : manifest.entries) {
    auto it = predictions.find(e.path);
    if (it == predictions.end())
      throw DataError("aggregate_per_system: no prediction for '" + e.path + "'");
    auto& acc = groups[{e.dataset_id, e.system_id}];
    acc.pred += it->second;
    acc.mos += e.mos;
    acc.n += 1;
  }
  std::vector<SystemAggregate> out;
  out.reserve(groups.size());
  for (const auto& [key, acc] : groups) {
    const double n = static_cast<double>(acc.n);
    out.push_back({key.first, key.second, acc.pred / n, acc.mos / n, acc.n});
  }
  return out;
}

struct MetricPair {
  double r = 0.0;
  double rmse = 0.0;

  bool operator==(const MetricPair&) const = default;
};

struct DatasetResult {
  std::string dataset_id;
  std::string group;
  std::size_t n_files = 0;
  std::size_t n_systems = 0;
  std::optional<MetricPair> per_stimuli;      // absent when labels are per-system only
  std::optional<double> per_system_r;         // absent when n_systems < 3
  double per_system_rmse = 0.0;

  bool operator==(const DatasetResult&) const = default;
};

struct SummaryRow {
  std::string label;  // "Average" or "Worst Case"
  std::string group;
  std::size_t n_files = 0;
  std::size_t n_systems = 0;
  std::optional<double> per_stimuli_r;
  std::optional<double> per_stimuli_rmse;
  std::optional<double> per_system_r;
  std::optional<double> per_system_rmse;

  bool operator==(const SummaryRow&) const = default;
};

struct EvaluationReport {
  std::vector<DatasetResult> datasets;
  std::vector<SummaryRow> summaries;

  bool operator==(const EvaluationReport&) const = default;
};

/// Any source of per-file predictions (a trained model, a cached table, or a
/// synthetic oracle in tests).
using Predictor = std::function<double(const ManifestEntry&)>;

struct EvalDataset {
  DatasetManifest manifest;
  std::string group;
};

/// Predicts every file of every manifest and assembles the report: per-stimuli
/// r/RMSE where per-file labels exist (absent otherwise), per-system r/RMSE
/// always (r suppressed below 3 systems), plus Average and Worst Case rows
/// per group (worst case: minimum r, maximum RMSE).
inline EvaluationReport evaluate_datasets(const Predictor& predict,
                                          const std::vector<EvalDataset>& inputs) {
  EvaluationReport report;

  for (const auto& input : inputs) {
    const auto& m = input.manifest;
    if (m.entries.empty()) throw DataError("evaluate_datasets: empty manifest");

    std::map<std::string, double> preds;
    std::vector<double> file_pred, file_mos;
    bool all_per_stimulus = true;
    for (const auto& e : m.entries) {
      const double p = predict(e);
      preds[e.path] = p;
      file_pred.push_back(p);
      file_mos.push_back(e.mos);
      if (e.label_level != LabelLevel::per_stimulus) all_per_stimulus = false;
    }

    DatasetResult res;
    res.dataset_id = m.entries.front().dataset_id;
    res.group = input.group;
    res.n_files = m.entries.size();

    if (all_per_stimulus)
      res.per_stimuli = MetricPair{pearson_r(file_pred, file_mos), rmse(file_pred, file_mos)};

    const auto systems = aggregate_per_system(preds, m);
    res.n_systems = systems.size();
    std::vector<double> sys_pred, sys_mos;
    for (const auto& s : systems) {
      sys_pred.push_back(s.mean_pred);
      sys_mos.push_back(s.mean_mos);
    }
    res.per_system_rmse = rmse(sys_pred, sys_mos);
    if (systems.size() >= 3) res.per_system_r = pearson_r(sys_pred, sys_mos);

    report.datasets.push_back(std::move(res));
  }

  // Group order: first appearance.
  std::vector<std::string> groups;
  for (const auto& d : report.datasets)
    if (std::find(groups.begin(), groups.end(), d.group) == groups.end())
      groups.push_back(d.group);

  for (const auto& g : groups) {
    SummaryRow avg;
    avg.label = "Average";
    avg.group = g;
    SummaryRow worst;
    worst.label = "Worst Case";
    worst.group = g;
    std::vector<double> st_r, st_rmse, sy_r, sy_rmse;
    for (const auto& d : report.datasets) {
      if (d.group != g) continue;
      avg.n_files += d.n_files;
      avg.n_systems += d.n_systems;
      if (d.per_stimuli) {
        st_r.push_back(d.per_stimuli->r);
        st_rmse.push_back(d.per_stimuli->rmse);
      }
      if (d.per_system_r) sy_r.push_back(*d.per_system_r);
      sy_rmse.push_back(d.per_system_rmse);
    }
    worst.n_files = avg.n_files;
    worst.n_systems = avg.n_systems;

    auto mean = [](const std::vector<double>& v) {
      double acc = 0.0;
      for (double x : v) acc += x;
      return acc / static_cast<double>(v.size());
    };
    if (!st_r.empty()) {
      avg.per_stimuli_r = mean(st_r);
      avg.per_stimuli_rmse = mean(st_rmse);
      worst.per_stimuli_r = *std::min_element(st_r.begin(), st_r.end());
      worst.per_stimuli_rmse = *std::max_element(st_rmse.begin(), st_rmse.end());
    }
    if (!sy_r.empty()) {
      avg.per_system_r = mean(sy_r);
      worst.per_system_r = *std::min_element(sy_r.begin(), sy_r.end());
    }
    if (!sy_rmse.empty()) {
      avg.per_system_rmse = mean(sy_rmse);
      worst.per_system_rmse = *std::max_element(sy_rmse.begin(), sy_rmse.end());
    }
    report.summaries.push_back(std::move(avg));
    report.summaries.push_back(std::move(worst));
  }
  return report;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline std::string opt_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string{};
}

inline std::optional<double> parse_opt(const std::string& s, const std::string& context) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw DataError("report: bad numeric field '" + s + "' in " + context);
  return v;
}

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline constexpr const char* kReportCsvHeader =
    "row,label,group,n_files,n_systems,per_stimuli_r,per_stimuli_rmse,per_system_r,"
    "per_system_rmse";

/// CSV serialization: one row per dataset plus the summary rows. Numeric
/// fields use shortest round-trip formatting so parse(emit(r)) == r exactly.
inline std::string emit_report_csv(const EvaluationReport& report) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto& d : report.datasets) {
    out += "dataset," + d.dataset_id + "," + d.group + "," + std::to_string(d.n_files) + "," +
           std::to_string(d.n_systems) + ",";
    out += d.per_stimuli ? detail::format_double(d.per_stimuli->r) : std::string{};
    out += ",";
    out += d.per_stimuli ? detail::format_double(d.per_stimuli->rmse) : std::string{};
    out += ",";
    out += detail::opt_field(d.per_system_r);
    out += "," + detail::format_double(d.per_system_rmse) + "\n";
  }
  for (const auto& s : report.summaries) {
    out += "summary," + s.label + "," + s.group + "," + std::to_string(s.n_files) + "," +
           std::to_string(s.n_systems) + "," + detail::opt_field(s.per_stimuli_r) + "," +
           detail::opt_field(s.per_stimuli_rmse) + "," + detail::opt_field(s.per_system_r) +
           "," + detail::opt_field(s.per_system_rmse) + "\n";
  }
  return out;
}

inline EvaluationReport parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kReportCsvHeader)
    throw DataError("report: missing or wrong CSV header");
  EvaluationReport report;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty() || line.front() == '#') continue;
    const auto f = detail::split_csv_row(line);
    if (f.size() != 9)
      throw DataError("report row " + std::to_string(row_no) + ": expected 9 fields, got " +
                      std::to_string(f.size()));
    const std::string ctx = "row " + std::to_string(row_no);
    if (f[0] == "dataset") {
      DatasetResult d;
      d.dataset_id = f[1];
      d.group = f[2];
      d.n_files = std::stoull(f[3]);
      d.n_systems = std::stoull(f[4]);
      const auto r = detail::parse_opt(f[5], ctx);
      const auto rm = detail::parse_opt(f[6], ctx);
      if (r.has_value() != rm.has_value())
        throw DataError("report " + ctx + ": per-stimuli fields must be both present or absent");
      if (r) d.per_stimuli = MetricPair{*r, *rm};
      d.per_system_r = detail::parse_opt(f[7], ctx);
      const auto srm = detail::parse_opt(f[8], ctx);
      if (!srm) throw DataError("report " + ctx + ": per_system_rmse is required");
      d.per_system_rmse = *srm;
      report.datasets.push_back(std::move(d));
    } else if (f[0] == "summary") {
      SummaryRow s;
      s.label = f[1];
      s.group = f[2];
      s.n_files = std::stoull(f[3]);
      s.n_systems = std::stoull(f[4]);
      s.per_stimuli_r = detail::parse_opt(f[5], ctx);
      s.per_stimuli_rmse = detail::parse_opt(f[6], ctx);
      s.per_system_r = detail::parse_opt(f[7], ctx);
      s.per_system_rmse = detail::parse_opt(f[8], ctx);
      report.summaries.push_back(std::move(s));
    } else {
      throw DataError("report " + ctx + ": unknown row type '" + f[0] + "'");
    }
  }
  return report;
}

/// Pretty text table in Table 3 column order: dataset, files, systems,
/// per-stimuli r / RMSE, per-system r / RMSE. Absent metrics print as N/A.
inline std::string format_report_text(const EvaluationReport& report) {
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string("N/A");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return std::string(buf);
  };

  std::vector<std::array<std::string, 7>> rows;
  rows.push_back({"Dataset", "Files", "Systems", "r (stim)", "RMSE (stim)", "r (sys)",
                  "RMSE (sys)"});
  std::string last_group;
  for (const auto& d : report.datasets) {
    rows.push_back({d.dataset_id + " [" + d.group + "]", std::to_string(d.n_files),
                    std::to_string(d.n_systems),
                    num(d.per_stimuli ? std::optional<double>(d.per_stimuli->r) : std::nullopt),
                    num(d.per_stimuli ? std::optional<double>(d.per_stimuli->rmse)
                                      : std::nullopt),
                    num(d.per_system_r), num(std::optional<double>(d.per_system_rmse))});
  }
  for (const auto& s : report.summaries) {
    rows.push_back({s.label + " [" + s.group + "]", std::to_string(s.n_files),
                    std::to_string(s.n_systems), num(s.per_stimuli_r), num(s.per_stimuli_rmse),
                    num(s.per_system_r), num(s.per_system_rmse)});
  }

  std::array<std::size_t, 7> width{};
  for (const auto& r : rows)
    for (std::size_t c = 0; c < 7; ++c) width[c] = std::max(width[c], r[c].size());

  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < 7; ++c) {
      out += rows[i][c];
      if (c + 1 < 7) out += std::string(width[c] - rows[i][c].size() + 2, ' ');
    }
    out += "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < 7; ++c) total += width[c] + (c + 1 < 7 ? 2 : 0);
      out += std::string(total, '-') + "\n";
    }
  }
  return out;
}

}  // namespace naturalmos
