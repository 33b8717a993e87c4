#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "naturalmos/errors.hpp"
#include "naturalmos/metrics.hpp"

using naturalmos::DatasetManifest;
using naturalmos::EvalDataset;
using naturalmos::LabelLevel;
using naturalmos::ManifestEntry;

namespace {

ManifestEntry entry(const std::string& path, const std::string& dataset,
                    const std::string& system, double mos,
                    LabelLevel level = LabelLevel::per_stimulus) {
  ManifestEntry e;
  e.path = path;
  e.dataset_id = dataset;
  e.system_id = system;
  e.mos = mos;
  e.num_votes = 5;
  e.label_level = level;
  return e;
}

}  // namespace

TEST_CASE("pearson_r matches hand-computed values exactly", "[metrics]") {
  SECTION("perfect positive and negative correlation") {
    REQUIRE(naturalmos::pearson_r({1, 2, 3}, {3, 5, 7}) == 1.0);
    REQUIRE(naturalmos::pearson_r({1, 2, 3}, {-1, -2, -3}) == -1.0);
  }

  SECTION("one swapped pair gives exactly 0.8") {
    REQUIRE(naturalmos::pearson_r({1, 2, 3, 4}, {1, 3, 2, 4}) == 0.8);
  }

  SECTION("orthogonal patterns give exactly 0") {
    REQUIRE(naturalmos::pearson_r({1, 2, 1, 2}, {1, 1, 2, 2}) == 0.0);
  }

  SECTION("invariant under affine maps of either argument") {
    const std::vector<double> x = {1.2, -0.4, 3.7, 2.2, 0.9};
    const std::vector<double> y = {0.3, 1.8, -2.5, 0.0, 1.1};
    std::vector<double> xs(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xs[i] = 2.5 * x[i] - 3.0;
    REQUIRE(naturalmos::pearson_r(xs, y) ==
            Catch::Approx(naturalmos::pearson_r(x, y)).margin(1e-12));
  }

  SECTION("agrees with the independent two-pass oracle") {
    std::vector<double> x, y;
    for (int i = 0; i < 50; ++i) {
      x.push_back(std::sin(0.7 * i) + 0.01 * i);
      y.push_back(std::cos(0.3 * i) - 0.02 * i);
    }
    REQUIRE(naturalmos::pearson_r(x, y) ==
            Catch::Approx(testhelpers::pearson_direct(x, y)).margin(1e-12));
  }

  SECTION("degenerate inputs are loud errors") {
    REQUIRE_THROWS_AS(naturalmos::pearson_r({1, 2, 3}, {1, 2}), std::invalid_argument);
    REQUIRE_THROWS_AS(naturalmos::pearson_r({1, 2}, {3, 4}), std::invalid_argument);
    REQUIRE_THROWS_AS(naturalmos::pearson_r({2, 2, 2}, {1, 2, 3}), naturalmos::NumericError);
    REQUIRE_THROWS_AS(naturalmos::pearson_r({1, 2, 3}, {7, 7, 7}), naturalmos::NumericError);
  }
}

TEST_CASE("rmse matches hand-computed values", "[metrics]") {
  REQUIRE(naturalmos::rmse({1, 2, 3}, {1, 2, 3}) == 0.0);
  REQUIRE(naturalmos::rmse({1, 2}, {0, 0}) == std::sqrt(2.5));
  REQUIRE(naturalmos::rmse({4.0}, {1.0}) == 3.0);
  REQUIRE_THROWS_AS(naturalmos::rmse({1, 2}, {1}), std::invalid_argument);
  REQUIRE_THROWS_AS(naturalmos::rmse({}, {}), std::invalid_argument);
}

TEST_CASE("aggregate_per_system groups by dataset and system", "[metrics]") {
  DatasetManifest m;
  m.entries = {
      entry("f1.wav", "a", "s1", 2.0),
      entry("f2.wav", "a", "s1", 4.0),
      entry("f3.wav", "a", "s2", 3.0),
      entry("f4.wav", "b", "s1", 5.0),
  };
  const std::map<std::string, double> preds = {
      {"f1.wav", 3.0}, {"f2.wav", 5.0}, {"f3.wav", 1.0}, {"f4.wav", 2.0}};

  const auto groups = naturalmos::aggregate_per_system(preds, m);
  REQUIRE(groups.size() == 3);
  REQUIRE(groups[0] == naturalmos::SystemAggregate{"a", "s1", 4.0, 3.0, 2});
  REQUIRE(groups[1] == naturalmos::SystemAggregate{"a", "s2", 1.0, 3.0, 1});
  REQUIRE(groups[2] == naturalmos::SystemAggregate{"b", "s1", 2.0, 5.0, 1});

  SECTION("entry order does not matter") {
    std::reverse(m.entries.begin(), m.entries.end());
    REQUIRE(naturalmos::aggregate_per_system(preds, m) == groups);
  }

  SECTION("duplicating every entry changes counts but not means") {
    auto doubled = m;
    doubled.entries.insert(doubled.entries.end(), m.entries.begin(), m.entries.end());
    const auto twice = naturalmos::aggregate_per_system(preds, doubled);
    REQUIRE(twice.size() == groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
      REQUIRE(twice[i].mean_pred == groups[i].mean_pred);
      REQUIRE(twice[i].mean_mos == groups[i].mean_mos);
      REQUIRE(twice[i].n_files == 2 * groups[i].n_files);
    }
  }

  SECTION("a file without a prediction is an error") {
    auto missing = preds;
    missing.erase("f3.wav");
    REQUIRE_THROWS_AS(naturalmos::aggregate_per_system(missing, m), naturalmos::DataError);
  }
}

TEST_CASE("evaluate_datasets assembles per-dataset rows and group summaries", "[metrics]") {
  // Dataset A: four systems, one file each, predictions correlate at exactly
  // 0.8 with the labels. Dataset B: perfect predictions. Dataset C sits in a
  // second group with per-system labels and only two systems.
  DatasetManifest ma;
  ma.entries = {entry("a1.wav", "dsA", "s1", 1.0), entry("a2.wav", "dsA", "s2", 3.0),
                entry("a3.wav", "dsA", "s3", 2.0), entry("a4.wav", "dsA", "s4", 4.0)};
  DatasetManifest mb;
  mb.entries = {entry("b1.wav", "dsB", "s1", 1.5), entry("b2.wav", "dsB", "s2", 3.0),
                entry("b3.wav", "dsB", "s3", 4.5)};
  DatasetManifest mc;
  mc.entries = {entry("c1.wav", "dsC", "s1", 2.0, LabelLevel::per_system),
                entry("c2.wav", "dsC", "s1", 2.0, LabelLevel::per_system),
                entry("c3.wav", "dsC", "s2", 4.0, LabelLevel::per_system)};

  const std::map<std::string, double> table = {
      {"a1.wav", 1.0}, {"a2.wav", 2.0}, {"a3.wav", 3.0}, {"a4.wav", 4.0},
      {"b1.wav", 1.5}, {"b2.wav", 3.0}, {"b3.wav", 4.5},
      {"c1.wav", 2.5}, {"c2.wav", 1.5}, {"c3.wav", 4.0}};
  const auto predict = [&table](const ManifestEntry& e) { return table.at(e.path); };

  const auto report = naturalmos::evaluate_datasets(
      predict, {{ma, "synthetic"}, {mb, "synthetic"}, {mc, "listening"}});

  REQUIRE(report.datasets.size() == 3);
  const auto& da = report.datasets[0];
  const auto& db = report.datasets[1];
  const auto& dc = report.datasets[2];

  SECTION("dataset rows carry exact metrics") {
    REQUIRE(da.dataset_id == "dsA");
    REQUIRE(da.group == "synthetic");
    REQUIRE(da.n_files == 4);
    REQUIRE(da.n_systems == 4);
    REQUIRE(da.per_stimuli.has_value());
    REQUIRE(da.per_stimuli->r == 0.8);
    REQUIRE(da.per_stimuli->rmse == std::sqrt(0.5));
    REQUIRE(da.per_system_r.has_value());
    REQUIRE(*da.per_system_r == 0.8);  // one file per system, same pairing
    REQUIRE(da.per_system_rmse == std::sqrt(0.5));

    REQUIRE(db.per_stimuli->r == 1.0);
    REQUIRE(db.per_stimuli->rmse == 0.0);
    REQUIRE(db.n_systems == 3);
    REQUIRE(*db.per_system_r == 1.0);
  }

  SECTION("per-system labels suppress per-stimuli metrics") {
    REQUIRE(dc.n_files == 3);
    REQUIRE(dc.n_systems == 2);
    REQUIRE_FALSE(dc.per_stimuli.has_value());
    REQUIRE_FALSE(dc.per_system_r.has_value());  // below 3 systems
    // System means: s1 predicts (2.5 + 1.5) / 2 = 2.0 on label 2.0, s2 is 4.0
    // on 4.0, so the per-system RMSE is exactly zero.
    REQUIRE(dc.per_system_rmse == 0.0);
  }

  SECTION("summaries average within groups and keep the worst case") {
    REQUIRE(report.summaries.size() == 4);
    const auto& avg_syn = report.summaries[0];
    const auto& worst_syn = report.summaries[1];
    const auto& avg_lis = report.summaries[2];
    const auto& worst_lis = report.summaries[3];

    REQUIRE(avg_syn.label == "Average");
    REQUIRE(avg_syn.group == "synthetic");
    REQUIRE(avg_syn.n_files == 7);
    REQUIRE(avg_syn.n_systems == 7);
    REQUIRE(*avg_syn.per_stimuli_r == Catch::Approx(0.9).margin(1e-15));
    REQUIRE(*avg_syn.per_system_r == Catch::Approx(0.9).margin(1e-15));
    REQUIRE(*avg_syn.per_stimuli_rmse == Catch::Approx(std::sqrt(0.5) / 2).margin(1e-15));

    REQUIRE(worst_syn.label == "Worst Case");
    REQUIRE(*worst_syn.per_stimuli_r == 0.8);
    REQUIRE(*worst_syn.per_system_r == 0.8);
    REQUIRE(*worst_syn.per_stimuli_rmse == std::sqrt(0.5));
    REQUIRE(*worst_syn.per_system_rmse == std::sqrt(0.5));

    REQUIRE(avg_lis.group == "listening");
    REQUIRE_FALSE(avg_lis.per_stimuli_r.has_value());
    REQUIRE_FALSE(avg_lis.per_system_r.has_value());
    REQUIRE(*avg_lis.per_system_rmse == 0.0);
    REQUIRE(worst_lis.label == "Worst Case");
    REQUIRE(*worst_lis.per_system_rmse == 0.0);
  }

  SECTION("an empty manifest is an error") {
    REQUIRE_THROWS_AS(naturalmos::evaluate_datasets(predict, {{DatasetManifest{}, "g"}}),
                      naturalmos::DataError);
  }
}

TEST_CASE("per-system aggregation suppresses per-file noise", "[metrics]") {
  // Five systems, forty files each; predictions are the labels plus a
  // zero-mean alternating perturbation, so system means recover the labels
  // almost exactly while per-file pairs stay noisy.
  DatasetManifest m;
  std::vector<double> pred_v, mos_v;
  std::map<std::string, double> table;
  for (int s = 0; s < 5; ++s) {
    const double sys_mos = 1.5 + 0.7 * s;
    for (int f = 0; f < 40; ++f) {
      const std::string path = "s" + std::to_string(s) + "_f" + std::to_string(f) + ".wav";
      m.entries.push_back(entry(path, "noisy", "sys" + std::to_string(s), sys_mos));
      const double p = sys_mos + (f % 2 == 0 ? 0.8 : -0.8);
      table[path] = p;
      pred_v.push_back(p);
      mos_v.push_back(sys_mos);
    }
  }
  const auto predict = [&table](const ManifestEntry& e) { return table.at(e.path); };
  const auto report = naturalmos::evaluate_datasets(predict, {{m, "g"}});
  const auto& d = report.datasets[0];

  REQUIRE(d.per_stimuli->r ==
          Catch::Approx(testhelpers::pearson_direct(pred_v, mos_v)).margin(1e-12));
  REQUIRE(d.per_stimuli->rmse ==
          Catch::Approx(testhelpers::rmse_direct(pred_v, mos_v)).margin(1e-12));
  REQUIRE(d.per_stimuli->rmse == Catch::Approx(0.8).margin(1e-9));

  REQUIRE(*d.per_system_r > d.per_stimuli->r + 0.01);
  REQUIRE(*d.per_system_r == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(d.per_system_rmse < d.per_stimuli->rmse / 100.0);

  // Cross-check the aggregation against a direct computation of the means.
  const auto systems = naturalmos::aggregate_per_system(table, m);
  std::vector<double> sys_pred, sys_mos;
  for (const auto& s : systems) {
    sys_pred.push_back(s.mean_pred);
    sys_mos.push_back(s.mean_mos);
    REQUIRE(s.n_files == 40);
  }
  REQUIRE(*d.per_system_r ==
          Catch::Approx(testhelpers::pearson_direct(sys_pred, sys_mos)).margin(1e-12));
  REQUIRE(d.per_system_rmse ==
          Catch::Approx(testhelpers::rmse_direct(sys_pred, sys_mos)).margin(1e-12));
}

TEST_CASE("report CSV round-trips exactly", "[metrics]") {
  DatasetManifest ma;
  ma.entries = {entry("a1.wav", "dsA", "s1", 1.0), entry("a2.wav", "dsA", "s2", 3.0),
                entry("a3.wav", "dsA", "s3", 2.0), entry("a4.wav", "dsA", "s4", 4.0)};
  DatasetManifest mc;
  mc.entries = {entry("c1.wav", "dsC", "s1", 2.0, LabelLevel::per_system),
                entry("c2.wav", "dsC", "s1", 2.0, LabelLevel::per_system),
                entry("c3.wav", "dsC", "s2", 4.0, LabelLevel::per_system)};
  const std::map<std::string, double> table = {{"a1.wav", 1.3}, {"a2.wav", 2.2},
                                               {"a3.wav", 3.1}, {"a4.wav", 3.9},
                                               {"c1.wav", 2.5}, {"c2.wav", 1.6},
                                               {"c3.wav", 4.2}};
  const auto predict = [&table](const ManifestEntry& e) { return table.at(e.path); };
  const auto report =
      naturalmos::evaluate_datasets(predict, {{ma, "synthetic"}, {mc, "listening"}});

  const std::string csv = naturalmos::emit_report_csv(report);

  SECTION("starts with the documented header") {
    REQUIRE(csv.rfind(std::string(naturalmos::kReportCsvHeader) + "\n", 0) == 0);
  }

  SECTION("parse(emit(r)) == r, absent fields included") {
    REQUIRE(naturalmos::parse_report_csv(csv) == report);
  }

  SECTION("comment footers and blank lines are skipped") {
    const std::string annotated = csv + "# config: lr=0.001 batch_size=16\n\n# end\n";
    REQUIRE(naturalmos::parse_report_csv(annotated) == report);
  }

  SECTION("malformed inputs are rejected") {
    REQUIRE_THROWS_AS(naturalmos::parse_report_csv("nope\n"), naturalmos::DataError);
    REQUIRE_THROWS_AS(
        naturalmos::parse_report_csv(std::string(naturalmos::kReportCsvHeader) +
                                     "\ndataset,d,g,1,1\n"),
        naturalmos::DataError);
    REQUIRE_THROWS_AS(
        naturalmos::parse_report_csv(std::string(naturalmos::kReportCsvHeader) +
                                     "\ndataset,d,g,1,1,abc,0.5,,0.5\n"),
        naturalmos::DataError);
    REQUIRE_THROWS_AS(
        naturalmos::parse_report_csv(std::string(naturalmos::kReportCsvHeader) +
                                     "\nmystery,d,g,1,1,,,,0.5\n"),
        naturalmos::DataError);
    // per-stimuli r and RMSE must be both present or both absent.
    REQUIRE_THROWS_AS(
        naturalmos::parse_report_csv(std::string(naturalmos::kReportCsvHeader) +
                                     "\ndataset,d,g,1,1,0.9,,,0.5\n"),
        naturalmos::DataError);
    // per_system_rmse is mandatory on dataset rows.
    REQUIRE_THROWS_AS(
        naturalmos::parse_report_csv(std::string(naturalmos::kReportCsvHeader) +
                                     "\ndataset,d,g,1,1,0.9,0.1,0.8,\n"),
        naturalmos::DataError);
  }

  SECTION("text table renders three decimals and N/A for absent metrics") {
    const std::string text = naturalmos::format_report_text(report);
    REQUIRE(text.find("dsA [synthetic]") != std::string::npos);
    REQUIRE(text.find("dsC [listening]") != std::string::npos);
    REQUIRE(text.find("Average [synthetic]") != std::string::npos);
    REQUIRE(text.find("Worst Case [listening]") != std::string::npos);
    REQUIRE(text.find("N/A") != std::string::npos);
    REQUIRE(text.find("RMSE (sys)") != std::string::npos);

    char expect[32];
    std::snprintf(expect, sizeof expect, "%.3f", report.datasets[0].per_stimuli->r);
    REQUIRE(text.find(expect) != std::string::npos);
  }
}
