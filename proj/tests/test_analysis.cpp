#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "steering_lab/analysis.hpp"
#include "test_support.hpp"

using namespace steering_lab;

namespace {

InequalityFamily experimental_family() { return InequalityFamily::make(0.983, 0.0656, 4, 0.217); }

ModelConfig experimental_config() {
  ModelConfig c;
  c.visibility = 0.97;
  return c;
}

CountsRecord parse(const std::string& text) {
  std::istringstream is(text);
  return parse_counts(is);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("steering_lab_" + name)).string();
}

const std::string kMinimal =
    "# phase N_pp N_pm N_mp N_mm\n"
    "0 10 30 40 20\n"
    "1.5707963267948966 5 5 5 5\n"
    "3.141592653589793 0 7 0 1\n"
    "4.71238898038469 1 0 0 0\n";

}  // namespace

TEST(Counts, MinimalRoundTrip) {
  const CountsRecord a = parse(kMinimal);
  ASSERT_EQ(a.rows.size(), 4u);
  const std::string path = temp_path("minimal.txt");
  write_counts(path, a);
  const CountsRecord b = load_counts(path);
  EXPECT_EQ(a, b);
  write_counts(path, b);
  EXPECT_EQ(load_counts(path), a);
  std::filesystem::remove(path);
}

TEST(Counts, ZeroTotalRowRejected) {
  try {
    parse("0 1 1 1 1\n1 1 1 1 1\n2 0 0 0 0\n3 1 1 1 1\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Counts, MalformedRowsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of("# c\n0 1 1 1 1\n1 1 -1 1 1\n"), 3u);
  EXPECT_EQ(line_of("0 1 1 1 1\n0 1 1 1 1\n"), 2u);
  EXPECT_EQ(line_of("0 1 1 1 1\n1 1 1 1\n"), 2u);
  EXPECT_EQ(line_of("0 1 1 1 1\nabc 1 1 1 1\n"), 2u);
  EXPECT_EQ(line_of("0 1 1 1 1\n1 1 1.5 1 1\n"), 2u);
  EXPECT_EQ(line_of("0 1 1 1 1\n1 1 1 1 1 9\n"), 2u);
  EXPECT_EQ(line_of("1 1 1 1 1\n0.5 1 1 1 1\n"), 2u);
  EXPECT_THROW(parse("0 1 1 1 1\n1 1 1 1 1\n"), ParseError);
  EXPECT_THROW(load_counts(temp_path("does_not_exist.txt")), ParseError);
}

TEST(Counts, SyntheticSweepPreservesPhases) {
  const auto sweep = phase_sweep(experimental_config(), uniform_phases(50));
  const CountsRecord rec = sample_counts(sweep, 1e5, 9);
  const std::string path = temp_path("sweep50.txt");
  write_counts(path, rec, config_header(experimental_config()));
  const CountsRecord back = load_counts(path);
  ASSERT_EQ(back.rows.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(back.rows[i].phase, sweep[i].phase, 1e-12);
  EXPECT_EQ(back, rec);
  std::filesystem::remove(path);
}

TEST(Probabilities, FrequencyEstimates) {
  const auto p = probabilities_from_counts(parse(kMinimal));
  EXPECT_DOUBLE_EQ(p[0].p[0], 0.1);
  EXPECT_DOUBLE_EQ(p[0].p[1], 0.3);
  EXPECT_DOUBLE_EQ(p[0].p[2], 0.4);
  EXPECT_DOUBLE_EQ(p[0].p[3], 0.2);
  const auto q = probabilities_from_counts(parse("0 0 9 0 0\n1 1 1 1 1\n2 1 1 1 1\n3 1 1 1 1\n"));
  EXPECT_EQ(q[0].p, (OutcomeDistribution{0.0, 1.0, 0.0, 0.0}));
}

TEST(Probabilities, PoissonEstimatesWithinFourSigma) {
  const auto sweep = phase_sweep(experimental_config(), uniform_phases(40));
  const double n = 2e5;
  const auto est = probabilities_from_counts(sample_counts(sweep, n, 77));
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    for (int k = 0; k < 4; ++k) EXPECT_LE(std::abs(est[i].p[k] - sweep[i].p[k]), 4.0 * std::sqrt(sweep[i].p[k] / n));
  }
}

TEST(CosineFit, ExactRecovery) {
  std::vector<SweepPoint> data;
  const std::array<double, 4> a{0.3, 0.2, 0.25, 0.25}, b{0.1, 0.05, 0.02, 0.0}, ph{0.4, 2.0, 5.5, 0.0};
  for (double phi : uniform_phases(17)) {
    SweepPoint pt{phi, {}};
    for (int k = 0; k < 4; ++k) pt.p[k] = a[k] + b[k] * std::cos(phi - ph[k]);
    data.push_back(pt);
  }
  const CosineFit fit = fit_cosine(data);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(fit.outcome[k].offset, a[k], 1e-10);
    EXPECT_NEAR(fit.outcome[k].amplitude, b[k], 1e-10);
    EXPECT_NEAR(fit.outcome[k].phase, ph[k], 1e-10);
  }
  EXPECT_LT(fit.rss, 1e-25);
  EXPECT_FALSE(fit.clamped);
}

TEST(CosineFit, ConstantInputCanonical) {
  std::vector<SweepPoint> data;
  for (double phi : {0.1, 0.9, 2.0, 4.0}) data.push_back({phi, {0.25, 0.25, 0.25, 0.25}});
  const CosineFit fit = fit_cosine(data);
  for (const auto& c : fit.outcome) {
    EXPECT_EQ(c.amplitude, 0.0);
    EXPECT_EQ(c.phase, 0.0);
    EXPECT_NEAR(c.offset, 0.25, 1e-15);
  }
}

TEST(CosineFit, StatisticalPhaseRecovery) {
  ModelConfig c = experimental_config();
  c.eta = 1.0;
  const auto sweep = phase_sweep(c, uniform_phases(50));
  const CosineFit exact = fit_cosine(sweep);
  const CosineFit noisy = fit_cosine(probabilities_from_counts(sample_counts(sweep, 1e6, 3)));
  EXPECT_LT(circular_distance(exact.outcome[0].phase, noisy.outcome[0].phase), 1e-2);
}

TEST(CosineFit, DegenerateDesigns) {
  EXPECT_THROW(fit_cosine({{0.0, {1, 0, 0, 0}}, {1.0, {1, 0, 0, 0}}, {2.0, {1, 0, 0, 0}}}), FitError);
  // four samples but only two distinct phases modulo 2π
  EXPECT_THROW(fit_cosine({{0.0, {1, 0, 0, 0}}, {kTwoPi, {1, 0, 0, 0}}, {1.0, {1, 0, 0, 0}}, {1.0 + kTwoPi, {1, 0, 0, 0}}}),
               FitError);
}

TEST(CosineFit, ClampFlag) {
  std::vector<SweepPoint> data;
  for (double phi : uniform_phases(8)) {
    const double p = 0.05 + 0.1 * std::cos(phi);  // dips below zero
    data.push_back({phi, {p, 1.0 - p, 0.0, 0.0}});
  }
  const CosineFit fit = fit_cosine(data);
  EXPECT_TRUE(fit.clamped);
  const OutcomeDistribution d = fit.at(kPi);
  EXPECT_EQ(d[0], 0.0);
  EXPECT_NEAR(d[0] + d[1] + d[2] + d[3], 1.0, 1e-15);
}

TEST(Extraction, NoiselessFitReproducesModel) {
  const ModelConfig c = experimental_config();
  const CosineFit fit = fit_cosine(phase_sweep(c, uniform_phases(24)));
  const InequalityFamily f = experimental_family();
  const ProbabilityTable t = extract_setting_table(fit, f.alice_phases, bob_phase_list(f));
  EXPECT_LT(t.max_abs_difference(joint_probabilities(c)), 1e-9);
}

TEST(Extraction, RelabelingSymmetry) {
  // with the matched phases θ_x − θ_y depends on x + y mod 4
  const CountsRecord rec = sample_counts(phase_sweep(experimental_config(), uniform_phases(40)), 1e5, 5);
  const InequalityFamily f = experimental_family();
  for (ExtractionMode mode : {ExtractionMode::from_fit, ExtractionMode::nearest_point}) {
    const ProbabilityTable t = mode == ExtractionMode::from_fit
                                   ? extract_setting_table(fit_cosine(probabilities_from_counts(rec)), f.alice_phases,
                                                           bob_phase_list(f))
                                   : extract_setting_table(rec, f.alice_phases, bob_phase_list(f));
    for (int x = 0; x < 4; ++x) {
      for (int y = 0; y < 4; ++y) EXPECT_EQ(t.cell(x, y), t.cell((x + 1) % 4, (y + 3) % 4));
    }
    // quadrature Alice phases in ascending order give the (x+1, y+1) form
    const ProbabilityTable u = extract_setting_table(fit_cosine(probabilities_from_counts(rec)),
                                                     {0.0, kPi / 2, kPi, 1.5 * kPi}, bob_phase_list(f));
    for (int x = 0; x < 4; ++x) {
      for (int y = 0; y < 4; ++y) EXPECT_EQ(u.cell(x, y), u.cell((x + 1) % 4, (y + 1) % 4));
    }
  }
}

TEST(Extraction, NoSignallingWithinStatistics) {
  const CountsRecord rec = sample_counts(phase_sweep(experimental_config(), uniform_phases(60)), 1e6, 8);
  const InequalityFamily f = experimental_family();
  const ProbabilityTable t =
      extract_setting_table(fit_cosine(probabilities_from_counts(rec)), f.alice_phases, bob_phase_list(f));
  EXPECT_LT(t.signalling(), 5e-3);
}

TEST(Extraction, NearestPointNeedsCloseSample) {
  CountsRecord rec;
  for (double phi : {0.3, 1.9, 3.4, 5.0}) rec.rows.push_back({phi, {1, 1, 1, 1}});
  const InequalityFamily f = experimental_family();
  EXPECT_THROW(extract_setting_table(rec, f.alice_phases, bob_phase_list(f)), ExtractionError);
  EXPECT_THROW(setting_counts_from_record(rec, f.alice_phases, bob_phase_list(f)), ExtractionError);
}

TEST(Extraction, RequiresQuarterTurnSpacing) {
  const CosineFit fit = fit_cosine(phase_sweep(experimental_config(), uniform_phases(24)));
  EXPECT_THROW(extract_setting_table(fit, {0.0, 0.5, kPi, 1.5 * kPi}, {0.0, kPi / 2, kPi, 1.5 * kPi}),
               ValidationError);
  EXPECT_THROW(parse_extraction_mode("median"), ValidationError);
  EXPECT_EQ(parse_extraction_mode("nearest_point"), ExtractionMode::nearest_point);
}

TEST(AnalyzeCounts, SteerableSweepGivesPositiveDeltaS) {
  const CountsRecord rec = sample_counts(phase_sweep(experimental_config(), uniform_phases(60)), 1e6, 12);
  const AnalysisReport r = analyze_counts(rec, experimental_family());
  EXPECT_GT(r.value.delta_s, 0.0);
  EXPECT_EQ(r.mode, ExtractionMode::from_fit);
}

TEST(Histogram, FreedmanDiaconisAndIntegrity) {
  Rng rng(4);
  std::vector<double> x(5000);
  for (double& v : x) v = rng.normal(1.0, 0.2);
  const Histogram h = make_histogram(x);
  EXPECT_EQ(h.rule, "freedman-diaconis");
  EXPECT_EQ(h.total(), 5000);
  EXPECT_EQ(h.edges.size(), h.counts.size() + 1);
  double mean = 0.0, mid_mean = 0.0;
  for (double v : x) mean += v / 5000;
  for (std::size_t i = 0; i < h.counts.size(); ++i) mid_mean += 0.5 * (h.edges[i] + h.edges[i + 1]) * h.counts[i] / 5000;
  EXPECT_LT(std::abs(mean - mid_mean), h.edges[1] - h.edges[0]);
  const auto g = fit_gaussian(h);
  ASSERT_TRUE(g.has_value());
  EXPECT_NEAR(g->mean, 1.0, 0.02);
  EXPECT_NEAR(g->sigma, 0.2, 0.02);
}

TEST(Histogram, DegenerateSamples) {
  const Histogram h = make_histogram({2.0, 2.0, 2.0});
  EXPECT_EQ(h.counts.size(), 1u);
  EXPECT_EQ(h.total(), 3);
  EXPECT_FALSE(fit_gaussian(h).has_value());
  EXPECT_THROW(make_histogram({}), ValidationError);
}

TEST(SmaxGrid, InterpolationError) {
  const InequalityFamily f = experimental_family();
  const SmaxGrid grid(f, 0.217, 1e-4, 0.04, 1);
  EXPECT_EQ(grid(0.217), grid.exact(0.217));
  EXPECT_LT(grid.max_error(0.015), 1e-9);
  EXPECT_NEAR(grid(0.5), grid.exact(0.5), 0.0);  // off-grid values are exact
}

TEST(MonteCarlo, ConfigValidation) {
  const SettingCounts counts = setting_counts_from_table(joint_probabilities(experimental_config()), 1e4);
  MonteCarloConfig mc;
  mc.runs = 0;
  EXPECT_THROW(monte_carlo(counts, experimental_family(), mc), ValidationError);
  mc.runs = 10;
  mc.r_b_sigma = -1.0;
  EXPECT_THROW(monte_carlo(counts, experimental_family(), mc), ValidationError);
  mc.r_b_sigma = 0.0;
  mc.r_b_mean = 0.2;
  EXPECT_THROW(monte_carlo(counts, experimental_family(), mc), ValidationError);
}

TEST(MonteCarlo, HistogramCountsSumToRuns) {
  MonteCarloConfig mc;
  mc.runs = 1000;
  mc.seed = 1;
  const MonteCarloResult r =
      monte_carlo(setting_counts_from_table(joint_probabilities(experimental_config()), 1e5), experimental_family(), mc);
  EXPECT_EQ(r.histogram.total(), 1000);
  EXPECT_EQ(r.samples.size(), 1000u);
  EXPECT_EQ(r.r_b_redraws, 0);
}

TEST(MonteCarlo, MeanMatchesPointEstimateAtLargeCounts) {
  MonteCarloConfig mc;
  mc.runs = 4000;
  mc.r_b_sigma = 0.0;
  const MonteCarloResult r =
      monte_carlo(setting_counts_from_table(joint_probabilities(experimental_config()), 1e7), experimental_family(), mc);
  EXPECT_LT(std::abs(r.mean - r.point_estimate), 2.0 * r.std / std::sqrt(4000.0));
}

TEST(MonteCarlo, AmplitudeSpreadIncreasesVariance) {
  const SettingCounts counts = setting_counts_from_table(joint_probabilities(experimental_config()), 1e6);
  MonteCarloConfig mc;
  mc.runs = 3000;
  mc.r_b_sigma = 0.0;
  const double without = monte_carlo(counts, experimental_family(), mc).std;
  mc.r_b_sigma = 0.005;
  const MonteCarloResult with = monte_carlo(counts, experimental_family(), mc);
  EXPECT_GT(with.std, without);
  EXPECT_LT(with.grid_max_error, 1e-9);
}

TEST(MonteCarlo, ModelCountsWithAliceResampling) {
  MonteCarloConfig mc;
  mc.runs = 200;
  mc.resample_r_a = true;
  const MonteCarloResult r = monte_carlo(experimental_config(), 1e6, experimental_family(), mc);
  EXPECT_EQ(r.histogram.total(), 200);
  mc.resample_r_a = false;
  const MonteCarloResult s = monte_carlo(experimental_config(), 1e6, experimental_family(), mc);
  EXPECT_NE(r.samples, s.samples);
}

TEST(MonteCarlo, ResultsFileLayout) {
  MonteCarloConfig mc;
  mc.runs = 100;
  mc.seed = 42;
  const MonteCarloResult r =
      monte_carlo(setting_counts_from_table(joint_probabilities(experimental_config()), 1e5), experimental_family(), mc);
  const std::string text = format_monte_carlo(r);
  EXPECT_EQ(text.rfind("mean=", 0), 0u);
  EXPECT_NE(text.find("\nstd="), std::string::npos);
  EXPECT_NE(text.find("\nruns=100\n"), std::string::npos);
  EXPECT_NE(text.find("\nseed=42\n"), std::string::npos);
  std::istringstream is(text.substr(text.find("# bin_lo")));
  std::string line;
  std::getline(is, line);
  std::int64_t total = 0;
  double lo, hi;
  std::int64_t count;
  while (is >> lo >> hi >> count) total += count;
  EXPECT_EQ(total, 100);
}
