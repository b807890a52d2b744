#ifndef STEERING_LAB_ANALYSIS_HPP
#define STEERING_LAB_ANALYSIS_HPP

// Count-data pipeline: phase-sweep counts in, probability estimates, cosine
// fits, the setting table built from relative phases, S − S_max, and a seeded
// Poisson/Gaussian Monte Carlo for its spread.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "steering_lab/errors.hpp"
#include "steering_lab/fock_ops.hpp"
#include "steering_lab/inequality.hpp"
#include "steering_lab/parallel.hpp"
#include "steering_lab/probability_table.hpp"
#include "steering_lab/quantum_model.hpp"
#include "steering_lab/random.hpp"

namespace steering_lab {

// ---------------------------------------------------------------------------
// Counts files

/// Event counts at one phase, ordered (++, +−, −+, −−).
struct CountsRow {
  double phase = 0.0;
  std::array<std::int64_t, 4> n{};

  std::int64_t total() const noexcept { return n[0] + n[1] + n[2] + n[3]; }
  bool operator==(const CountsRow&) const = default;
};

struct CountsRecord {
  std::vector<CountsRow> rows;

  bool operator==(const CountsRecord&) const = default;

  void validate() const {
    if (rows.size() < 4) throw ValidationError("a counts record needs at least 4 rows");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (!std::isfinite(r.phase)) throw ValidationError("row " + std::to_string(i + 1) + ": phase is not finite");
      for (auto v : r.n) {
        if (v < 0) throw ValidationError("row " + std::to_string(i + 1) + ": negative count");
      }
      if (r.total() < 1) throw ValidationError("row " + std::to_string(i + 1) + ": no events");
      if (i > 0 && !(r.phase > rows[i - 1].phase)) {
        throw ValidationError("row " + std::to_string(i + 1) + ": phases must be strictly ascending");
      }
    }
  }
};

inline CountsRecord parse_counts(std::istream& in) {
  CountsRecord rec;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    CountsRow row;
    std::string phase_tok;
    ls >> phase_tok;
    try {
      std::size_t used = 0;
      row.phase = std::stod(phase_tok, &used);
      if (used != phase_tok.size()) throw std::invalid_argument(phase_tok);
    } catch (const std::exception&) {
      throw ParseError("malformed phase '" + phase_tok + "'", line_no);
    }
    if (!std::isfinite(row.phase)) throw ParseError("phase is not finite", line_no);
    for (int k = 0; k < 4; ++k) {
      std::string tok;
      if (!(ls >> tok)) throw ParseError("expected 4 counts after the phase", line_no);
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(tok, &used);
      } catch (const std::exception&) {
        throw ParseError("malformed count '" + tok + "'", line_no);
      }
      if (used != tok.size()) throw ParseError("malformed count '" + tok + "'", line_no);
      if (v < 0) throw ParseError("negative count", line_no);
      row.n[k] = v;
    }
    std::string extra;
    if (ls >> extra) throw ParseError("unexpected trailing field '" + extra + "'", line_no);
    if (row.total() < 1) throw ParseError("row has no events", line_no);
    if (!rec.rows.empty()) {
      const double prev = rec.rows.back().phase;
      if (row.phase == prev) throw ParseError("duplicate phase", line_no);
      if (row.phase < prev) throw ParseError("phases must be ascending", line_no);
    }
    rec.rows.push_back(row);
  }
  if (rec.rows.size() < 4) throw ParseError("need at least 4 data rows, found " + std::to_string(rec.rows.size()), line_no);
  return rec;
}

inline CountsRecord load_counts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  return parse_counts(in);
}

inline std::string format_counts(const CountsRecord& rec, const std::string& header = {}) {
  std::ostringstream os;
  if (!header.empty()) os << header;
  os << "# phase N_pp N_pm N_mp N_mm\n";
  for (const auto& r : rec.rows) {
    os << detail::format_number(r.phase);
    for (auto v : r.n) os << ' ' << v;
    os << '\n';
  }
  return os.str();
}

inline void write_counts(const std::string& path, const CountsRecord& rec, const std::string& header = {}) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << format_counts(rec, header);
}

/// Poisson-sample each outcome of a sweep with mean p·events.
inline CountsRecord sample_counts(const std::vector<SweepPoint>& sweep, double events_per_point, std::uint64_t seed) {
  if (!(events_per_point > 0.0)) throw ValidationError("events per point must be > 0");
  CountsRecord rec;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    CountsRow row;
    row.phase = sweep[i].phase;
    do {
      for (int k = 0; k < 4; ++k) row.n[k] = rng.poisson(std::max(sweep[i].p[k], 0.0) * events_per_point);
    } while (row.total() == 0);
    rec.rows.push_back(row);
  }
  return rec;
}

inline OutcomeDistribution frequencies(const std::array<double, 4>& n) {
  const double total = n[0] + n[1] + n[2] + n[3];
  return {n[0] / total, n[1] / total, n[2] / total, n[3] / total};
}

inline std::vector<SweepPoint> probabilities_from_counts(const CountsRecord& rec) {
  rec.validate();
  std::vector<SweepPoint> out;
  out.reserve(rec.rows.size());
  for (const auto& r : rec.rows) {
    out.push_back({r.phase, frequencies({double(r.n[0]), double(r.n[1]), double(r.n[2]), double(r.n[3])})});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cosine fits

/// p(φ) = A + B·cos(φ − φ₀) with B ≥ 0 and φ₀ ∈ [0, 2π).
struct CosineComponent {
  double offset = 0.0;
  double amplitude = 0.0;
  double phase = 0.0;

  double operator()(double phi) const { return offset + amplitude * std::cos(phi - phase); }
};

struct CosineFit {
  std::array<CosineComponent, 4> outcome{};
  double rss = 0.0;
  bool clamped = false;  // some A ± B left [0, 1]

  /// Fitted distribution at φ; values are clipped to [0, 1] and renormalized.
  OutcomeDistribution at(double phi) const {
    OutcomeDistribution p{};
    double total = 0.0;
    for (int k = 0; k < 4; ++k) {
      p[k] = std::clamp(outcome[k](phi), 0.0, 1.0);
      total += p[k];
    }
    if (!(total > 0.0)) throw FitError("fitted distribution vanishes at phase " + std::to_string(phi));
    for (double& v : p) v /= total;
    return p;
  }
};

inline std::size_t distinct_phase_count(const std::vector<double>& phases, double tol = 1e-9) {
  std::vector<double> r;
  for (double p : phases) r.push_back(reduce_phase(p));
  std::sort(r.begin(), r.end());
  std::size_t n = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (i == 0 || r[i] - r[i - 1] > tol) ++n;
  }
  if (n > 1 && kTwoPi - r.back() + r.front() <= tol) --n;
  return n;
}

inline CosineFit fit_cosine(const std::vector<SweepPoint>& data) {
  std::vector<double> phases;
  for (const auto& d : data) phases.push_back(d.phase);
  if (distinct_phase_count(phases) < 4) throw FitError("a cosine fit needs at least 4 distinct phases");

  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  Eigen::MatrixXd design(n, 3);
  Eigen::MatrixXd y(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = std::cos(data[i].phase);
    design(i, 2) = std::sin(data[i].phase);
    for (int k = 0; k < 4; ++k) y(i, k) = data[i].p[k];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) throw FitError("rank-deficient design: phases do not determine a cosine");
  const Eigen::MatrixXd coef = qr.solve(y);

  CosineFit fit;
  fit.rss = (design * coef - y).squaredNorm();
  for (int k = 0; k < 4; ++k) {
    auto& c = fit.outcome[k];
    c.offset = coef(0, k);
    c.amplitude = std::hypot(coef(1, k), coef(2, k));
    c.phase = c.amplitude > 1e-15 ? reduce_phase(std::atan2(coef(2, k), coef(1, k))) : 0.0;
    if (c.amplitude <= 1e-15) c.amplitude = 0.0;
    if (c.offset - c.amplitude < -1e-12 || c.offset + c.amplitude > 1.0 + 1e-12) fit.clamped = true;
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Setting table

enum class ExtractionMode { from_fit, nearest_point };

inline const char* to_string(ExtractionMode m) { return m == ExtractionMode::from_fit ? "from_fit" : "nearest_point"; }

inline ExtractionMode parse_extraction_mode(const std::string& s) {
  if (s == "from_fit" || s == "fit") return ExtractionMode::from_fit;
  if (s == "nearest_point" || s == "nearest") return ExtractionMode::nearest_point;
  throw ValidationError("unknown extraction mode '" + s + "' (expected from_fit or nearest_point)");
}

inline constexpr double kNearestPointTolerance = 0.05;

/// Distinct values of θ_x − θ_y in [0, 2π), sorted. The table is a relabeling
/// of these sweep points, so they must form a π/2-spaced quadruple.
inline std::vector<double> relative_phases(const std::vector<double>& alice, const std::vector<double>& bob) {
  std::vector<double> all;
  for (double a : alice) {
    for (double b : bob) all.push_back(reduce_phase(a - b));
  }
  std::sort(all.begin(), all.end());
  std::vector<double> out;
  for (double v : all) {
    bool seen = false;
    for (double u : out) seen = seen || circular_distance(u, v) <= 1e-6;
    if (!seen) out.push_back(v);
  }
  return out;
}

inline void require_quadrature_spacing(const std::vector<double>& rel) {
  bool ok = rel.size() == 4;
  for (std::size_t k = 1; ok && k < rel.size(); ++k) ok = circular_distance(rel[k], rel[0] + k * kPi / 2) <= 1e-6;
  if (!ok) throw ValidationError("setting phases must give four relative phases spaced π/2 apart");
}

namespace detail {

inline std::size_t nearest_row(const CountsRecord& rec, double phase, double tol) {
  std::size_t best = rec.rows.size();
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rec.rows.size(); ++i) {
    const double d = circular_distance(rec.rows[i].phase, phase);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  if (!(best_d <= tol)) {
    throw ExtractionError("no sweep point within " + detail::format12(tol) + " rad of phase " + detail::format12(phase));
  }
  return best;
}

template <typename Fn>
ProbabilityTable build_table(const std::vector<double>& alice, const std::vector<double>& bob, Fn&& dist) {
  require_quadrature_spacing(relative_phases(alice, bob));
  ProbabilityTable t(static_cast<int>(alice.size()), static_cast<int>(bob.size()));
  for (std::size_t x = 0; x < alice.size(); ++x) {
    for (std::size_t y = 0; y < bob.size(); ++y) {
      OutcomeDistribution p = dist(reduce_phase(alice[x] - bob[y]));
      const double total = p[0] + p[1] + p[2] + p[3];
      for (double& v : p) v /= total;
      t.cell(static_cast<int>(x), static_cast<int>(y)) = p;
    }
  }
  return t;
}

}  // namespace detail

/// p(ab|x,y) = f_ab(θ_x − θ_y), with f the fitted sweep curve.
inline ProbabilityTable extract_setting_table(const CosineFit& fit, const std::vector<double>& alice,
                                              const std::vector<double>& bob) {
  return detail::build_table(alice, bob, [&](double phi) { return fit.at(phi); });
}

/// Same table from the raw sweep, using the measured point nearest to each
/// required relative phase.
inline ProbabilityTable extract_setting_table(const CountsRecord& rec, const std::vector<double>& alice,
                                              const std::vector<double>& bob, double tol = kNearestPointTolerance) {
  rec.validate();
  return detail::build_table(alice, bob, [&](double phi) {
    const auto& r = rec.rows[detail::nearest_row(rec, phi, tol)];
    return frequencies({double(r.n[0]), double(r.n[1]), double(r.n[2]), double(r.n[3])});
  });
}

/// Counts N^{ab}_{xy}, possibly non-integer (expected values).
struct SettingCounts {
  int alice_settings = 0;
  int bob_settings = 0;
  std::vector<std::array<double, 4>> cells;  // index x·bob_settings + y

  std::array<double, 4>& cell(int x, int y) { return cells.at(static_cast<std::size_t>(x) * bob_settings + y); }
  const std::array<double, 4>& cell(int x, int y) const {
    return cells.at(static_cast<std::size_t>(x) * bob_settings + y);
  }

  void validate() const {
    if (alice_settings < 1 || bob_settings < 1 ||
        cells.size() != static_cast<std::size_t>(alice_settings) * bob_settings) {
      throw ValidationError("setting counts have inconsistent dimensions");
    }
    for (const auto& c : cells) {
      for (double v : c) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("setting counts must be finite and >= 0");
      }
      if (!(c[0] + c[1] + c[2] + c[3] > 0.0)) throw ValidationError("every setting needs a positive count");
    }
  }

  ProbabilityTable frequencies() const {
    ProbabilityTable t(alice_settings, bob_settings);
    for (int x = 0; x < alice_settings; ++x) {
      for (int y = 0; y < bob_settings; ++y) t.cell(x, y) = steering_lab::frequencies(cell(x, y));
    }
    return t;
  }
};

inline SettingCounts setting_counts_from_table(const ProbabilityTable& table, double events_per_setting) {
  if (!(events_per_setting > 0.0)) throw ValidationError("events per setting must be > 0");
  SettingCounts out{table.alice_settings(), table.bob_settings(), {}};
  for (int x = 0; x < table.alice_settings(); ++x) {
    for (int y = 0; y < table.bob_settings(); ++y) {
      std::array<double, 4> c{};
      for (int k = 0; k < 4; ++k) c[k] = table.cell(x, y)[k] * events_per_setting;
      out.cells.push_back(c);
    }
  }
  return out;
}

/// Raw counts of the sweep points nearest to each θ_x − θ_y.
inline SettingCounts setting_counts_from_record(const CountsRecord& rec, const std::vector<double>& alice,
                                                const std::vector<double>& bob, double tol = kNearestPointTolerance) {
  rec.validate();
  require_quadrature_spacing(relative_phases(alice, bob));
  SettingCounts out{static_cast<int>(alice.size()), static_cast<int>(bob.size()), {}};
  for (double a : alice) {
    for (double b : bob) {
      const auto& r = rec.rows[detail::nearest_row(rec, reduce_phase(a - b), tol)];
      out.cells.push_back({double(r.n[0]), double(r.n[1]), double(r.n[2]), double(r.n[3])});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Point estimate

inline std::vector<double> bob_phase_list(const InequalityFamily& family) {
  return {family.bob_phases.begin(), family.bob_phases.end()};
}

struct AnalysisReport {
  CosineFit fit;
  ExtractionMode mode = ExtractionMode::from_fit;
  ProbabilityTable table;
  ProbabilityInequality inequality;
  SteeringValue value;
};

inline AnalysisReport analyze_counts(const CountsRecord& rec, const InequalityFamily& family,
                                     ExtractionMode mode = ExtractionMode::from_fit) {
  const std::vector<SweepPoint> probs = probabilities_from_counts(rec);
  AnalysisReport out;
  out.fit = fit_cosine(probs);
  out.mode = mode;
  out.table = mode == ExtractionMode::from_fit ? extract_setting_table(out.fit, family.alice_phases, bob_phase_list(family))
                                               : extract_setting_table(rec, family.alice_phases, bob_phase_list(family));
  out.inequality = build_inequality(family);
  out.value = evaluate_steering(out.inequality, out.table);
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct MonteCarloConfig {
  std::int64_t runs = 200000;
  double r_b_mean = 0.217;
  double r_b_sigma = 0.005;
  std::uint64_t seed = 1;
  bool resample_r_a = false;  // only for counts generated from the model
  double r_a_sigma = 0.013;
  double grid_step = 1e-4;
  int threads = 0;

  void validate() const {
    if (runs < 1) throw ValidationError("runs must be >= 1");
    if (!(r_b_sigma >= 0.0) || !std::isfinite(r_b_sigma)) throw ValidationError("r_B sigma must be >= 0");
    if (!(r_b_mean > 0.0 && r_b_mean < 1.0)) throw ValidationError("r_B mean must be in (0, 1)");
    if (!(r_a_sigma >= 0.0) || !std::isfinite(r_a_sigma)) throw ValidationError("r_A sigma must be >= 0");
    if (!(grid_step > 0.0)) throw ValidationError("grid step must be > 0");
  }
};

struct Histogram {
  std::vector<double> edges;
  std::vector<std::int64_t> counts;
  std::string rule;

  std::int64_t total() const {
    std::int64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

/// counts ≈ amplitude · exp(−(x − mean)² / 2σ²) over bin centres.
struct GaussianFit {
  double amplitude = 0.0;
  double mean = 0.0;
  double sigma = 0.0;
};

inline double quantile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const std::size_t j = std::min(i + 1, s.size() - 1);
  return s[i] + (pos - static_cast<double>(i)) * (s[j] - s[i]);
}

inline constexpr std::size_t kMaxHistogramBins = 10000;

/// Freedman–Diaconis bins (Sturges when the IQR vanishes); the last bin is closed.
inline Histogram make_histogram(const std::vector<double>& samples) {
  if (samples.empty()) throw ValidationError("histogram of an empty sample");
  std::vector<double> s = samples;
  std::sort(s.begin(), s.end());
  const double lo = s.front();
  const double hi = s.back();
  Histogram h;
  std::size_t bins = 1;
  if (hi > lo) {
    const double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
    if (iqr > 0.0) {
      const double width = 2.0 * iqr / std::cbrt(static_cast<double>(s.size()));
      bins = static_cast<std::size_t>(std::ceil((hi - lo) / width));
      h.rule = "freedman-diaconis";
    } else {
      bins = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(s.size())))) + 1;
      h.rule = "sturges";
    }
    bins = std::clamp<std::size_t>(bins, 1, kMaxHistogramBins);
  } else {
    h.rule = "single";
  }
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 0.0;
  for (std::size_t i = 0; i < bins; ++i) h.edges.push_back(lo + width * static_cast<double>(i));
  h.edges.push_back(hi);
  h.counts.assign(bins, 0);
  for (double v : s) {
    std::size_t k = width > 0.0 ? static_cast<std::size_t>((v - lo) / width) : 0;
    ++h.counts[std::min(k, bins - 1)];
  }
  return h;
}

/// Weighted least squares of log-counts on a parabola (weights = counts²).
inline std::optional<GaussianFit> fit_gaussian(const Histogram& h) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    if (h.counts[i] > 0) {
      xs.push_back(0.5 * (h.edges[i] + h.edges[i + 1]));
      ys.push_back(static_cast<double>(h.counts[i]));
    }
  }
  if (xs.size() < 3) return std::nullopt;
  double centre = 0.0, weight = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    centre += ys[i] * xs[i];
    weight += ys[i];
  }
  centre /= weight;
  double scale = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) scale = std::max(scale, std::abs(xs[i] - centre));
  if (!(scale > 0.0)) return std::nullopt;

  const Eigen::Index n = static_cast<Eigen::Index>(xs.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = (xs[i] - centre) / scale;
    a.row(i) << ys[i], ys[i] * u, ys[i] * u * u;
    b(i) = ys[i] * std::log(ys[i]);
  }
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
  if (!(c(2) < 0.0)) return std::nullopt;
  GaussianFit g;
  const double sigma_u = std::sqrt(-0.5 / c(2));
  const double mean_u = -c(1) / (2.0 * c(2));
  g.sigma = sigma_u * scale;
  g.mean = centre + mean_u * scale;
  g.amplitude = std::exp(c(0) - c(1) * c(1) / (4.0 * c(2)));
  return g;
}

/// S_max on a grid in r_B anchored at a reference value, linearly interpolated.
/// Values off the grid are computed directly.
class SmaxGrid {
 public:
  SmaxGrid(const InequalityFamily& family, double anchor, double step, double half_width, int threads)
      : family_(family), anchor_(anchor), step_(step) {
    const auto half = static_cast<long>(std::ceil(half_width / step)) + 1;
    lo_ = -half;
    while (anchor_ + lo_ * step_ <= 0.0) ++lo_;
    long hi = half;
    while (anchor_ + hi * step_ >= 1.0) --hi;
    values_.resize(static_cast<std::size_t>(hi - lo_ + 1));
    parallel_for(values_.size(), threads, [&](std::size_t i) { values_[i] = exact(node(static_cast<long>(i))); });
  }

  double exact(double r_b) const {
    InequalityFamily f = family_;
    f.r_b = r_b;
    return fullspace_bound(decompose_g(f), f).s_max;
  }

  double operator()(double r_b) const {
    const double u = (r_b - anchor_) / step_ - static_cast<double>(lo_);
    const double last = static_cast<double>(values_.size() - 1);
    if (!(u >= 0.0 && u <= last)) return exact(r_b);
    const auto i = std::min(static_cast<std::size_t>(u), values_.size() - 1);
    if (i + 1 == values_.size()) return values_[i];
    const double w = u - static_cast<double>(i);
    return w == 0.0 ? values_[i] : (1.0 - w) * values_[i] + w * values_[i + 1];
  }

  /// Largest |interpolated − exact| over interval midpoints inside |r − anchor| ≤ span.
  double max_error(double span) const {
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < values_.size(); ++i) {
      const double mid = node(static_cast<long>(i)) + 0.5 * step_;
      if (std::abs(mid - anchor_) > span + step_) continue;
      worst = std::max(worst, std::abs((*this)(mid) - exact(mid)));
    }
    return worst;
  }

  std::size_t nodes() const noexcept { return values_.size(); }

 private:
  double node(long i) const { return anchor_ + static_cast<double>(lo_ + i) * step_; }

  InequalityFamily family_;
  double anchor_;
  double step_;
  long lo_ = 0;
  std::vector<double> values_;
};

struct MonteCarloResult {
  std::int64_t runs = 0;
  std::uint64_t seed = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  double point_estimate = 0.0;
  Histogram histogram;
  std::optional<GaussianFit> gaussian;
  std::int64_t r_b_redraws = 0;
  std::int64_t r_a_redraws = 0;
  std::int64_t empty_setting_redraws = 0;
  std::size_t grid_nodes = 0;
  double grid_max_error = 0.0;
  std::vector<double> samples;
};

namespace detail {

inline double draw_positive(Rng& rng, double mean, double sigma, std::int64_t& redraws) {
  if (sigma == 0.0) return mean;
  for (;;) {
    const double v = rng.normal(mean, sigma);
    if (v > 0.0 && v < 1.0) return v;
    ++redraws;
  }
}

/// `means(rng, r_a_redraws)` yields the expected counts of one run.
template <typename Means>
MonteCarloResult run_monte_carlo(const InequalityFamily& family, const MonteCarloConfig& mc,
                                 const SettingCounts& nominal, Means&& means) {
  mc.validate();
  family.validate();
  nominal.validate();
  if (std::abs(family.r_b - mc.r_b_mean) > 1e-12) throw ValidationError("family r_B differs from the Monte Carlo r_B mean");
  if (nominal.alice_settings != family.m || nominal.bob_settings != 4) {
    throw ValidationError("setting counts do not match the inequality family");
  }
  const int threads = resolve_threads(mc.threads);
  const std::size_t n = static_cast<std::size_t>(mc.runs);

  const SmaxGrid grid(family, mc.r_b_mean, mc.grid_step, 8.0 * mc.r_b_sigma, threads);
  const ProbabilityInequality nominal_ineq = probability_coefficients(decompose_g(family), family, grid(mc.r_b_mean));

  MonteCarloResult out;
  out.runs = mc.runs;
  out.seed = mc.seed;
  out.samples.resize(n);
  out.grid_nodes = grid.nodes();
  out.grid_max_error = mc.r_b_sigma > 0.0 ? grid.max_error(3.0 * mc.r_b_sigma) : 0.0;
  out.point_estimate = evaluate_steering(nominal_ineq, nominal.frequencies()).delta_s;

  struct Counters {
    std::int64_t r_b = 0, r_a = 0, empty = 0;
  };
  std::vector<Counters> counters(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng rng(derive_seed(mc.seed, i));
    Counters& cnt = counters[i];
    const double r_b = draw_positive(rng, mc.r_b_mean, mc.r_b_sigma, cnt.r_b);
    const auto& mu = means(rng, cnt.r_a);
    ProbabilityTable table(mu.alice_settings, mu.bob_settings);
    for (int x = 0; x < mu.alice_settings; ++x) {
      for (int y = 0; y < mu.bob_settings; ++y) {
        std::array<double, 4> drawn{};
        for (;;) {
          for (int k = 0; k < 4; ++k) drawn[k] = static_cast<double>(rng.poisson(mu.cell(x, y)[k]));
          if (drawn[0] + drawn[1] + drawn[2] + drawn[3] > 0.0) break;
          ++cnt.empty;
        }
        table.cell(x, y) = frequencies(drawn);
      }
    }
    if (r_b == mc.r_b_mean) {
      out.samples[i] = evaluate_steering(nominal_ineq, table).delta_s;
    } else {
      InequalityFamily f = family;
      f.r_b = r_b;
      out.samples[i] = evaluate_steering(probability_coefficients(decompose_g(f), f, grid(r_b)), table).delta_s;
    }
  });

  double sum = 0.0;
  for (double v : out.samples) sum += v;
  out.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : out.samples) ss += (v - out.mean) * (v - out.mean);
  out.std = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  for (const auto& c : counters) {
    out.r_b_redraws += c.r_b;
    out.r_a_redraws += c.r_a;
    out.empty_setting_redraws += c.empty;
  }
  out.histogram = make_histogram(out.samples);
  out.gaussian = fit_gaussian(out.histogram);
  return out;
}

}  // namespace detail

/// Resample the given counts and r_B in every run and collect S − S_max.
inline MonteCarloResult monte_carlo(const SettingCounts& counts, const InequalityFamily& family,
                                    const MonteCarloConfig& mc) {
  return detail::run_monte_carlo(family, mc, counts,
                                 [&](Rng&, std::int64_t&) -> const SettingCounts& { return counts; });
}

inline MonteCarloResult monte_carlo(const CountsRecord& rec, const InequalityFamily& family,
                                    const MonteCarloConfig& mc) {
  return monte_carlo(setting_counts_from_record(rec, family.alice_phases, bob_phase_list(family)), family, mc);
}

/// Counts generated from the model with `events_per_setting` events per cell.
/// With resample_r_a each run also redraws r_A around config.r_a.
inline MonteCarloResult monte_carlo(const ModelConfig& config, double events_per_setting,
                                    const InequalityFamily& family, const MonteCarloConfig& mc) {
  require_consistent(config, family);
  const SettingCounts nominal = setting_counts_from_table(joint_probabilities(config), events_per_setting);
  if (!mc.resample_r_a || mc.r_a_sigma == 0.0) return monte_carlo(nominal, family, mc);
  return detail::run_monte_carlo(family, mc, nominal, [&](Rng& rng, std::int64_t& redraws) {
    ModelConfig c = config;
    c.r_a = detail::draw_positive(rng, config.r_a, mc.r_a_sigma, redraws);
    return setting_counts_from_table(joint_probabilities(c), events_per_setting);
  });
}

inline std::string format_monte_carlo(const MonteCarloResult& r) {
  std::ostringstream os;
  using detail::format_number;
  os << "mean=" << format_number(r.mean) << '\n'
     << "std=" << format_number(r.std) << '\n'
     << "runs=" << r.runs << '\n'
     << "seed=" << r.seed << '\n'
     << "point_estimate=" << format_number(r.point_estimate) << '\n'
     << "binning=" << r.histogram.rule << '\n'
     << "bins=" << r.histogram.counts.size() << '\n';
  if (r.gaussian) {
    os << "fit_amplitude=" << format_number(r.gaussian->amplitude) << '\n'
       << "fit_mean=" << format_number(r.gaussian->mean) << '\n'
       << "fit_sigma=" << format_number(r.gaussian->sigma) << '\n';
  }
  os << "r_b_redraws=" << r.r_b_redraws << '\n'
     << "r_a_redraws=" << r.r_a_redraws << '\n'
     << "empty_setting_redraws=" << r.empty_setting_redraws << '\n'
     << "grid_nodes=" << r.grid_nodes << '\n'
     << "grid_max_error=" << format_number(r.grid_max_error) << '\n'
     << "# bin_lo bin_hi count\n";
  for (std::size_t i = 0; i < r.histogram.counts.size(); ++i) {
    os << format_number(r.histogram.edges[i]) << ' ' << format_number(r.histogram.edges[i + 1]) << ' '
       << r.histogram.counts[i] << '\n';
  }
  return os.str();
}

}  // namespace steering_lab

#endif  // STEERING_LAB_ANALYSIS_HPP
