#include "fbos/compare.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "fbos/experiment.hpp"

namespace fbos::compare {
namespace {

struct Table {
  std::filesystem::path path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw SchemaError(fmt::format("{}: missing column '{}'", path.string(), name));
    }
    return static_cast<int>(it - header.begin());
  }
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Table read_table(const std::filesystem::path& path, std::string_view schema,
                 const std::vector<std::string>& required_columns) {
  std::ifstream in(path);
  if (!in) throw SchemaError(fmt::format("{}: cannot open", path.string()));
  Table t;
  t.path = path;
  std::string line;
  if (!std::getline(in, line) || line != fmt::format("# {}", schema)) {
    throw SchemaError(fmt::format("{}: expected schema '{}', found '{}'", path.string(), schema,
                                  line));
  }
  if (!std::getline(in, line)) throw SchemaError(fmt::format("{}: missing header", path.string()));
  t.header = split_csv(line);
  for (const auto& c : required_columns) t.column(c);
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto row = split_csv(line);
    if (row.size() != t.header.size()) {
      throw SchemaError(fmt::format("{}:{}: expected {} fields, found {}", path.string(), lineno,
                                    t.header.size(), row.size()));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::optional<double> parse_value(const Table& t, const std::string& cell) {
  if (cell == "NA") return std::nullopt;
  try {
    std::size_t used = 0;
    double v = std::stod(cell, &used);
    if (used == cell.size()) return v;
  } catch (const std::exception&) {
  }
  throw SchemaError(fmt::format("{}: invalid number '{}'", t.path.string(), cell));
}

int parse_int(const Table& t, const std::string& cell) {
  auto v = parse_value(t, cell);
  if (!v || *v != std::floor(*v)) {
    throw SchemaError(fmt::format("{}: invalid integer '{}'", t.path.string(), cell));
  }
  return static_cast<int>(*v);
}

struct Samples {
  std::vector<double> values;
  std::vector<double> rollouts;
};

// (method, curve, split) -> step -> samples over repeats
using Accumulator = std::map<CurveKey, std::map<int, Samples>>;

void add_table(Accumulator& acc, const Table& t, const std::string& label_prefix,
               const std::string& split_column, const std::string& fixed_split,
               const std::vector<std::string>& curves,
               const std::string& rollout_column, const std::set<std::string>& prefixed) {
  const int c_method = t.column("method");
  const int c_step = t.column("step");
  const int c_split = split_column.empty() ? -1 : t.column(split_column);
  const int c_roll = rollout_column.empty() ? -1 : t.column(rollout_column);
  std::vector<int> cols;
  for (const auto& c : curves) cols.push_back(t.column(c));
  for (const auto& row : t.rows) {
    const std::string& m = row[static_cast<std::size_t>(c_method)];
    const std::string method = prefixed.count(m) ? label_prefix + "/" + m : m;
    const int step = parse_int(t, row[static_cast<std::size_t>(c_step)]);
    const std::string split = c_split >= 0 ? row[static_cast<std::size_t>(c_split)] : fixed_split;
    std::optional<double> roll;
    if (c_roll >= 0) roll = parse_value(t, row[static_cast<std::size_t>(c_roll)]);
    for (std::size_t i = 0; i < curves.size(); ++i) {
      auto v = parse_value(t, row[static_cast<std::size_t>(cols[i])]);
      if (!v) continue;
      auto& s = acc[{method, curves[i], split}][step];
      s.values.push_back(*v);
      if (roll) s.rollouts.push_back(*roll);
    }
  }
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

std::string num(double x) { return fmt::format("{:.10g}", x); }

const std::vector<std::string> kEvalCurves = {"final_pass_rate", "commonsense_micro",
                                              "commonsense_macro", "hard_micro",
                                              "hard_macro", "avg_score"};
const std::vector<std::string> kMetricCurves = {
    "train_score_mean", "train_score_std", "init_score_mean", "fap_score_mean",
    "fap_score_std",    "fap_score_max",   "entropy",         "grad_norm",
    "epa_loss",         "ecc_loss",        "grpo_loss",       "epa_clip_fraction",
    "ecc_clip_fraction", "grpo_clip_fraction"};
const std::vector<std::string> kDifficultyCurves = {"train_score_mean", "train_score_std",
                                                    "fap_score_mean", "fap_score_max"};

std::vector<std::string> methods_in(const Table& t) {
  std::vector<std::string> out;
  const int c = t.column("method");
  for (const auto& row : t.rows) {
    const auto& m = row[static_cast<std::size_t>(c)];
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return out;
}

}  // namespace

const std::vector<CurvePoint>* Comparison::find(const std::string& method, const std::string& curve,
                                                const std::string& split) const {
  auto it = curves.find({method, curve, split});
  return it == curves.end() ? nullptr : &it->second;
}

Comparison load_runs(const std::vector<std::filesystem::path>& dirs) {
  if (dirs.empty()) throw SchemaError("no run directories given");
  struct Loaded {
    std::string label;
    Table eval, metrics;
    std::optional<Table> difficulty;
  };
  std::vector<Loaded> loaded;
  std::map<std::string, int> method_dirs;
  for (const auto& d : dirs) {
    if (!std::filesystem::is_directory(d)) {
      throw SchemaError(fmt::format("{}: not a run directory", d.string()));
    }
    Loaded l;
    l.label = d.filename().empty() ? d.parent_path().filename().string() : d.filename().string();
    std::vector<std::string> eval_cols = {"method", "repeat", "step", "split",
                                          "cumulative_rollouts"};
    eval_cols.insert(eval_cols.end(), kEvalCurves.begin(), kEvalCurves.end());
    l.eval = read_table(d / "eval.csv", experiment::kEvalSchema, eval_cols);
    std::vector<std::string> metric_cols = {"method", "repeat", "step", "cumulative_rollouts"};
    metric_cols.insert(metric_cols.end(), kMetricCurves.begin(), kMetricCurves.end());
    l.metrics = read_table(d / "metrics.csv", experiment::kMetricsSchema, metric_cols);
    if (std::filesystem::exists(d / "train_difficulty.csv")) {
      std::vector<std::string> cols = {"method", "repeat", "step", "difficulty"};
      cols.insert(cols.end(), kDifficultyCurves.begin(), kDifficultyCurves.end());
      l.difficulty = read_table(d / "train_difficulty.csv", experiment::kDifficultySchema, cols);
    }
    for (const auto& m : methods_in(l.eval)) ++method_dirs[m];
    loaded.push_back(std::move(l));
  }
  std::set<std::string> shared;
  for (const auto& [m, count] : method_dirs) {
    if (count > 1) shared.insert(m);
  }

  Accumulator acc;
  Comparison cmp;
  for (const auto& l : loaded) {
    for (const auto& m : methods_in(l.eval)) {
      const std::string label = shared.count(m) ? l.label + "/" + m : m;
      if (std::find(cmp.methods.begin(), cmp.methods.end(), label) == cmp.methods.end()) {
        cmp.methods.push_back(label);
      }
    }
    add_table(acc, l.eval, l.label, "split", "", kEvalCurves, "cumulative_rollouts", shared);
    add_table(acc, l.metrics, l.label, "", "train", kMetricCurves, "cumulative_rollouts",
              shared);
    if (l.difficulty) {
      add_table(acc, *l.difficulty, l.label, "difficulty", "", kDifficultyCurves, "",
                shared);
    }
  }

  for (auto& [key, by_step] : acc) {
    auto& pts = cmp.curves[key];
    for (auto& [step, s] : by_step) {
      CurvePoint p;
      p.step = step;
      p.repeats = static_cast<int>(s.values.size());
      p.mean = mean_of(s.values);
      if (s.values.size() > 1) {
        double ss = 0.0;
        for (double v : s.values) ss += (v - p.mean) * (v - p.mean);
        p.std = std::sqrt(ss / static_cast<double>(s.values.size() - 1));
      }
      p.cumulative_rollouts = mean_of(s.rollouts);
      pts.push_back(p);
    }
  }
  // Per-difficulty training curves carry no rollout column; borrow the
  // method's training axis.
  for (auto& [key, pts] : cmp.curves) {
    const bool training_curve = std::find(kDifficultyCurves.begin(), kDifficultyCurves.end(),
                                          std::get<1>(key)) != kDifficultyCurves.end();
    if (!training_curve || std::get<2>(key) == "train") continue;
    const auto* axis = cmp.find(std::get<0>(key), "train_score_mean", "train");
    if (!axis) continue;
    for (auto& p : pts) {
      auto it = std::lower_bound(axis->begin(), axis->end(), p.step,
                                 [](const CurvePoint& a, int step) { return a.step < step; });
      if (it != axis->end() && it->step == p.step) p.cumulative_rollouts = it->cumulative_rollouts;
    }
  }
  return cmp;
}

void write_curves_csv(std::ostream& out, const Comparison& cmp) {
  out << "# " << kCurvesSchema << '\n';
  out << "method,curve,split,step,cumulative_rollouts,mean,std,repeats\n";
  for (const auto& m : cmp.methods) {
    for (const auto& [key, pts] : cmp.curves) {
      if (std::get<0>(key) != m) continue;
      for (const auto& p : pts) {
        out << fmt::format("{},{},{},{},{},{},{},{}\n", m, std::get<1>(key), std::get<2>(key),
                           p.step, num(p.cumulative_rollouts), num(p.mean),
                           p.std ? num(*p.std) : "NA", p.repeats);
      }
    }
  }
}

void write_final_csv(std::ostream& out, const Comparison& cmp) {
  out << "# " << kFinalSchema << '\n';
  out << "method,curve,split,step,mean,std,repeats\n";
  for (const auto& m : cmp.methods) {
    for (const auto& [key, pts] : cmp.curves) {
      if (std::get<0>(key) != m || pts.empty()) continue;
      const auto& p = pts.back();
      out << fmt::format("{},{},{},{},{},{},{}\n", m, std::get<1>(key), std::get<2>(key), p.step,
                         num(p.mean), p.std ? num(*p.std) : "NA", p.repeats);
    }
  }
}

std::string final_table(const Comparison& cmp) {
  struct Col {
    std::string title, curve, split;
    bool tail;
  };
  const std::vector<Col> cols = {
      {"pass", "final_pass_rate", "all", false},   {"easy", "final_pass_rate", "easy", false},
      {"medium", "final_pass_rate", "medium", false}, {"hard", "final_pass_rate", "hard", false},
      {"score", "avg_score", "all", false},        {"entropy*", "entropy", "train", true},
      {"grad_norm", "grad_norm", "train", false},
  };
  std::string out = fmt::format("{:<28}", "method");
  for (const auto& c : cols) out += fmt::format("{:>16}", c.title);
  out += '\n';
  for (const auto& m : cmp.methods) {
    out += fmt::format("{:<28}", m);
    for (const auto& c : cols) {
      const auto* pts = cmp.find(m, c.curve, c.split);
      if (!pts || pts->empty()) {
        out += fmt::format("{:>16}", "-");
        continue;
      }
      if (c.curve == "grad_norm") {
        out += fmt::format("{:>16.4f}", tail_mean(*pts, 1.0));
      } else if (c.tail) {
        out += fmt::format("{:>16.4f}", tail_mean(*pts, 0.2));
      } else {
        const auto& p = pts->back();
        out += p.std ? fmt::format("{:>16}", fmt::format("{:.3f}+/-{:.3f}", p.mean, *p.std))
                     : fmt::format("{:>16.3f}", p.mean);
      }
    }
    out += '\n';
  }
  out += "(pass columns: final step, mean+/-std over repeats; entropy*: mean over the last 20% "
         "of steps; grad_norm: mean over all steps)\n";
  return out;
}

std::optional<int> first_step_reaching(const std::vector<CurvePoint>& points, double target) {
  for (const auto& p : points) {
    if (p.mean >= target) return p.step;
  }
  return std::nullopt;
}

double tail_mean(const std::vector<CurvePoint>& points, double fraction) {
  if (points.empty()) throw std::invalid_argument("tail_mean of an empty curve");
  const auto n = points.size();
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  double s = 0.0;
  for (std::size_t i = n - std::min(k, n); i < n; ++i) s += points[i].mean;
  return s / static_cast<double>(std::min(k, n));
}

double tail_slope(const std::vector<CurvePoint>& points, double fraction) {
  if (points.empty()) throw std::invalid_argument("tail_slope of an empty curve");
  const double start = (1.0 - fraction) * points.back().step;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const auto& p : points) {
    if (p.step < start) continue;
    sx += p.step;
    sy += p.mean;
    sxx += static_cast<double>(p.step) * p.step;
    sxy += p.step * p.mean;
    ++n;
  }
  const double denom = n * sxx - sx * sx;
  if (n < 2 || denom == 0.0) throw std::invalid_argument("tail_slope needs two distinct steps");
  return (n * sxy - sx * sy) / denom;
}

std::string render_svg(const Comparison& cmp, const std::string& curve, const std::string& split,
                       bool rollout_axis) {
  constexpr double W = 640, H = 400, L = 64, R = 150, T = 36, B = 48;
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                            "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& m : cmp.methods) {
    if (const auto* pts = cmp.find(m, curve, split)) {
      for (const auto& p : *pts) {
        const double x = rollout_axis ? p.cumulative_rollouts : p.step;
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, p.mean - p.std.value_or(0.0));
        ymax = std::max(ymax, p.mean + p.std.value_or(0.0));
      }
    }
  }
  if (xmin > xmax) return {};
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto sx = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" "
      "fill=\"white\"/>\n",
      W, H);
  out += fmt::format("<text x=\"{}\" y=\"20\" font-size=\"14\">{} ({})</text>\n", L, curve, split);
  out += fmt::format(
      "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n"
      "<line x1=\"{0}\" y1=\"{3}\" x2=\"{0}\" y2=\"{1}\" stroke=\"black\"/>\n",
      L, H - B, W - R, T);
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0, fy = ymin + (ymax - ymin) * i / 4.0;
    out += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.4g}</text>\n",
                       sx(fx), H - B + 16, fx);
    out += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", L - 6,
                       sy(fy) + 4, fy);
  }
  out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (L + W - R) / 2,
                     H - 10, rollout_axis ? "cumulative rollouts" : "step");
  std::size_t color = 0;
  for (const auto& m : cmp.methods) {
    const auto* pts = cmp.find(m, curve, split);
    if (!pts || pts->empty()) continue;
    const char* c = kColors[color++ % std::size(kColors)];
    std::string band_top, band_bottom, line;
    for (const auto& p : *pts) {
      const double x = sx(rollout_axis ? p.cumulative_rollouts : p.step);
      line += fmt::format("{:.1f},{:.1f} ", x, sy(p.mean));
      band_top += fmt::format("{:.1f},{:.1f} ", x, sy(p.mean + p.std.value_or(0.0)));
    }
    for (auto it = pts->rbegin(); it != pts->rend(); ++it) {
      const double x = sx(rollout_axis ? it->cumulative_rollouts : it->step);
      band_bottom += fmt::format("{:.1f},{:.1f} ", x, sy(it->mean - it->std.value_or(0.0)));
    }
    out += fmt::format("<polygon points=\"{}{}\" fill=\"{}\" fill-opacity=\"0.15\"/>\n", band_top,
                       band_bottom, c);
    out += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
                       line, c);
    const double ly = T + 16.0 * static_cast<double>(color);
    out += fmt::format(
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>"
        "<text x=\"{4}\" y=\"{5}\">{6}</text>\n",
        W - R + 8, ly, W - R + 24, c, W - R + 28, ly + 4, m);
  }
  out += "</svg>\n";
  return out;
}

void write_outputs(const std::filesystem::path& dir, const Comparison& cmp, bool svg) {
  std::filesystem::create_directories(dir);
  std::ostringstream curves, final;
  write_curves_csv(curves, cmp);
  write_final_csv(final, cmp);
  experiment::write_file_atomic(dir / "curves.csv", curves.str());
  experiment::write_file_atomic(dir / "final.csv", final.str());
  experiment::write_file_atomic(dir / "final.txt", final_table(cmp));
  if (!svg) return;
  std::filesystem::create_directories(dir / "plots");
  std::set<std::pair<std::string, std::string>> families;
  for (const auto& [key, pts] : cmp.curves) families.emplace(std::get<1>(key), std::get<2>(key));
  for (const auto& [curve, split] : families) {
    const auto doc = render_svg(cmp, curve, split, false);
    if (!doc.empty()) {
      experiment::write_file_atomic(dir / "plots" / fmt::format("{}_{}.svg", curve, split), doc);
    }
    if (curve == "final_pass_rate") {
      experiment::write_file_atomic(
          dir / "plots" / fmt::format("{}_{}_by_rollouts.svg", curve, split),
          render_svg(cmp, curve, split, true));
    }
  }
}

}  // namespace fbos::compare
