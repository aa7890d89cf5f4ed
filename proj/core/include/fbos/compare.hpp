#ifndef FBOS_COMPARE_HPP_
#define FBOS_COMPARE_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace fbos::compare {

inline constexpr std::string_view kCurvesSchema = "fbos-curves v1";
inline constexpr std::string_view kFinalSchema = "fbos-final v1";

// A run directory whose CSVs are missing, malformed or of another schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CurvePoint {
  int step = 0;
  double cumulative_rollouts = 0.0;  // mean over repeats
  double mean = 0.0;
  std::optional<double> std;  // sample std over repeats; nullopt when repeats < 2
  int repeats = 0;
};

// (method, curve, split). Validation curves use split all/easy/medium/hard.
// Training curves use split "train", or easy/medium/hard for the
// per-difficulty training scores.
using CurveKey = std::tuple<std::string, std::string, std::string>;

struct Comparison {
  std::vector<std::string> methods;  // in first-seen order
  std::map<CurveKey, std::vector<CurvePoint>> curves;  // points sorted by step

  const std::vector<CurvePoint>* find(const std::string& method, const std::string& curve,
                                      const std::string& split) const;
};

// Reads eval.csv, metrics.csv and (if present) train_difficulty.csv from
// every directory. A method present in several directories is labelled
// "<dir name>/<method>".
Comparison load_runs(const std::vector<std::filesystem::path>& dirs);

// Writes curves.csv, final.csv and optionally plots/*.svg.
void write_outputs(const std::filesystem::path& dir, const Comparison& cmp, bool svg);

void write_curves_csv(std::ostream& out, const Comparison& cmp);
void write_final_csv(std::ostream& out, const Comparison& cmp);

// Human-readable table of each method's final values.
std::string final_table(const Comparison& cmp);

// First step at which `points` reaches `target` (mean >= target), if any.
std::optional<int> first_step_reaching(const std::vector<CurvePoint>& points, double target);

// Mean of the curve over its last `fraction` of points (at least one).
double tail_mean(const std::vector<CurvePoint>& points, double fraction);

// Least-squares slope of the mean against step over the points with
// step >= (1 - fraction) * last step.
double tail_slope(const std::vector<CurvePoint>& points, double fraction);

// Line chart of one curve for every method, against step or cumulative
// rollouts.
std::string render_svg(const Comparison& cmp, const std::string& curve, const std::string& split,
                       bool rollout_axis);

}  // namespace fbos::compare

#endif  // FBOS_COMPARE_HPP_
