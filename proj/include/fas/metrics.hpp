#pragma once

// Presentation-attack detection metrics.
//
// Label convention: 0 = bona fide (live), 1 = attack. The positive class is
// bona fide; a sample is predicted live iff its score (the model's
// probability of bona fide) is >= the threshold. Hence an attack accepted as
// live is a false positive and
//   APCER = FP / (FP + TN),  BPCER = FN / (FN + TP),  ACER = (APCER + BPCER) / 2.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace fas {

inline constexpr int kLabelLive = 0;
inline constexpr int kLabelAttack = 1;

struct ConfusionCounts {
  std::size_t tp = 0;  // live predicted live
  std::size_t fp = 0;  // attack predicted live
  std::size_t tn = 0;  // attack predicted attack
  std::size_t fn = 0;  // live predicted attack

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold);

// Rates are fractions in [0, 1]. Empty denominators throw UndefinedMetricError.
double apcer(const ConfusionCounts& c);
double bpcer(const ConfusionCounts& c);
double acer(double apcer_rate, double bpcer_rate);
double accuracy(const ConfusionCounts& c);

struct EvalReport {
  double threshold = 0.5;
  ConfusionCounts counts;
  double apcer = 0.0;
  double bpcer = 0.0;
  double acer = 0.0;
  double accuracy = 0.0;
};

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels, double threshold);

struct SweepPoint {
  double threshold;
  double apcer;
  double bpcer;
};

/// One point per distinct score plus -inf and +inf boundary thresholds, in
/// strictly increasing threshold order. Needs both classes present.
std::vector<SweepPoint> threshold_sweep(std::span<const double> scores, std::span<const int> labels);

/// Score-file row: `id,score,label,dataset`.
struct ScoreRecord {
  std::string id;
  double score = 0.0;
  int label = 0;
  std::string dataset;
};

/// Parses a score CSV. Malformed rows raise DataError naming the line; a file
/// with no data rows is an error.
std::vector<ScoreRecord> read_scores(std::istream& in);
std::vector<ScoreRecord> load_scores(const std::string& path);

/// Per-dataset reports keyed by dataset tag, plus "all".
std::map<std::string, EvalReport> evaluate_by_dataset(const std::vector<ScoreRecord>& records, double threshold);

/// Percent string of a rate with fixed decimals ("1.54").
std::string format_percent(double rate, int decimals = 2);

/// Aligned table: one row per metric (APCER, BPCER, ACER, Accuracy (%)), one
/// column per named report.
void render_report_table(std::ostream& out, const std::vector<std::pair<std::string, EvalReport>>& columns,
                         int decimals = 2);
/// CSV: column,threshold,tp,fp,tn,fn,apcer,bpcer,acer,accuracy (rates in %).
void write_report_csv(std::ostream& out, const std::vector<std::pair<std::string, EvalReport>>& columns);
/// CSV: threshold,apcer,bpcer (fractions).
void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& curve);

}  // namespace fas
