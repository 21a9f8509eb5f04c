#include "fas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "fas/csv.hpp"
#include "fas/error.hpp"

namespace fas {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw DataError("scores (" + std::to_string(scores.size()) + ") and labels (" + std::to_string(labels.size()) +
                    ") differ in length");
  }
  if (scores.empty()) throw DataError("no scored samples");
  for (int label : labels) {
    if (label != kLabelLive && label != kLabelAttack) throw DataError("label must be 0 or 1, got " + std::to_string(label));
  }
}

}  // namespace

ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted_live = scores[i] >= threshold;
    if (labels[i] == kLabelLive) {
      (predicted_live ? c.tp : c.fn)++;
    } else {
      (predicted_live ? c.fp : c.tn)++;
    }
  }
  return c;
}

double apcer(const ConfusionCounts& c) {
  if (c.fp + c.tn == 0) throw UndefinedMetricError("APCER is undefined without attack samples");
  return static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
}

double bpcer(const ConfusionCounts& c) {
  if (c.fn + c.tp == 0) throw UndefinedMetricError("BPCER is undefined without bona fide samples");
  return static_cast<double>(c.fn) / static_cast<double>(c.fn + c.tp);
}

double acer(double apcer_rate, double bpcer_rate) { return (apcer_rate + bpcer_rate) / 2.0; }

double accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) throw UndefinedMetricError("accuracy is undefined without samples");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels, double threshold) {
  EvalReport r;
  r.threshold = threshold;
  r.counts = confusion(scores, labels, threshold);
  r.apcer = apcer(r.counts);
  r.bpcer = bpcer(r.counts);
  r.acer = acer(r.apcer, r.bpcer);
  r.accuracy = accuracy(r.counts);
  return r;
}

std::vector<SweepPoint> threshold_sweep(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  const auto attacks = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kLabelAttack));
  const std::size_t lives = labels.size() - attacks;
  if (attacks == 0 || lives == 0) throw UndefinedMetricError("threshold sweep needs both live and attack samples");

  // At threshold t, samples with score < t are predicted attack.
  std::vector<SweepPoint> curve;
  curve.push_back({-std::numeric_limits<double>::infinity(), 1.0, 0.0});
  std::size_t attacks_below = 0, lives_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    curve.push_back({t, static_cast<double>(attacks - attacks_below) / static_cast<double>(attacks),
                     static_cast<double>(lives_below) / static_cast<double>(lives)});
    for (; i < order.size() && scores[order[i]] == t; ++i) {
      (labels[order[i]] == kLabelAttack ? attacks_below : lives_below)++;
    }
  }
  curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return curve;
}

std::vector<ScoreRecord> read_scores(std::istream& in) {
  CsvReader reader(in, {"id", "score", "label", "dataset"});
  std::vector<ScoreRecord> out;
  while (auto row = reader.next()) {
    ScoreRecord r;
    r.id = row->at(0);
    r.score = reader.parse_double(row->at(1), "score");
    const std::string& label = row->at(2);
    if (label != "0" && label != "1") reader.fail("label must be 0 or 1, got '" + label + "'");
    r.label = label == "1" ? kLabelAttack : kLabelLive;
    r.dataset = row->at(3);
    out.push_back(std::move(r));
  }
  if (out.empty()) throw DataError("score file has no data rows");
  return out;
}

std::vector<ScoreRecord> load_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open score file " + path);
  try {
    return read_scores(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::map<std::string, EvalReport> evaluate_by_dataset(const std::vector<ScoreRecord>& records, double threshold) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> groups;
  for (const auto& r : records) {
    for (const std::string& key : {r.dataset, std::string("all")}) {
      groups[key].first.push_back(r.score);
      groups[key].second.push_back(r.label);
    }
  }
  std::map<std::string, EvalReport> out;
  for (const auto& [name, group] : groups) {
    try {
      out[name] = evaluate(group.first, group.second, threshold);
    } catch (const UndefinedMetricError& e) {
      throw UndefinedMetricError("dataset '" + name + "': " + e.what());
    }
  }
  return out;
}

std::string format_percent(double rate, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << rate * 100.0;
  return os.str();
}

void render_report_table(std::ostream& out, const std::vector<std::pair<std::string, EvalReport>>& columns,
                         int decimals) {
  std::size_t width = 10;
  for (const auto& [name, r] : columns) width = std::max(width, name.size() + 2);
  const int label_width = 15;
  out << std::left << std::setw(label_width) << "Metric";
  for (const auto& [name, r] : columns) out << std::right << std::setw(static_cast<int>(width)) << name;
  out << '\n';
  auto row = [&](const char* label, auto pick) {
    out << std::left << std::setw(label_width) << label;
    for (const auto& [name, r] : columns) {
      out << std::right << std::setw(static_cast<int>(width)) << format_percent(pick(r), decimals);
    }
    out << '\n';
  };
  row("APCER", [](const EvalReport& r) { return r.apcer; });
  row("BPCER", [](const EvalReport& r) { return r.bpcer; });
  row("ACER", [](const EvalReport& r) { return r.acer; });
  row("Accuracy (%)", [](const EvalReport& r) { return r.accuracy; });
  if (!columns.empty()) {
    out << "threshold: score >= " << columns.front().second.threshold << " => bona fide\n";
  }
}

void write_report_csv(std::ostream& out, const std::vector<std::pair<std::string, EvalReport>>& columns) {
  out << "column,threshold,tp,fp,tn,fn,apcer,bpcer,acer,accuracy\n";
  out << std::setprecision(10);
  for (const auto& [name, r] : columns) {
    out << name << ',' << r.threshold << ',' << r.counts.tp << ',' << r.counts.fp << ',' << r.counts.tn << ','
        << r.counts.fn << ',' << r.apcer * 100.0 << ',' << r.bpcer * 100.0 << ',' << r.acer * 100.0 << ','
        << r.accuracy * 100.0 << '\n';
  }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& curve) {
  out << "threshold,apcer,bpcer\n";
  out << std::setprecision(17);
  for (const auto& p : curve) out << p.threshold << ',' << p.apcer << ',' << p.bpcer << '\n';
}

}  // namespace fas
