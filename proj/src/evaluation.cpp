#include "coinfake/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "coinfake/error.hpp"

namespace coinfake::eval {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> rows, std::vector<std::string> cols)
    : rows_(std::move(rows)), cols_(std::move(cols)), counts_(rows_.size() * cols_.size(), 0) {}

ConfusionMatrix ConfusionMatrix::from_counts(std::vector<std::string> rows,
                                             std::vector<std::string> cols,
                                             const std::vector<std::vector<std::size_t>>& counts) {
  if (counts.size() != rows.size()) throw std::invalid_argument("one count row per true class expected");
  ConfusionMatrix m(std::move(rows), std::move(cols));
  for (std::size_t r = 0; r < counts.size(); ++r) {
    if (counts[r].size() != m.cols_.size()) {
      throw std::invalid_argument("count row " + std::to_string(r + 1) + " has the wrong width");
    }
    for (std::size_t c = 0; c < counts[r].size(); ++c) m.add(r, c, counts[r][c]);
  }
  return m;
}

void ConfusionMatrix::add(std::size_t row, std::size_t col, std::size_t n) {
  if (row >= rows_.size() || col >= cols_.size()) throw std::out_of_range("confusion matrix cell");
  counts_[row * cols_.size() + col] += n;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.rows_ != rows_ || other.cols_ != cols_) {
    throw std::invalid_argument("cannot merge confusion matrices with different axes");
  }
  for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
}

std::size_t ConfusionMatrix::row_sum(std::size_t row) const {
  std::size_t s = 0;
  for (std::size_t c = 0; c < cols_.size(); ++c) s += at(row, c);
  return s;
}

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

double ConfusionMatrix::row_accuracy(std::size_t row, std::size_t correct_col) const {
  const auto n = row_sum(row);
  return n == 0 ? 0.0 : static_cast<double>(at(row, correct_col)) / static_cast<double>(n);
}

double ConfusionMatrix::row_accuracy(std::size_t row) const {
  const auto it = std::find(cols_.begin(), cols_.end(), rows_.at(row));
  if (it == cols_.end()) throw std::invalid_argument("no predicted column named " + rows_[row]);
  return row_accuracy(row, static_cast<std::size_t>(it - cols_.begin()));
}

std::string ConfusionMatrix::to_text() const {
  std::vector<std::string> header{"True/predicted"};
  for (const auto& c : cols_) header.push_back("Predicted " + c);
  std::vector<std::vector<std::string>> body;
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    std::vector<std::string> line{"True " + rows_[r]};
    for (std::size_t c = 0; c < cols_.size(); ++c) line.push_back(std::to_string(at(r, c)));
    body.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& line : body) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  const auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c == 0) {
        out << line[c] << std::string(width[c] - line[c].size(), ' ');
      } else {
        out << "  " << std::string(width[c] - line[c].size(), ' ') << line[c];
      }
    }
    out << '\n';
  };
  emit(header);
  for (const auto& line : body) emit(line);
  return out.str();
}

const TypeResult* EvalReport::find(Label label) const noexcept {
  for (const auto& t : types) {
    if (t.label == label) return &t;
  }
  return nullptr;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(ss / (n - 1.0));
  return out;
}

namespace {

std::vector<std::string> label_names(std::span<const Label> labels) {
  std::vector<std::string> out;
  for (Label l : labels) out.emplace_back(to_string(l));
  return out;
}

}  // namespace

EvalAccumulator::EvalAccumulator(std::vector<Label> types, std::vector<std::string> columns)
    : types_(std::move(types)), confusion_(label_names(types_), std::move(columns)) {
  if (types_.empty()) throw std::invalid_argument("evaluation needs at least one sequence type");
}

std::size_t EvalAccumulator::row_of(Label label) const {
  const auto it = std::find(types_.begin(), types_.end(), label);
  if (it == types_.end()) {
    throw std::invalid_argument("sequence type " + std::string(to_string(label)) +
                                " is not part of this evaluation");
  }
  return static_cast<std::size_t>(it - types_.begin());
}

void EvalAccumulator::begin_trial() {
  if (open_) throw std::logic_error("begin_trial called twice");
  open_ = true;
  cur_correct_.assign(types_.size(), 0);
  cur_total_.assign(types_.size(), 0);
}

void EvalAccumulator::record(Label truth, std::size_t column, bool correct) {
  if (!open_) throw std::logic_error("record outside a trial");
  const auto row = row_of(truth);
  confusion_.add(row, column);
  ++cur_total_[row];
  if (correct) ++cur_correct_[row];
}

void EvalAccumulator::end_trial() {
  if (!open_) throw std::logic_error("end_trial without begin_trial");
  open_ = false;
  std::vector<double> acc(types_.size());
  std::size_t correct = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < types_.size(); ++i) {
    if (cur_total_[i] == 0) {
      throw InputError("no test sequences of type " + std::string(to_string(types_[i])) +
                       " in trial " + std::to_string(trials() + 1));
    }
    acc[i] = 100.0 * static_cast<double>(cur_correct_[i]) / static_cast<double>(cur_total_[i]);
    correct += cur_correct_[i];
    total += cur_total_[i];
  }
  trial_type_acc_.push_back(std::move(acc));
  trial_tested_.push_back(cur_total_);
  trial_overall_.push_back(100.0 * static_cast<double>(correct) / static_cast<double>(total));
}

std::vector<double> EvalAccumulator::trial_accuracy(Label type) const {
  const auto row = row_of(type);
  std::vector<double> out;
  out.reserve(trial_type_acc_.size());
  for (const auto& t : trial_type_acc_) out.push_back(t[row]);
  return out;
}

EvalReport EvalAccumulator::report(std::string method) const {
  if (open_) throw std::logic_error("report requested inside an open trial");
  EvalReport r;
  r.method = std::move(method);
  r.trials = trials();
  r.confusion = confusion_;
  r.trial_overall = trial_overall_;
  for (std::size_t i = 0; i < types_.size(); ++i) {
    const auto per_trial = trial_accuracy(types_[i]);
    const auto ms = mean_std(per_trial);
    r.types.push_back({types_[i], ms.mean, ms.stddev,
                       trial_tested_.empty() ? 0 : trial_tested_.back()[i]});
  }
  const auto overall = mean_std(trial_overall_);
  r.overall = overall.mean;
  r.overall_stddev = overall.stddev;
  return r;
}

EvalReport evaluate(std::string method, std::vector<Label> types, std::vector<std::string> columns,
                    std::size_t trials, const TrialRunner& run) {
  if (trials < 1) throw std::invalid_argument("evaluation needs at least one trial");
  EvalAccumulator acc(std::move(types), std::move(columns));
  for (std::size_t t = 0; t < trials; ++t) {
    acc.begin_trial();
    run(t, acc);
    acc.end_trial();
  }
  return acc.report(std::move(method));
}

EvalReport evaluate_binary(std::string method,
                           const std::map<Label, std::vector<SequenceRecord>>& test_sets,
                           std::size_t trials, const RngStream& rng,
                           const BinaryClassifier& classify) {
  std::vector<Label> types;
  for (const auto& [label, records] : test_sets) {
    if (records.empty()) {
      throw InputError("test set for type " + std::string(to_string(label)) + " is empty");
    }
    types.push_back(label);
  }
  return evaluate(std::move(method), types, binary_columns(), trials,
                  [&](std::size_t t, EvalAccumulator& acc) {
                    const auto trial_stream = rng.child(t);
                    for (const auto& [label, records] : test_sets) {
                      const auto type_stream = trial_stream.child(static_cast<std::uint64_t>(label));
                      for (std::size_t i = 0; i < records.size(); ++i) {
                        auto s = type_stream.child(i);
                        const bool said_real = classify(records[i], s);
                        acc.record(label, said_real ? 0 : 1, said_real == (label == Label::Real));
                      }
                    }
                  });
}

namespace {

nlohmann::json confusion_json(const ConfusionMatrix& m) {
  nlohmann::json counts = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows().size(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < m.cols().size(); ++c) row.push_back(m.at(r, c));
    counts.push_back(std::move(row));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"counts", std::move(counts)}};
}

nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json types = nlohmann::json::array();
  for (const auto& t : r.types) {
    types.push_back({{"type", std::string(to_string(t.label))},
                     {"accuracy", t.accuracy},
                     {"stddev", t.stddev},
                     {"tested_per_trial", t.tested}});
  }
  return {{"method", r.method},
          {"trials", r.trials},
          {"types", std::move(types)},
          {"overall", r.overall},
          {"overall_stddev", r.overall_stddev},
          {"trial_overall", r.trial_overall},
          {"confusion", confusion_json(r.confusion)}};
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string report_to_json(const EvalReport& report) { return report_json(report).dump(2) + "\n"; }

std::string reports_to_json(std::span<const EvalReport> reports) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : reports) doc.push_back(report_json(r));
  return doc.dump(2) + "\n";
}

std::string reports_to_table(std::span<const EvalReport> reports) {
  // Column set: every type seen in any report, in label order, then Overall.
  std::vector<Label> cols;
  for (Label l : kAllLabels) {
    for (const auto& r : reports) {
      if (r.find(l)) {
        cols.push_back(l);
        break;
      }
    }
  }
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{""};
  for (Label l : cols) header.push_back(std::string(to_string(l)) + "(%)");
  header.emplace_back("Overall(%)");
  grid.push_back(header);
  for (const auto& r : reports) {
    grid.push_back({r.method});
    std::vector<std::string> acc{"  Accuracy"};
    std::vector<std::string> dev{"  Standard deviation"};
    for (Label l : cols) {
      const auto* t = r.find(l);
      acc.push_back(t ? fmt2(t->accuracy) : "-");
      dev.push_back(t ? fmt2(t->stddev) : "-");
    }
    acc.push_back(fmt2(r.overall));
    dev.push_back(fmt2(r.overall_stddev));
    grid.push_back(std::move(acc));
    grid.push_back(std::move(dev));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  for (const auto& line : grid) {
    std::string text;
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c == 0) {
        text += line[c] + std::string(width[c] - line[c].size(), ' ');
      } else {
        text += "  " + std::string(width[c] - line[c].size(), ' ') + line[c];
      }
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out << text << '\n';
  }
  return out.str();
}

}  // namespace coinfake::eval
