#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "coinfake/rng.hpp"
#include "coinfake/seqdata.hpp"

namespace coinfake::eval {

/// Counts of (true row, predicted column). Rows and columns are named so the
/// same type serves label-vs-label and type-vs-{Real, Fake} tables.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  ConfusionMatrix(std::vector<std::string> rows, std::vector<std::string> cols);

  /// Builds a matrix from explicit counts; every row must have cols.size() entries.
  static ConfusionMatrix from_counts(std::vector<std::string> rows, std::vector<std::string> cols,
                                     const std::vector<std::vector<std::size_t>>& counts);

  void add(std::size_t row, std::size_t col, std::size_t n = 1);
  void merge(const ConfusionMatrix& other);

  std::size_t at(std::size_t row, std::size_t col) const { return counts_.at(row * cols_.size() + col); }
  std::size_t row_sum(std::size_t row) const;
  std::size_t total() const;
  /// at(row, correct_col) / row_sum(row); 0 for an empty row.
  double row_accuracy(std::size_t row, std::size_t correct_col) const;
  /// row_accuracy with the column of the same name as the row.
  double row_accuracy(std::size_t row) const;

  const std::vector<std::string>& rows() const noexcept { return rows_; }
  const std::vector<std::string>& cols() const noexcept { return cols_; }

  /// Plain-text table with "True <row>" / "Predicted <col>" headings.
  std::string to_text() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::vector<std::string> rows_;
  std::vector<std::string> cols_;
  std::vector<std::size_t> counts_;
};

struct TypeResult {
  Label label = Label::Real;
  double accuracy = 0.0;  ///< percent, mean over trials
  double stddev = 0.0;    ///< percent, sample standard deviation over trials
  std::size_t tested = 0;  ///< test sequences per trial (last trial)
};

struct EvalReport {
  std::string method;
  std::size_t trials = 0;
  std::vector<TypeResult> types;
  double overall = 0.0;         ///< percent, mean over trials of the pooled trial accuracy
  double overall_stddev = 0.0;
  std::vector<double> trial_overall;  ///< percent, one per trial
  ConfusionMatrix confusion;    ///< summed over trials

  const TypeResult* find(Label label) const noexcept;
};

/// Collects per-trial outcomes and reduces them to an EvalReport.
class EvalAccumulator {
 public:
  EvalAccumulator(std::vector<Label> types, std::vector<std::string> columns);

  void begin_trial();
  /// One classified test sequence. `column` indexes the predicted column.
  void record(Label truth, std::size_t column, bool correct);
  void end_trial();

  std::size_t trials() const noexcept { return trial_type_acc_.size(); }
  /// Percent accuracy of `type` in each finished trial.
  std::vector<double> trial_accuracy(Label type) const;

  EvalReport report(std::string method) const;

 private:
  std::size_t row_of(Label label) const;

  std::vector<Label> types_;
  ConfusionMatrix confusion_;
  bool open_ = false;
  std::vector<std::size_t> cur_correct_;
  std::vector<std::size_t> cur_total_;
  std::vector<std::vector<double>> trial_type_acc_;  // trial x type, percent
  std::vector<std::vector<std::size_t>> trial_tested_;
  std::vector<double> trial_overall_;
};

/// Mean and sample standard deviation (0 for fewer than two values).
struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};
MeanStd mean_std(std::span<const double> values);

/// Runs `trials` trials; trial t calls run(t, acc) between begin/end_trial.
using TrialRunner = std::function<void(std::size_t trial, EvalAccumulator& acc)>;
EvalReport evaluate(std::string method, std::vector<Label> types, std::vector<std::string> columns,
                    std::size_t trials, const TrialRunner& run);

/// Column names of binary Real-vs-Fake reporting.
inline const std::vector<std::string>& binary_columns() {
  static const std::vector<std::string> cols{"Real", "Fake"};
  return cols;
}

/// Fixed test sets scored by a Real-vs-Fake classifier. The classifier gets a
/// stream derived from (trial, type, index) and returns true for "real".
using BinaryClassifier = std::function<bool(const SequenceRecord&, RngStream&)>;
EvalReport evaluate_binary(std::string method, const std::map<Label, std::vector<SequenceRecord>>& test_sets,
                           std::size_t trials, const RngStream& rng, const BinaryClassifier& classify);

std::string report_to_json(const EvalReport& report);
std::string reports_to_json(std::span<const EvalReport> reports);
/// Method rows with accuracy and standard deviation lines, type columns plus Overall.
std::string reports_to_table(std::span<const EvalReport> reports);

}  // namespace coinfake::eval
