#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coinfake/exec.hpp"
#include "coinfake/mom.hpp"
#include "coinfake/rng.hpp"
#include "coinfake/seqdata.hpp"

namespace coinfake::bank {

struct BankEntry {
  Label label = Label::Real;
  std::string source_id;  ///< id of the training sequence the model was fitted to
  mom::MomModel model;

  bool operator==(const BankEntry&) const = default;
};

/// Labeled collection of fitted models. Immutable once trained.
class ModelBank {
 public:
  ModelBank() = default;
  explicit ModelBank(std::vector<BankEntry> entries) : entries_(std::move(entries)) {}

  void add(BankEntry entry) { entries_.push_back(std::move(entry)); }

  std::span<const BankEntry> entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t count(Label label) const noexcept;
  /// Labels with at least one entry, in tie-break order.
  std::vector<Label> labels() const;
  /// Entries restricted to the given labels, original order preserved.
  ModelBank subset(std::span<const Label> keep) const;

  bool operator==(const ModelBank&) const = default;

 private:
  std::vector<BankEntry> entries_;
};

struct TrainOptions {
  std::size_t s_init = 6;
  /// Raise to s_init + 1 after the first fit and refit.
  bool raise = true;
  double perturbation = 0.05;
  mom::FitOptions fit;
  Exec exec = Exec::Parallel;
};

struct FitFailure {
  Label label = Label::Real;
  std::string id;
  std::string message;
};

struct TrainResult {
  ModelBank bank;
  std::vector<FitFailure> failures;
};

using TrainingSets = std::map<Label, std::vector<SequenceRecord>>;

/// Fits one model to one sequence: canonical start with s_init states, EM,
/// then (if enabled) raise_states and EM again. Every draw comes from `rng`.
mom::MomModel train_sequence_model(std::span<const std::uint8_t> y, const TrainOptions& options,
                                   RngStream rng);

/// One model per training sequence, tagged with its label. Sequence i of label
/// L uses stream rng.child(index(L)).child(i), so results do not depend on the
/// thread count or on which other labels are present. Entries come out in
/// label order, then in input order. Throws InputError naming the label when a
/// set is empty. Fit failures are collected, not thrown.
TrainResult train_bank(const TrainingSets& sets, const TrainOptions& options, const RngStream& rng);

/// Log-likelihood of every record under every bank entry, row-major
/// (records x entries).
std::vector<double> score_matrix(const ModelBank& bank, std::span<const SequenceRecord> records,
                                 Exec exec = Exec::Parallel);

/// Log-likelihood of y under every entry, in entry order.
std::vector<double> score_sequence(const ModelBank& bank, std::span<const std::uint8_t> y);

/// How a label group's per-model log-likelihoods are combined.
enum class GroupScore {
  MeanLogLik,      ///< arithmetic mean of log-likelihoods (geometric mean of likelihoods)
  MeanLikelihood,  ///< log of the arithmetic mean of likelihoods, via log-sum-exp
};

std::string_view to_string(GroupScore rule) noexcept;
/// "mean-loglik" or "mean-likelihood"; anything else throws InputError.
GroupScore parse_group_score(std::string_view text);

/// Combines scores under `rule`. Values are summed in ascending order so the
/// result does not depend on the order they are given in. Empty input gives -inf.
double combine_scores(std::vector<double> values, GroupScore rule);

/// Group score per label. Labels without entries have count 0 and a score of
/// -inf.
struct GroupScores {
  std::array<double, 5> mean{};
  std::array<std::size_t, 5> count{};

  double of(Label label) const noexcept { return mean[static_cast<std::size_t>(label)]; }
};

GroupScores group_scores(const ModelBank& bank, std::span<const double> logliks,
                         GroupScore rule = GroupScore::MeanLogLik);

enum class Verdict { CorrectlyIdentified, IncorrectlyIdentified };

std::string_view to_string(Verdict verdict) noexcept;

struct ArgmaxDecision {
  Label label = Label::Real;
  double score = 0.0;  ///< winning group's score
};

struct RestDecision {
  Verdict verdict = Verdict::IncorrectlyIdentified;
  double own = 0.0;   ///< score of the entries carrying the true label
  double rest = 0.0;  ///< score of every other entry
};

/// Label with the largest group score; ties go to the earlier label in
/// Real < Simulator < MOM < GAN < Handwritten. Throws NumericalError if every
/// group score is -inf.
ArgmaxDecision decide_argmax(const ModelBank& bank, std::span<const double> logliks,
                             GroupScore rule = GroupScore::MeanLogLik);

/// Correctly identified iff the score of the true-label entries strictly
/// exceeds the score of all other entries taken together. Throws InputError if
/// either side is empty and NumericalError if both scores are -inf.
RestDecision decide_correct_vs_rest(const ModelBank& bank, std::span<const double> logliks,
                                    Label true_label, GroupScore rule = GroupScore::MeanLogLik);

ArgmaxDecision classify_with_bank(std::span<const std::uint8_t> y, const ModelBank& bank,
                                  GroupScore rule = GroupScore::MeanLogLik);
RestDecision classify_with_bank(std::span<const std::uint8_t> y, const ModelBank& bank,
                                Label true_label, GroupScore rule = GroupScore::MeanLogLik);

// Directory layout: manifest.json plus one model-NNNN.json per entry.

void save_bank(const ModelBank& bank, const std::filesystem::path& dir);
ModelBank load_bank(const std::filesystem::path& dir);

}  // namespace coinfake::bank
