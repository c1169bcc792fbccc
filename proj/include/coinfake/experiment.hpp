#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "coinfake/bank.hpp"
#include "coinfake/bpf.hpp"
#include "coinfake/evaluation.hpp"
#include "coinfake/exec.hpp"
#include "coinfake/seqdata.hpp"

namespace coinfake::experiment {

/// How the Simulator-type sequences are drawn. Kinds alternate TF, RSC; each
/// sequence draws its own starting marginal and covariance targets uniformly
/// from the given ranges.
struct SimulatorTypeConfig {
  double eps = 0.05;
  double delta = 0.05;
  std::size_t lags = 5;
  double r0_lo = 0.5;
  double r0_hi = 0.5;
  double beta0_lo = 0.0;
  double beta0_hi = 0.0;
};

struct ExperimentConfig {
  std::size_t count = 137;   ///< sequences per generated type
  std::size_t length = 200;
  double split = 0.8;
  std::size_t trials = 100;
  std::uint64_t seed = 1;

  SimulatorTypeConfig simulator;
  std::size_t mom_pool = 16;        ///< models fitted on fresh real sequences to generate MOM data
  std::size_t mom_pool_states = 6;

  bank::TrainOptions train;
  bank::GroupScore group_score = bank::GroupScore::MeanLogLik;
  bpf::FilterConfig filter;

  bool run_mom = true;
  bool run_bpf = true;

  /// Sequence files for types with no in-repo generator (GAN, Handwritten).
  std::map<Label, std::filesystem::path> external;

  void validate() const;
};

ExperimentConfig experiment_config_from_json(const std::string& text,
                                             const std::string& source = "<json>");
std::string experiment_config_to_json(const ExperimentConfig& config);

using Datasets = std::map<Label, std::vector<SequenceRecord>>;

/// Real, Simulator and MOM sequences regenerated from config.seed, plus any
/// external files.
Datasets build_datasets(const ExperimentConfig& config);

/// Real-vs-Simulator accuracies per trial (percent) for the ordering check
/// MOM >= BPF >= 60.
struct OrderingCheck {
  std::vector<double> mom;
  std::vector<double> bpf;
  std::size_t hits = 0;
};

struct ExperimentResult {
  std::vector<eval::EvalReport> reports;
  OrderingCheck ordering;
  std::vector<bank::FitFailure> fit_failures;
  std::vector<std::string> filter_failures;

  const eval::EvalReport* find(const std::string& method) const noexcept;
};

inline constexpr const char* kMomRestMethod = "MOM";
inline constexpr const char* kMomArgmaxMethod = "MOM (argmax)";
inline constexpr const char* kBpfMethod = "Particle filtering";

using Progress = std::function<void(const std::string&)>;

/// Fits one model per sequence and filters every sequence once, then runs
/// `trials` random 80:20 re-splits. Trial t splits with a stream derived from
/// (seed, t); bank membership, thresholds and test sets follow the split.
ExperimentResult run_experiment(const ExperimentConfig& config, const Datasets& data,
                                const Progress& progress = {});

}  // namespace coinfake::experiment
