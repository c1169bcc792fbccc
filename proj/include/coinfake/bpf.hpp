#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coinfake/exec.hpp"
#include "coinfake/rng.hpp"
#include "coinfake/seqdata.hpp"
#include "coinfake/simulator.hpp"

namespace coinfake::bpf {

using sim::Theta;

struct FilterConfig {
  std::size_t n0 = 10000;     ///< initial particle count N, also the normalizer of A_t
  double r_resample = 4.5;    ///< branch when a weight leaves (A/r, rA)
  double eps = 0.05;
  double delta = 0.05;
  std::size_t lags = 5;       ///< N_c = l
  std::uint64_t seed = 0;
  std::array<double, 3> priors{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};  ///< TF, RSC, Real
  Exec exec = Exec::Parallel;

  void validate() const;
};

/// {N0, r_resample, eps, delta, Nc, seed, priors}; priors may be [tf, rsc, real]
/// or {"tf": .., "rsc": .., "real": ..}.
FilterConfig filter_config_from_json(const std::string& text, const std::string& source = "<json>");
std::string filter_config_to_json(const FilterConfig& config);

/// Value snapshot of one particle.
struct Particle {
  Theta theta = Theta::RealCoin;
  double r = 0.5;
  std::vector<double> beta;    ///< current beta_{t, 1..l}
  std::vector<double> past_r;  ///< r_{t-1}, r_{t-2}, ... (most recent first, up to l)
  double weight = 1.0;
};

/// Structure-of-arrays particle population. The ring buffers hold the last l
/// marginals of each particle and the last l shared observations; slot
/// (k mod l) holds time k.
struct ParticleEnsemble {
  std::size_t lags = 0;
  std::size_t initial_count = 0;
  double r_resample = 4.5;
  double average_weight = 1.0;  ///< A_t = (1/N0) sum of weights
  std::size_t time = 0;         ///< observations absorbed so far

  std::vector<Theta> theta;
  std::vector<double> r;
  std::vector<double> beta;       ///< size() x lags
  std::vector<double> r_ring;     ///< size() x lags
  std::vector<double> weight;
  std::vector<std::uint8_t> y_ring;  ///< lags

  std::size_t size() const noexcept { return theta.size(); }
  Particle particle(std::size_t j) const;
  /// Appends a copy of particle j of `src` carrying weight w.
  void append_copy(const ParticleEnsemble& src, std::size_t j, double w);
  /// Empty population with the same shape parameters and shared history.
  ParticleEnsemble empty_like() const;
};

/// N0 particles at (r, beta) = (1/2, 0) with weight 1. Each theta is drawn from
/// `priors` (TF, RSC, Real; need not be normalized).
ParticleEnsemble init_particles(std::size_t n0, std::size_t lags, const std::array<double, 3>& priors,
                                double r_resample, RngStream& rng);

struct Dynamics {
  double eps = 0.05;
  double delta = 0.05;
};

/// Advances every particle's signal one step and multiplies its weight by
/// P(obs | particle) / (1/2). Particle j draws from step_stream.child(j).
void propagate_serial(ParticleEnsemble& ens, std::uint8_t obs, const Dynamics& dyn,
                      const RngStream& step_stream);
/// OpenMP version of propagate_serial; bit-identical output.
void propagate_omp(ParticleEnsemble& ens, std::uint8_t obs, const Dynamics& dyn,
                   const RngStream& step_stream);
void propagate(ParticleEnsemble& ens, std::uint8_t obs, const Dynamics& dyn,
               const RngStream& step_stream, Exec exec);

/// (1/N0) * sum of weights.
double average_weight(const ParticleEnsemble& ens) noexcept;

struct BranchStats {
  std::size_t kept = 0;
  std::size_t branched = 0;   ///< particles whose weight was outside (A/r, rA)
  std::size_t offspring = 0;  ///< copies produced by branched particles
};

/// Offspring count for a particle of weight w when the average is A, given its
/// uniform u: floor(w/A) + 1{u < frac(w/A)}.
std::size_t offspring_count(double w, double average, double u) noexcept;

/// Computes A_t, keeps the particles inside (A/r, rA) unchanged, and replaces
/// each particle outside by offspring_count() copies of weight A_t. The
/// branched particles' uniforms are stratified over [0, 1) and randomly
/// permuted. Throws NumericalError when the total weight is zero.
BranchStats branch_resample(ParticleEnsemble& ens, RngStream& rng);

/// One observation: propagate (child stream rng.child(t)) then branch.
BranchStats step(ParticleEnsemble& ens, std::uint8_t obs, const Dynamics& dyn, RngStream& rng,
                 Exec exec = Exec::Parallel);

/// Normalized weight mass per theta.
struct ThetaPosterior {
  std::array<double, 3> mass{};  ///< TF, RSC, Real
  double of(Theta theta) const noexcept { return mass[sim::theta_index(theta)]; }
};

ThetaPosterior posterior(const ParticleEnsemble& ens);

/// Weight-averaged current (r, beta) of the population.
sim::MomentTargets moment_estimate(const ParticleEnsemble& ens);

struct FilterResult {
  ThetaPosterior posterior;
  sim::MomentTargets estimate;
  std::vector<std::size_t> particle_counts;  ///< N_t after each step
};

/// Runs the filter over y. Throws NumericalError (naming the step) if the
/// population loses all weight.
FilterResult run_filter(std::span<const std::uint8_t> y, const FilterConfig& config,
                        RngStream& rng);

/// run_filter seeded from config.seed with stream `stream_id`.
FilterResult run_filter(std::span<const std::uint8_t> y, const FilterConfig& config,
                        std::uint64_t stream_id = 0);

/// err_metric between the filter's moment estimate and the real coin (1/2, 0).
double real_coin_error(const FilterResult& result);

struct BpfVerdict {
  bool is_real = true;
  double err = 0.0;
};

/// Real iff real_coin_error <= tau. tau must be positive.
BpfVerdict classify_sequence_bpf(std::span<const std::uint8_t> y, const FilterConfig& config,
                                 double tau, std::uint64_t stream_id = 0);

struct Calibration {
  double tau = 0.0;
  double accuracy = 0.0;
};

/// Picks the threshold maximizing accuracy of "err <= tau means real" among
/// the midpoints of consecutive distinct observed errors; ties go to the
/// smallest midpoint. Needs both classes present.
Calibration calibrate_threshold(std::span<const double> errors, std::span<const bool> is_real);

/// Runs the filter on each labeled record (stream = record index) and
/// calibrates on the resulting errors. Real-labeled records are the positive
/// class.
Calibration calibrate_threshold(std::span<const SequenceRecord> validation,
                                const FilterConfig& config);

std::string posterior_csv(const ThetaPosterior& posterior);
std::string trace_csv(std::span<const std::size_t> particle_counts);

}  // namespace coinfake::bpf
