#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coinfake/rng.hpp"
#include "coinfake/seqdata.hpp"

namespace coinfake::sim {

/// Which behaviour drives the signal. Values follow the indicator convention
/// TF = 1, RSC = 0, real coin = -1.
enum class Theta : int { TrivialFaker = 1, RSCFaker = 0, RealCoin = -1 };

inline constexpr Theta kAllThetas[3] = {Theta::TrivialFaker, Theta::RSCFaker, Theta::RealCoin};

std::string_view to_string(Theta theta) noexcept;
/// Accepts "tf", "rsc", "real" (and the long names printed by to_string).
Theta parse_theta(std::string_view text);
/// 0, 1, 2 for TF, RSC, Real: index into per-theta arrays.
std::size_t theta_index(Theta theta) noexcept;

struct SignalParams {
  std::size_t lags = 5;           ///< l = N_c, number of tracked covariance lags
  double eps = 0.05;              ///< step size of the +-1 perturbations
  double delta = 0.05;            ///< RSC sign-flip / reflection probability
  double r0 = 0.5;                ///< initial marginal
  std::vector<double> beta0;      ///< initial covariance per lag; empty means all zero

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
  double initial_beta(std::size_t j) const noexcept { return beta0.empty() ? 0.0 : beta0[j]; }
};

/// Marginal trajectory r_1..r_N and covariance targets beta_{k,j}.
struct SignalState {
  Theta theta = Theta::RealCoin;
  std::size_t lags = 0;
  double eps = 0.0;
  double delta = 0.0;
  std::vector<double> r;     ///< r[k-1] = r_k
  std::vector<double> beta;  ///< beta[(k-1)*lags + (j-1)] = beta_{k,j}

  std::size_t length() const noexcept { return r.size(); }
  double beta_at(std::size_t k, std::size_t j) const noexcept {
    return beta[(k - 1) * lags + (j - 1)];
  }
  std::span<const double> beta_row(std::size_t k) const noexcept {
    return std::span<const double>(beta).subspan((k - 1) * lags, lags);
  }
};

/// One step of the marginal's evolution law.
///   TF:   r + eps r(1-r) xi
///   RSC:  r + rho (1-2r) + eps r(1-r) xi,   P(rho = 1) = delta, else 0
///   Real: 1/2
/// xi is a fair +-1 draw. The result is clipped to [0, 1] against rounding.
double step_marginal(Theta theta, double r, double eps, double delta, RngStream& rng) noexcept;

/// One step of a covariance target's law.
///   TF:   b + eps b(b+1)(1-b) xi
///   RSC:  rho b + eps b(b+1)(1-b) xi,       P(rho = -1) = delta, else +1
///   Real: 0
double step_covariance(Theta theta, double beta, double eps, double delta, RngStream& rng) noexcept;

/// Trajectory of N steps starting from (r0, beta0). For RealCoin the signal is
/// the constant (1/2, 0) whatever the parameters.
SignalState evolve_signal(Theta theta, std::size_t length, const SignalParams& params,
                          RngStream& rng);

/// Constant signal (r, beta) of the given length, e.g. for covariance checks.
SignalState constant_signal(std::size_t length, double r, std::span<const double> beta);

struct ConditionalProb {
  double value = 0.5;  ///< clamped to [0, 1]
  double raw = 0.5;    ///< before clamping
  bool clamped() const noexcept { return value != raw; }
};

/// Probability that the next flip is heads given the past:
///
///   r_k + sum_{j=1..m} beta_{k,j} (Y_{k-j} - r_{k-j}) / (r_{k-j}(1 - r_{k-j}))
///
/// clamped to [0, 1], where m = min(#lags, #past flips). `past_r` and `past_y`
/// are ordered most recent first (index 0 is lag 1). A lag with r_{k-j} in
/// {0, 1} and non-zero beta throws NumericalError when `strict`, and is skipped
/// otherwise.
ConditionalProb conditional_prob(double r_k, std::span<const double> beta_k,
                                 std::span<const double> past_r,
                                 std::span<const std::uint8_t> past_y, bool strict = true);

/// Same, reading r and beta from a trajectory. `flips` holds Y_1..Y_{k-1}.
double conditional_prob(const SignalState& signal, std::span<const std::uint8_t> flips,
                        std::size_t k);

struct SamplingStats {
  std::size_t clamp_events = 0;
};

/// Y_k = 1 iff U_k < conditional_prob(k), U_k uniform. Label is Real for a
/// RealCoin signal and Simulator otherwise.
SequenceRecord sample_sequence(const SignalState& signal, RngStream& rng,
                               std::string id = "sim", SamplingStats* stats = nullptr);

/// Marginal and lagged covariances, either targets or estimates.
struct MomentTargets {
  double r_bar = 0.5;
  std::vector<double> beta_bar;  ///< lags 1..nc
  std::size_t nc = 0;
  std::size_t nf = 0;
};

/// The real-coin moments (1/2, 0, ..., 0).
MomentTargets real_coin_targets(std::size_t nc, std::size_t nf);

/// Pooled estimates over equal-length records: r_bar is the mean flip and
/// beta_bar_j the mean of (Y_k - r_bar)(Y_{k-j} - r_bar) over every valid k.
MomentTargets estimate_moments(std::span<const SequenceRecord> records, std::size_t nc);

/// [(r - r_bar)^2 + sum_j (beta_j - beta_bar_j)^2] / (nc + 1).
double err_metric(const MomentTargets& target, const MomentTargets& estimate);

/// File form of a simulator run: {kind, N, l, eps, delta, r0, beta0, seed}.
struct SimulatorConfig {
  Theta kind = Theta::TrivialFaker;
  std::size_t length = 200;
  SignalParams params;
  std::uint64_t seed = 0;
};

SimulatorConfig simulator_config_from_json(const std::string& text,
                                           const std::string& source = "<json>");
std::string simulator_config_to_json(const SimulatorConfig& config);

/// Draws a fresh signal per record from `config` and samples it. Record k uses
/// stream child(k) of `rng` so records are independent of batch size.
std::vector<SequenceRecord> simulate_batch(const SimulatorConfig& config, std::size_t count,
                                           const RngStream& rng, SamplingStats* stats = nullptr);

}  // namespace coinfake::sim
