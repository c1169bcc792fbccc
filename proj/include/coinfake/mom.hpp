#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coinfake/rng.hpp"
#include "coinfake/seqdata.hpp"

namespace coinfake::mom {

/// Training provenance carried with a fitted model.
struct FitMeta {
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  double loglik = 0.0;
  /// Rows left untouched by an EM update because their expected count was zero,
  /// e.g. "p[3]" or "q[2][1]".
  std::vector<std::string> frozen_rows;

  bool operator==(const FitMeta&) const = default;
};

/// Pairwise Markov chain (X hidden with `states()` values, Y binary observed).
///
///   P(X_t = x', Y_t = y' | X_{t-1} = x, Y_{t-1} = y) = p(x, x') * q(x', y, y')
///   (X_0, Y_0) ~ mu
///
/// q is indexed by the destination hidden state. Y_0 is never observed: an
/// observed sequence is Y_1..Y_N.
class MomModel {
 public:
  MomModel() = default;
  /// All-zero parameters; callers fill them in.
  explicit MomModel(std::size_t states);

  std::size_t states() const noexcept { return s_; }

  double p(std::size_t from, std::size_t to) const noexcept { return p_[from * s_ + to]; }
  double& p(std::size_t from, std::size_t to) noexcept { return p_[from * s_ + to]; }
  double q(std::size_t x, int y, int y_next) const noexcept { return q_[(x * 2 + y) * 2 + y_next]; }
  double& q(std::size_t x, int y, int y_next) noexcept { return q_[(x * 2 + y) * 2 + y_next]; }
  double mu(std::size_t x, int y) const noexcept { return mu_[x * 2 + y]; }
  double& mu(std::size_t x, int y) noexcept { return mu_[x * 2 + y]; }

  std::span<const double> p_data() const noexcept { return p_; }
  std::span<const double> q_data() const noexcept { return q_; }
  std::span<const double> mu_data() const noexcept { return mu_; }

  /// Throws std::invalid_argument if a stochasticity constraint is off by more
  /// than `tol` or an entry is negative/non-finite.
  void validate(double tol = 1e-12) const;

  /// Same hidden dynamics with states renamed: new state k is old state perm[k].
  MomModel permuted(std::span<const std::size_t> perm) const;

  FitMeta meta;

  bool operator==(const MomModel&) const = default;

 private:
  std::size_t s_ = 0;
  std::vector<double> p_;
  std::vector<double> q_;
  std::vector<double> mu_;
};

/// Starting point for EM: uniform emissions (every q entry 1/2), uniform mu
/// (1/(2s)), and each row of p drawn from a flat Dirichlet.
MomModel canonical_model(std::size_t states, RngStream& rng);

/// Every entry of p, q and mu uniform.
MomModel uniform_model(std::size_t states);

/// Filtered hidden-state distributions and per-step normalizers.
struct ForwardResult {
  std::size_t states = 0;
  std::size_t length = 0;
  std::vector<double> pi0;   ///< states x 2, equals mu
  std::vector<double> pi;    ///< length x states, row n-1 holds pi_n
  std::vector<double> norm;  ///< c_n for n = 1..length
  std::vector<double> logc;  ///< log c_n
  double loglik = 0.0;
  /// First 1-based step whose normalizer vanished; loglik is -inf when set.
  std::optional<std::size_t> impossible_step;

  double pi_at(std::size_t n, std::size_t x) const noexcept { return pi[(n - 1) * states + x]; }
  double c(std::size_t n) const noexcept { return norm[n - 1]; }
};

/// Scaled backward quantities. chi_n(x) = P(Y_{n+1..N} | X_n = x, Y_n) / (c_{n+1}...c_N),
/// so pi_n(x) * chi_n(x) is the smoothed posterior of X_n and sums to one over x.
struct BackwardResult {
  std::size_t states = 0;
  std::size_t length = 0;
  std::vector<double> chi0;  ///< states x 2: P(Y_{1..N} | X_0, Y_0) / (c_1...c_N)
  std::vector<double> chi;   ///< (length-1) x states, row n-1 holds chi_n

  double chi_at(std::size_t n, std::size_t x) const noexcept { return chi[(n - 1) * states + x]; }
};

ForwardResult forward_pass(const MomModel& model, std::span<const std::uint8_t> y);

/// Throws NumericalError when `fwd` reports an impossible sequence.
BackwardResult backward_pass(const MomModel& model, std::span<const std::uint8_t> y,
                             const ForwardResult& fwd);

/// One Baum-Welch update of (p, q, mu). Rows whose expected count is zero are
/// left as they were and listed in meta.frozen_rows. Throws NumericalError if y
/// is impossible under `model`.
MomModel em_step(const MomModel& model, std::span<const std::uint8_t> y);

struct FitOptions {
  std::size_t max_iters = 500;
  double tol = 1e-6;
};

/// Runs em_step from `init` until the log-likelihood changes by less than tol
/// or max_iters updates have been made. When `trace` is given it receives the
/// log-likelihood of every model visited, starting with `init`.
MomModel fit(std::span<const std::uint8_t> y, const MomModel& init, const FitOptions& options,
             std::vector<double>* trace = nullptr);

/// fit() from canonical_model(states, rng); meta.seed records rng.seed().
MomModel fit_canonical(std::span<const std::uint8_t> y, std::size_t states, RngStream& rng,
                       const FitOptions& options, std::vector<double>* trace = nullptr);

/// Adds one hidden state. The new state starts as a copy of a randomly chosen
/// parent state mixed with `perturbation`-scaled flat-Dirichlet noise; its
/// inbound transition column and initial mass are `perturbation`-scaled
/// Dirichlet draws. With perturbation 0 the new state is unreachable and every
/// likelihood is unchanged.
MomModel raise_states(const MomModel& model, RngStream& rng, double perturbation = 0.05);

/// log P(Y_1..Y_N); -inf for impossible sequences.
double log_likelihood(const MomModel& model, std::span<const std::uint8_t> y);

/// Simulates (X, Y) for `length` steps after (X_0, Y_0) ~ mu and keeps Y_1..Y_N.
SequenceRecord generate_sequence(const MomModel& model, std::size_t length, RngStream& rng,
                                 std::string id = "mom");

// Persistence: {label, s, p, q, mu, meta{seed, iterations, loglik}}.

struct LabeledModel {
  Label label = Label::Real;
  MomModel model;
};

std::string model_to_json(const LabeledModel& model);
LabeledModel model_from_json(const std::string& text, const std::string& source = "<json>");
void save_model(const LabeledModel& model, const std::filesystem::path& path);
LabeledModel load_model(const std::filesystem::path& path);

}  // namespace coinfake::mom
