#include "coinfake/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "coinfake/error.hpp"

namespace coinfake::sim {

std::string_view to_string(Theta theta) noexcept {
  switch (theta) {
    case Theta::TrivialFaker: return "TrivialFaker";
    case Theta::RSCFaker: return "RSCFaker";
    case Theta::RealCoin: return "RealCoin";
  }
  return "RealCoin";
}

Theta parse_theta(std::string_view text) {
  if (text == "tf" || text == "TF" || text == "TrivialFaker") return Theta::TrivialFaker;
  if (text == "rsc" || text == "RSC" || text == "RSCFaker") return Theta::RSCFaker;
  if (text == "real" || text == "Real" || text == "RealCoin") return Theta::RealCoin;
  throw InputError("unknown signal kind '" + std::string(text) + "'");
}

std::size_t theta_index(Theta theta) noexcept {
  switch (theta) {
    case Theta::TrivialFaker: return 0;
    case Theta::RSCFaker: return 1;
    case Theta::RealCoin: return 2;
  }
  return 2;
}

void SignalParams::validate() const {
  if (!(r0 >= 0.0 && r0 <= 1.0)) throw std::invalid_argument("r0 must lie in [0, 1]");
  if (!(eps >= 0.0 && eps <= 0.5)) throw std::invalid_argument("eps must lie in [0, 0.5]");
  if (!(delta >= 0.0 && delta <= 0.5)) throw std::invalid_argument("delta must lie in [0, 0.5]");
  if (!beta0.empty() && beta0.size() != lags) {
    throw std::invalid_argument("beta0 must have one entry per lag");
  }
  for (double b : beta0) {
    if (!(b > -1.0 && b < 1.0)) throw std::invalid_argument("beta0 entries must lie in (-1, 1)");
  }
}

double step_marginal(Theta theta, double r, double eps, double delta, RngStream& rng) noexcept {
  if (theta == Theta::RealCoin) return 0.5;
  const double xi = rng.sign();
  double next = r + eps * r * (1.0 - r) * xi;
  if (theta == Theta::RSCFaker && rng.bernoulli(delta)) next += 1.0 - 2.0 * r;
  return std::clamp(next, 0.0, 1.0);
}

double step_covariance(Theta theta, double beta, double eps, double delta,
                       RngStream& rng) noexcept {
  if (theta == Theta::RealCoin) return 0.0;
  const double xi = rng.sign();
  const double drift = eps * beta * (beta + 1.0) * (1.0 - beta) * xi;
  double rho = 1.0;
  if (theta == Theta::RSCFaker && rng.bernoulli(delta)) rho = -1.0;
  return std::clamp(rho * beta + drift, -1.0, 1.0);
}

SignalState evolve_signal(Theta theta, std::size_t length, const SignalParams& params,
                          RngStream& rng) {
  params.validate();
  if (length < 1) throw std::invalid_argument("signal length must be at least 1");
  SignalState s;
  s.theta = theta;
  s.lags = params.lags;
  s.eps = params.eps;
  s.delta = params.delta;
  s.r.resize(length);
  s.beta.resize(length * params.lags);

  if (theta == Theta::RealCoin) {
    std::fill(s.r.begin(), s.r.end(), 0.5);
    std::fill(s.beta.begin(), s.beta.end(), 0.0);
    return s;
  }

  double r = params.r0;
  std::vector<double> beta(params.lags);
  for (std::size_t j = 0; j < params.lags; ++j) beta[j] = params.initial_beta(j);
  for (std::size_t k = 0; k < length; ++k) {
    r = step_marginal(theta, r, params.eps, params.delta, rng);
    for (auto& b : beta) b = step_covariance(theta, b, params.eps, params.delta, rng);
    s.r[k] = r;
    std::copy(beta.begin(), beta.end(), s.beta.begin() + static_cast<std::ptrdiff_t>(k * params.lags));
  }
  return s;
}

SignalState constant_signal(std::size_t length, double r, std::span<const double> beta) {
  SignalState s;
  s.theta = Theta::TrivialFaker;
  s.lags = beta.size();
  s.r.assign(length, r);
  s.beta.reserve(length * beta.size());
  for (std::size_t k = 0; k < length; ++k) s.beta.insert(s.beta.end(), beta.begin(), beta.end());
  return s;
}

ConditionalProb conditional_prob(double r_k, std::span<const double> beta_k,
                                 std::span<const double> past_r,
                                 std::span<const std::uint8_t> past_y, bool strict) {
  const std::size_t m = std::min({beta_k.size(), past_r.size(), past_y.size()});
  double raw = r_k;
  for (std::size_t j = 0; j < m; ++j) {
    const double b = beta_k[j];
    if (b == 0.0) continue;
    const double rp = past_r[j];
    const double var = rp * (1.0 - rp);
    if (!(var > 0.0)) {
      if (strict) {
        throw NumericalError("degenerate variance at lag " + std::to_string(j + 1) +
                             " (r = " + std::to_string(rp) + ")");
      }
      continue;
    }
    raw += b * (static_cast<double>(past_y[j]) - rp) / var;
  }
  return {std::clamp(raw, 0.0, 1.0), raw};
}

namespace {

// Fills lag-ordered views (lag 1 first) of r and Y before step k (1-based).
void gather_past(const SignalState& signal, std::span<const std::uint8_t> flips, std::size_t k,
                 std::vector<double>& past_r, std::vector<std::uint8_t>& past_y) {
  const std::size_t m = std::min(signal.lags, k - 1);
  past_r.resize(m);
  past_y.resize(m);
  for (std::size_t j = 1; j <= m; ++j) {
    past_r[j - 1] = signal.r[k - j - 1];
    past_y[j - 1] = flips[k - j - 1];
  }
}

}  // namespace

double conditional_prob(const SignalState& signal, std::span<const std::uint8_t> flips,
                        std::size_t k) {
  if (k < 1 || k > signal.length()) throw std::invalid_argument("flip index out of range");
  if (flips.size() < k - 1) throw std::invalid_argument("not enough past flips");
  std::vector<double> past_r;
  std::vector<std::uint8_t> past_y;
  gather_past(signal, flips, k, past_r, past_y);
  return conditional_prob(signal.r[k - 1], signal.beta_row(k), past_r, past_y).value;
}

SequenceRecord sample_sequence(const SignalState& signal, RngStream& rng, std::string id,
                               SamplingStats* stats) {
  const std::size_t n = signal.length();
  SequenceRecord rec{std::move(id),
                     signal.theta == Theta::RealCoin ? Label::Real : Label::Simulator,
                     Flips(n)};
  std::vector<double> past_r;
  std::vector<std::uint8_t> past_y;
  for (std::size_t k = 1; k <= n; ++k) {
    gather_past(signal, rec.flips, k, past_r, past_y);
    const auto cp = conditional_prob(signal.r[k - 1], signal.beta_row(k), past_r, past_y);
    if (stats && cp.clamped()) ++stats->clamp_events;
    rec.flips[k - 1] = rng.uniform() < cp.value ? 1 : 0;
  }
  return rec;
}

MomentTargets real_coin_targets(std::size_t nc, std::size_t nf) {
  return {0.5, std::vector<double>(nc, 0.0), nc, nf};
}

MomentTargets estimate_moments(std::span<const SequenceRecord> records, std::size_t nc) {
  if (records.empty()) throw std::invalid_argument("estimate_moments: no records");
  const std::size_t n = records.front().length();
  for (const auto& r : records) {
    if (r.length() != n) throw std::invalid_argument("estimate_moments: records differ in length");
  }
  if (nc >= n) throw std::invalid_argument("estimate_moments: lag count must be below the length");

  double ones = 0.0;
  for (const auto& r : records) {
    for (auto f : r.flips) ones += f;
  }
  MomentTargets m;
  m.nc = nc;
  m.nf = n;
  m.r_bar = ones / static_cast<double>(records.size() * n);
  m.beta_bar.assign(nc, 0.0);
  for (std::size_t j = 1; j <= nc; ++j) {
    double acc = 0.0;
    for (const auto& r : records) {
      for (std::size_t k = j; k < n; ++k) {
        acc += (r.flips[k] - m.r_bar) * (r.flips[k - j] - m.r_bar);
      }
    }
    m.beta_bar[j - 1] = acc / static_cast<double>(records.size() * (n - j));
  }
  return m;
}

double err_metric(const MomentTargets& target, const MomentTargets& estimate) {
  if (target.nc != estimate.nc || target.beta_bar.size() != target.nc ||
      estimate.beta_bar.size() != estimate.nc) {
    throw std::invalid_argument("err_metric: lag counts do not match");
  }
  const double dr = target.r_bar - estimate.r_bar;
  double acc = dr * dr;
  for (std::size_t j = 0; j < target.nc; ++j) {
    const double db = target.beta_bar[j] - estimate.beta_bar[j];
    acc += db * db;
  }
  return acc / static_cast<double>(target.nc + 1);
}

SimulatorConfig simulator_config_from_json(const std::string& text, const std::string& source) {
  using nlohmann::json;
  try {
    const auto doc = json::parse(text);
    SimulatorConfig c;
    c.kind = parse_theta(doc.value("kind", std::string("tf")));
    c.length = doc.value("N", c.length);
    c.params.lags = doc.value("l", c.params.lags);
    c.params.eps = doc.value("eps", c.params.eps);
    c.params.delta = doc.value("delta", c.params.delta);
    c.params.r0 = doc.value("r0", c.params.r0);
    if (doc.contains("beta0")) {
      const auto& b = doc["beta0"];
      if (b.is_number()) {
        c.params.beta0.assign(c.params.lags, b.get<double>());
      } else {
        c.params.beta0 = b.get<std::vector<double>>();
      }
    }
    c.seed = doc.value("seed", std::uint64_t{0});
    try {
      c.params.validate();
    } catch (const std::invalid_argument& e) {
      throw InputError(source + ": " + e.what());
    }
    return c;
  } catch (const json::exception& e) {
    throw InputError(source + ": malformed simulator config: " + e.what());
  }
}

std::string simulator_config_to_json(const SimulatorConfig& c) {
  nlohmann::json doc = {
      {"kind", std::string(to_string(c.kind))},
      {"N", c.length},
      {"l", c.params.lags},
      {"eps", c.params.eps},
      {"delta", c.params.delta},
      {"r0", c.params.r0},
      {"beta0", c.params.beta0},
      {"seed", c.seed},
  };
  return doc.dump(2) + "\n";
}

std::vector<SequenceRecord> simulate_batch(const SimulatorConfig& config, std::size_t count,
                                           const RngStream& rng, SamplingStats* stats) {
  std::vector<SequenceRecord> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    auto child = rng.child(k);
    const auto signal = evolve_signal(config.kind, config.length, config.params, child);
    out.push_back(sample_sequence(signal, child, "sim-" + std::to_string(k + 1), stats));
  }
  return out;
}

}  // namespace coinfake::sim
