#include "coinfake/bpf.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "coinfake/error.hpp"

namespace coinfake::bpf {

void FilterConfig::validate() const {
  if (n0 < 1) throw std::invalid_argument("N0 must be at least 1");
  if (!(r_resample > 1.0)) throw std::invalid_argument("r_resample must exceed 1");
  if (!(eps >= 0.0 && eps <= 0.5)) throw std::invalid_argument("eps must lie in [0, 0.5]");
  if (!(delta >= 0.0 && delta <= 0.5)) throw std::invalid_argument("delta must lie in [0, 0.5]");
  double total = 0.0;
  for (double p : priors) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("priors must be non-negative");
    total += p;
  }
  if (!(total > 0.0)) throw std::invalid_argument("priors must not all be zero");
}

FilterConfig filter_config_from_json(const std::string& text, const std::string& source) {
  using nlohmann::json;
  try {
    const auto doc = json::parse(text);
    FilterConfig c;
    c.n0 = doc.value("N0", c.n0);
    c.r_resample = doc.value("r_resample", c.r_resample);
    c.eps = doc.value("eps", c.eps);
    c.delta = doc.value("delta", c.delta);
    c.lags = doc.value("Nc", c.lags);
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("priors")) {
      const auto& p = doc["priors"];
      if (p.is_array()) {
        if (p.size() != 3) throw InputError(source + ": priors needs three entries");
        for (std::size_t i = 0; i < 3; ++i) c.priors[i] = p[i].get<double>();
      } else {
        c.priors = {p.value("tf", 0.0), p.value("rsc", 0.0), p.value("real", 0.0)};
      }
    }
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw InputError(source + ": " + e.what());
    }
    return c;
  } catch (const json::exception& e) {
    throw InputError(source + ": malformed filter config: " + e.what());
  }
}

std::string filter_config_to_json(const FilterConfig& c) {
  nlohmann::json doc = {
      {"N0", c.n0},       {"r_resample", c.r_resample},
      {"eps", c.eps},     {"delta", c.delta},
      {"Nc", c.lags},     {"seed", c.seed},
      {"priors", {{"tf", c.priors[0]}, {"rsc", c.priors[1]}, {"real", c.priors[2]}}},
  };
  return doc.dump(2) + "\n";
}

Particle ParticleEnsemble::particle(std::size_t j) const {
  Particle p;
  p.theta = theta[j];
  p.r = r[j];
  p.weight = weight[j];
  p.beta.assign(beta.begin() + static_cast<std::ptrdiff_t>(j * lags),
                beta.begin() + static_cast<std::ptrdiff_t>((j + 1) * lags));
  const std::size_t depth = std::min(lags, time == 0 ? 0 : time - 1);
  for (std::size_t lag = 1; lag <= depth; ++lag) {
    p.past_r.push_back(r_ring[j * lags + (time - lag) % lags]);
  }
  return p;
}

void ParticleEnsemble::append_copy(const ParticleEnsemble& src, std::size_t j, double w) {
  theta.push_back(src.theta[j]);
  r.push_back(src.r[j]);
  weight.push_back(w);
  const auto b0 = static_cast<std::ptrdiff_t>(j * src.lags);
  const auto b1 = static_cast<std::ptrdiff_t>((j + 1) * src.lags);
  beta.insert(beta.end(), src.beta.begin() + b0, src.beta.begin() + b1);
  r_ring.insert(r_ring.end(), src.r_ring.begin() + b0, src.r_ring.begin() + b1);
}

ParticleEnsemble ParticleEnsemble::empty_like() const {
  ParticleEnsemble out;
  out.lags = lags;
  out.initial_count = initial_count;
  out.r_resample = r_resample;
  out.average_weight = average_weight;
  out.time = time;
  out.y_ring = y_ring;
  return out;
}

ParticleEnsemble init_particles(std::size_t n0, std::size_t lags, const std::array<double, 3>& priors,
                                double r_resample, RngStream& rng) {
  if (n0 < 1) throw std::invalid_argument("init_particles: N0 must be at least 1");
  ParticleEnsemble ens;
  ens.lags = lags;
  ens.initial_count = n0;
  ens.r_resample = r_resample;
  ens.average_weight = 1.0;
  ens.theta.resize(n0);
  ens.r.assign(n0, 0.5);
  ens.beta.assign(n0 * lags, 0.0);
  ens.r_ring.assign(n0 * lags, 0.5);
  ens.weight.assign(n0, 1.0);
  ens.y_ring.assign(lags, 0);
  for (auto& th : ens.theta) th = sim::kAllThetas[rng.categorical(priors)];
  return ens;
}

namespace {

// Per-particle body shared by the serial and OpenMP kernels. `past_r` is
// scratch space of at least `lags` entries.
inline void propagate_one(ParticleEnsemble& ens, std::size_t j, std::uint8_t obs,
                          const Dynamics& dyn, const RngStream& step_stream,
                          std::span<const std::uint8_t> past_y, std::span<double> past_r) {
  const std::size_t l = ens.lags;
  const std::size_t t = ens.time;  // already advanced to the step being absorbed
  const Theta th = ens.theta[j];
  RngStream rng = step_stream.child(j);

  double* ring = l ? &ens.r_ring[j * l] : nullptr;
  if (l && t >= 2) ring[(t - 1) % l] = ens.r[j];

  ens.r[j] = sim::step_marginal(th, ens.r[j], dyn.eps, dyn.delta, rng);
  double* b = l ? &ens.beta[j * l] : nullptr;
  for (std::size_t k = 0; k < l; ++k) b[k] = sim::step_covariance(th, b[k], dyn.eps, dyn.delta, rng);

  const std::size_t depth = past_y.size();
  for (std::size_t lag = 1; lag <= depth; ++lag) past_r[lag - 1] = ring[(t - lag) % l];

  const auto cp = sim::conditional_prob(ens.r[j], std::span<const double>(b, l),
                                        past_r.first(depth), past_y, /*strict=*/false);
  const double like = obs ? cp.value : 1.0 - cp.value;
  ens.weight[j] *= like / 0.5;
}

// Shared observation history Y_{t-1}, Y_{t-2}, ... for the step being absorbed.
std::vector<std::uint8_t> recent_observations(const ParticleEnsemble& ens) {
  const std::size_t t = ens.time;
  const std::size_t depth = std::min(ens.lags, t - 1);
  std::vector<std::uint8_t> past(depth);
  for (std::size_t lag = 1; lag <= depth; ++lag) past[lag - 1] = ens.y_ring[(t - lag) % ens.lags];
  return past;
}

void begin_step(ParticleEnsemble& ens) { ++ens.time; }

void end_step(ParticleEnsemble& ens, std::uint8_t obs) {
  if (ens.lags) ens.y_ring[ens.time % ens.lags] = obs;
}

}  // namespace

void propagate_serial(ParticleEnsemble& ens, std::uint8_t obs, const Dynamics& dyn,
                      const RngStream& step_stream) {
  begin_step(ens);
  const auto past_y = recent_observations(ens);
  std::vector<double> scratch(ens.lags);
  for (std::size_t j = 0; j < ens.size(); ++j) {
    propagate_one(ens, j, obs, dyn, step_stream, past_y, scratch);
  }
  end_step(ens, obs);
}

void propagate_omp(ParticleEnsemble& ens, std::uint8_t obs, const Dynamics& dyn,
                   const RngStream& step_stream) {
  begin_step(ens);
  const auto past_y = recent_observations(ens);
  const auto n = static_cast<std::ptrdiff_t>(ens.size());
#pragma omp parallel
  {
    std::vector<double> scratch(ens.lags);
#pragma omp for schedule(static)
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      propagate_one(ens, static_cast<std::size_t>(j), obs, dyn, step_stream, past_y, scratch);
    }
  }
  end_step(ens, obs);
}

void propagate(ParticleEnsemble& ens, std::uint8_t obs, const Dynamics& dyn,
               const RngStream& step_stream, Exec exec) {
  if (exec == Exec::Parallel) {
    propagate_omp(ens, obs, dyn, step_stream);
  } else {
    propagate_serial(ens, obs, dyn, step_stream);
  }
}

double average_weight(const ParticleEnsemble& ens) noexcept {
  double total = 0.0;
  for (double w : ens.weight) total += w;
  return total / static_cast<double>(ens.initial_count);
}

std::size_t offspring_count(double w, double average, double u) noexcept {
  const double ratio = w / average;
  const double whole = std::floor(ratio);
  return static_cast<std::size_t>(whole) + (u < ratio - whole ? 1 : 0);
}

BranchStats branch_resample(ParticleEnsemble& ens, RngStream& rng) {
  const double a = average_weight(ens);
  if (!(a > 0.0) || !std::isfinite(a)) {
    throw NumericalError("particle weights collapsed at step " + std::to_string(ens.time));
  }
  ens.average_weight = a;
  const double lo = a / ens.r_resample;
  const double hi = a * ens.r_resample;

  std::vector<std::size_t> extreme;
  for (std::size_t j = 0; j < ens.size(); ++j) {
    const double w = ens.weight[j];
    if (!(w > lo && w < hi)) extreme.push_back(j);
  }
  BranchStats stats;
  stats.kept = ens.size() - extreme.size();
  stats.branched = extreme.size();
  if (extreme.empty()) return stats;

  // One stratified uniform per branched particle, assigned in random order.
  const std::size_t k = extreme.size();
  std::vector<double> u(k);
  for (std::size_t i = 0; i < k; ++i) {
    u[i] = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(k);
  }
  rng.shuffle(std::span<double>(u));

  ParticleEnsemble next = ens.empty_like();
  next.theta.reserve(ens.size());
  for (std::size_t j = 0, e = 0; j < ens.size(); ++j) {
    if (e < k && extreme[e] == j) {
      ++e;
      continue;
    }
    next.append_copy(ens, j, ens.weight[j]);
  }
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = extreme[i];
    const std::size_t copies = offspring_count(ens.weight[j], a, u[i]);
    for (std::size_t c = 0; c < copies; ++c) next.append_copy(ens, j, a);
    stats.offspring += copies;
  }
  if (next.size() == 0) {
    throw NumericalError("particle population died out at step " + std::to_string(ens.time));
  }
  ens = std::move(next);
  return stats;
}

BranchStats step(ParticleEnsemble& ens, std::uint8_t obs, const Dynamics& dyn, RngStream& rng,
                 Exec exec) {
  propagate(ens, obs, dyn, rng.child(ens.time + 1), exec);
  return branch_resample(ens, rng);
}

ThetaPosterior posterior(const ParticleEnsemble& ens) {
  ThetaPosterior post;
  double total = 0.0;
  for (std::size_t j = 0; j < ens.size(); ++j) {
    post.mass[sim::theta_index(ens.theta[j])] += ens.weight[j];
    total += ens.weight[j];
  }
  if (total > 0.0) {
    for (auto& m : post.mass) m /= total;
  }
  return post;
}

sim::MomentTargets moment_estimate(const ParticleEnsemble& ens) {
  sim::MomentTargets est;
  est.nc = ens.lags;
  est.nf = ens.time;
  est.beta_bar.assign(ens.lags, 0.0);
  double total = 0.0;
  double r_acc = 0.0;
  for (std::size_t j = 0; j < ens.size(); ++j) {
    const double w = ens.weight[j];
    total += w;
    r_acc += w * ens.r[j];
    for (std::size_t k = 0; k < ens.lags; ++k) est.beta_bar[k] += w * ens.beta[j * ens.lags + k];
  }
  if (total > 0.0) {
    est.r_bar = r_acc / total;
    for (auto& b : est.beta_bar) b /= total;
  }
  return est;
}

FilterResult run_filter(std::span<const std::uint8_t> y, const FilterConfig& config,
                        RngStream& rng) {
  config.validate();
  if (y.empty()) throw std::invalid_argument("run_filter: empty observation sequence");
  auto ens = init_particles(config.n0, config.lags, config.priors, config.r_resample, rng);
  const Dynamics dyn{config.eps, config.delta};
  FilterResult result;
  result.particle_counts.reserve(y.size());
  for (auto obs : y) {
    if (obs > 1) throw std::invalid_argument("run_filter: non-binary observation");
    step(ens, obs, dyn, rng, config.exec);
    result.particle_counts.push_back(ens.size());
  }
  result.posterior = posterior(ens);
  result.estimate = moment_estimate(ens);
  return result;
}

FilterResult run_filter(std::span<const std::uint8_t> y, const FilterConfig& config,
                        std::uint64_t stream_id) {
  RngStream rng(config.seed, stream_id);
  return run_filter(y, config, rng);
}

double real_coin_error(const FilterResult& result) {
  return sim::err_metric(sim::real_coin_targets(result.estimate.nc, result.estimate.nf),
                         result.estimate);
}

BpfVerdict classify_sequence_bpf(std::span<const std::uint8_t> y, const FilterConfig& config,
                                 double tau, std::uint64_t stream_id) {
  if (!(tau > 0.0)) throw std::invalid_argument("classification threshold must be positive");
  const double err = real_coin_error(run_filter(y, config, stream_id));
  return {err <= tau, err};
}

Calibration calibrate_threshold(std::span<const double> errors, std::span<const bool> is_real) {
  if (errors.size() != is_real.size()) {
    throw std::invalid_argument("calibrate_threshold: errors and labels differ in length");
  }
  const auto n_real = static_cast<std::size_t>(std::count(is_real.begin(), is_real.end(), true));
  if (n_real == 0 || n_real == is_real.size()) {
    throw std::invalid_argument("calibrate_threshold: validation set needs both real and fake");
  }

  std::vector<std::size_t> order(errors.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return errors[a] < errors[b] || (errors[a] == errors[b] && a < b);
  });

  // Sweep thresholds upward: after consuming every item with err <= value,
  // real items below are right and fake items above are right.
  const std::size_t n = errors.size();
  std::size_t real_below = 0;
  std::size_t fake_below = 0;
  Calibration best{errors[order[0]], -1.0};
  bool have_midpoint = false;
  for (std::size_t i = 0; i < n;) {
    const double value = errors[order[i]];
    while (i < n && errors[order[i]] == value) {
      (is_real[order[i]] ? real_below : fake_below) += 1;
      ++i;
    }
    if (i == n) break;
    const double mid = 0.5 * (value + errors[order[i]]);
    const std::size_t fake_total = n - n_real;
    const double acc =
        static_cast<double>(real_below + (fake_total - fake_below)) / static_cast<double>(n);
    if (acc > best.accuracy) best = {mid, acc};
    have_midpoint = true;
  }
  if (!have_midpoint) {
    // Every error is identical: the only threshold on offer is that value.
    best = {errors[order[0]], static_cast<double>(n_real) / static_cast<double>(n)};
  }
  return best;
}

Calibration calibrate_threshold(std::span<const SequenceRecord> validation,
                                const FilterConfig& config) {
  const std::size_t n = validation.size();
  std::vector<double> errors(n);
  auto is_real = std::make_unique<bool[]>(n);
  for (std::size_t i = 0; i < n; ++i) {
    errors[i] = real_coin_error(run_filter(validation[i].flips, config, i));
    is_real[i] = validation[i].label == Label::Real;
  }
  return calibrate_threshold(errors, std::span<const bool>(is_real.get(), n));
}

std::string posterior_csv(const ThetaPosterior& post) {
  std::ostringstream out;
  out.precision(17);
  out << "theta,mass\n";
  for (Theta th : sim::kAllThetas) out << sim::to_string(th) << ',' << post.of(th) << '\n';
  return out.str();
}

std::string trace_csv(std::span<const std::size_t> counts) {
  std::ostringstream out;
  out << "t,particles\n";
  for (std::size_t t = 0; t < counts.size(); ++t) out << t + 1 << ',' << counts[t] << '\n';
  return out.str();
}

}  // namespace coinfake::bpf
