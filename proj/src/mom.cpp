#include "coinfake/mom.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "coinfake/error.hpp"

namespace coinfake::mom {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_sequence(std::span<const std::uint8_t> y) {
  if (y.size() < 2) throw std::invalid_argument("observation sequence needs at least two flips");
  for (auto v : y) {
    if (v > 1) throw std::invalid_argument("observation sequence has a non-binary entry");
  }
}

// Expected sufficient statistics of one sequence under the current model.
struct Counts {
  std::vector<double> trans;  // s x s
  std::vector<double> emis;   // s x 2 x 2
  std::vector<double> init;   // s x 2
};

Counts expected_counts(const MomModel& m, std::span<const std::uint8_t> y, const ForwardResult& fwd,
                       const BackwardResult& bwd) {
  const std::size_t s = m.states();
  const std::size_t n_obs = y.size();
  Counts c{std::vector<double>(s * s, 0.0), std::vector<double>(s * 4, 0.0),
           std::vector<double>(s * 2, 0.0)};

  // g_n(x') = q(x', Y_{n-1}, Y_n) chi_n(x') / c_n with chi_N = 1; shared by the
  // transition counts out of step n-1.
  std::vector<double> g(s);
  auto fill_g = [&](std::size_t n, int y_prev) {
    const double inv_c = 1.0 / fwd.c(n);
    for (std::size_t x = 0; x < s; ++x) {
      const double chi = n < n_obs ? bwd.chi_at(n, x) : 1.0;
      g[x] = m.q(x, y_prev, y[n - 1]) * chi * inv_c;
    }
  };

  // Step 0 -> 1: Y_0 is latent, so both of its values contribute.
  for (int y0 = 0; y0 < 2; ++y0) {
    fill_g(1, y0);
    for (std::size_t x0 = 0; x0 < s; ++x0) {
      const double w = m.mu(x0, y0);
      if (w == 0.0) continue;
      for (std::size_t x1 = 0; x1 < s; ++x1) {
        const double joint = w * m.p(x0, x1) * g[x1];
        c.trans[x0 * s + x1] += joint;
        c.emis[(x1 * 2 + y0) * 2 + y[0]] += joint;
      }
    }
  }
  for (std::size_t x = 0; x < s; ++x) {
    for (int y0 = 0; y0 < 2; ++y0) c.init[x * 2 + y0] = m.mu(x, y0) * bwd.chi0[x * 2 + y0];
  }

  for (std::size_t n = 1; n < n_obs; ++n) {
    fill_g(n + 1, y[n - 1]);
    for (std::size_t x = 0; x < s; ++x) {
      const double w = fwd.pi_at(n, x);
      if (w == 0.0) continue;
      for (std::size_t x2 = 0; x2 < s; ++x2) c.trans[x * s + x2] += w * m.p(x, x2) * g[x2];
    }
    // Smoothed posterior of X_{n+1}, credited to the observed bigram (Y_n, Y_{n+1}).
    for (std::size_t x = 0; x < s; ++x) {
      const double chi = n + 1 < n_obs ? bwd.chi_at(n + 1, x) : 1.0;
      c.emis[(x * 2 + y[n - 1]) * 2 + y[n]] += fwd.pi_at(n + 1, x) * chi;
    }
  }
  return c;
}

MomModel apply_counts(const MomModel& m, const Counts& c) {
  const std::size_t s = m.states();
  MomModel out = m;
  out.meta.frozen_rows.clear();

  for (std::size_t x = 0; x < s; ++x) {
    double total = 0.0;
    for (std::size_t x2 = 0; x2 < s; ++x2) total += c.trans[x * s + x2];
    if (!(total > 0.0) || !std::isfinite(total)) {
      out.meta.frozen_rows.push_back("p[" + std::to_string(x) + "]");
      continue;
    }
    for (std::size_t x2 = 0; x2 < s; ++x2) out.p(x, x2) = c.trans[x * s + x2] / total;
  }

  for (std::size_t x = 0; x < s; ++x) {
    for (int yv = 0; yv < 2; ++yv) {
      const double a = c.emis[(x * 2 + yv) * 2 + 0];
      const double b = c.emis[(x * 2 + yv) * 2 + 1];
      const double total = a + b;
      if (!(total > 0.0) || !std::isfinite(total)) {
        out.meta.frozen_rows.push_back("q[" + std::to_string(x) + "][" + std::to_string(yv) + "]");
        continue;
      }
      out.q(x, yv, 0) = a / total;
      out.q(x, yv, 1) = b / total;
    }
  }

  double total = 0.0;
  for (double v : c.init) total += v;
  if (total > 0.0 && std::isfinite(total)) {
    for (std::size_t x = 0; x < s; ++x) {
      for (int yv = 0; yv < 2; ++yv) out.mu(x, yv) = c.init[x * 2 + yv] / total;
    }
  } else {
    out.meta.frozen_rows.push_back("mu");
  }
  return out;
}

MomModel em_update(const MomModel& model, std::span<const std::uint8_t> y, double& loglik_in) {
  const auto fwd = forward_pass(model, y);
  loglik_in = fwd.loglik;
  const auto bwd = backward_pass(model, y, fwd);
  return apply_counts(model, expected_counts(model, y, fwd, bwd));
}

std::string describe(const MomModel& m) {
  return "model(s=" + std::to_string(m.states()) + ", seed=" + std::to_string(m.meta.seed) + ")";
}

}  // namespace

MomModel::MomModel(std::size_t states)
    : s_(states), p_(states * states, 0.0), q_(states * 4, 0.0), mu_(states * 2, 0.0) {
  if (states < 1) throw std::invalid_argument("a MOM model needs at least one hidden state");
}

void MomModel::validate(double tol) const {
  if (s_ < 1) throw std::invalid_argument("MOM model has no hidden states");
  auto check_entry = [](double v, const char* what) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument(std::string("MOM model has an invalid ") + what + " entry");
    }
  };
  for (std::size_t x = 0; x < s_; ++x) {
    double row = 0.0;
    for (std::size_t x2 = 0; x2 < s_; ++x2) {
      check_entry(p(x, x2), "p");
      row += p(x, x2);
    }
    if (std::abs(row - 1.0) > tol) {
      throw std::invalid_argument("row " + std::to_string(x) + " of p does not sum to 1");
    }
    for (int y = 0; y < 2; ++y) {
      check_entry(q(x, y, 0), "q");
      check_entry(q(x, y, 1), "q");
      if (std::abs(q(x, y, 0) + q(x, y, 1) - 1.0) > tol) {
        throw std::invalid_argument("q[" + std::to_string(x) + "][" + std::to_string(y) +
                                    "] does not sum to 1");
      }
    }
  }
  double total = 0.0;
  for (double v : mu_) {
    check_entry(v, "mu");
    total += v;
  }
  if (std::abs(total - 1.0) > tol) throw std::invalid_argument("mu does not sum to 1");
}

MomModel MomModel::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != s_) throw std::invalid_argument("permutation size does not match state count");
  MomModel out(s_);
  out.meta = meta;
  for (std::size_t a = 0; a < s_; ++a) {
    for (std::size_t b = 0; b < s_; ++b) out.p(a, b) = p(perm[a], perm[b]);
    for (int y = 0; y < 2; ++y) {
      out.mu(a, y) = mu(perm[a], y);
      for (int y2 = 0; y2 < 2; ++y2) out.q(a, y, y2) = q(perm[a], y, y2);
    }
  }
  return out;
}

MomModel canonical_model(std::size_t states, RngStream& rng) {
  MomModel m(states);
  for (std::size_t x = 0; x < states; ++x) {
    const auto row = rng.dirichlet(states);
    for (std::size_t x2 = 0; x2 < states; ++x2) m.p(x, x2) = row[x2];
    for (int y = 0; y < 2; ++y) {
      m.q(x, y, 0) = 0.5;
      m.q(x, y, 1) = 0.5;
      m.mu(x, y) = 1.0 / static_cast<double>(2 * states);
    }
  }
  m.meta.seed = rng.seed();
  return m;
}

MomModel uniform_model(std::size_t states) {
  MomModel m(states);
  const double inv = 1.0 / static_cast<double>(states);
  for (std::size_t x = 0; x < states; ++x) {
    for (std::size_t x2 = 0; x2 < states; ++x2) m.p(x, x2) = inv;
    for (int y = 0; y < 2; ++y) {
      m.q(x, y, 0) = 0.5;
      m.q(x, y, 1) = 0.5;
      m.mu(x, y) = 0.5 * inv;
    }
  }
  return m;
}

ForwardResult forward_pass(const MomModel& model, std::span<const std::uint8_t> y) {
  require_sequence(y);
  const std::size_t s = model.states();
  const std::size_t n_obs = y.size();

  ForwardResult r;
  r.states = s;
  r.length = n_obs;
  r.pi0.assign(model.mu_data().begin(), model.mu_data().end());
  r.pi.assign(n_obs * s, 0.0);
  r.norm.assign(n_obs, 0.0);
  r.logc.assign(n_obs, 0.0);

  std::vector<double> a(s, 0.0);
  for (std::size_t x0 = 0; x0 < s; ++x0) {
    for (int y0 = 0; y0 < 2; ++y0) {
      const double w = model.mu(x0, y0);
      if (w == 0.0) continue;
      for (std::size_t x = 0; x < s; ++x) a[x] += w * model.p(x0, x) * model.q(x, y0, y[0]);
    }
  }

  double loglik = 0.0;
  for (std::size_t n = 1;; ++n) {
    double c = 0.0;
    for (double v : a) c += v;
    if (!(c > 0.0)) {
      r.logc[n - 1] = kNegInf;
      r.loglik = kNegInf;
      r.impossible_step = n;
      return r;
    }
    const double inv_c = 1.0 / c;
    double* pi_n = &r.pi[(n - 1) * s];
    for (std::size_t x = 0; x < s; ++x) pi_n[x] = a[x] * inv_c;
    r.norm[n - 1] = c;
    r.logc[n - 1] = std::log(c);
    loglik += r.logc[n - 1];
    if (n == n_obs) break;

    const int y_prev = y[n - 1];
    const int y_cur = y[n];
    for (std::size_t x = 0; x < s; ++x) {
      double pred = 0.0;
      for (std::size_t x_prev = 0; x_prev < s; ++x_prev) pred += pi_n[x_prev] * model.p(x_prev, x);
      a[x] = model.q(x, y_prev, y_cur) * pred;
    }
  }
  r.loglik = loglik;
  return r;
}

BackwardResult backward_pass(const MomModel& model, std::span<const std::uint8_t> y,
                             const ForwardResult& fwd) {
  require_sequence(y);
  if (fwd.impossible_step) {
    throw NumericalError("sequence is impossible under " + describe(model) + " at step " +
                         std::to_string(*fwd.impossible_step));
  }
  const std::size_t s = model.states();
  const std::size_t n_obs = y.size();
  if (fwd.states != s || fwd.length != n_obs) {
    throw std::invalid_argument("forward result does not match model and sequence");
  }

  BackwardResult b;
  b.states = s;
  b.length = n_obs;
  b.chi.assign((n_obs - 1) * s, 0.0);
  b.chi0.assign(s * 2, 0.0);

  // next[x'] = q(x', Y_n, Y_{n+1}) chi_{n+1}(x') / c_{n+1}
  std::vector<double> next(s);
  auto load_next = [&](std::size_t n1, int y_from) {
    const double inv_c = 1.0 / fwd.c(n1);
    for (std::size_t x = 0; x < s; ++x) {
      const double chi = n1 < n_obs ? b.chi_at(n1, x) : 1.0;
      next[x] = model.q(x, y_from, y[n1 - 1]) * chi * inv_c;
    }
  };

  for (std::size_t n = n_obs - 1; n >= 1; --n) {
    load_next(n + 1, y[n - 1]);
    double* chi_n = &b.chi[(n - 1) * s];
    for (std::size_t x = 0; x < s; ++x) {
      double acc = 0.0;
      for (std::size_t x2 = 0; x2 < s; ++x2) acc += model.p(x, x2) * next[x2];
      chi_n[x] = acc;
    }
  }
  for (int y0 = 0; y0 < 2; ++y0) {
    load_next(1, y0);
    for (std::size_t x = 0; x < s; ++x) {
      double acc = 0.0;
      for (std::size_t x2 = 0; x2 < s; ++x2) acc += model.p(x, x2) * next[x2];
      b.chi0[x * 2 + y0] = acc;
    }
  }
  return b;
}

MomModel em_step(const MomModel& model, std::span<const std::uint8_t> y) {
  require_sequence(y);
  double ll = 0.0;
  auto out = em_update(model, y, ll);
  out.meta.iterations = model.meta.iterations + 1;
  out.meta.loglik = log_likelihood(out, y);
  return out;
}

MomModel fit(std::span<const std::uint8_t> y, const MomModel& init, const FitOptions& options,
             std::vector<double>* trace) {
  if (options.max_iters < 1) throw std::invalid_argument("fit: max_iters must be at least 1");
  if (!(options.tol > 0.0)) throw std::invalid_argument("fit: tol must be positive");
  require_sequence(y);
  init.validate(1e-9);

  if (trace) trace->clear();
  MomModel current = init;
  double ll_prev = 0.0;
  std::size_t iterations = 0;

  while (true) {
    double ll_cur = 0.0;
    MomModel next = em_update(current, y, ll_cur);
    if (!std::isfinite(ll_cur)) {
      throw NumericalError("log-likelihood is not finite for " + describe(current) +
                           " after " + std::to_string(iterations) + " EM updates");
    }
    if (trace) trace->push_back(ll_cur);
    if (iterations > 0 && std::abs(ll_cur - ll_prev) < options.tol) {
      current.meta.loglik = ll_cur;
      break;
    }
    if (iterations == options.max_iters) {
      current.meta.loglik = ll_cur;
      break;
    }
    ll_prev = ll_cur;
    current = std::move(next);
    ++iterations;
  }
  current.meta.seed = init.meta.seed;
  current.meta.iterations = iterations;
  return current;
}

MomModel fit_canonical(std::span<const std::uint8_t> y, std::size_t states, RngStream& rng,
                       const FitOptions& options, std::vector<double>* trace) {
  return fit(y, canonical_model(states, rng), options, trace);
}

MomModel raise_states(const MomModel& model, RngStream& rng, double perturbation) {
  model.validate(1e-9);
  if (!(perturbation >= 0.0)) throw std::invalid_argument("perturbation must be non-negative");
  const std::size_t s = model.states();
  const std::size_t s1 = s + 1;
  const std::size_t parent = static_cast<std::size_t>(rng.uniform_index(s));
  const auto inbound = rng.dirichlet(s1);
  const auto row_noise = rng.dirichlet(s1);
  const auto q0_noise = rng.dirichlet(2);
  const auto q1_noise = rng.dirichlet(2);
  const auto mu_noise = rng.dirichlet(2);

  MomModel out(s1);
  out.meta = model.meta;
  out.meta.frozen_rows.clear();

  // Old rows get an inbound entry for the new state; dividing by the analytic
  // row sum keeps them bit-identical when perturbation is 0.
  for (std::size_t x = 0; x < s; ++x) {
    const double extra = perturbation * inbound[x];
    const double norm = 1.0 + extra;
    for (std::size_t x2 = 0; x2 < s; ++x2) out.p(x, x2) = model.p(x, x2) / norm;
    out.p(x, s) = extra / norm;
    for (int y = 0; y < 2; ++y) {
      out.mu(x, y) = model.mu(x, y) / (1.0 + perturbation);
      for (int y2 = 0; y2 < 2; ++y2) out.q(x, y, y2) = model.q(x, y, y2);
    }
  }

  double row_total = 0.0;
  for (std::size_t x2 = 0; x2 < s1; ++x2) {
    const double base = x2 < s ? model.p(parent, x2) : perturbation * inbound[s];
    out.p(s, x2) = base + perturbation * row_noise[x2];
    row_total += out.p(s, x2);
  }
  for (std::size_t x2 = 0; x2 < s1; ++x2) out.p(s, x2) /= row_total;

  const std::vector<double>* q_noise[2] = {&q0_noise, &q1_noise};
  for (int y = 0; y < 2; ++y) {
    const double a = model.q(parent, y, 0) + perturbation * (*q_noise[y])[0];
    const double b = model.q(parent, y, 1) + perturbation * (*q_noise[y])[1];
    out.q(s, y, 0) = a / (a + b);
    out.q(s, y, 1) = b / (a + b);
    out.mu(s, y) = perturbation * mu_noise[y] / (1.0 + perturbation);
  }
  return out;
}

double log_likelihood(const MomModel& model, std::span<const std::uint8_t> y) {
  require_sequence(y);
  const std::size_t s = model.states();
  std::vector<double> pi(s, 0.0);
  std::vector<double> a(s, 0.0);
  for (std::size_t x0 = 0; x0 < s; ++x0) {
    for (int y0 = 0; y0 < 2; ++y0) {
      const double w = model.mu(x0, y0);
      if (w == 0.0) continue;
      for (std::size_t x = 0; x < s; ++x) a[x] += w * model.p(x0, x) * model.q(x, y0, y[0]);
    }
  }
  double loglik = 0.0;
  for (std::size_t n = 1;; ++n) {
    double c = 0.0;
    for (double v : a) c += v;
    if (!(c > 0.0)) return kNegInf;
    const double inv_c = 1.0 / c;
    for (std::size_t x = 0; x < s; ++x) pi[x] = a[x] * inv_c;
    loglik += std::log(c);
    if (n == y.size()) break;
    const int y_prev = y[n - 1];
    const int y_cur = y[n];
    for (std::size_t x = 0; x < s; ++x) {
      double pred = 0.0;
      for (std::size_t x_prev = 0; x_prev < s; ++x_prev) pred += pi[x_prev] * model.p(x_prev, x);
      a[x] = model.q(x, y_prev, y_cur) * pred;
    }
  }
  return loglik;
}

SequenceRecord generate_sequence(const MomModel& model, std::size_t length, RngStream& rng,
                                 std::string id) {
  if (length < 2) throw std::invalid_argument("generate_sequence: length must be at least 2");
  model.validate(1e-9);
  const std::size_t s = model.states();
  const std::size_t start = rng.categorical(model.mu_data());
  std::size_t x = start / 2;
  int y = static_cast<int>(start % 2);

  SequenceRecord rec{std::move(id), Label::MOM, Flips(length)};
  for (std::size_t n = 0; n < length; ++n) {
    x = rng.categorical(model.p_data().subspan(x * s, s));
    y = rng.bernoulli(model.q(x, y, 1)) ? 1 : 0;
    rec.flips[n] = static_cast<std::uint8_t>(y);
  }
  return rec;
}

}  // namespace coinfake::mom
