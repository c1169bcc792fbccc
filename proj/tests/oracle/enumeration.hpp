#pragma once

// Brute-force reference computations for small pairwise Markov chains. Every
// quantity is obtained by summing over all (X_0, Y_0, X_1, ..., X_N) paths, so
// these share no code with the forward/backward recursions they check.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "coinfake/mom.hpp"

namespace oracle {

using coinfake::mom::MomModel;

/// Calls visit(weight, xs, y0) for every hidden path xs = (x_0..x_N) and latent
/// y_0, where weight is the joint probability of the path and the observations.
inline void for_each_path(const MomModel& m, std::span<const std::uint8_t> y,
                          const std::function<void(double, const std::vector<std::size_t>&, int)>& visit) {
  const std::size_t s = m.states();
  const std::size_t n = y.size();
  std::vector<std::size_t> xs(n + 1, 0);
  for (int y0 = 0; y0 < 2; ++y0) {
    std::fill(xs.begin(), xs.end(), 0);
    while (true) {
      double w = m.mu(xs[0], y0);
      int prev = y0;
      for (std::size_t t = 1; t <= n && w != 0.0; ++t) {
        w *= m.p(xs[t - 1], xs[t]) * m.q(xs[t], prev, y[t - 1]);
        prev = y[t - 1];
      }
      visit(w, xs, y0);
      std::size_t k = 0;
      while (k <= n && ++xs[k] == s) xs[k++] = 0;
      if (k > n) break;
    }
  }
}

/// P(Y_1..Y_N) by path enumeration.
inline double likelihood(const MomModel& m, std::span<const std::uint8_t> y) {
  double total = 0.0;
  for_each_path(m, y, [&](double w, const std::vector<std::size_t>&, int) { total += w; });
  return total;
}

/// P(X_n = x | Y_1..Y_N) for n = 1..N, row-major (N x s).
inline std::vector<double> posterior_marginals(const MomModel& m, std::span<const std::uint8_t> y) {
  const std::size_t s = m.states();
  std::vector<double> out(y.size() * s, 0.0);
  double total = 0.0;
  for_each_path(m, y, [&](double w, const std::vector<std::size_t>& xs, int) {
    total += w;
    for (std::size_t t = 1; t <= y.size(); ++t) out[(t - 1) * s + xs[t]] += w;
  });
  for (auto& v : out) v /= total;
  return out;
}

/// One exact EM update: expected transition, emission and initial counts under
/// the posterior over paths (including the unobserved Y_0), then row
/// normalization. Rows with zero expected count keep their old values.
inline MomModel exact_em_step(const MomModel& m, std::span<const std::uint8_t> y) {
  const std::size_t s = m.states();
  std::vector<double> trans(s * s, 0.0);
  std::vector<double> emit(s * 4, 0.0);
  std::vector<double> init(s * 2, 0.0);
  double total = 0.0;
  for_each_path(m, y, [&](double w, const std::vector<std::size_t>& xs, int y0) {
    if (w == 0.0) return;
    total += w;
    init[xs[0] * 2 + y0] += w;
    int prev = y0;
    for (std::size_t t = 1; t <= y.size(); ++t) {
      trans[xs[t - 1] * s + xs[t]] += w;
      emit[(xs[t] * 2 + prev) * 2 + y[t - 1]] += w;
      prev = y[t - 1];
    }
  });
  MomModel out = m;
  for (std::size_t x = 0; x < s; ++x) {
    double row = 0.0;
    for (std::size_t x2 = 0; x2 < s; ++x2) row += trans[x * s + x2];
    if (row > 0.0) {
      for (std::size_t x2 = 0; x2 < s; ++x2) out.p(x, x2) = trans[x * s + x2] / row;
    }
    for (int yp = 0; yp < 2; ++yp) {
      const double a = emit[(x * 2 + yp) * 2 + 0];
      const double b = emit[(x * 2 + yp) * 2 + 1];
      if (a + b > 0.0) {
        out.q(x, yp, 0) = a / (a + b);
        out.q(x, yp, 1) = b / (a + b);
      }
    }
  }
  double init_total = 0.0;
  for (double v : init) init_total += v;
  if (init_total > 0.0) {
    for (std::size_t x = 0; x < s; ++x) {
      for (int y0 = 0; y0 < 2; ++y0) out.mu(x, y0) = init[x * 2 + y0] / init_total;
    }
  }
  (void)total;
  return out;
}

/// Random model with every row drawn from a flat Dirichlet, for oracle checks.
inline MomModel random_model(std::size_t s, coinfake::RngStream& rng) {
  MomModel m(s);
  for (std::size_t x = 0; x < s; ++x) {
    const auto row = rng.dirichlet(s);
    for (std::size_t x2 = 0; x2 < s; ++x2) m.p(x, x2) = row[x2];
    for (int yp = 0; yp < 2; ++yp) {
      const double h = rng.uniform(0.05, 0.95);
      m.q(x, yp, 0) = 1.0 - h;
      m.q(x, yp, 1) = h;
    }
  }
  const auto mu = rng.dirichlet(2 * s);
  for (std::size_t x = 0; x < s; ++x) {
    m.mu(x, 0) = mu[2 * x];
    m.mu(x, 1) = mu[2 * x + 1];
  }
  return m;
}

inline std::vector<std::uint8_t> random_flips(std::size_t n, coinfake::RngStream& rng) {
  std::vector<std::uint8_t> y(n);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng.next_u64() >> 63);
  return y;
}

}  // namespace oracle
