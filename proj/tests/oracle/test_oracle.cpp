// Forward/backward/EM checked against brute-force path enumeration. The
// frozen numbers below were produced by the enumeration code in
// enumeration.hpp and pin the oracle itself against silent drift.

#include <doctest.h>

#include <cmath>

#include "coinfake/mom.hpp"
#include "oracle/enumeration.hpp"

using namespace coinfake;
using mom::MomModel;

namespace {

struct Fixture {
  MomModel model;
  std::vector<std::uint8_t> y;
};

Fixture frozen_fixture() {
  RngStream mr(2024);
  RngStream yr(2025);
  auto m = oracle::random_model(2, mr);
  auto y = oracle::random_flips(6, yr);
  return {std::move(m), std::move(y)};
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("oracle: frozen enumeration values") {
  const auto f = frozen_fixture();
  CHECK(flips_to_string(f.y) == "110101");
  const double ll = std::log(oracle::likelihood(f.model, f.y));
  CHECK(rel(ll, -2.7885422751398905) < 1e-13);
  const auto e = oracle::exact_em_step(f.model, f.y);
  CHECK(rel(e.p(0, 0), 0.15488952691681729) < 1e-13);
  CHECK(rel(e.p(1, 1), 0.95468728666711133) < 1e-13);
  CHECK(rel(e.q(0, 1, 0), 0.46034807800319411) < 1e-13);
  CHECK(rel(e.q(1, 1, 1), 0.36107108449104419) < 1e-13);
  CHECK(rel(e.mu(0, 0), 0.71802576998760848) < 1e-13);
  CHECK(rel(e.mu(1, 1), 0.0097848241140934128) < 1e-12);
  const auto post = oracle::posterior_marginals(f.model, f.y);
  CHECK(rel(post[0], 0.14759969293284547) < 1e-13);
  CHECK(rel(post[5 * 2 + 1], 0.94482742952827548) < 1e-13);
}

TEST_CASE("oracle: recursion reproduces the frozen values") {
  const auto f = frozen_fixture();
  CHECK(rel(mom::log_likelihood(f.model, f.y), -2.7885422751398905) < 1e-12);
  const auto e = mom::em_step(f.model, f.y);
  CHECK(std::abs(e.p(0, 0) - 0.15488952691681729) < 1e-12);
  CHECK(std::abs(e.q(1, 1, 1) - 0.36107108449104419) < 1e-12);
  CHECK(std::abs(e.mu(1, 1) - 0.0097848241140934128) < 1e-12);
}

TEST_CASE("oracle: likelihood equals enumeration for s<=3, N<=8") {
  RngStream rng(31);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t s = 1 + trial % 3;
    const std::size_t n = 3 + trial % 6;
    auto mr = rng.child(trial);
    const auto m = oracle::random_model(s, mr);
    const auto y = oracle::random_flips(n, mr);
    const double expected = oracle::likelihood(m, y);
    CHECK(rel(std::exp(mom::log_likelihood(m, y)), expected) < 1e-12);
  }
}

TEST_CASE("oracle: 64-path case s=2, N=4") {
  RngStream rng(4);
  const auto m = oracle::random_model(2, rng);
  const std::vector<std::uint8_t> y{1, 0, 0, 1};
  std::size_t paths = 0;
  oracle::for_each_path(m, y, [&](double, const std::vector<std::size_t>&, int) { ++paths; });
  CHECK(paths == 64);
  CHECK(rel(std::exp(mom::log_likelihood(m, y)), oracle::likelihood(m, y)) < 1e-12);
}

TEST_CASE("oracle: smoothed posterior equals enumeration (s=2, N=5)") {
  RngStream rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    auto r = rng.child(trial);
    const auto m = oracle::random_model(2, r);
    const auto y = oracle::random_flips(5, r);
    const auto fwd = mom::forward_pass(m, y);
    const auto bwd = mom::backward_pass(m, y, fwd);
    const auto expected = oracle::posterior_marginals(m, y);
    for (std::size_t n = 1; n <= y.size(); ++n) {
      double norm = 0.0;
      for (std::size_t x = 0; x < 2; ++x) {
        norm += fwd.pi_at(n, x) * (n < y.size() ? bwd.chi_at(n, x) : 1.0);
      }
      for (std::size_t x = 0; x < 2; ++x) {
        const double got = fwd.pi_at(n, x) * (n < y.size() ? bwd.chi_at(n, x) : 1.0) / norm;
        CHECK(std::abs(got - expected[(n - 1) * 2 + x]) < 1e-10);
      }
    }
  }
}

TEST_CASE("oracle: em_step equals exact EM (s=2, N=5)") {
  RngStream rng(5150);
  for (int trial = 0; trial < 20; ++trial) {
    auto r = rng.child(trial);
    const auto m = oracle::random_model(2, r);
    const auto y = oracle::random_flips(5, r);
    const auto got = mom::em_step(m, y);
    const auto want = oracle::exact_em_step(m, y);
    for (std::size_t i = 0; i < got.p_data().size(); ++i) CHECK(std::abs(got.p_data()[i] - want.p_data()[i]) < 1e-10);
    for (std::size_t i = 0; i < got.q_data().size(); ++i) CHECK(std::abs(got.q_data()[i] - want.q_data()[i]) < 1e-10);
    for (std::size_t i = 0; i < got.mu_data().size(); ++i) CHECK(std::abs(got.mu_data()[i] - want.mu_data()[i]) < 1e-10);
  }
}

TEST_CASE("oracle: em_step equals exact EM for s=3 and a degenerate row") {
  RngStream rng(8);
  auto m = oracle::random_model(3, rng);
  // State 2 can never be entered or started in, so its rows get no counts.
  for (std::size_t x = 0; x < 3; ++x) {
    const double moved = m.p(x, 2);
    m.p(x, 2) = 0.0;
    m.p(x, 0) += moved;
  }
  for (int yv = 0; yv < 2; ++yv) {
    m.mu(0, yv) += m.mu(2, yv);
    m.mu(2, yv) = 0.0;
  }
  const std::vector<std::uint8_t> y{0, 1, 1, 0, 1, 1};
  const auto got = mom::em_step(m, y);
  const auto want = oracle::exact_em_step(m, y);
  for (std::size_t i = 0; i < got.p_data().size(); ++i) CHECK(std::abs(got.p_data()[i] - want.p_data()[i]) < 1e-10);
  for (std::size_t i = 0; i < got.q_data().size(); ++i) CHECK(std::abs(got.q_data()[i] - want.q_data()[i]) < 1e-10);
  CHECK_FALSE(got.meta.frozen_rows.empty());
}

TEST_CASE("oracle: s=1 exact EM includes the latent first transition") {
  const std::vector<std::uint8_t> y{0, 1, 1, 0, 1};
  const auto e = oracle::exact_em_step(mom::uniform_model(1), y);
  CHECK(e.q(0, 0, 1) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(e.q(0, 1, 1) == doctest::Approx(0.4).epsilon(1e-14));
  const auto got = mom::em_step(mom::uniform_model(1), y);
  CHECK(got.q(0, 0, 1) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(got.q(0, 1, 1) == doctest::Approx(0.4).epsilon(1e-12));
}
