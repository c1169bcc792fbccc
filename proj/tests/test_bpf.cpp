#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "coinfake/bpf.hpp"
#include "coinfake/error.hpp"

using namespace coinfake;
using namespace coinfake::bpf;

namespace {

/// n particles of the given theta with weights chosen by the caller.
ParticleEnsemble make_ensemble(const std::vector<double>& weights, Theta theta = Theta::RealCoin,
                               std::size_t lags = 1) {
  RngStream rng(0);
  std::array<double, 3> priors{0, 0, 0};
  priors[sim::theta_index(theta)] = 1.0;
  auto ens = init_particles(weights.size(), lags, priors, 4.5, rng);
  ens.weight = weights;
  return ens;
}

}  // namespace

TEST_CASE("bpf: initial population") {
  RngStream rng(1);
  const auto ens = init_particles(30000, 5, {1, 1, 1}, 4.5, rng);
  CHECK(ens.size() == 30000);
  std::array<std::size_t, 3> counts{};
  for (auto t : ens.theta) ++counts[sim::theta_index(t)];
  // Multinomial sd = sqrt(n p (1 - p)) ~ 81.6
  for (auto c : counts) CHECK(std::abs(double(c) - 10000.0) < 3 * 81.65);
  CHECK(std::all_of(ens.weight.begin(), ens.weight.end(), [](double w) { return w == 1.0; }));
  CHECK(average_weight(ens) == 1.0);
  CHECK(std::all_of(ens.r.begin(), ens.r.end(), [](double r) { return r == 0.5; }));
  CHECK(std::all_of(ens.beta.begin(), ens.beta.end(), [](double b) { return b == 0.0; }));

  RngStream a(2);
  RngStream b(2);
  CHECK(init_particles(100, 5, {1, 1, 1}, 4.5, a).theta == init_particles(100, 5, {1, 1, 1}, 4.5, b).theta);
  CHECK_THROWS_AS(init_particles(0, 5, {1, 1, 1}, 4.5, a), std::invalid_argument);
}

TEST_CASE("bpf: real-coin particles keep their weight") {
  auto ens = make_ensemble(std::vector<double>(50, 1.0));
  RngStream rng(3);
  const Flips y{1, 1, 0, 1, 0, 0, 1};
  for (std::size_t t = 0; t < y.size(); ++t) {
    propagate_serial(ens, y[t], {}, rng.child(t));
    CHECK(std::all_of(ens.weight.begin(), ens.weight.end(), [](double w) { return w == 1.0; }));
  }
}

TEST_CASE("bpf: weight factor is P(obs)/(1/2)") {
  auto ens = make_ensemble({1.0}, Theta::TrivialFaker, 1);
  ens.beta[0] = 0.2;
  const Dynamics frozen{0.0, 0.0};
  RngStream rng(4);
  propagate_serial(ens, 1, frozen, rng.child(1));
  CHECK(ens.weight[0] == 1.0);  // no past flip yet: P = r = 1/2
  propagate_serial(ens, 1, frozen, rng.child(2));
  CHECK(ens.weight[0] == doctest::Approx(1.8).epsilon(1e-14));  // P = 0.9
  propagate_serial(ens, 0, frozen, rng.child(3));
  CHECK(ens.weight[0] == doctest::Approx(1.8 * 0.2).epsilon(1e-14));  // P(0) = 0.1
}

TEST_CASE("bpf: serial and OpenMP propagation agree bit for bit") {
  RngStream init(5);
  auto a = init_particles(3000, 5, {1, 1, 1}, 4.5, init);
  for (std::size_t j = 0; j < a.size(); ++j) {
    for (std::size_t l = 0; l < 5; ++l) a.beta[j * 5 + l] = 0.02 * static_cast<double>(l);
  }
  auto b = a;
  RngStream rng(6);
  RngStream data(7);
  const auto y = generate_real(1, 60, data).front().flips;
  for (std::size_t t = 0; t < y.size(); ++t) {
    propagate_serial(a, y[t], {}, rng.child(t));
    propagate_omp(b, y[t], {}, rng.child(t));
  }
  CHECK(a.weight == b.weight);
  CHECK(a.r == b.r);
  CHECK(a.beta == b.beta);
  CHECK(a.r_ring == b.r_ring);
}

TEST_CASE("bpf: offspring count rule") {
  CHECK(offspring_count(10.0, 1.0, 0.999) == 10);
  CHECK(offspring_count(10.0, 1.0, 0.0) == 10);
  CHECK(offspring_count(0.1, 1.0, 0.05) == 1);
  CHECK(offspring_count(0.1, 1.0, 0.5) == 0);
  CHECK(offspring_count(6.25, 2.5, 0.4) == 3);
  CHECK(offspring_count(6.25, 2.5, 0.6) == 2);
}

TEST_CASE("bpf: equal weights are a fixed point") {
  auto ens = make_ensemble(std::vector<double>(20, 0.7));
  const auto before = ens;
  RngStream rng(8);
  const auto st = branch_resample(ens, rng);
  CHECK(st.branched == 0);
  CHECK(st.kept == 20);
  CHECK(ens.weight == before.weight);
  CHECK(ens.theta == before.theta);
}

TEST_CASE("bpf: interval decisions at r = 4.5") {
  // Ten particles, A = 1: particle 0 carries w/A, the rest share the remainder.
  const auto ensemble_with = [](double ratio, double rest) {
    std::vector<double> w(10, rest);
    w[0] = ratio;
    return make_ensemble(w);
  };
  RngStream rng(9);
  {
    auto ens = ensemble_with(2.5, 7.5 / 9);
    const auto st = branch_resample(ens, rng);
    CHECK(st.branched == 0);
    CHECK(ens.weight[0] == 2.5);
  }
  {
    auto ens = make_ensemble({10.0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
    const auto st = branch_resample(ens, rng);
    CHECK(st.offspring == 10);
    CHECK(ens.size() == 10);
    CHECK(std::all_of(ens.weight.begin(), ens.weight.end(), [](double w) { return w == 1.0; }));
  }
  {
    auto ens = ensemble_with(6.0, 4.0 / 9);
    const auto st = branch_resample(ens, rng);
    CHECK(st.branched == 1);
    CHECK(st.offspring == 6);
  }
}

TEST_CASE("bpf: extreme offspring is unbiased") {
  const std::size_t n = 100000;
  const auto mean_offspring = [&](double ratio, std::uint64_t seed) {
    std::vector<double> w(10, (10.0 - ratio) / 9.0);
    w[0] = ratio;
    auto base = make_ensemble(w);
    RngStream rng(seed);
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto ens = base;
      total += branch_resample(ens, rng).offspring;
    }
    return static_cast<double>(total) / static_cast<double>(n);
  };
  const double m01 = mean_offspring(0.1, 10);
  CHECK(std::abs(m01 - 0.1) < 3 * std::sqrt(0.09 / n));
  const double m6 = mean_offspring(6.0, 11);
  CHECK(m6 == 6.0);
}

TEST_CASE("bpf: branching preserves total weight in expectation") {
  RngStream wr(12);
  std::vector<double> w(40);
  for (auto& v : w) v = std::exp(6.0 * (wr.uniform() - 0.5));
  const double before = std::accumulate(w.begin(), w.end(), 0.0);
  const auto base = make_ensemble(w);
  RngStream rng(13);
  const int trials = 20000;
  double sum = 0.0;
  double sum2 = 0.0;
  for (int i = 0; i < trials; ++i) {
    auto ens = base;
    branch_resample(ens, rng);
    for (double x : ens.weight) {
      REQUIRE(x >= ens.average_weight / 4.5);
      REQUIRE(x <= ens.average_weight * 4.5);
    }
    const double after = std::accumulate(ens.weight.begin(), ens.weight.end(), 0.0);
    sum += after;
    sum2 += after * after;
  }
  const double mean = sum / trials;
  const double sd = std::sqrt((sum2 / trials - mean * mean) / trials);
  CHECK(std::abs(mean - before) < 3 * sd + 1e-9);
}

TEST_CASE("bpf: stratified uniforms cover one subinterval each") {
  // Equal weights with A set by N0: every particle sits at w/A = N0/size, so
  // each one's extra copy depends only on whether its uniform falls below the
  // fractional part. One uniform per subinterval makes the total exact.
  RngStream rng(14);
  for (int rep = 0; rep < 50; ++rep) {
    auto ens = make_ensemble(std::vector<double>(20, 1.0));
    ens.r_resample = 1.5;
    ens.initial_count = 50;  // w/A = 2.5
    auto st = branch_resample(ens, rng);
    CHECK(st.branched == 20);
    CHECK(st.offspring == 50);

    ens = make_ensemble(std::vector<double>(20, 1.0));
    ens.r_resample = 1.5;
    ens.initial_count = 10;  // w/A = 0.5
    st = branch_resample(ens, rng);
    CHECK(st.offspring == 10);
  }
}

TEST_CASE("bpf: collapse is reported") {
  auto ens = make_ensemble(std::vector<double>(5, 0.0));
  RngStream rng(15);
  CHECK_THROWS_AS(branch_resample(ens, rng), NumericalError);
}

TEST_CASE("bpf: degenerate prior gives a point mass") {
  RngStream data(16);
  const auto y = generate_real(1, 200, data).front().flips;
  FilterConfig c;
  c.n0 = 500;
  c.priors = {0, 0, 1};
  const auto res = run_filter(y, c, std::uint64_t{0});
  CHECK(res.posterior.of(Theta::RealCoin) == 1.0);
  CHECK(res.estimate.r_bar == 0.5);
  CHECK(real_coin_error(res) == 0.0);
  CHECK(classify_sequence_bpf(y, c, 1e-9).is_real);
}

TEST_CASE("bpf: filter run on real data") {
  RngStream data(17);
  const auto recs = generate_real(100, 200, data);
  FilterConfig c;
  c.n0 = 2000;
  c.seed = 18;
  std::size_t majority = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto res = run_filter(recs[i].flips, c, i);
    double mass = 0.0;
    for (double m : res.posterior.mass) {
      CHECK(m >= 0.0);
      mass += m;
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    majority += res.posterior.of(Theta::RealCoin) > 1.0 / 3.0;
    REQUIRE(res.particle_counts.size() == 200);
    for (auto n : res.particle_counts) {
      CHECK(n >= c.n0 / 2);
      CHECK(n <= 2 * c.n0);
    }
  }
  CHECK(majority > 50);
}

TEST_CASE("bpf: filter is deterministic and exec independent") {
  RngStream data(19);
  const auto y = generate_real(1, 120, data).front().flips;
  FilterConfig c;
  c.n0 = 800;
  c.seed = 3;
  c.exec = Exec::Serial;
  const auto a = run_filter(y, c, 4);
  c.exec = Exec::Parallel;
  const auto b = run_filter(y, c, 4);
  CHECK(a.posterior.mass == b.posterior.mass);
  CHECK(a.estimate.r_bar == b.estimate.r_bar);
  CHECK(a.particle_counts == b.particle_counts);
  const auto other = run_filter(y, c, 5);
  CHECK(other.particle_counts != a.particle_counts);
}

TEST_CASE("bpf: classification by threshold") {
  // err for (0.6, 0.1) against (0.5, 0) with one lag is 0.01.
  sim::MomentTargets est{0.6, {0.1}, 1, 200};
  FilterResult r;
  r.estimate = est;
  CHECK(real_coin_error(r) == doctest::Approx(0.01).epsilon(1e-14));
  RngStream data(20);
  const auto y = generate_real(1, 50, data).front().flips;
  FilterConfig c;
  c.n0 = 100;
  CHECK_THROWS_AS(classify_sequence_bpf(y, c, 0.0), std::invalid_argument);
}

TEST_CASE("bpf: calibrate threshold") {
  const std::vector<double> err{0.1, 0.2, 0.5, 0.7};
  const std::unique_ptr<bool[]> sep(new bool[4]{true, true, false, false});
  const auto c = calibrate_threshold(err, std::span<const bool>(sep.get(), 4));
  CHECK(c.tau == doctest::Approx(0.35));
  CHECK(c.accuracy == 1.0);

  const std::vector<double> same{0.3, 0.3, 0.3, 0.3};
  const std::unique_ptr<bool[]> mixed(new bool[4]{true, false, true, false});
  const auto t = calibrate_threshold(same, std::span<const bool>(mixed.get(), 4));
  CHECK(t.accuracy == 0.5);
  CHECK(t.tau == 0.3);

  // Two equally good cuts: the smaller midpoint wins.
  const std::vector<double> two{0.1, 0.2, 0.3, 0.4};
  const std::unique_ptr<bool[]> lab(new bool[4]{true, false, true, false});
  const auto s = calibrate_threshold(two, std::span<const bool>(lab.get(), 4));
  CHECK(s.tau == doctest::Approx(0.15));
  CHECK(s.accuracy == 0.75);

  const std::unique_ptr<bool[]> one(new bool[4]{true, true, true, true});
  CHECK_THROWS(calibrate_threshold(err, std::span<const bool>(one.get(), 4)));
}

TEST_CASE("bpf: config json") {
  const auto c = filter_config_from_json(
      R"({"N0":1234,"r_resample":3.0,"eps":0.1,"delta":0.2,"Nc":3,"seed":9,"priors":{"tf":1,"rsc":2,"real":3}})");
  CHECK(c.n0 == 1234);
  CHECK(c.r_resample == 3.0);
  CHECK(c.lags == 3);
  CHECK(c.priors == std::array<double, 3>{1, 2, 3});
  const auto back = filter_config_from_json(filter_config_to_json(c));
  CHECK(back.priors == c.priors);
  CHECK(back.seed == 9);
  CHECK(filter_config_from_json(R"({"priors":[0,0,1]})").priors[2] == 1.0);
  CHECK_THROWS_AS(filter_config_from_json(R"({"N0":0})"), InputError);
  CHECK_THROWS_AS(filter_config_from_json(R"({"r_resample":1.0})"), InputError);
}

TEST_CASE("bpf: csv outputs") {
  ThetaPosterior p;
  p.mass = {0.25, 0.25, 0.5};
  const auto csv = posterior_csv(p);
  CHECK(csv.rfind("theta,mass\n", 0) == 0);
  CHECK(csv.find("0.5") != std::string::npos);
  const std::vector<std::size_t> counts{10, 12};
  CHECK(trace_csv(counts) == "t,particles\n1,10\n2,12\n");
}
