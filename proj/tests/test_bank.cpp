#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "coinfake/bank.hpp"
#include "coinfake/error.hpp"
#include "oracle/enumeration.hpp"
#include "test_util.hpp"

using namespace coinfake;
using namespace coinfake::bank;

namespace {

mom::MomModel always_heads() {
  auto m = mom::uniform_model(1);
  m.q(0, 0, 0) = 0.0;
  m.q(0, 0, 1) = 1.0;
  m.q(0, 1, 0) = 0.0;
  m.q(0, 1, 1) = 1.0;
  return m;
}

ModelBank dominance_bank() {
  ModelBank b;
  b.add({Label::Real, "fair", mom::uniform_model(1)});
  b.add({Label::Simulator, "heads", always_heads()});
  return b;
}

TrainOptions quick_options() {
  TrainOptions o;
  o.s_init = 2;
  o.fit.max_iters = 20;
  return o;
}

}  // namespace

TEST_CASE("bank: dominance") {
  const auto bank = dominance_bank();
  const Flips ones(200, 1);
  const auto d = classify_with_bank(ones, bank);
  CHECK(d.label == Label::Simulator);
  CHECK(d.score == 0.0);
  const auto scores = score_sequence(bank, ones);
  CHECK(scores[0] == doctest::Approx(200 * std::log(0.5)));

  const auto rest = classify_with_bank(ones, bank, Label::Simulator);
  CHECK(rest.verdict == Verdict::CorrectlyIdentified);
  const auto wrong = classify_with_bank(ones, bank, Label::Real);
  CHECK(wrong.verdict == Verdict::IncorrectlyIdentified);
}

TEST_CASE("bank: a -inf entry does not stop the decision") {
  const auto bank = dominance_bank();
  const Flips mixed{1, 0, 1, 1};
  const auto d = classify_with_bank(mixed, bank);
  CHECK(d.label == Label::Real);
  const auto r = classify_with_bank(mixed, bank, Label::Real);
  CHECK(r.verdict == Verdict::CorrectlyIdentified);
  CHECK(r.rest == -std::numeric_limits<double>::infinity());
}

TEST_CASE("bank: everything impossible is an error") {
  ModelBank b;
  b.add({Label::Real, "h", always_heads()});
  b.add({Label::MOM, "h2", always_heads()});
  CHECK_THROWS_AS(classify_with_bank(Flips{0, 0}, b), NumericalError);
  CHECK_THROWS_AS(classify_with_bank(Flips{0, 0}, b, Label::Real), NumericalError);
}

TEST_CASE("bank: ties follow the label order") {
  RngStream rng(1);
  const auto m = oracle::random_model(2, rng);
  for (Label other : {Label::Simulator, Label::MOM, Label::GAN, Label::Handwritten}) {
    ModelBank b;
    b.add({other, "x", m});
    b.add({Label::Real, "y", m});
    const auto y = oracle::random_flips(30, rng);
    CHECK(classify_with_bank(y, b).label == Label::Real);
    // Equal means are not a strict win.
    CHECK(classify_with_bank(y, b, other).verdict == Verdict::IncorrectlyIdentified);
  }
  ModelBank b;
  b.add({Label::Handwritten, "x", m});
  b.add({Label::MOM, "y", m});
  CHECK(classify_with_bank(Flips{1, 0, 1}, b).label == Label::MOM);
}

TEST_CASE("bank: toy banks agree with enumeration") {
  RngStream rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    auto r = rng.child(trial);
    ModelBank b;
    std::vector<Label> labels{Label::Real, Label::Simulator, Label::MOM};
    for (int k = 0; k < 6; ++k) {
      b.add({labels[k % 3], std::to_string(k), oracle::random_model(1 + k % 3, r)});
    }
    const auto y = oracle::random_flips(7, r);
    // Brute force: per-label mean of log(enumerated likelihood), label-order ties.
    std::array<double, 3> sum{};
    std::array<int, 3> cnt{};
    for (const auto& e : b.entries()) {
      const auto i = static_cast<std::size_t>(e.label);
      sum[i] += std::log(oracle::likelihood(e.model, y));
      ++cnt[i];
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      if (sum[i] / cnt[i] > sum[best] / cnt[best] + 1e-12) best = i;
    }
    CHECK(classify_with_bank(y, b).label == labels[best]);
  }
}

TEST_CASE("bank: entry order does not change decisions") {
  RngStream rng(3);
  ModelBank b;
  for (int k = 0; k < 9; ++k) {
    b.add({kAllLabels[static_cast<std::size_t>(k % 3)], std::to_string(k), oracle::random_model(2, rng)});
  }
  std::vector<BankEntry> entries(b.entries().begin(), b.entries().end());
  for (int rep = 0; rep < 10; ++rep) {
    rng.shuffle(std::span<BankEntry>(entries));
    const ModelBank shuffled(entries);
    for (int t = 0; t < 5; ++t) {
      const auto y = oracle::random_flips(40, rng);
      for (auto rule : {GroupScore::MeanLogLik, GroupScore::MeanLikelihood}) {
        const auto a = classify_with_bank(y, b, rule);
        const auto s = classify_with_bank(y, shuffled, rule);
        CHECK(a.label == s.label);
        CHECK(a.score == s.score);
        const auto ra = classify_with_bank(y, b, Label::MOM, rule);
        const auto rs = classify_with_bank(y, shuffled, Label::MOM, rule);
        CHECK(ra.own == rs.own);
        CHECK(ra.rest == rs.rest);
      }
    }
  }
}

TEST_CASE("bank: a common shift leaves decisions unchanged") {
  RngStream rng(4);
  ModelBank b;
  for (int k = 0; k < 6; ++k) {
    b.add({kAllLabels[static_cast<std::size_t>(k % 3)], std::to_string(k), oracle::random_model(2, rng)});
  }
  for (int t = 0; t < 20; ++t) {
    const auto y = oracle::random_flips(50, rng);
    auto s = score_sequence(b, y);
    auto shifted = s;
    for (auto& v : shifted) v += 37.5;
    for (auto rule : {GroupScore::MeanLogLik, GroupScore::MeanLikelihood}) {
      CHECK(decide_argmax(b, s, rule).label == decide_argmax(b, shifted, rule).label);
      CHECK(decide_correct_vs_rest(b, s, Label::Real, rule).verdict ==
            decide_correct_vs_rest(b, shifted, Label::Real, rule).verdict);
    }
  }
}

TEST_CASE("bank: group score rules") {
  std::vector<double> v{-3.0, -1.0, -2.0};
  CHECK(combine_scores(v, GroupScore::MeanLogLik) == -2.0);
  const double lme = std::log((std::exp(-3.0) + std::exp(-1.0) + std::exp(-2.0)) / 3.0);
  CHECK(combine_scores(v, GroupScore::MeanLikelihood) == doctest::Approx(lme).epsilon(1e-15));
  // Far below the double range, still finite.
  std::vector<double> tiny{-2000.0, -2001.0};
  CHECK(combine_scores(tiny, GroupScore::MeanLikelihood) ==
        doctest::Approx(-2000.0 + std::log((1.0 + std::exp(-1.0)) / 2.0)).epsilon(1e-15));
  CHECK(combine_scores({}, GroupScore::MeanLogLik) == -std::numeric_limits<double>::infinity());
  CHECK(parse_group_score("mean-likelihood") == GroupScore::MeanLikelihood);
  CHECK(parse_group_score(to_string(GroupScore::MeanLogLik)) == GroupScore::MeanLogLik);
  CHECK_THROWS_AS(parse_group_score("max"), InputError);
}

TEST_CASE("bank: correct-vs-rest needs both sides") {
  ModelBank b;
  b.add({Label::Real, "a", mom::uniform_model(1)});
  CHECK_THROWS_AS(classify_with_bank(Flips{0, 1}, b, Label::Real), InputError);
  CHECK_THROWS_AS(classify_with_bank(Flips{0, 1}, b, Label::MOM), InputError);
  CHECK_THROWS_AS(classify_with_bank(Flips{0, 1}, ModelBank{}), InputError);
}

TEST_CASE("bank: group scores count entries") {
  const auto bank = dominance_bank();
  const auto g = group_scores(bank, score_sequence(bank, Flips(10, 1)));
  CHECK(g.count[0] == 1);
  CHECK(g.count[1] == 1);
  CHECK(g.count[2] == 0);
  CHECK(g.of(Label::MOM) == -std::numeric_limits<double>::infinity());
  CHECK(bank.labels() == std::vector<Label>{Label::Real, Label::Simulator});
  const std::vector<Label> keep{Label::Simulator};
  CHECK(bank.subset(keep).size() == 1);
}

TEST_CASE("bank: training raises to s_init + 1") {
  RngStream data(5);
  TrainingSets sets;
  sets[Label::Real] = generate_real(3, 60, data);
  sets[Label::MOM] = generate_real(2, 60, data);
  TrainOptions o = quick_options();
  o.s_init = 6;
  o.fit.max_iters = 5;
  const auto r = train_bank(sets, o, RngStream(6));
  CHECK(r.failures.empty());
  REQUIRE(r.bank.size() == 5);
  for (const auto& e : r.bank.entries()) CHECK(e.model.states() == 7);
  CHECK(r.bank.entries()[0].label == Label::Real);
  CHECK(r.bank.entries()[4].label == Label::MOM);
  CHECK(r.bank.entries()[0].source_id == "real-1");
}

TEST_CASE("bank: training is deterministic and exec independent") {
  RngStream data(7);
  TrainingSets sets;
  sets[Label::Real] = generate_real(4, 50, data);
  sets[Label::Simulator] = generate_real(3, 50, data);
  auto o = quick_options();
  o.exec = Exec::Serial;
  const auto a = train_bank(sets, o, RngStream(8));
  o.exec = Exec::Parallel;
  const auto b = train_bank(sets, o, RngStream(8));
  CHECK(a.bank == b.bank);

  // A label's models do not depend on which other labels are trained.
  TrainingSets only_sim;
  only_sim[Label::Simulator] = sets[Label::Simulator];
  const auto c = train_bank(only_sim, o, RngStream(8));
  for (std::size_t i = 0; i < c.bank.size(); ++i) CHECK(c.bank.entries()[i] == a.bank.entries()[4 + i]);
}

TEST_CASE("bank: empty label set is named") {
  TrainingSets sets;
  sets[Label::GAN] = {};
  try {
    train_bank(sets, quick_options(), RngStream(1));
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("GAN") != std::string::npos);
  }
  CHECK_THROWS_AS(train_bank({}, quick_options(), RngStream(1)), InputError);
}

TEST_CASE("bank: fit failures are collected") {
  TrainingSets sets;
  sets[Label::Real] = {{"ok", Label::Real, Flips{0, 1, 1, 0, 1}}, {"bad", Label::Real, Flips{0}}};
  const auto r = train_bank(sets, quick_options(), RngStream(2));
  CHECK(r.bank.size() == 1);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].id == "bad");
}

TEST_CASE("bank: score matrix matches per-sequence scoring") {
  RngStream rng(9);
  ModelBank b;
  for (int k = 0; k < 5; ++k) b.add({Label::Real, std::to_string(k), oracle::random_model(3, rng)});
  const auto recs = generate_real(7, 40, rng);
  const auto m = score_matrix(b, recs, Exec::Serial);
  CHECK(m == score_matrix(b, recs, Exec::Parallel));
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto s = score_sequence(b, recs[i].flips);
    for (std::size_t e = 0; e < b.size(); ++e) CHECK(m[i * b.size() + e] == s[e]);
  }
}

TEST_CASE("bank: save and load") {
  testutil::TempDir dir;
  RngStream rng(10);
  ModelBank b;
  b.add({Label::Real, "r1", oracle::random_model(2, rng)});
  b.add({Label::Handwritten, "h1", oracle::random_model(3, rng)});
  save_bank(b, dir.path() / "bank");
  CHECK(std::filesystem::exists(dir.path() / "bank" / "manifest.json"));
  CHECK(std::filesystem::exists(dir.path() / "bank" / "model-0002.json"));
  const auto back = load_bank(dir.path() / "bank");
  REQUIRE(back.size() == 2);
  CHECK(back.entries()[1].label == Label::Handwritten);
  CHECK(back.entries()[1].source_id == "h1");
  const auto y = oracle::random_flips(30, rng);
  CHECK(score_sequence(back, y) == score_sequence(b, y));

  CHECK_THROWS_AS(load_bank(dir.path() / "missing"), IoError);
  testutil::write_file(dir.path() / "bank" / "manifest.json", "{\"format\":\"other\",\"entries\":[]}");
  CHECK_THROWS_AS(load_bank(dir.path() / "bank"), InputError);
}
