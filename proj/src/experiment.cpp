#include "coinfake/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>

#include <json.hpp>

#include "coinfake/error.hpp"
#include "coinfake/mom.hpp"
#include "coinfake/simulator.hpp"

namespace coinfake::experiment {

namespace {

// Top-level stream tags under RngStream(config.seed).
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kFitStream = 2;
constexpr std::uint64_t kSplitStream = 3;
constexpr std::uint64_t kFilterStream = 4;
constexpr std::uint64_t kPoolStream = 100;

std::uint64_t tag(Label label) { return static_cast<std::uint64_t>(label); }

FileFormat format_for(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? FileFormat::Csv : FileFormat::Lines;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (count < 2) throw std::invalid_argument("count must be at least 2");
  if (length < 2) throw std::invalid_argument("length must be at least 2");
  if (!(split > 0.0 && split < 1.0)) throw std::invalid_argument("split must lie in (0, 1)");
  if (trials < 1) throw std::invalid_argument("trials must be at least 1");
  if (simulator.r0_lo > simulator.r0_hi || simulator.r0_lo < 0.0 || simulator.r0_hi > 1.0) {
    throw std::invalid_argument("simulator r0 range must be an ordered subrange of [0, 1]");
  }
  if (simulator.beta0_lo > simulator.beta0_hi || simulator.beta0_lo <= -1.0 ||
      simulator.beta0_hi >= 1.0) {
    throw std::invalid_argument("simulator beta0 range must be an ordered subrange of (-1, 1)");
  }
  if (mom_pool < 1 || mom_pool_states < 1) throw std::invalid_argument("MOM pool must be non-empty");
  if (train.s_init < 1) throw std::invalid_argument("states must be at least 1");
  filter.validate();
  for (const auto& [label, path] : external) {
    if (label != Label::GAN && label != Label::Handwritten) {
      throw std::invalid_argument("external files are only accepted for GAN and Handwritten");
    }
  }
}

ExperimentConfig experiment_config_from_json(const std::string& text, const std::string& source) {
  using nlohmann::json;
  ExperimentConfig c;
  try {
    const auto doc = json::parse(text);
    c.count = doc.value("count", c.count);
    c.length = doc.value("length", c.length);
    c.split = doc.value("split", c.split);
    c.trials = doc.value("trials", c.trials);
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("simulator")) {
      const auto& s = doc["simulator"];
      c.simulator.eps = s.value("eps", c.simulator.eps);
      c.simulator.delta = s.value("delta", c.simulator.delta);
      c.simulator.lags = s.value("l", c.simulator.lags);
      if (s.contains("r0")) {
        c.simulator.r0_lo = s["r0"].at(0).get<double>();
        c.simulator.r0_hi = s["r0"].at(1).get<double>();
      }
      if (s.contains("beta0")) {
        c.simulator.beta0_lo = s["beta0"].at(0).get<double>();
        c.simulator.beta0_hi = s["beta0"].at(1).get<double>();
      }
    }
    if (doc.contains("mom_pool")) {
      const auto& m = doc["mom_pool"];
      c.mom_pool = m.value("models", c.mom_pool);
      c.mom_pool_states = m.value("states", c.mom_pool_states);
    }
    if (doc.contains("train")) {
      const auto& t = doc["train"];
      c.train.s_init = t.value("states", c.train.s_init);
      c.train.raise = t.value("raise", c.train.raise);
      c.train.perturbation = t.value("perturbation", c.train.perturbation);
      c.train.fit.max_iters = t.value("max_iters", c.train.fit.max_iters);
      c.train.fit.tol = t.value("tol", c.train.fit.tol);
    }
    if (doc.contains("group_score")) {
      c.group_score = bank::parse_group_score(doc["group_score"].get<std::string>());
    }
    if (doc.contains("filter")) {
      auto f = bpf::filter_config_from_json(doc["filter"].dump(), source + ":filter");
      f.exec = c.filter.exec;
      c.filter = f;
    }
    c.run_mom = doc.value("run_mom", c.run_mom);
    c.run_bpf = doc.value("run_bpf", c.run_bpf);
    if (doc.contains("external")) {
      for (const auto& [name, path] : doc["external"].items()) {
        c.external[parse_label(name)] = path.get<std::string>();
      }
    }
  } catch (const json::exception& e) {
    throw InputError(source + ": malformed experiment config: " + e.what());
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(source + ": " + e.what());
  }
  return c;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json external = json::object();
  for (const auto& [label, path] : c.external) external[std::string(to_string(label))] = path.string();
  const json doc = {
      {"count", c.count},
      {"length", c.length},
      {"split", c.split},
      {"trials", c.trials},
      {"seed", c.seed},
      {"simulator",
       {{"eps", c.simulator.eps},
        {"delta", c.simulator.delta},
        {"l", c.simulator.lags},
        {"r0", {c.simulator.r0_lo, c.simulator.r0_hi}},
        {"beta0", {c.simulator.beta0_lo, c.simulator.beta0_hi}}}},
      {"mom_pool", {{"models", c.mom_pool}, {"states", c.mom_pool_states}}},
      {"train",
       {{"states", c.train.s_init},
        {"raise", c.train.raise},
        {"perturbation", c.train.perturbation},
        {"max_iters", c.train.fit.max_iters},
        {"tol", c.train.fit.tol}}},
      {"group_score", std::string(bank::to_string(c.group_score))},
      {"filter", json::parse(bpf::filter_config_to_json(c.filter))},
      {"run_mom", c.run_mom},
      {"run_bpf", c.run_bpf},
      {"external", std::move(external)},
  };
  return doc.dump(2) + "\n";
}

Datasets build_datasets(const ExperimentConfig& config) {
  config.validate();
  const RngStream root(config.seed);
  const auto data = root.child(kDataStream);
  Datasets out;

  {
    auto rng = data.child(tag(Label::Real));
    out[Label::Real] = generate_real(config.count, config.length, rng);
  }

  {
    const auto stream = data.child(tag(Label::Simulator));
    const auto& sc = config.simulator;
    auto& sims = out[Label::Simulator];
    for (std::size_t k = 0; k < config.count; ++k) {
      auto rng = stream.child(k);
      sim::SignalParams params;
      params.lags = sc.lags;
      params.eps = sc.eps;
      params.delta = sc.delta;
      params.r0 = rng.uniform(sc.r0_lo, sc.r0_hi);
      params.beta0.resize(sc.lags);
      for (auto& b : params.beta0) b = rng.uniform(sc.beta0_lo, sc.beta0_hi);
      const auto kind = k % 2 == 0 ? sim::Theta::TrivialFaker : sim::Theta::RSCFaker;
      const auto signal = sim::evolve_signal(kind, config.length, params, rng);
      sims.push_back(sim::sample_sequence(signal, rng, "sim-" + std::to_string(k + 1)));
    }
  }

  {
    // Generators are fitted to their own real sequences, disjoint from the Real type.
    const auto pool_stream = data.child(kPoolStream);
    auto pool_rng = pool_stream.child(0);
    const auto pool_data = generate_real(config.mom_pool, config.length, pool_rng);
    std::vector<mom::MomModel> pool(config.mom_pool);
    const auto n = static_cast<std::ptrdiff_t>(config.mom_pool);
    std::vector<std::string> errors(config.mom_pool);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t g = 0; g < n; ++g) {
      const auto i = static_cast<std::size_t>(g);
      try {
        auto rng = pool_stream.child(i + 1);
        pool[i] = mom::fit_canonical(pool_data[i].flips, config.mom_pool_states, rng, config.train.fit);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
    for (const auto& e : errors) {
      if (!e.empty()) throw NumericalError("fitting a MOM generator failed: " + e);
    }
    const auto stream = data.child(tag(Label::MOM));
    auto& moms = out[Label::MOM];
    for (std::size_t k = 0; k < config.count; ++k) {
      auto rng = stream.child(k);
      moms.push_back(mom::generate_sequence(pool[k % pool.size()], config.length, rng,
                                            "mom-" + std::to_string(k + 1)));
    }
  }

  for (const auto& [label, path] : config.external) {
    auto records = load_sequences(path, format_for(path), label);
    for (auto& r : records) r.label = label;
    if (records.size() < 2) {
      throw InputError(path.string() + ": need at least two sequences for a train/test split");
    }
    out[label] = std::move(records);
  }
  return out;
}

const eval::EvalReport* ExperimentResult::find(const std::string& method) const noexcept {
  for (const auto& r : reports) {
    if (r.method == method) return &r;
  }
  return nullptr;
}

namespace {

struct SeqRef {
  Label label;
  std::size_t index;  // within its type
};

// Per-trial split of every type, as flat sequence numbers.
struct TrialSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

double binary_accuracy(std::size_t correct, std::size_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const Datasets& data,
                                const Progress& progress) {
  config.validate();
  const auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };
  const RngStream root(config.seed);

  std::vector<Label> types;
  std::vector<SequenceRecord> all;
  std::vector<SeqRef> refs;
  std::map<Label, std::size_t> first;
  for (const auto& [label, records] : data) {
    if (records.size() < 2) {
      throw InputError("type " + std::string(to_string(label)) + " needs at least two sequences");
    }
    types.push_back(label);
    first[label] = all.size();
    for (std::size_t i = 0; i < records.size(); ++i) {
      all.push_back(records[i]);
      refs.push_back({label, i});
    }
  }
  if (!data.count(Label::Real) || types.size() < 2) {
    throw InputError("evaluation needs Real sequences and at least one fake type");
  }
  const std::size_t total = all.size();

  ExperimentResult result;

  // Models: one per sequence, fitted once. entry_of[k] is the bank entry of
  // sequence k, or npos when its fit failed.
  constexpr auto npos = static_cast<std::size_t>(-1);
  bank::ModelBank full_bank;
  std::vector<std::size_t> entry_of(total, npos);
  std::vector<double> loglik;  // total x bank size
  if (config.run_mom) {
    say("fitting " + std::to_string(total) + " models");
    auto trained = bank::train_bank(data, config.train, root.child(kFitStream));
    result.fit_failures = trained.failures;
    full_bank = std::move(trained.bank);
    std::map<std::pair<Label, std::string>, std::size_t> by_id;
    const auto entries = full_bank.entries();
    for (std::size_t e = 0; e < entries.size(); ++e) by_id[{entries[e].label, entries[e].source_id}] = e;
    for (std::size_t k = 0; k < total; ++k) {
      const auto it = by_id.find({all[k].label, all[k].id});
      if (it != by_id.end()) entry_of[k] = it->second;
    }
    say("scoring " + std::to_string(total) + " sequences against " +
        std::to_string(full_bank.size()) + " models");
    loglik = bank::score_matrix(full_bank, all, config.train.exec);
  }

  // Filter errors: one filter run per sequence.
  std::vector<double> filter_err(total, std::numeric_limits<double>::quiet_NaN());
  if (config.run_bpf) {
    say("filtering " + std::to_string(total) + " sequences with N0 = " +
        std::to_string(config.filter.n0));
    auto fc = config.filter;
    fc.exec = Exec::Serial;
    const auto filter_root = root.child(kFilterStream);
    std::vector<std::string> errors(total);
    const auto n = static_cast<std::ptrdiff_t>(total);
    const auto run = [&](std::size_t k) {
      try {
        auto rng = filter_root.child(tag(refs[k].label)).child(refs[k].index);
        filter_err[k] = bpf::real_coin_error(bpf::run_filter(all[k].flips, fc, rng));
      } catch (const std::exception& e) {
        errors[k] = all[k].id + ": " + e.what();
      }
    };
    if (config.filter.exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic, 1)
      for (std::ptrdiff_t k = 0; k < n; ++k) run(static_cast<std::size_t>(k));
    } else {
      for (std::ptrdiff_t k = 0; k < n; ++k) run(static_cast<std::size_t>(k));
    }
    for (auto& e : errors) {
      if (!e.empty()) result.filter_failures.push_back(std::move(e));
    }
  }

  // Label-only view of the bank; the decisions need labels and scores only.
  std::vector<Label> entry_label;
  for (const auto& e : full_bank.entries()) entry_label.push_back(e.label);

  std::vector<std::string> label_cols;
  for (Label l : kAllLabels) label_cols.emplace_back(to_string(l));

  eval::EvalAccumulator mom_rest(types, eval::binary_columns());
  eval::EvalAccumulator mom_argmax(types, label_cols);
  eval::EvalAccumulator bpf_acc(types, eval::binary_columns());
  const bool have_sim = data.count(Label::Simulator) > 0;

  const auto split_root = root.child(kSplitStream);
  say("running " + std::to_string(config.trials) + " trials");
  for (std::size_t t = 0; t < config.trials; ++t) {
    const auto trial_stream = split_root.child(t);
    TrialSplit split;
    for (Label l : types) {
      auto rng = trial_stream.child(tag(l));
      const auto s = split_indices(data.at(l).size(), config.split, rng);
      for (auto i : s.train) split.train.push_back(first[l] + i);
      for (auto i : s.test) split.test.push_back(first[l] + i);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());

    std::size_t rs_mom_correct = 0;
    std::size_t rs_bpf_correct = 0;
    std::size_t rs_total = 0;

    if (config.run_mom) {
      // Trial bank: models of training sequences, in entry order.
      std::vector<std::size_t> members;
      for (auto k : split.train) {
        if (entry_of[k] != npos) members.push_back(entry_of[k]);
      }
      std::sort(members.begin(), members.end());
      std::vector<bank::BankEntry> shells;
      std::vector<bank::BankEntry> rs_shells;
      for (auto e : members) {
        shells.push_back({entry_label[e], {}, {}});
        if (entry_label[e] == Label::Real || entry_label[e] == Label::Simulator) {
          rs_shells.push_back({entry_label[e], {}, {}});
        }
      }
      const bank::ModelBank trial_bank(std::move(shells));
      const bank::ModelBank rs_bank(std::move(rs_shells));

      mom_rest.begin_trial();
      mom_argmax.begin_trial();
      std::vector<double> scores;
      std::vector<double> rs_scores;
      for (auto k : split.test) {
        const Label truth = all[k].label;
        const double* row = &loglik[k * full_bank.size()];
        scores.clear();
        rs_scores.clear();
        for (auto e : members) {
          scores.push_back(row[e]);
          if (entry_label[e] == Label::Real || entry_label[e] == Label::Simulator) {
            rs_scores.push_back(row[e]);
          }
        }
        const auto rest = bank::decide_correct_vs_rest(trial_bank, scores, truth, config.group_score);
        const bool ok = rest.verdict == bank::Verdict::CorrectlyIdentified;
        const bool said_real = (truth == Label::Real) == ok;
        mom_rest.record(truth, said_real ? 0 : 1, ok);

        const auto arg = bank::decide_argmax(trial_bank, scores, config.group_score);
        mom_argmax.record(truth, static_cast<std::size_t>(arg.label),
                          (arg.label == Label::Real) == (truth == Label::Real));

        if (have_sim && (truth == Label::Real || truth == Label::Simulator)) {
          const auto rs = bank::decide_correct_vs_rest(rs_bank, rs_scores, truth, config.group_score);
          if (rs.verdict == bank::Verdict::CorrectlyIdentified) ++rs_mom_correct;
        }
      }
      mom_rest.end_trial();
      mom_argmax.end_trial();
    }

    if (config.run_bpf) {
      const auto calibrate = [&](bool real_sim_only) {
        std::vector<double> errs;
        std::vector<char> real;
        for (auto k : split.train) {
          const Label l = all[k].label;
          if (real_sim_only && l != Label::Real && l != Label::Simulator) continue;
          if (std::isnan(filter_err[k])) continue;
          errs.push_back(filter_err[k]);
          real.push_back(l == Label::Real);
        }
        auto flags = std::make_unique<bool[]>(real.size());
        for (std::size_t i = 0; i < real.size(); ++i) flags[i] = real[i] != 0;
        return bpf::calibrate_threshold(errs, std::span<const bool>(flags.get(), real.size())).tau;
      };
      const double tau = calibrate(false);
      const double rs_tau = have_sim ? calibrate(true) : tau;

      bpf_acc.begin_trial();
      for (auto k : split.test) {
        const Label truth = all[k].label;
        const bool failed = std::isnan(filter_err[k]);
        // A failed filter run counts as a wrong answer.
        const bool said_real = !failed && filter_err[k] <= tau;
        const bool ok = !failed && said_real == (truth == Label::Real);
        bpf_acc.record(truth, said_real ? 0 : 1, ok);
        if (have_sim && (truth == Label::Real || truth == Label::Simulator)) {
          ++rs_total;
          const bool rs_real = !failed && filter_err[k] <= rs_tau;
          if (!failed && rs_real == (truth == Label::Real)) ++rs_bpf_correct;
        }
      }
      bpf_acc.end_trial();
    } else if (have_sim) {
      for (auto k : split.test) {
        if (all[k].label == Label::Real || all[k].label == Label::Simulator) ++rs_total;
      }
    }

    if (have_sim && config.run_mom && config.run_bpf) {
      const double m = binary_accuracy(rs_mom_correct, rs_total);
      const double b = binary_accuracy(rs_bpf_correct, rs_total);
      result.ordering.mom.push_back(m);
      result.ordering.bpf.push_back(b);
      if (m >= b && b >= 60.0) ++result.ordering.hits;
    }
  }

  if (config.run_mom) {
    result.reports.push_back(mom_rest.report(kMomRestMethod));
    result.reports.push_back(mom_argmax.report(kMomArgmaxMethod));
  }
  if (config.run_bpf) result.reports.push_back(bpf_acc.report(kBpfMethod));
  return result;
}

}  // namespace coinfake::experiment
