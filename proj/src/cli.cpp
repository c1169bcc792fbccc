#include "coinfake/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "coinfake/bank.hpp"
#include "coinfake/bpf.hpp"
#include "coinfake/error.hpp"
#include "coinfake/evaluation.hpp"
#include "coinfake/experiment.hpp"
#include "coinfake/mom.hpp"
#include "coinfake/seqdata.hpp"
#include "coinfake/simulator.hpp"

namespace coinfake::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path default_out_dir() {
  const char* env = std::getenv(kOutputDirEnv);
  return env && *env ? fs::path(env) : fs::path(".");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void ensure_parent(const fs::path& path) {
  if (!path.has_parent_path()) return;
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
}

void write_file(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

FileFormat format_of(const fs::path& path) {
  return path.extension() == ".csv" ? FileFormat::Csv : FileFormat::Lines;
}

fs::path provenance_path(const fs::path& output) {
  auto p = output;
  p.replace_extension(".provenance.json");
  return p;
}

json provenance(const std::string& command, json settings) {
  return {{"tool", "coinfake"}, {"command", command}, {"settings", std::move(settings)}};
}

std::vector<SequenceRecord> load_labeled(const fs::path& path, Label label) {
  if (!fs::exists(path)) throw IoError("input file " + path.string() + " does not exist");
  auto records = load_sequences(path, format_of(path), label);
  for (auto& r : records) r.label = label;
  return records;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string kind;
  std::size_t count = 137;
  std::size_t length = 200;
  std::uint64_t seed = 0;
  std::string config;
  std::string model;
  std::string out;
  double eps = 0.05;
  double delta = 0.05;
  std::size_t lags = 5;
  double r0 = 0.5;
  std::vector<double> beta0;
};

int cmd_generate(const GenerateArgs& a, const CLI::App& sub, std::ostream& out) {
  const auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  const fs::path path = a.out.empty() ? default_out_dir() / (a.kind + ".csv") : fs::path(a.out);
  json settings = {{"kind", a.kind}, {"count", a.count}, {"length", a.length}, {"seed", a.seed}};
  const RngStream rng(a.seed);
  std::vector<SequenceRecord> records;

  if (a.kind == "real") {
    auto r = rng;
    records = generate_real(a.count, a.length, r);
  } else if (a.kind == "tf" || a.kind == "rsc") {
    sim::SimulatorConfig sc;
    if (!a.config.empty()) sc = sim::simulator_config_from_json(read_file(a.config), a.config);
    sc.kind = sim::parse_theta(a.kind);
    if (given("--length") || a.config.empty()) sc.length = a.length;
    if (given("--eps")) sc.params.eps = a.eps;
    if (given("--delta")) sc.params.delta = a.delta;
    if (given("--lags")) sc.params.lags = a.lags;
    if (given("--r0")) sc.params.r0 = a.r0;
    if (given("--beta0")) {
      sc.params.beta0 = a.beta0.size() == 1 ? std::vector<double>(sc.params.lags, a.beta0[0]) : a.beta0;
    }
    if (!sc.params.beta0.empty() && sc.params.beta0.size() != sc.params.lags) {
      throw InputError("--beta0 needs one value or one per lag");
    }
    sc.seed = a.seed;
    try {
      sc.params.validate();
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
    records = sim::simulate_batch(sc, a.count, rng);
    settings["length"] = sc.length;
    settings["simulator"] = json::parse(sim::simulator_config_to_json(sc));
  } else if (a.kind == "mom") {
    if (a.model.empty()) throw InputError("--kind mom requires --model");
    const auto lm = mom::load_model(a.model);
    for (std::size_t k = 0; k < a.count; ++k) {
      auto r = rng.child(k);
      records.push_back(mom::generate_sequence(lm.model, a.length, r, "mom-" + std::to_string(k + 1)));
    }
    settings["model"] = json::parse(mom::model_to_json(lm));
  } else {
    throw InputError("unknown --kind '" + a.kind + "' (expected real, tf, rsc or mom)");
  }

  ensure_parent(path);
  save_sequences(records, path, format_of(path));
  write_file(provenance_path(path), provenance("generate", settings).dump(2) + "\n");
  out << "wrote " << records.size() << " sequences to " << path.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::map<Label, std::string> inputs;
  std::size_t states = 6;
  bool no_raise = false;
  double perturbation = 0.05;
  std::size_t max_iters = 500;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  bank::TrainingSets sets;
  json inputs = json::object();
  for (const auto& [label, file] : a.inputs) {
    if (file.empty()) continue;
    sets[label] = load_labeled(file, label);
    inputs[std::string(to_string(label))] = file;
  }
  if (sets.empty()) throw InputError("train needs at least one input (--real, --simulator, ...)");

  bank::TrainOptions opts;
  opts.s_init = a.states;
  opts.raise = !a.no_raise;
  opts.perturbation = a.perturbation;
  opts.fit.max_iters = a.max_iters;
  opts.fit.tol = a.tol;
  if (opts.s_init < 1) throw InputError("--states must be at least 1");

  const auto result = bank::train_bank(sets, opts, RngStream(a.seed));
  const fs::path dir = a.out.empty() ? default_out_dir() / "bank" : fs::path(a.out);
  if (!result.bank.empty()) bank::save_bank(result.bank, dir);

  json failures = json::array();
  for (const auto& f : result.failures) {
    err << "fit failed: " << to_string(f.label) << " sequence " << f.id << ": " << f.message << '\n';
    failures.push_back({{"label", std::string(to_string(f.label))}, {"id", f.id}, {"error", f.message}});
  }
  const json settings = {{"inputs", inputs},     {"states", a.states},
                         {"raise", opts.raise},  {"perturbation", a.perturbation},
                         {"max_iters", a.max_iters}, {"tol", a.tol},
                         {"seed", a.seed},       {"models", result.bank.size()},
                         {"failures", failures}};
  write_file(dir / "provenance.json", provenance("train", settings).dump(2) + "\n");
  out << "trained " << result.bank.size() << " models into " << dir.string() << '\n';
  return result.failures.empty() ? kOk : kNumericalError;
}

// ---------------------------------------------------------------- classify

struct FilterFlags {
  std::string config;
  std::size_t n0 = 10000;
  double eps = 0.05;
  double delta = 0.05;
  double r_resample = 4.5;
  std::size_t lags = 5;
};

bpf::FilterConfig resolve_filter(const FilterFlags& f, const CLI::App& sub, std::uint64_t seed) {
  const auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  bpf::FilterConfig c;
  if (!f.config.empty()) c = bpf::filter_config_from_json(read_file(f.config), f.config);
  if (given("--n0")) c.n0 = f.n0;
  if (given("--eps")) c.eps = f.eps;
  if (given("--delta")) c.delta = f.delta;
  if (given("--r-resample")) c.r_resample = f.r_resample;
  if (given("--lags")) c.lags = f.lags;
  c.seed = seed;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  return c;
}

struct ClassifyArgs {
  std::string input;
  std::string bank_dir;
  bool use_bpf = false;
  std::string mode = "argmax";
  std::string group_score = "mean-loglik";
  std::string true_label;
  std::string out;
  std::optional<double> tau;
  std::string calibration;
  std::string calibrate_on;
  std::optional<std::uint64_t> seed;
  FilterFlags filter;
};

std::string fmt_score(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int cmd_classify(const ClassifyArgs& a, const CLI::App& sub, std::ostream& out) {
  if (a.bank_dir.empty() == !a.use_bpf) throw InputError("classify needs exactly one of --bank or --bpf");
  if (a.mode != "argmax" && a.mode != "rest") throw InputError("--mode must be argmax or rest");
  if (!fs::exists(a.input)) throw IoError("input file " + a.input + " does not exist");
  const auto rule = bank::parse_group_score(a.group_score);

  const bool labeled_file = format_of(a.input) == FileFormat::Csv;
  std::optional<Label> forced;
  if (!a.true_label.empty()) forced = parse_label(a.true_label);
  auto records = load_sequences(a.input, format_of(a.input));
  if (forced) {
    for (auto& r : records) r.label = *forced;
  }
  const bool have_truth = labeled_file || forced.has_value();

  const fs::path path = a.out.empty() ? default_out_dir() / "verdicts.csv" : fs::path(a.out);
  std::ostringstream csv;
  csv << (have_truth ? "id,true_label,predicted,score\n" : "id,predicted,score\n");
  const auto row = [&](const SequenceRecord& r, std::string_view predicted, double score) {
    csv << r.id << ',';
    if (have_truth) csv << to_string(r.label) << ',';
    csv << predicted << ',' << fmt_score(score) << '\n';
  };
  json settings = {{"input", a.input}, {"mode", a.mode}};

  if (!a.use_bpf) {
    const auto bank = bank::load_bank(a.bank_dir);
    settings["bank"] = a.bank_dir;
    settings["group_score"] = a.group_score;
    if (a.mode == "rest" && !have_truth) {
      throw InputError("--mode rest needs labeled input (CSV) or --true-label");
    }
    const auto scores = bank::score_matrix(bank, records);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const std::span<const double> s(&scores[i * bank.size()], bank.size());
      if (a.mode == "argmax") {
        const auto d = bank::decide_argmax(bank, s, rule);
        row(records[i], to_string(d.label), d.score);
      } else {
        const auto d = bank::decide_correct_vs_rest(bank, s, records[i].label, rule);
        row(records[i], to_string(d.verdict), d.own - d.rest);
      }
    }
  } else {
    if (!a.seed) throw InputError("--bpf requires --seed");
    const int sources = static_cast<int>(a.tau.has_value()) + static_cast<int>(!a.calibration.empty()) +
                        static_cast<int>(!a.calibrate_on.empty());
    if (sources != 1) {
      throw InputError("--bpf needs exactly one of --tau, --calibration or --calibrate-on");
    }
    const auto config = resolve_filter(a.filter, sub, *a.seed);
    double tau = 0.0;
    if (a.tau) {
      tau = *a.tau;
    } else if (!a.calibration.empty()) {
      try {
        tau = json::parse(read_file(a.calibration)).at("tau").get<double>();
      } catch (const json::exception& e) {
        throw InputError(a.calibration + ": malformed calibration file: " + e.what());
      }
    } else {
      const auto validation = load_sequences(a.calibrate_on, FileFormat::Csv);
      const auto cal = bpf::calibrate_threshold(validation, config);
      tau = cal.tau;
      const json doc = {{"tau", cal.tau}, {"accuracy", cal.accuracy}, {"source", a.calibrate_on}};
      auto cal_path = path;
      cal_path.replace_extension(".calibration.json");
      write_file(cal_path, doc.dump(2) + "\n");
    }
    if (!(tau > 0.0)) throw InputError("threshold tau must be positive");
    settings["filter"] = json::parse(bpf::filter_config_to_json(config));
    settings["tau"] = tau;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto v = bpf::classify_sequence_bpf(records[i].flips, config, tau, i);
      row(records[i], v.is_real ? "Real" : "Fake", v.err);
    }
  }

  write_file(path, csv.str());
  write_file(provenance_path(path), provenance("classify", settings).dump(2) + "\n");
  out << "classified " << records.size() << " sequences into " << path.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string config;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  std::size_t count = 137;
  std::size_t length = 200;
  std::size_t states = 6;
  std::string group_score;
  bool no_mom = false;
  bool no_bpf = false;
  std::string out;
  FilterFlags filter;
};

int cmd_evaluate(const EvaluateArgs& a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  const auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  experiment::ExperimentConfig c;
  c.filter.n0 = 1000;
  if (!a.config.empty()) c = experiment::experiment_config_from_json(read_file(a.config), a.config);
  if (given("--trials")) c.trials = a.trials;
  if (given("--count")) c.count = a.count;
  if (given("--length")) c.length = a.length;
  if (given("--states")) c.train.s_init = a.states;
  if (given("--group-score")) c.group_score = bank::parse_group_score(a.group_score);
  if (given("--n0")) c.filter.n0 = a.filter.n0;
  if (given("--eps")) c.filter.eps = a.filter.eps;
  if (given("--delta")) c.filter.delta = a.filter.delta;
  if (given("--r-resample")) c.filter.r_resample = a.filter.r_resample;
  if (given("--lags")) c.filter.lags = a.filter.lags;
  if (a.no_mom) c.run_mom = false;
  if (a.no_bpf) c.run_bpf = false;
  c.seed = a.seed;
  c.filter.seed = a.seed;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  if (!c.run_mom && !c.run_bpf) throw InputError("nothing to evaluate: both classifiers disabled");

  const auto data = experiment::build_datasets(c);
  const auto result = experiment::run_experiment(
      c, data, [&](const std::string& msg) { err << "evaluate: " << msg << '\n'; });

  const fs::path dir = a.out.empty() ? default_out_dir() / "evaluation" : fs::path(a.out);
  json doc = {{"reports", json::parse(eval::reports_to_json(result.reports))}};
  if (!result.ordering.mom.empty()) {
    doc["real_vs_simulator"] = {{"mom", result.ordering.mom},
                                {"bpf", result.ordering.bpf},
                                {"ordering_holds", result.ordering.hits},
                                {"trials", result.ordering.mom.size()}};
  }
  json failures = json::array();
  for (const auto& f : result.fit_failures) {
    err << "fit failed: " << to_string(f.label) << " sequence " << f.id << ": " << f.message << '\n';
    failures.push_back({{"label", std::string(to_string(f.label))}, {"id", f.id}, {"error", f.message}});
  }
  for (const auto& f : result.filter_failures) {
    err << "filter failed: " << f << '\n';
    failures.push_back({{"filter", f}});
  }
  doc["failures"] = failures;

  std::string table = eval::reports_to_table(result.reports);
  for (const auto& r : result.reports) {
    table += "\n" + r.method + " confusion matrix (summed over " + std::to_string(r.trials) +
             " trials)\n" + r.confusion.to_text();
  }
  write_file(dir / "report.json", doc.dump(2) + "\n");
  write_file(dir / "report.txt", table);
  write_file(dir / "provenance.json",
             provenance("evaluate", json::parse(experiment::experiment_config_to_json(c))).dump(2) + "\n");
  out << eval::reports_to_table(result.reports);
  return failures.empty() ? kOk : kNumericalError;
}

void add_filter_flags(CLI::App* sub, FilterFlags& f) {
  sub->add_option("--filter-config", f.config, "Filter config JSON {N0, r_resample, eps, delta, Nc, seed, priors}");
  sub->add_option("--n0", f.n0, "Initial particle count");
  sub->add_option("--eps", f.eps, "Signal step size epsilon");
  sub->add_option("--delta", f.delta, "RSC sign-change probability delta");
  sub->add_option("--r-resample", f.r_resample, "Branching interval ratio r");
  sub->add_option("--lags", f.lags, "Covariance lags N_c");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Real and fake coin-flip sequence generation and detection", "coinfake"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a sequence file");
  g->add_option("--kind", gen.kind, "real, tf, rsc or mom")->required();
  g->add_option("--count", gen.count, "Number of sequences");
  g->add_option("--length", gen.length, "Flips per sequence");
  g->add_option("--seed", gen.seed, "Random seed")->required();
  g->add_option("--config", gen.config, "Simulator config JSON {kind, N, l, eps, delta, r0, beta0, seed}");
  g->add_option("--model", gen.model, "Model JSON (required for --kind mom)");
  g->add_option("--out", gen.out, "Output file (.csv or lines)");
  g->add_option("--eps", gen.eps, "Signal step size epsilon");
  g->add_option("--delta", gen.delta, "RSC sign-change probability delta");
  g->add_option("--lags", gen.lags, "Covariance lags l");
  g->add_option("--r0", gen.r0, "Initial marginal");
  g->add_option("--beta0", gen.beta0, "Initial covariance (one value or one per lag)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Fit one model per training sequence into a bank directory");
  for (Label l : kAllLabels) {
    std::string name(to_string(l));
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
    t->add_option("--" + name, tr.inputs[l], "Training sequences labelled " + std::string(to_string(l)));
  }
  t->add_option("--states", tr.states, "Hidden states of the first fit");
  t->add_flag("--no-raise", tr.no_raise, "Skip the raise-to-s+1 refit");
  t->add_option("--perturbation", tr.perturbation, "Noise scale of the added state");
  t->add_option("--max-iters", tr.max_iters, "EM iteration cap");
  t->add_option("--tol", tr.tol, "EM log-likelihood tolerance");
  t->add_option("--seed", tr.seed, "Random seed")->required();
  t->add_option("--out", tr.out, "Bank directory");

  ClassifyArgs cl;
  auto* c = app.add_subcommand("classify", "Classify sequences with a model bank or the particle filter");
  c->add_option("--input", cl.input, "Sequences to classify")->required();
  c->add_option("--bank", cl.bank_dir, "Model bank directory");
  c->add_flag("--bpf", cl.use_bpf, "Use the branching particle filter");
  c->add_option("--mode", cl.mode, "argmax or rest (bank only)");
  c->add_option("--group-score", cl.group_score, "mean-loglik or mean-likelihood (bank only)");
  c->add_option("--true-label", cl.true_label, "Label every input sequence");
  c->add_option("--out", cl.out, "Verdict CSV");
  c->add_option("--tau", cl.tau, "Filter threshold: real iff err <= tau");
  c->add_option("--calibration", cl.calibration, "JSON file with a calibrated tau");
  c->add_option("--calibrate-on", cl.calibrate_on, "Labeled CSV to calibrate tau on");
  c->add_option("--seed", cl.seed, "Random seed (filter only)");
  add_filter_flags(c, cl.filter);

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Regenerate data and run the repeated-split accuracy study");
  e->add_option("--config", ev.config, "Experiment config JSON");
  e->add_option("--trials", ev.trials, "Number of random splits");
  e->add_option("--seed", ev.seed, "Random seed")->required();
  e->add_option("--count", ev.count, "Sequences per generated type");
  e->add_option("--length", ev.length, "Flips per sequence");
  e->add_option("--states", ev.states, "Hidden states of the first fit");
  e->add_option("--group-score", ev.group_score, "mean-loglik or mean-likelihood");
  e->add_flag("--no-mom", ev.no_mom, "Skip the model-bank classifier");
  e->add_flag("--no-bpf", ev.no_bpf, "Skip the particle filter");
  e->add_option("--out", ev.out, "Report directory");
  add_filter_flags(e, ev.filter);

  std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsageError;
  }

  try {
    if (g->parsed()) return cmd_generate(gen, *g, out);
    if (t->parsed()) return cmd_train(tr, out, err);
    if (c->parsed()) return cmd_classify(cl, *c, out);
    if (e->parsed()) return cmd_evaluate(ev, *e, out, err);
  } catch (const InputError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsageError;
  } catch (const NumericalError& ex) {
    err << "error: " << ex.what() << '\n';
    return kNumericalError;
  } catch (const std::invalid_argument& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsageError;
  }
  return kUsageError;
}

}  // namespace coinfake::cli
