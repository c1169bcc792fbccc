#include "coinfake/bank.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "coinfake/error.hpp"

namespace coinfake::bank {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t label_index(Label label) noexcept { return static_cast<std::size_t>(label); }

}  // namespace

std::string_view to_string(GroupScore rule) noexcept {
  return rule == GroupScore::MeanLogLik ? "mean-loglik" : "mean-likelihood";
}

GroupScore parse_group_score(std::string_view text) {
  if (text == "mean-loglik") return GroupScore::MeanLogLik;
  if (text == "mean-likelihood") return GroupScore::MeanLikelihood;
  throw InputError("unknown group score '" + std::string(text) +
                   "' (expected mean-loglik or mean-likelihood)");
}

double combine_scores(std::vector<double> values, GroupScore rule) {
  if (values.empty()) return kNegInf;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  if (rule == GroupScore::MeanLogLik) {
    double total = 0.0;
    for (double v : values) total += v;
    return total / n;
  }
  const double top = values.back();
  if (top == kNegInf) return kNegInf;
  double total = 0.0;
  for (double v : values) total += std::exp(v - top);
  return top + std::log(total) - std::log(n);
}

std::size_t ModelBank::count(Label label) const noexcept {
  return static_cast<std::size_t>(std::count_if(
      entries_.begin(), entries_.end(), [label](const BankEntry& e) { return e.label == label; }));
}

std::vector<Label> ModelBank::labels() const {
  std::vector<Label> out;
  for (Label l : kAllLabels) {
    if (count(l) > 0) out.push_back(l);
  }
  return out;
}

ModelBank ModelBank::subset(std::span<const Label> keep) const {
  ModelBank out;
  for (const auto& e : entries_) {
    if (std::find(keep.begin(), keep.end(), e.label) != keep.end()) out.add(e);
  }
  return out;
}

mom::MomModel train_sequence_model(std::span<const std::uint8_t> y, const TrainOptions& options,
                                   RngStream rng) {
  auto model = mom::fit_canonical(y, options.s_init, rng, options.fit);
  if (!options.raise) return model;
  const auto seed = model.meta.seed;
  const auto raised = mom::raise_states(model, rng, options.perturbation);
  model = mom::fit(y, raised, options.fit);
  model.meta.seed = seed;
  return model;
}

TrainResult train_bank(const TrainingSets& sets, const TrainOptions& options, const RngStream& rng) {
  if (sets.empty()) throw InputError("no training sequences supplied");
  struct Job {
    Label label;
    const SequenceRecord* record;
    RngStream stream;
  };
  std::vector<Job> jobs;
  for (const auto& [label, records] : sets) {
    if (records.empty()) {
      throw InputError("training set for label " + std::string(to_string(label)) + " is empty");
    }
    const auto label_stream = rng.child(label_index(label));
    for (std::size_t i = 0; i < records.size(); ++i) {
      jobs.push_back({label, &records[i], label_stream.child(i)});
    }
  }

  std::vector<mom::MomModel> models(jobs.size());
  std::vector<std::string> errors(jobs.size());
  const auto run = [&](std::size_t k) {
    try {
      models[k] = train_sequence_model(jobs[k].record->flips, options, jobs[k].stream);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  };
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
  if (options.exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t k = 0; k < n; ++k) run(static_cast<std::size_t>(k));
  } else {
    for (std::ptrdiff_t k = 0; k < n; ++k) run(static_cast<std::size_t>(k));
  }

  TrainResult result;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    if (errors[k].empty()) {
      result.bank.add({jobs[k].label, jobs[k].record->id, std::move(models[k])});
    } else {
      result.failures.push_back({jobs[k].label, jobs[k].record->id, errors[k]});
    }
  }
  return result;
}

std::vector<double> score_matrix(const ModelBank& bank, std::span<const SequenceRecord> records,
                                 Exec exec) {
  const std::size_t m = bank.size();
  const auto entries = bank.entries();
  std::vector<double> out(records.size() * m);
  const auto total = static_cast<std::ptrdiff_t>(out.size());
  const auto cell = [&](std::ptrdiff_t k) {
    const auto i = static_cast<std::size_t>(k) / m;
    const auto e = static_cast<std::size_t>(k) % m;
    out[static_cast<std::size_t>(k)] = mom::log_likelihood(entries[e].model, records[i].flips);
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < total; ++k) cell(k);
  } else {
    for (std::ptrdiff_t k = 0; k < total; ++k) cell(k);
  }
  return out;
}

std::vector<double> score_sequence(const ModelBank& bank, std::span<const std::uint8_t> y) {
  std::vector<double> out;
  out.reserve(bank.size());
  for (const auto& e : bank.entries()) out.push_back(mom::log_likelihood(e.model, y));
  return out;
}

GroupScores group_scores(const ModelBank& bank, std::span<const double> logliks, GroupScore rule) {
  if (logliks.size() != bank.size()) {
    throw std::invalid_argument("group_scores: one score per bank entry expected");
  }
  std::array<std::vector<double>, 5> per_label;
  const auto entries = bank.entries();
  for (std::size_t e = 0; e < entries.size(); ++e) {
    per_label[label_index(entries[e].label)].push_back(logliks[e]);
  }
  GroupScores g;
  for (std::size_t l = 0; l < per_label.size(); ++l) {
    g.count[l] = per_label[l].size();
    g.mean[l] = combine_scores(std::move(per_label[l]), rule);
  }
  return g;
}

std::string_view to_string(Verdict verdict) noexcept {
  return verdict == Verdict::CorrectlyIdentified ? "CorrectlyIdentified" : "IncorrectlyIdentified";
}

ArgmaxDecision decide_argmax(const ModelBank& bank, std::span<const double> logliks,
                             GroupScore rule) {
  const auto g = group_scores(bank, logliks, rule);
  ArgmaxDecision best{Label::Real, kNegInf};
  bool found = false;
  for (Label l : kAllLabels) {
    const auto i = label_index(l);
    if (g.count[i] == 0) continue;
    if (!found || g.mean[i] > best.score) {
      best = {l, g.mean[i]};
      found = true;
    }
  }
  if (!found) throw InputError("model bank is empty");
  if (best.score == kNegInf) {
    throw NumericalError("sequence is impossible under every model in the bank");
  }
  return best;
}

RestDecision decide_correct_vs_rest(const ModelBank& bank, std::span<const double> logliks,
                                    Label true_label, GroupScore rule) {
  if (logliks.size() != bank.size()) {
    throw std::invalid_argument("decide_correct_vs_rest: one score per bank entry expected");
  }
  std::vector<double> own;
  std::vector<double> rest;
  const auto entries = bank.entries();
  for (std::size_t e = 0; e < entries.size(); ++e) {
    (entries[e].label == true_label ? own : rest).push_back(logliks[e]);
  }
  if (own.empty()) {
    throw InputError("model bank has no entry labelled " + std::string(to_string(true_label)));
  }
  if (rest.empty()) throw InputError("model bank has no entry with a competing label");
  RestDecision d;
  d.own = combine_scores(std::move(own), rule);
  d.rest = combine_scores(std::move(rest), rule);
  if (d.own == kNegInf && d.rest == kNegInf) {
    throw NumericalError("sequence is impossible under every model in the bank");
  }
  d.verdict = d.own > d.rest ? Verdict::CorrectlyIdentified : Verdict::IncorrectlyIdentified;
  return d;
}

ArgmaxDecision classify_with_bank(std::span<const std::uint8_t> y, const ModelBank& bank,
                                  GroupScore rule) {
  return decide_argmax(bank, score_sequence(bank, y), rule);
}

RestDecision classify_with_bank(std::span<const std::uint8_t> y, const ModelBank& bank,
                                Label true_label, GroupScore rule) {
  return decide_correct_vs_rest(bank, score_sequence(bank, y), true_label, rule);
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string model_file_name(std::size_t k) {
  char name[32];
  std::snprintf(name, sizeof name, "model-%04zu.json", k + 1);
  return name;
}

}  // namespace

void save_bank(const ModelBank& bank, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json entries = nlohmann::json::array();
  const auto all = bank.entries();
  for (std::size_t k = 0; k < all.size(); ++k) {
    const auto file = model_file_name(k);
    write_text(dir / file, mom::model_to_json({all[k].label, all[k].model}));
    entries.push_back({{"file", file},
                       {"label", std::string(to_string(all[k].label))},
                       {"source_id", all[k].source_id},
                       {"s", all[k].model.states()}});
  }
  const nlohmann::json manifest = {{"format", "coinfake-bank"}, {"version", 1},
                                   {"entries", std::move(entries)}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

ModelBank load_bank(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const auto source = manifest_path.string();
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(source + ": invalid JSON: " + e.what());
  }
  ModelBank bank;
  try {
    if (manifest.value("format", std::string()) != "coinfake-bank") {
      throw InputError(source + ": not a model bank manifest");
    }
    for (const auto& item : manifest.at("entries")) {
      const auto file = item.at("file").get<std::string>();
      auto lm = mom::load_model(dir / file);
      const auto label = parse_label(item.at("label").get<std::string>());
      if (label != lm.label) {
        throw InputError(source + ": label of " + file + " disagrees with the manifest");
      }
      bank.add({label, item.value("source_id", std::string()), std::move(lm.model)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(source + ": malformed manifest: " + e.what());
  }
  if (bank.empty()) throw InputError(source + ": bank has no entries");
  return bank;
}

}  // namespace coinfake::bank
