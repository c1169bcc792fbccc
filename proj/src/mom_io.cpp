#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coinfake/error.hpp"
#include "coinfake/mom.hpp"

namespace coinfake::mom {

using nlohmann::json;

std::string model_to_json(const LabeledModel& lm) {
  const auto& m = lm.model;
  const std::size_t s = m.states();
  json p = json::array();
  json q = json::array();
  json mu = json::array();
  for (std::size_t x = 0; x < s; ++x) {
    json prow = json::array();
    for (std::size_t x2 = 0; x2 < s; ++x2) prow.push_back(m.p(x, x2));
    p.push_back(std::move(prow));
    json qx = json::array();
    for (int y = 0; y < 2; ++y) qx.push_back(json::array({m.q(x, y, 0), m.q(x, y, 1)}));
    q.push_back(std::move(qx));
    mu.push_back(json::array({m.mu(x, 0), m.mu(x, 1)}));
  }
  json doc = {
      {"label", std::string(to_string(lm.label))},
      {"s", s},
      {"p", std::move(p)},
      {"q", std::move(q)},
      {"mu", std::move(mu)},
      {"meta",
       {{"seed", m.meta.seed},
        {"iterations", m.meta.iterations},
        {"loglik", m.meta.loglik},
        {"frozen_rows", m.meta.frozen_rows}}},
  };
  // nlohmann emits the shortest decimal that round-trips each double exactly.
  return doc.dump(2) + "\n";
}

LabeledModel model_from_json(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(source + ": invalid JSON: " + e.what());
  }
  try {
    LabeledModel lm;
    lm.label = parse_label(doc.at("label").get<std::string>());
    const auto s = doc.at("s").get<std::size_t>();
    MomModel m(s);
    const auto& p = doc.at("p");
    const auto& q = doc.at("q");
    const auto& mu = doc.at("mu");
    if (p.size() != s || q.size() != s || mu.size() != s) {
      throw InputError(source + ": parameter shapes do not match s");
    }
    for (std::size_t x = 0; x < s; ++x) {
      if (p[x].size() != s || q[x].size() != 2 || mu[x].size() != 2) {
        throw InputError(source + ": parameter shapes do not match s");
      }
      for (std::size_t x2 = 0; x2 < s; ++x2) m.p(x, x2) = p[x][x2].get<double>();
      for (int y = 0; y < 2; ++y) {
        if (q[x][y].size() != 2) throw InputError(source + ": q must be s x 2 x 2");
        m.q(x, y, 0) = q[x][y][0].get<double>();
        m.q(x, y, 1) = q[x][y][1].get<double>();
        m.mu(x, y) = mu[x][y].get<double>();
      }
    }
    if (doc.contains("meta")) {
      const auto& meta = doc["meta"];
      m.meta.seed = meta.value("seed", std::uint64_t{0});
      m.meta.iterations = meta.value("iterations", std::size_t{0});
      m.meta.loglik = meta.value("loglik", 0.0);
      m.meta.frozen_rows = meta.value("frozen_rows", std::vector<std::string>{});
    }
    try {
      m.validate(1e-9);
    } catch (const std::invalid_argument& e) {
      throw InputError(source + ": " + e.what());
    }
    lm.model = std::move(m);
    return lm;
  } catch (const json::exception& e) {
    throw InputError(source + ": malformed model document: " + e.what());
  }
}

void save_model(const LabeledModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write model file " + path.string());
  out << model_to_json(model);
  if (!out) throw IoError("write failed for " + path.string());
}

LabeledModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str(), path.string());
}

}  // namespace coinfake::mom
