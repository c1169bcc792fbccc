#include "coinfake/seqdata.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "coinfake/error.hpp"

namespace coinfake {

namespace {

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

Flips parse_flips(std::string_view text, const std::string& source, std::size_t line_no,
                  std::size_t column_offset) {
  Flips flips;
  flips.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '0' && c != '1') {
      throw ParseError(source, line_no, column_offset + i + 1,
                       std::string("expected '0' or '1', found '") + c + "'");
    }
    flips.push_back(static_cast<std::uint8_t>(c - '0'));
  }
  return flips;
}

}  // namespace

std::string_view to_string(Label label) noexcept {
  switch (label) {
    case Label::Real: return "Real";
    case Label::Simulator: return "Simulator";
    case Label::MOM: return "MOM";
    case Label::GAN: return "GAN";
    case Label::Handwritten: return "Handwritten";
  }
  return "Real";
}

Label parse_label(std::string_view text) {
  for (Label l : kAllLabels) {
    if (to_string(l) == text) return l;
  }
  throw InputError("unknown sequence label '" + std::string(text) + "'");
}

void validate(const SequenceRecord& record) {
  if (record.flips.size() < 2) {
    throw std::invalid_argument("sequence '" + record.id + "' has fewer than two flips");
  }
  for (auto f : record.flips) {
    if (f > 1) throw std::invalid_argument("sequence '" + record.id + "' has a non-binary flip");
  }
}

std::string flips_to_string(std::span<const std::uint8_t> flips) {
  std::string s(flips.size(), '0');
  for (std::size_t i = 0; i < flips.size(); ++i) s[i] = flips[i] ? '1' : '0';
  return s;
}

FileFormat parse_format(std::string_view text) {
  if (text == "lines") return FileFormat::Lines;
  if (text == "csv") return FileFormat::Csv;
  throw InputError("unknown sequence file format '" + std::string(text) + "'");
}

std::vector<SequenceRecord> load_sequences(const std::filesystem::path& path, FileFormat format,
                                           Label default_label) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open sequence file " + path.string());
  const std::string source = path.string();

  std::vector<SequenceRecord> records;
  std::string raw;
  std::size_t line_no = 0;
  bool saw_any_line = false;

  if (format == FileFormat::Lines) {
    while (std::getline(in, raw)) {
      ++line_no;
      saw_any_line = true;
      const auto line = trim_cr(raw);
      if (line.empty()) continue;
      records.push_back({std::to_string(line_no), default_label,
                         parse_flips(line, source, line_no, 0)});
    }
    if (records.empty()) throw InputError("empty dataset: " + source);
    return records;
  }

  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim_cr(raw);
    if (line_no == 1) {
      saw_any_line = true;
      if (line != "id,label,sequence") {
        throw ParseError(source, 1, 1, "expected header 'id,label,sequence'");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos) {
      throw ParseError(source, line_no, 1, "expected three comma-separated fields");
    }
    SequenceRecord rec;
    rec.id = std::string(line.substr(0, c1));
    try {
      rec.label = parse_label(line.substr(c1 + 1, c2 - c1 - 1));
    } catch (const InputError& e) {
      throw ParseError(source, line_no, c1 + 2, e.what());
    }
    rec.flips = parse_flips(line.substr(c2 + 1), source, line_no, c2 + 1);
    records.push_back(std::move(rec));
  }
  if (!saw_any_line) throw InputError("empty dataset: " + source);
  return records;
}

void save_sequences(std::span<const SequenceRecord> records, const std::filesystem::path& path,
                    FileFormat format) {
  std::ostringstream buf;
  if (format == FileFormat::Csv) {
    buf << "id,label,sequence\n";
    for (const auto& r : records) {
      if (r.id.find_first_of(",\n\r") != std::string::npos) {
        throw InputError("sequence id '" + r.id + "' cannot be written to csv");
      }
      buf << r.id << ',' << to_string(r.label) << ',' << flips_to_string(r.flips) << '\n';
    }
  } else {
    for (const auto& r : records) buf << flips_to_string(r.flips) << '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write sequence file " + path.string());
  const auto text = buf.str();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

SplitIndices split_indices(std::size_t n, double ratio, RngStream& rng) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("split ratio must lie strictly between 0 and 1");
  }
  if (n < 2) throw std::invalid_argument("need at least two records to split");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return out;
}

DatasetSplit split_train_test(std::span<const SequenceRecord> records, double ratio,
                              RngStream& rng) {
  const auto idx = split_indices(records.size(), ratio, rng);
  DatasetSplit split;
  split.ratio = ratio;
  split.train.reserve(idx.train.size());
  split.test.reserve(idx.test.size());
  for (auto i : idx.train) split.train.push_back(records[i]);
  for (auto i : idx.test) split.test.push_back(records[i]);
  return split;
}

std::vector<SequenceRecord> generate_real(std::size_t count, std::size_t length, RngStream& rng) {
  if (count < 1) throw std::invalid_argument("generate_real: count must be at least 1");
  if (length < 2) throw std::invalid_argument("generate_real: length must be at least 2");
  std::vector<SequenceRecord> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    SequenceRecord rec{"real-" + std::to_string(k + 1), Label::Real, Flips(length)};
    for (auto& f : rec.flips) f = static_cast<std::uint8_t>(rng.next_u64() >> 63);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace coinfake
