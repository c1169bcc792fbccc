#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coinfake/rng.hpp"

namespace coinfake {

/// The five sequence sources. The declaration order is also the tie-break
/// order used by the likelihood discriminator.
enum class Label { Real, Simulator, MOM, GAN, Handwritten };

inline constexpr std::array<Label, 5> kAllLabels = {
    Label::Real, Label::Simulator, Label::MOM, Label::GAN, Label::Handwritten};

std::string_view to_string(Label label) noexcept;
/// Exact, case-sensitive match against the names above; anything else throws InputError.
Label parse_label(std::string_view text);

/// 0 = tails, 1 = heads.
using Flips = std::vector<std::uint8_t>;

struct SequenceRecord {
  std::string id;
  Label label = Label::Real;
  Flips flips;

  std::size_t length() const noexcept { return flips.size(); }
  bool operator==(const SequenceRecord&) const = default;
};

/// Throws std::invalid_argument unless every flip is 0/1 and there are at least two.
void validate(const SequenceRecord& record);

/// Renders flips as a '0'/'1' string.
std::string flips_to_string(std::span<const std::uint8_t> flips);

enum class FileFormat {
  Lines,  ///< one sequence of '0'/'1' characters per line
  Csv,    ///< header `id,label,sequence`
};

FileFormat parse_format(std::string_view text);

/// Records come back in file order. `lines` records get ids "1", "2", ... (the
/// line number) and `default_label`.
std::vector<SequenceRecord> load_sequences(const std::filesystem::path& path, FileFormat format,
                                           Label default_label = Label::Real);

void save_sequences(std::span<const SequenceRecord> records, const std::filesystem::path& path,
                    FileFormat format);

struct DatasetSplit {
  std::vector<SequenceRecord> train;
  std::vector<SequenceRecord> test;
  double ratio = 0.8;
};

/// Index form of the split: a seeded Fisher-Yates permutation of 0..n-1, of which
/// the first round(ratio * n) indices are training.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

SplitIndices split_indices(std::size_t n, double ratio, RngStream& rng);

DatasetSplit split_train_test(std::span<const SequenceRecord> records, double ratio,
                              RngStream& rng);

/// Independent fair flips, labelled Real, ids "real-<k>".
std::vector<SequenceRecord> generate_real(std::size_t count, std::size_t length, RngStream& rng);

}  // namespace coinfake
