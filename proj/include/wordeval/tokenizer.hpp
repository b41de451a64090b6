#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace wordeval {

using UnitId = std::uint32_t;

enum class Scheme { Bpe, WordPiece };

const char* to_string(Scheme scheme);
Scheme parse_scheme(std::string_view text);

struct Segmentation {
  std::string word;
  std::vector<UnitId> units;
  // true for the word-initial unit, false for continuations
  std::vector<bool> boundary_flags;
  bool has_unknown = false;
};

struct VocabFiles {
  std::filesystem::path units;
  std::filesystem::path merges;  // BPE only
};

inline constexpr std::size_t kDefaultMaxUnitsPerWord = 16;

/// Subword unit inventory for either a byte-pair-encoding or a wordpiece model.
///
/// Every unit has a raw form (as stored in the vocabulary file) and a surface
/// form with scheme markers stripped. Special units (unknown, end-of-text and
/// any other bracketed control symbol) have an empty surface and never spell
/// part of a word; they are treated as word-initial so that they terminate
/// whole-word decoding.
class SubwordVocab {
 public:
  static SubwordVocab wordpiece(std::vector<std::string> units, std::string continuation_marker = "##");
  static SubwordVocab bpe(std::vector<std::string> units, std::vector<std::pair<std::string, std::string>> merges,
                          std::string word_initial_marker, std::optional<std::string> unknown = std::nullopt,
                          std::optional<std::string> end_of_text = std::nullopt);

  Scheme scheme() const { return scheme_; }
  std::size_t size() const { return units_.size(); }

  const std::string& unit(UnitId id) const;
  const std::string& surface(UnitId id) const;
  std::optional<UnitId> find(std::string_view unit) const;

  bool is_special(UnitId id) const;
  // True iff the unit begins a new word under the scheme's marker convention.
  bool is_end_of_word(UnitId next_unit) const;

  std::optional<UnitId> unknown_id() const { return unknown_; }
  std::optional<UnitId> end_of_text_id() const { return end_of_text_; }

  const std::string& continuation_marker() const { return continuation_marker_; }
  const std::string& word_initial_marker() const { return word_initial_marker_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

  Segmentation segment(std::string_view word) const;
  // Concatenated canonical segmentations of a word sequence.
  std::vector<UnitId> encode(std::span<const std::string> words) const;

  // Concatenated surface forms, markers stripped.
  std::string spell(std::span<const UnitId> units) const;

  // Lower-case hex SHA-256 over the raw unit strings in id order, each
  // followed by a newline. Used in the remote predictor handshake.
  std::string sha256() const;

 private:
  SubwordVocab() = default;
  void index_units();
  std::vector<std::string> bpe_symbols(std::string_view word) const;
  Segmentation segment_wordpiece(std::string_view word) const;
  Segmentation segment_bpe(std::string_view word) const;

  Scheme scheme_ = Scheme::WordPiece;
  std::vector<std::string> units_;
  std::vector<std::string> surfaces_;
  std::vector<bool> word_initial_;
  std::vector<bool> special_;
  std::unordered_map<std::string, UnitId> ids_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::unordered_map<std::string, std::size_t> merge_ranks_;
  std::string continuation_marker_;
  std::string word_initial_marker_;
  std::optional<UnitId> unknown_;
  std::optional<UnitId> end_of_text_;
};

/// WordPiece: one unit per line, continuation prefix "##"; "[UNK]" is the
/// unknown symbol and "[EOS]" the end-of-text symbol when present.
///
/// BPE: the unit file starts with a header line
/// `word_initial=<marker> [unk=<unit>] [eos=<unit>]`, then one unit per line,
/// optionally `unit<TAB>id` with ids dense in [0, n). The merges file holds
/// two space-separated symbols per line; rank is line order. Lines starting
/// with '#' in the merges file are comments.
SubwordVocab load_vocab(const VocabFiles& files, Scheme scheme);

void save_vocab(const SubwordVocab& vocab, const VocabFiles& files);

// Splits a UTF-8 string into code point substrings.
std::vector<std::string> utf8_chars(std::string_view text);

}  // namespace wordeval
