#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace wordeval {

using Sentence = std::vector<std::string>;

struct Corpus {
  std::vector<Sentence> sentences;

  std::size_t token_count() const;
  std::unordered_set<std::string> types() const;
  bool empty() const { return sentences.empty(); }
};

struct IngestOptions {
  bool lowercase = false;
};

// One sentence per line, whitespace-delimited tokens. Blank lines are skipped.
// Invalid UTF-8 raises an Encoding error naming the 1-based line number.
Corpus ingest(const std::filesystem::path& path, IngestOptions options = {});
Corpus ingest_text(std::string_view text, IngestOptions options = {});

// Returns the 0-based byte offset of the first invalid sequence, or npos.
std::size_t find_invalid_utf8(std::string_view text);

class FrequencyTable {
 public:
  FrequencyTable() = default;

  void add(const std::string& type, std::uint64_t count = 1);
  void merge(const FrequencyTable& other);

  std::uint64_t count(const std::string& type) const;
  bool contains(const std::string& type) const { return counts_.count(type) != 0; }
  std::uint64_t total() const { return total_; }
  std::size_t size() const { return counts_.size(); }
  const std::unordered_map<std::string, std::uint64_t>& counts() const { return counts_; }

  // Descending count, ties by ascending type so output is deterministic.
  std::vector<std::pair<std::string, std::uint64_t>> sorted() const;

  friend bool operator==(const FrequencyTable& a, const FrequencyTable& b) {
    return a.total_ == b.total_ && a.counts_ == b.counts_;
  }

 private:
  std::unordered_map<std::string, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

// Shards sentences across OpenMP threads and merges per-thread tables.
FrequencyTable count_frequencies(const Corpus& corpus);

enum class Bin : std::uint8_t { High = 0, Mid = 1, Low = 2, Unbinned = 3 };

inline constexpr std::array<Bin, 3> kStratifiedBins = {Bin::High, Bin::Mid, Bin::Low};

const char* to_string(Bin bin);
Bin parse_bin(std::string_view text);

// [1000, inf) High, [100, 1000) Mid, [10, 100) Low, otherwise Unbinned.
Bin bin_for_frequency(std::uint64_t train_frequency);

class BinAssignment {
 public:
  // Types that are not tracked (never seen in test) report Unbinned.
  Bin bin(const std::string& type) const;
  bool eligible(const std::string& type) const;

  std::uint64_t population(Bin bin) const { return populations_[static_cast<std::size_t>(bin)]; }
  const std::array<std::uint64_t, 4>& populations() const { return populations_; }

  // Types present in both train and test but with frequency < 10.
  std::uint64_t eligible_unbinned() const { return populations_[3]; }
  // Test types never seen in train.
  std::uint64_t test_only() const { return test_only_; }
  std::uint64_t intersection_size() const {
    return populations_[0] + populations_[1] + populations_[2] + populations_[3];
  }

  const std::unordered_map<std::string, Bin>& assignments() const { return bins_; }

 private:
  friend BinAssignment assign_bins(const FrequencyTable&, const std::unordered_set<std::string>&);

  std::unordered_map<std::string, Bin> bins_;
  std::unordered_set<std::string> eligible_;
  std::array<std::uint64_t, 4> populations_{};
  std::uint64_t test_only_ = 0;
};

BinAssignment assign_bins(const FrequencyTable& train, const std::unordered_set<std::string>& test_types);

void write_frequency_tsv(std::ostream& out, const FrequencyTable& table);
// Rows for every test type: type, train count, bin label.
void write_bin_tsv(std::ostream& out, const FrequencyTable& train, const BinAssignment& bins);
// Rank-frequency pairs (1-based rank).
void write_zipf_tsv(std::ostream& out, const FrequencyTable& table);

}  // namespace wordeval
