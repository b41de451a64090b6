#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wordeval/corpus.hpp"
#include "wordeval/embedding.hpp"

namespace wordeval {

class RemotePredictor;

enum class Condition { Rare, Common };

const char* to_string(Condition condition);

inline constexpr std::uint64_t kRareThreshold = 50;

/// Three sentences that differ in exactly one token position: the slot holds
/// the hypernym (h), the rare or common variant (v), or the sibling (a).
struct ProbeTriple {
  Condition condition = Condition::Rare;
  Sentence h;
  Sentence v;
  Sentence a;
  std::size_t slot = 0;
  std::size_t line = 0;  // 1-based line of the record's condition line

  const std::string& anchor_word() const { return h[slot]; }
  const std::string& variant_word() const { return v[slot]; }
  const std::string& sibling_word() const { return a[slot]; }
};

/// Records separated by blank lines, four lines each:
///   condition: rare|common
///   h: <sentence>
///   v: <sentence>
///   a: <sentence>
/// Lines starting with '#' are comments. Problems raise Format errors naming
/// the line.
std::vector<ProbeTriple> load_triples(std::istream& in, const std::string& source = "<stream>",
                                      IngestOptions options = {});
std::vector<ProbeTriple> load_triples(const std::filesystem::path& path, IngestOptions options = {});

struct ConditionMismatch {
  std::size_t triple = 0;
  std::string variant;
  std::uint64_t train_frequency = 0;
};

// Triples whose condition disagrees with the variant's train frequency
// (rare means fewer than 50 occurrences).
std::vector<ConditionMismatch> check_conditions(std::span<const ProbeTriple> triples, const FrequencyTable& train);

/// Greedy cosine matching F1 between two sets of token vectors. Zero-norm
/// vectors are ignored. Returns nullopt if either side has no usable vector.
std::optional<double> greedy_match_f1(std::span<const std::vector<float>> a, std::span<const std::vector<float>> b);

// Same, looking tokens up in a static table; out-of-vocabulary tokens are skipped.
std::optional<double> sentence_similarity(const Sentence& a, const Sentence& b, const EmbeddingTable& table);

class SentenceScorer {
 public:
  virtual ~SentenceScorer() = default;
  virtual std::optional<double> similarity(const Sentence& a, const Sentence& b) = 0;
  virtual bool thread_safe() const { return false; }
};

class StaticEmbeddingScorer final : public SentenceScorer {
 public:
  explicit StaticEmbeddingScorer(const EmbeddingTable& table) : table_(table) {}
  std::optional<double> similarity(const Sentence& a, const Sentence& b) override;
  bool thread_safe() const override { return true; }

 private:
  const EmbeddingTable& table_;
};

/// Contextual token vectors fetched over the embedding extension of the wire
/// protocol. An empty vector for a token marks it out of vocabulary.
class RemoteEmbeddingScorer final : public SentenceScorer {
 public:
  explicit RemoteEmbeddingScorer(RemotePredictor& remote) : remote_(remote) {}
  std::optional<double> similarity(const Sentence& a, const Sentence& b) override;

 private:
  RemotePredictor& remote_;
};

struct ProbeResult {
  std::size_t triple = 0;
  std::optional<double> sim_variant;
  std::optional<double> sim_sibling;
  bool skipped = false;
  // strict: ties are misses
  bool hit = false;
};

struct ConditionCounts {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t total() const { return hits + misses; }
};

struct ChiSquare {
  double statistic = 0.0;
  double p_value = 1.0;
  int degrees_of_freedom = 1;
  bool yates = false;
};

struct ProbeReport {
  std::vector<ProbeResult> results;
  ConditionCounts rare;
  ConditionCounts common;
  std::vector<std::size_t> skipped;
  // Present when both conditions have at least one usable probe.
  std::optional<ChiSquare> chi_square;
};

/// Scores (h, v) against (h, a) for every triple. A probe is skipped when a
/// similarity is undefined. Throws EmptyInput if no probe is usable.
ProbeReport run_probes(std::span<const ProbeTriple> triples, SentenceScorer& scorer, bool yates = false);

using Table2x2 = std::array<std::array<std::uint64_t, 2>, 2>;

/// Pearson chi-square test of independence for a 2x2 table, one degree of
/// freedom, optionally with the Yates continuity correction. A zero row or
/// column total raises Degenerate.
ChiSquare chi_square_independence(const Table2x2& table, bool yates = false);

// Upper tail of the chi-square distribution with one degree of freedom.
double chi_square_survival_1df(double statistic);

void write_contingency_tsv(std::ostream& out, const ProbeReport& report);
void write_paraphrase_json(std::ostream& out, const ProbeReport& report, std::span<const ProbeTriple> triples);

}  // namespace wordeval
