#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wordeval/corpus.hpp"
#include "wordeval/neighbors.hpp"
#include "wordeval/predictor.hpp"

namespace wordeval {

struct PredictionRecord {
  std::string target;
  Bin target_bin = Bin::Unbinned;
  bool greedy_hit = false;
  bool topk_hit = false;
  std::string greedy_word;
  double word_logprob = 0.0;
};

struct Accuracy {
  std::uint64_t events = 0;
  std::uint64_t greedy_hits = 0;
  std::uint64_t topk_hits = 0;
  double top1 = 0.0;  // percent
  double topk = 0.0;  // percent
};

struct TypeDiversity {
  std::uint64_t greedy_types = 0;
  std::uint64_t topk_types = 0;
  std::uint64_t denominator = 0;
  double t1 = 0.0;  // percent
  double tk = 0.0;  // percent
};

struct BinCoverage {
  std::uint64_t token_events = 0;
  std::uint64_t token_hits = 0;
  std::uint64_t topk_token_hits = 0;
  std::uint64_t hit_types = 0;
  std::uint64_t topk_hit_types = 0;
  std::uint64_t population = 0;
  double token_coverage = 0.0;       // percent of token events hit (greedy)
  double type_coverage = 0.0;        // percent of the bin population hit (greedy)
  double topk_token_coverage = 0.0;  // same, top-k channel
  double topk_type_coverage = 0.0;
};

struct StratifiedCoverage {
  // indexed by Bin: High, Mid, Low, Unbinned. The Unbinned population counts
  // attempted types that are outside every frequency bin.
  std::array<BinCoverage, 4> bins{};

  const BinCoverage& operator[](Bin bin) const { return bins[static_cast<std::size_t>(bin)]; }
};

struct SoftMatchPoint {
  std::size_t depth = 0;
  std::uint64_t hits = 0;
  std::uint64_t hit_types = 0;
  double accuracy = 0.0;     // percent of events
  double unique_types = 0.0; // percent of attempted types
};

struct UnitCrossEntropy {
  double cross_entropy = 0.0;  // nats per unit
  double perplexity = 0.0;
  std::size_t events = 0;
};

Accuracy accuracy(std::span<const PredictionRecord> records);
TypeDiversity type_diversity(std::span<const PredictionRecord> records, std::uint64_t test_type_count);
// Distinct target types among the records (the T-metric denominator).
std::uint64_t attempted_types(std::span<const PredictionRecord> records);
double word_perplexity(std::span<const PredictionRecord> records);
StratifiedCoverage stratified_coverage(std::span<const PredictionRecord> records, const BinAssignment& bins);
// Same tallies with populations derived from the records themselves.
StratifiedCoverage stratified_coverage(std::span<const PredictionRecord> records);

inline const std::vector<std::size_t> kDefaultSoftMatchDepths = {1, 3, 10, 25, 50, 100};

/// Depth 1 is the exact-match baseline. At depth d > 1 a record is a hit if
/// it is a greedy hit or its greedy word is among the d nearest neighbors of
/// the target. Neighbor lists are computed once per distinct target (in
/// parallel) at the largest depth. With `topk_channel` the exact-match base
/// is the top-k hit flag instead of the greedy one.
std::vector<SoftMatchPoint> softmatch_rescore(std::span<const PredictionRecord> records, const NeighborIndex& index,
                                              std::span<const std::size_t> depths, bool topk_channel = false);

UnitCrossEntropy unit_cross_entropy(std::span<const std::pair<UnitId, UnitDistribution>> events);

/// Mergeable partial tallies for parallel aggregation. merge() is
/// associative and commutative.
class MetricAccumulator {
 public:
  void add(const PredictionRecord& record);
  void merge(const MetricAccumulator& other);

  std::uint64_t events() const { return events_; }
  std::uint64_t greedy_hits() const { return greedy_hits_; }
  std::uint64_t topk_hits() const { return topk_hits_; }
  double logprob_sum() const { return logprob_sum_; }
  const std::set<std::string>& greedy_types() const { return greedy_types_; }
  const std::set<std::string>& topk_types() const { return topk_types_; }
  const std::set<std::string>& attempted_types() const { return attempted_; }

 private:
  std::uint64_t events_ = 0;
  std::uint64_t greedy_hits_ = 0;
  std::uint64_t topk_hits_ = 0;
  double logprob_sum_ = 0.0;
  std::set<std::string> greedy_types_;
  std::set<std::string> topk_types_;
  std::set<std::string> attempted_;
};

struct EvalReport {
  Accuracy accuracy;
  TypeDiversity diversity;
  double ppx = 0.0;
  StratifiedCoverage coverage;
  std::vector<SoftMatchPoint> softmatch;
  std::size_t k = 10;
  std::uint64_t aborted = 0;
  std::uint64_t skipped = 0;
};

EvalReport build_report(std::span<const PredictionRecord> records, std::size_t k);

// Table-style header and row: "top1 (topk) | T1 (Tk) | ppx".
void write_report_table(std::ostream& out, const EvalReport& report, const std::string& label);
void write_report_json(std::ostream& out, const EvalReport& report);
void write_coverage_tsv(std::ostream& out, const StratifiedCoverage& coverage);
void write_softmatch_tsv(std::ostream& out, std::span<const SoftMatchPoint> points);

}  // namespace wordeval
