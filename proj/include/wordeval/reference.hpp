#pragma once

// Straightforward single-threaded versions of the parallel kernels. They
// share no code with the optimized paths and serve as baselines for tests
// and benchmarks.

#include <span>
#include <string>
#include <vector>

#include "wordeval/corpus.hpp"
#include "wordeval/embedding.hpp"
#include "wordeval/evaluate.hpp"
#include "wordeval/metrics.hpp"

namespace wordeval::reference {

FrequencyTable count_frequencies(const Corpus& corpus);

// Exact cosine neighbors by a double-precision scan; ties by ascending word.
std::vector<std::string> knn_scan(const EmbeddingTable& table, const std::string& word, std::size_t k);

// Serial evaluation loop: one event at a time, history re-encoded per event.
EvaluationRun evaluate(const Corpus& test, const FrequencyTable& train, const SubwordVocab& vocab,
                       Predictor& predictor, const EvaluationOptions& options = {});

// Checks every (record, depth) pair with its own neighbor scan.
std::vector<SoftMatchPoint> softmatch_rescore(std::span<const PredictionRecord> records, const EmbeddingTable& table,
                                              std::span<const std::size_t> depths);

}  // namespace wordeval::reference
