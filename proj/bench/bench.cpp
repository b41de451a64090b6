// Serial reference kernels against the OpenMP implementations.

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "wordeval/corpus.hpp"
#include "wordeval/embedding.hpp"
#include "wordeval/evaluate.hpp"
#include "wordeval/metrics.hpp"
#include "wordeval/neighbors.hpp"
#include "wordeval/predictor.hpp"
#include "wordeval/reference.hpp"

using namespace wordeval;

namespace {

std::vector<std::string> lexicon(std::size_t types) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < types; ++i) {
    std::string w;
    for (std::size_t x = i + 1; x > 0; x /= 6) w += static_cast<char>('a' + x % 6);
    out.push_back(w);
  }
  return out;
}

Corpus zipf_corpus(std::size_t sentences, std::size_t types, std::uint64_t seed) {
  const auto words = lexicon(types);
  std::vector<double> weights;
  for (std::size_t r = 0; r < types; ++r) weights.push_back(1.0 / static_cast<double>(r + 1));
  std::discrete_distribution<std::size_t> zipf(weights.begin(), weights.end());
  std::uniform_int_distribution<std::size_t> len(3, 12);
  std::mt19937_64 rng(seed);
  Corpus c;
  for (std::size_t s = 0; s < sentences; ++s) {
    Sentence sentence;
    for (std::size_t i = len(rng); i > 0; --i) sentence.push_back(words[zipf(rng)]);
    c.sentences.push_back(std::move(sentence));
  }
  return c;
}

EmbeddingTable random_table(std::size_t n, std::size_t dim) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> g;
  EmbeddingTable t(dim);
  std::vector<float> v(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : v) x = g(rng);
    t.add("w" + std::to_string(i), v);
  }
  return t;
}

SubwordVocab letters() {
  std::vector<std::string> units{"[UNK]", "[EOS]"};
  for (char c = 'a'; c <= 'f'; ++c) units.emplace_back(1, c);
  for (char c = 'a'; c <= 'f'; ++c) units.push_back(std::string("##") + c);
  return SubwordVocab::wordpiece(units);
}

std::vector<PredictionRecord> random_records(const EmbeddingTable& table, std::size_t n) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> pick(0, table.size() - 1);
  std::vector<PredictionRecord> out(n);
  for (auto& r : out) {
    r.target = table.word(pick(rng));
    r.greedy_word = rng() % 4 == 0 ? r.target : table.word(pick(rng));
    r.greedy_hit = r.greedy_word == r.target;
  }
  return out;
}

void BM_Frequencies_Parallel(benchmark::State& state) {
  const Corpus c = zipf_corpus(20000, 5000, 1);
  for (auto _ : state) benchmark::DoNotOptimize(count_frequencies(c));
}
void BM_Frequencies_Serial(benchmark::State& state) {
  const Corpus c = zipf_corpus(20000, 5000, 1);
  for (auto _ : state) benchmark::DoNotOptimize(reference::count_frequencies(c));
}

void BM_Knn_Exact(benchmark::State& state) {
  const EmbeddingTable t = random_table(5000, 50);
  const NeighborIndex index = NeighborIndex::exact(t);
  std::size_t q = 0;
  for (auto _ : state) benchmark::DoNotOptimize(index.knn(t.word(q++ % t.size()), 10));
}
void BM_Knn_Forest(benchmark::State& state) {
  const EmbeddingTable t = random_table(5000, 50);
  ForestOptions o;
  o.num_trees = 32;
  o.leaf_size = 32;
  o.search_k = 1500;
  const NeighborIndex index = NeighborIndex::forest(t, o);
  std::size_t q = 0;
  for (auto _ : state) benchmark::DoNotOptimize(index.knn(t.word(q++ % t.size()), 10));
}
void BM_Knn_Serial(benchmark::State& state) {
  const EmbeddingTable t = random_table(5000, 50);
  std::size_t q = 0;
  for (auto _ : state) benchmark::DoNotOptimize(reference::knn_scan(t, t.word(q++ % t.size()), 10));
}

struct EvalFixture {
  Corpus train = zipf_corpus(2000, 300, 7);
  Corpus test = zipf_corpus(100, 300, 8);
  SubwordVocab vocab = letters();
  FrequencyTable freq = count_frequencies(train);
  NGramModel model = [this] {
    std::vector<std::vector<UnitId>> seqs;
    for (const auto& s : train.sentences) seqs.push_back(vocab.encode(s));
    return NGramModel::train(seqs, vocab.size(), 3, 0.75, vocab.end_of_text_id());
  }();
};

void BM_Evaluate_Parallel(benchmark::State& state) {
  EvalFixture f;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(f.test, f.freq, f.vocab, f.model));
}
void BM_Evaluate_Serial(benchmark::State& state) {
  EvalFixture f;
  for (auto _ : state) benchmark::DoNotOptimize(reference::evaluate(f.test, f.freq, f.vocab, f.model));
}

void BM_Softmatch_Parallel(benchmark::State& state) {
  const EmbeddingTable t = random_table(2000, 50);
  const NeighborIndex index = NeighborIndex::exact(t);
  const auto records = random_records(t, 800);
  for (auto _ : state) benchmark::DoNotOptimize(softmatch_rescore(records, index, kDefaultSoftMatchDepths));
}
void BM_Softmatch_Serial(benchmark::State& state) {
  const EmbeddingTable t = random_table(2000, 50);
  const auto records = random_records(t, 800);
  for (auto _ : state) benchmark::DoNotOptimize(reference::softmatch_rescore(records, t, kDefaultSoftMatchDepths));
}

}  // namespace

BENCHMARK(BM_Frequencies_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Frequencies_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Knn_Serial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Knn_Exact)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Knn_Forest)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Evaluate_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Evaluate_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Softmatch_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Softmatch_Parallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
