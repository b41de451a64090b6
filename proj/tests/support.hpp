#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <unistd.h>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "wordeval/corpus.hpp"
#include "wordeval/predictor.hpp"
#include "wordeval/tokenizer.hpp"

namespace testing {

namespace fs = std::filesystem;
using wordeval::UnitId;
using Rational = boost::multiprecision::cpp_rational;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("wordeval-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- toy data

// WordPiece vocabulary: every letter as an initial and a continuation unit,
// plus the given whole words and continuation pieces, plus [UNK] and [EOS].
inline wordeval::SubwordVocab letter_wordpiece(const std::string& letters, const std::vector<std::string>& extra = {}) {
  std::vector<std::string> units{"[UNK]", "[EOS]"};
  for (char c : letters) units.emplace_back(1, c);
  for (char c : letters) units.push_back(std::string("##") + c);
  for (const auto& e : extra) {
    if (std::find(units.begin(), units.end(), e) == units.end()) units.push_back(e);
  }
  return wordeval::SubwordVocab::wordpiece(units);
}

struct ToyLanguage {
  std::vector<std::string> lexicon;  // index order = Zipf rank
  std::string letters;
};

inline ToyLanguage make_language(std::mt19937_64& rng, std::size_t types, const std::string& letters = "abcdefgh") {
  ToyLanguage lang;
  lang.letters = letters;
  std::uniform_int_distribution<std::size_t> len(1, 5);
  std::uniform_int_distribution<std::size_t> pick(0, letters.size() - 1);
  std::set<std::string> seen;
  while (lang.lexicon.size() < types) {
    std::string w;
    const auto n = len(rng);
    for (std::size_t i = 0; i < n; ++i) w += letters[pick(rng)];
    if (seen.insert(w).second) lang.lexicon.push_back(w);
  }
  return lang;
}

// Sentences drawn from a Zipf(1) distribution with a first-order word chain
// so that an n-gram model has something to learn.
inline wordeval::Corpus make_corpus(std::mt19937_64& rng, const ToyLanguage& lang, std::size_t sentences,
                                    std::size_t min_len, std::size_t max_len) {
  std::vector<double> weights;
  for (std::size_t r = 0; r < lang.lexicon.size(); ++r) weights.push_back(1.0 / static_cast<double>(r + 1));
  std::discrete_distribution<std::size_t> zipf(weights.begin(), weights.end());
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::bernoulli_distribution follow(0.5);
  wordeval::Corpus corpus;
  for (std::size_t s = 0; s < sentences; ++s) {
    wordeval::Sentence sentence;
    const auto n = len(rng);
    std::size_t prev = zipf(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t w = (i > 0 && follow(rng)) ? (prev * 7 + 3) % lang.lexicon.size() : zipf(rng);
      sentence.push_back(lang.lexicon[w]);
      prev = w;
    }
    corpus.sentences.push_back(std::move(sentence));
  }
  return corpus;
}

inline std::string corpus_text(const wordeval::Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out += ' ';
      out += s[i];
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------- n-gram oracle

/// Interpolated absolute discounting computed in exact rational arithmetic
/// from brute-force n-gram scans over the padded training sequences.
class OracleNGram {
 public:
  OracleNGram(const std::vector<std::vector<UnitId>>& sequences, std::size_t vocab_size, int order, Rational delta,
              std::optional<UnitId> eos)
      : vocab_size_(vocab_size), order_(order), delta_(delta) {
    const UnitId start = static_cast<UnitId>(vocab_size);
    for (const auto& s : sequences) {
      if (s.empty()) continue;
      std::vector<UnitId> padded(static_cast<std::size_t>(order - 1), start);
      padded.insert(padded.end(), s.begin(), s.end());
      if (eos) padded.push_back(*eos);
      padded_.push_back(std::move(padded));
    }
  }

  std::size_t vocab_size() const { return vocab_size_; }

  const std::vector<Rational>& distribution(const std::vector<UnitId>& context) {
    std::vector<UnitId> h(static_cast<std::size_t>(order_ - 1), static_cast<UnitId>(vocab_size_));
    const std::size_t want = h.size();
    const std::size_t take = std::min(want, context.size());
    for (std::size_t i = 0; i < take; ++i) h[want - take + i] = context[context.size() - take + i];
    auto it = memo_.find(h);
    if (it != memo_.end()) return it->second;
    return memo_.emplace(h, compute(h)).first->second;
  }

  Rational probability(const std::vector<UnitId>& context, UnitId u) { return distribution(context)[u]; }

  double logprob(const std::vector<UnitId>& context, UnitId u) {
    return std::log(static_cast<double>(probability(context, u)));
  }

  // 1-based rank with ties broken by ascending unit id.
  std::size_t rank(const std::vector<UnitId>& context, UnitId u) {
    const auto& p = distribution(context);
    std::size_t r = 1;
    for (UnitId v = 0; v < p.size(); ++v) {
      if (p[v] > p[u] || (p[v] == p[u] && v < u)) ++r;
    }
    return r;
  }

  UnitId argmax(const std::vector<UnitId>& context) {
    const auto& p = distribution(context);
    UnitId best = 0;
    for (UnitId v = 1; v < p.size(); ++v) {
      if (p[v] > p[best]) best = v;
    }
    return best;
  }

 private:
  std::vector<Rational> compute(const std::vector<UnitId>& h) {
    std::vector<Rational> p(vocab_size_, Rational(1, static_cast<long long>(vocab_size_)));
    for (std::size_t len = 0; len <= h.size(); ++len) {
      const std::vector<UnitId> suffix(h.end() - static_cast<std::ptrdiff_t>(len), h.end());
      std::map<UnitId, long long> counts;
      long long total = 0;
      for (const auto& seq : padded_) {
        for (std::size_t i = static_cast<std::size_t>(order_ - 1); i < seq.size(); ++i) {
          if (!std::equal(suffix.begin(), suffix.end(), seq.begin() + static_cast<std::ptrdiff_t>(i - len))) continue;
          ++counts[seq[i]];
          ++total;
        }
      }
      if (total == 0) continue;
      std::vector<Rational> next(vocab_size_);
      const Rational backoff = delta_ * Rational(static_cast<long long>(counts.size()), total);
      for (UnitId u = 0; u < vocab_size_; ++u) {
        auto c = counts.find(u);
        Rational own = 0;
        if (c != counts.end() && Rational(c->second) > delta_) own = (Rational(c->second) - delta_) / total;
        next[u] = own + backoff * p[u];
      }
      p = std::move(next);
    }
    return p;
  }

  std::size_t vocab_size_;
  int order_;
  Rational delta_;
  std::vector<std::vector<UnitId>> padded_;
  std::map<std::vector<UnitId>, std::vector<Rational>> memo_;
};

// ---------------------------------------------------------------- decode oracles

inline bool starts_with(const std::string& s, const std::string& prefix) {
  return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

struct OracleGreedy {
  bool hit = false;
  std::string word;
};

/// Full argmax chain to the end of the word (no early exit), then compare.
template <class ArgMax>
OracleGreedy oracle_greedy(ArgMax&& argmax, const wordeval::SubwordVocab& vocab, std::vector<UnitId> context,
                           const std::string& target, std::size_t max_units) {
  OracleGreedy out;
  UnitId u = argmax(context);
  if (!vocab.is_end_of_word(u) || vocab.is_special(u)) return out;
  std::size_t used = 0;
  for (;;) {
    out.word += vocab.surface(u);
    context.push_back(u);
    ++used;
    const UnitId next = argmax(context);
    if (vocab.is_end_of_word(next)) break;
    if (used == max_units) return out;
    u = next;
  }
  out.hit = out.word == target;
  return out;
}

/// Every way to spell `target` as a word-initial unit followed by
/// continuation units, at most max_units long.
inline std::vector<std::vector<UnitId>> all_spellings(const wordeval::SubwordVocab& vocab, const std::string& target,
                                                      std::size_t max_units) {
  std::vector<std::vector<UnitId>> out;
  std::vector<UnitId> path;
  std::function<void(std::size_t)> walk = [&](std::size_t pos) {
    if (pos == target.size()) {
      out.push_back(path);
      return;
    }
    if (path.size() == max_units) return;
    for (UnitId u = 0; u < vocab.size(); ++u) {
      if (vocab.is_special(u)) continue;
      const bool initial = vocab.is_end_of_word(u);
      if (initial != path.empty()) continue;
      const std::string& s = vocab.surface(u);
      if (s.empty() || target.compare(pos, s.size(), s) != 0 || pos + s.size() > target.size()) continue;
      path.push_back(u);
      walk(pos + s.size());
      path.pop_back();
    }
  };
  walk(0);
  return out;
}

/// Top-k hit by exhaustive enumeration: some spelling whose every unit ranks
/// within k at its step.
template <class Rank>
bool oracle_topk(Rank&& rank, const wordeval::SubwordVocab& vocab, const std::vector<UnitId>& context,
                 const std::string& target, std::size_t k, std::size_t max_units) {
  for (const auto& spelling : all_spellings(vocab, target, max_units)) {
    std::vector<UnitId> ctx = context;
    bool ok = true;
    for (UnitId u : spelling) {
      if (rank(ctx, u) > k) {
        ok = false;
        break;
      }
      ctx.push_back(u);
    }
    if (ok) return true;
  }
  return false;
}

// ---------------------------------------------------------------- scripted predictor

/// Predictor driven by an explicit table: full probability vectors keyed by
/// context; unlisted contexts fall back to `fallback`.
class TablePredictor final : public wordeval::Predictor {
 public:
  explicit TablePredictor(std::size_t vocab_size)
      : vocab_size_(vocab_size), fallback_(vocab_size, 1.0 / static_cast<double>(vocab_size)) {}

  void set(const std::vector<UnitId>& context, std::vector<double> probabilities) {
    table_[context] = std::move(probabilities);
  }
  void set_fallback(std::vector<double> probabilities) { fallback_ = std::move(probabilities); }

  std::size_t vocab_size() const override { return vocab_size_; }
  wordeval::UnitDistribution predict(std::span<const UnitId> context, std::size_t k) override {
    ++calls;
    return wordeval::top_k_from_probabilities(probabilities(context), k);
  }
  double logprob(std::span<const UnitId> context, UnitId unit) override {
    return std::log(probabilities(context)[unit]);
  }
  const std::vector<double>& probabilities(std::span<const UnitId> context) const {
    auto it = table_.find(std::vector<UnitId>(context.begin(), context.end()));
    return it == table_.end() ? fallback_ : it->second;
  }

  std::size_t calls = 0;

 private:
  std::size_t vocab_size_;
  std::vector<double> fallback_;
  std::map<std::vector<UnitId>, std::vector<double>> table_;
};

/// Random distributions derived deterministically from a hash of the
/// context, so identical contexts always see identical distributions.
class HashedRandomPredictor final : public wordeval::Predictor {
 public:
  HashedRandomPredictor(std::size_t vocab_size, std::uint64_t seed, double sharpness = 3.0)
      : vocab_size_(vocab_size), seed_(seed), sharpness_(sharpness) {}

  std::size_t vocab_size() const override { return vocab_size_; }
  bool thread_safe() const override { return true; }

  std::vector<double> probabilities(std::span<const UnitId> context) const {
    std::uint64_t h = seed_ ^ 0x9e3779b97f4a7c15ULL;
    for (UnitId u : context) h = (h ^ (u + 0x632be59bd9b4e019ULL)) * 0x100000001b3ULL;
    std::mt19937_64 rng(h);
    std::exponential_distribution<double> e(1.0);
    std::vector<double> p(vocab_size_);
    double sum = 0.0;
    for (auto& v : p) {
      v = std::pow(e(rng), sharpness_) + 1e-9;
      sum += v;
    }
    for (auto& v : p) v /= sum;
    return p;
  }

  wordeval::UnitDistribution predict(std::span<const UnitId> context, std::size_t k) override {
    return wordeval::top_k_from_probabilities(probabilities(context), k);
  }
  double logprob(std::span<const UnitId> context, UnitId unit) override {
    return std::log(probabilities(context)[unit]);
  }

 private:
  std::size_t vocab_size_;
  std::uint64_t seed_;
  double sharpness_;
};

}  // namespace testing
