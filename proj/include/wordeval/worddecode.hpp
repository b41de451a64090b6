#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wordeval/predictor.hpp"
#include "wordeval/tokenizer.hpp"

namespace wordeval {

/// One word-level prediction event: the unit-encoded sentence history and
/// the target word with its canonical segmentation.
struct WordEvent {
  std::vector<UnitId> context;
  std::string target;
  Segmentation target_segmentation;
};

// Throws Domain for an empty target. Unsegmentable history words propagate
// the tokenizer's Coverage error.
WordEvent make_event(const SubwordVocab& vocab, std::span<const std::string> history, const std::string& target);

struct GreedyOptions {
  std::size_t max_units = kDefaultMaxUnitsPerWord;
  // Stop as soon as the decoded string stops being a prefix of the target.
  // When false the word is decoded to its end so greedy_word is complete.
  bool early_exit = true;
};

struct GreedyResult {
  bool hit = false;
  std::string word;
  std::size_t units_consumed = 0;
  std::size_t predictions = 0;
  // max_units reached before the word ended
  bool exhausted = false;
  // the argmax unit at the word start was a continuation or special unit
  bool invalid_start = false;
};

/// Greedy whole-word decode. Takes the argmax unit step by step, appending
/// each one to the context. The word ends when the next argmax unit is
/// word-initial (or end-of-text); the event is a hit iff the finished word
/// equals the target.
GreedyResult greedy_word_search(Predictor& predictor, const SubwordVocab& vocab, const WordEvent& event,
                                const GreedyOptions& options = {});

struct TopKResult {
  bool hit = false;
  std::size_t predictions = 0;
  bool exhausted = false;
};

/// Depth-first search for a unit path spelling the target, where each unit
/// lies in the model's top-k at its step. Roots are the word-initial units of
/// the first top-k list in rank order; continuations must be non-initial
/// units, and every partial spelling must be a proper prefix of the target.
TopKResult topk_word_search(Predictor& predictor, const SubwordVocab& vocab, const WordEvent& event, std::size_t k,
                            std::size_t max_units = kDefaultMaxUnitsPerWord);

/// Experimental: ranks whole words by the product of their unit
/// probabilities (best-first over top-k expansions) and reports whether the
/// target is among the k best distinct words. `budget` caps model queries.
TopKResult topk_word_rank_search(Predictor& predictor, const SubwordVocab& vocab, const WordEvent& event,
                                 std::size_t k, std::size_t max_units = kDefaultMaxUnitsPerWord,
                                 std::size_t budget = 256);

/// Sum of natural-log unit probabilities over the target's canonical
/// segmentation, each conditioned on the context plus the preceding units.
double word_logprob(Predictor& predictor, const SubwordVocab& vocab, const WordEvent& event);

struct DecodeOptions {
  std::size_t k = 10;
  std::size_t max_units = kDefaultMaxUnitsPerWord;
  bool early_exit = false;
  bool whole_word_rank = false;
};

struct DecodeOutcome {
  bool greedy_hit = false;
  std::string greedy_word;
  bool topk_hit = false;
  double word_logprob = 0.0;
  std::size_t units_consumed = 0;
  bool exhausted = false;
};

DecodeOutcome decode_event(Predictor& predictor, const SubwordVocab& vocab, const WordEvent& event,
                           const DecodeOptions& options = {});

}  // namespace wordeval
