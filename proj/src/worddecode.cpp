#include "wordeval/worddecode.hpp"

#include <cmath>
#include <queue>
#include <set>
#include <string_view>

#include "wordeval/error.hpp"

namespace wordeval {

namespace {

bool is_prefix(std::string_view prefix, std::string_view of) {
  return prefix.size() <= of.size() && of.substr(0, prefix.size()) == prefix;
}

bool is_proper_prefix(std::string_view prefix, std::string_view of) {
  return prefix.size() < of.size() && is_prefix(prefix, of);
}

UnitId argmax(Predictor& predictor, std::span<const UnitId> context) {
  const auto dist = predictor.predict(context, 1);
  if (dist.top.empty()) throw Error(ErrorKind::Protocol, "predictor returned an empty distribution");
  return dist.top.front().unit;
}

bool starts_word(const SubwordVocab& vocab, UnitId unit) {
  return vocab.is_end_of_word(unit) && !vocab.is_special(unit);
}

}  // namespace

WordEvent make_event(const SubwordVocab& vocab, std::span<const std::string> history, const std::string& target) {
  if (target.empty()) throw Error(ErrorKind::Domain, "word event target must be non-empty");
  WordEvent event;
  event.context = vocab.encode(history);
  event.target = target;
  event.target_segmentation = vocab.segment(target);
  return event;
}

GreedyResult greedy_word_search(Predictor& predictor, const SubwordVocab& vocab, const WordEvent& event,
                                const GreedyOptions& options) {
  if (options.max_units == 0) throw Error(ErrorKind::Domain, "max_units must be >= 1");
  GreedyResult result;
  std::vector<UnitId> context = event.context;

  UnitId unit = argmax(predictor, context);
  ++result.predictions;
  if (!starts_word(vocab, unit)) {
    result.invalid_start = true;
    return result;
  }

  for (;;) {
    context.push_back(unit);
    result.word += vocab.surface(unit);
    ++result.units_consumed;
    if (options.early_exit && !is_prefix(result.word, event.target)) return result;

    const UnitId next = argmax(predictor, context);
    ++result.predictions;
    if (vocab.is_end_of_word(next)) {
      result.hit = result.word == event.target;
      return result;
    }
    if (result.units_consumed >= options.max_units) {
      result.exhausted = true;
      return result;
    }
    unit = next;
  }
}

TopKResult topk_word_search(Predictor& predictor, const SubwordVocab& vocab, const WordEvent& event, std::size_t k,
                            std::size_t max_units) {
  if (k == 0) throw Error(ErrorKind::Domain, "k must be >= 1");
  if (max_units == 0) throw Error(ErrorKind::Domain, "max_units must be >= 1");
  TopKResult result;
  const std::string& target = event.target;

  std::vector<UnitId> context = event.context;
  const std::size_t base = context.size();
  const auto first = predictor.predict(context, k);
  ++result.predictions;

  for (const auto& root : first.top) {
    if (!starts_word(vocab, root.unit)) continue;
    const std::string& spelled = vocab.surface(root.unit);
    if (spelled == target) {
      result.hit = true;
      return result;
    }
    if (!is_proper_prefix(spelled, target)) continue;

    std::vector<std::vector<UnitId>> paths{{root.unit}};
    while (!paths.empty()) {
      std::vector<UnitId> path = std::move(paths.back());
      paths.pop_back();
      if (path.size() >= max_units) {
        result.exhausted = true;
        continue;
      }
      context.resize(base);
      context.insert(context.end(), path.begin(), path.end());
      const auto dist = predictor.predict(context, k);
      ++result.predictions;
      const std::string prefix = vocab.spell(path);
      for (const auto& next : dist.top) {
        if (vocab.is_end_of_word(next.unit)) continue;
        const std::string word = prefix + vocab.surface(next.unit);
        if (word == target) {
          result.hit = true;
          return result;
        }
        if (is_proper_prefix(word, target)) {
          auto extended = path;
          extended.push_back(next.unit);
          paths.push_back(std::move(extended));
        }
      }
    }
  }
  return result;
}

TopKResult topk_word_rank_search(Predictor& predictor, const SubwordVocab& vocab, const WordEvent& event,
                                 std::size_t k, std::size_t max_units, std::size_t budget) {
  if (k == 0) throw Error(ErrorKind::Domain, "k must be >= 1");
  TopKResult result;

  struct Candidate {
    double score;
    std::string spelled;
    std::vector<UnitId> path;
  };
  auto worse = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.spelled > b.spelled;
  };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> frontier(worse);

  std::vector<UnitId> context = event.context;
  const std::size_t base = context.size();
  const auto first = predictor.predict(context, k);
  ++result.predictions;
  for (const auto& root : first.top) {
    if (starts_word(vocab, root.unit)) frontier.push({root.logprob, vocab.surface(root.unit), {root.unit}});
  }

  std::set<std::string> ranked;
  while (!frontier.empty()) {
    Candidate best = frontier.top();
    frontier.pop();
    if (ranked.insert(best.spelled).second) {
      if (best.spelled == event.target) {
        result.hit = true;
        return result;
      }
      if (ranked.size() >= k) return result;
    }
    if (best.path.size() >= max_units) {
      result.exhausted = true;
      continue;
    }
    if (result.predictions >= budget) {
      result.exhausted = true;
      continue;
    }
    context.resize(base);
    context.insert(context.end(), best.path.begin(), best.path.end());
    const auto dist = predictor.predict(context, k);
    ++result.predictions;
    for (const auto& next : dist.top) {
      if (vocab.is_end_of_word(next.unit)) continue;
      auto path = best.path;
      path.push_back(next.unit);
      frontier.push({best.score + next.logprob, best.spelled + vocab.surface(next.unit), std::move(path)});
    }
  }
  return result;
}

double word_logprob(Predictor& predictor, const SubwordVocab& vocab, const WordEvent& event) {
  (void)vocab;
  const auto& seg = event.target_segmentation;
  if (seg.units.empty() || seg.has_unknown) {
    throw Error(ErrorKind::Coverage, "target '" + event.target + "' has no canonical segmentation");
  }
  std::vector<UnitId> context = event.context;
  double total = 0.0;
  for (UnitId unit : seg.units) {
    const double lp = predictor.logprob(context, unit);
    if (!std::isfinite(lp)) {
      throw Error(ErrorKind::Numeric, "non-finite unit log-probability inside target '" + event.target + "'");
    }
    total += lp;
    context.push_back(unit);
  }
  return total;
}

DecodeOutcome decode_event(Predictor& predictor, const SubwordVocab& vocab, const WordEvent& event,
                           const DecodeOptions& options) {
  DecodeOutcome out;
  const auto greedy = greedy_word_search(predictor, vocab, event, {options.max_units, options.early_exit});
  out.greedy_hit = greedy.hit;
  out.greedy_word = greedy.word;
  out.units_consumed = greedy.units_consumed;
  out.exhausted = greedy.exhausted;

  const auto topk = options.whole_word_rank
                        ? topk_word_rank_search(predictor, vocab, event, options.k, options.max_units)
                        : topk_word_search(predictor, vocab, event, options.k, options.max_units);
  out.topk_hit = topk.hit;
  out.word_logprob = word_logprob(predictor, vocab, event);
  return out;
}

}  // namespace wordeval
