#include "wordeval/reference.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "wordeval/error.hpp"

namespace wordeval::reference {

FrequencyTable count_frequencies(const Corpus& corpus) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyInput, "cannot count an empty corpus");
  FrequencyTable table;
  for (const auto& sentence : corpus.sentences) {
    for (const auto& word : sentence) table.add(word);
  }
  return table;
}

namespace {

double cosine(std::span<const float> a, std::span<const float> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

}  // namespace

std::vector<std::string> knn_scan(const EmbeddingTable& table, const std::string& word, std::size_t k) {
  const auto row = table.find(word);
  if (!row) return {};
  std::vector<std::pair<double, std::string>> scored;
  for (std::size_t r = 0; r < table.size(); ++r) {
    if (r == *row) continue;
    scored.emplace_back(cosine(table.vector(*row), table.vector(r)), table.word(r));
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

EvaluationRun evaluate(const Corpus& test, const FrequencyTable& train, const SubwordVocab& vocab,
                       Predictor& predictor, const EvaluationOptions& options) {
  if (test.empty()) throw Error(ErrorKind::EmptyInput, "test corpus is empty");
  if (predictor.vocab_size() != vocab.size()) throw Error(ErrorKind::Configuration, "vocabulary size mismatch");
  EvaluationRun run;
  std::vector<std::string> carried;
  for (std::size_t s = 0; s < test.sentences.size(); ++s) {
    const Sentence& sentence = test.sentences[s];
    std::vector<std::string> history = options.rolling_context ? carried : std::vector<std::string>{};
    const std::size_t first = (options.rolling_context && s > 0) ? 0 : 1;
    for (std::size_t pos = 0; pos < sentence.size(); ++pos) {
      if (pos >= first) {
        EventRecord ev;
        ev.sentence = s;
        ev.position = pos;
        ev.record.target = sentence[pos];
        try {
          const WordEvent event = make_event(vocab, history, sentence[pos]);
          if (event.target_segmentation.has_unknown) {
            ev.status = EventStatus::Skipped;
          } else {
            const auto outcome = decode_event(predictor, vocab, event, options.decode);
            ev.record.greedy_hit = outcome.greedy_hit;
            ev.record.topk_hit = outcome.topk_hit;
            ev.record.greedy_word = outcome.greedy_word;
            ev.record.word_logprob = outcome.word_logprob;
            ev.units_consumed = outcome.units_consumed;
            ev.exhausted = outcome.exhausted;
          }
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::Coverage) {
            ev.status = EventStatus::Skipped;
          } else if (e.kind() == ErrorKind::Transport) {
            ev.status = EventStatus::Aborted;
          } else {
            throw;
          }
          ev.note = e.what();
        }
        if (ev.status == EventStatus::Aborted) ++run.aborted;
        if (ev.status == EventStatus::Skipped) ++run.skipped;
        run.events.push_back(std::move(ev));
      }
      history.push_back(sentence[pos]);
    }
    if (options.rolling_context) carried.insert(carried.end(), sentence.begin(), sentence.end());
  }
  assign_record_bins(run, train);
  return run;
}

std::vector<SoftMatchPoint> softmatch_rescore(std::span<const PredictionRecord> records, const EmbeddingTable& table,
                                              std::span<const std::size_t> depths) {
  if (records.empty()) throw Error(ErrorKind::EmptyInput, "soft-match rescoring needs at least one record");
  std::set<std::string> attempted;
  for (const auto& r : records) attempted.insert(r.target);
  std::vector<SoftMatchPoint> curve;
  for (std::size_t depth : depths) {
    SoftMatchPoint p;
    p.depth = depth;
    std::set<std::string> types;
    for (const auto& r : records) {
      bool hit = r.greedy_hit;
      if (!hit && depth > 1) {
        const auto nn = knn_scan(table, r.target, depth);
        hit = std::find(nn.begin(), nn.end(), r.greedy_word) != nn.end();
      }
      if (hit) {
        ++p.hits;
        types.insert(r.target);
      }
    }
    p.hit_types = types.size();
    p.accuracy = 100.0 * static_cast<double>(p.hits) / static_cast<double>(records.size());
    p.unique_types = 100.0 * static_cast<double>(p.hit_types) / static_cast<double>(attempted.size());
    curve.push_back(p);
  }
  return curve;
}

}  // namespace wordeval::reference
