#include "wordeval/evaluate.hpp"

#include <omp.h>

#include <cstdio>
#include <exception>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "wordeval/error.hpp"

namespace wordeval {

const char* to_string(EventStatus status) {
  switch (status) {
    case EventStatus::Ok: return "ok";
    case EventStatus::Aborted: return "aborted";
    case EventStatus::Skipped: return "skipped";
  }
  return "?";
}

EventStatus parse_event_status(std::string_view text) {
  if (text == "ok") return EventStatus::Ok;
  if (text == "aborted") return EventStatus::Aborted;
  if (text == "skipped") return EventStatus::Skipped;
  throw Error(ErrorKind::Format, "unknown event status '" + std::string(text) + "'");
}

std::vector<PredictionRecord> EvaluationRun::records() const {
  std::vector<PredictionRecord> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    if (e.status == EventStatus::Ok) out.push_back(e.record);
  }
  return out;
}

EvalReport EvaluationRun::report(std::size_t k) const {
  const auto recs = records();
  EvalReport r = build_report(recs, k);
  r.aborted = aborted;
  r.skipped = skipped;
  return r;
}

namespace {

void check_vocab_size(const Predictor& predictor, const SubwordVocab& vocab) {
  if (predictor.vocab_size() != vocab.size()) {
    throw Error(ErrorKind::Configuration, "predictor serves " + std::to_string(predictor.vocab_size()) +
                                              " units but the vocabulary has " + std::to_string(vocab.size()));
  }
}

// Per-word segmentations of one sentence; nullopt marks an unsegmentable word.
struct SegmentedSentence {
  std::vector<std::optional<Segmentation>> words;
  std::vector<std::string> failures;
};

SegmentedSentence segment_sentence(const SubwordVocab& vocab, const Sentence& sentence) {
  SegmentedSentence out;
  out.words.resize(sentence.size());
  out.failures.resize(sentence.size());
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    try {
      out.words[i] = vocab.segment(sentence[i]);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Coverage) throw;
      out.failures[i] = e.what();
    }
  }
  return out;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

void assign_record_bins(EvaluationRun& run, const FrequencyTable& train) {
  std::unordered_set<std::string> targets;
  for (const auto& e : run.events) {
    if (e.status == EventStatus::Ok) targets.insert(e.record.target);
  }
  run.bins = assign_bins(train, targets);
  for (auto& e : run.events) e.record.target_bin = run.bins.bin(e.record.target);
}

EvaluationRun evaluate(const Corpus& test, const FrequencyTable& train, const SubwordVocab& vocab,
                       Predictor& predictor, const EvaluationOptions& options, const SessionFactory& sessions) {
  if (test.empty()) throw Error(ErrorKind::EmptyInput, "test corpus is empty");
  check_vocab_size(predictor, vocab);
  const std::size_t n = test.sentences.size();

  std::vector<SegmentedSentence> segmented(n);
  for (std::size_t s = 0; s < n; ++s) segmented[s] = segment_sentence(vocab, test.sentences[s]);

  // Rolling mode: units of all preceding sentences, and whether any of their
  // words failed to segment.
  std::vector<std::size_t> carry_end(n, 0);
  std::vector<UnitId> stream;
  std::vector<std::string> carry_failure(n);
  if (options.rolling_context) {
    std::string failure;
    for (std::size_t s = 0; s < n; ++s) {
      carry_end[s] = stream.size();
      carry_failure[s] = failure;
      for (std::size_t w = 0; w < segmented[s].words.size(); ++w) {
        const auto& seg = segmented[s].words[w];
        if (seg) {
          stream.insert(stream.end(), seg->units.begin(), seg->units.end());
        } else if (failure.empty()) {
          failure = segmented[s].failures[w];
        }
      }
    }
  }

  const bool shared = predictor.thread_safe();
  int threads = options.workers > 0 ? options.workers : omp_get_max_threads();
  if (!shared && !sessions) threads = 1;
  threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));

  std::vector<std::vector<EventRecord>> per_sentence(n);
  std::exception_ptr failure;

#pragma omp parallel num_threads(threads)
  {
    std::unique_ptr<Predictor> own;
    Predictor* session = &predictor;
    if (!shared && omp_get_thread_num() > 0) {
      try {
        own = sessions();
        session = own.get();
      } catch (...) {
#pragma omp critical(wordeval_eval_failure)
        if (!failure) failure = std::current_exception();
        session = nullptr;
      }
    }

#pragma omp for schedule(dynamic)
    for (std::int64_t si = 0; si < static_cast<std::int64_t>(n); ++si) {
      const auto s = static_cast<std::size_t>(si);
      if (!session) continue;
      try {
        const Sentence& sentence = test.sentences[s];
        const auto& seg = segmented[s];
        auto& out = per_sentence[s];

        std::vector<UnitId> context;
        std::string history_failure;
        if (options.rolling_context) {
          context.assign(stream.begin(), stream.begin() + static_cast<std::ptrdiff_t>(carry_end[s]));
          history_failure = carry_failure[s];
        }
        const std::size_t first = (options.rolling_context && s > 0) ? 0 : 1;
        if (first == 1 && !sentence.empty()) {
          if (seg.words[0]) {
            context.insert(context.end(), seg.words[0]->units.begin(), seg.words[0]->units.end());
          } else if (history_failure.empty()) {
            history_failure = seg.failures[0];
          }
        }

        for (std::size_t pos = first; pos < sentence.size(); ++pos) {
          EventRecord ev;
          ev.sentence = s;
          ev.position = pos;
          ev.record.target = sentence[pos];
          const auto& target_seg = seg.words[pos];

          if (!history_failure.empty()) {
            ev.status = EventStatus::Skipped;
            ev.note = "history: " + history_failure;
          } else if (!target_seg) {
            ev.status = EventStatus::Skipped;
            ev.note = seg.failures[pos];
          } else if (target_seg->has_unknown) {
            ev.status = EventStatus::Skipped;
            ev.note = "target '" + sentence[pos] + "' segments to the unknown unit";
          } else {
            WordEvent event{context, sentence[pos], *target_seg};
            try {
              const auto outcome = decode_event(*session, vocab, event, options.decode);
              ev.record.greedy_hit = outcome.greedy_hit;
              ev.record.topk_hit = outcome.topk_hit;
              ev.record.greedy_word = outcome.greedy_word;
              ev.record.word_logprob = outcome.word_logprob;
              ev.units_consumed = outcome.units_consumed;
              ev.exhausted = outcome.exhausted;
            } catch (const Error& e) {
              if (e.kind() != ErrorKind::Transport) throw;
              ev.status = EventStatus::Aborted;
              ev.note = e.what();
              if (sessions) {
                try {
                  own = sessions();
                  session = own.get();
                } catch (const Error&) {
                  // keep the dead session; later events abort as well
                }
              }
            }
          }
          out.push_back(std::move(ev));

          if (target_seg) {
            context.insert(context.end(), target_seg->units.begin(), target_seg->units.end());
          } else if (history_failure.empty()) {
            history_failure = seg.failures[pos];
          }
        }
      } catch (...) {
#pragma omp critical(wordeval_eval_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);

  EvaluationRun run;
  for (auto& events : per_sentence) {
    for (auto& e : events) {
      if (e.status == EventStatus::Aborted) ++run.aborted;
      if (e.status == EventStatus::Skipped) ++run.skipped;
      run.events.push_back(std::move(e));
    }
  }
  assign_record_bins(run, train);
  return run;
}

void write_records_tsv(std::ostream& out, std::span<const EventRecord> events) {
  out << "sentence\tposition\tstatus\ttarget\tbin\tgreedy_hit\ttopk_hit\tgreedy_word\tword_logprob\tunits\texhausted"
         "\tnote\n";
  char buf[64];
  for (const auto& e : events) {
    out << e.sentence << '\t' << e.position << '\t' << to_string(e.status) << '\t' << e.record.target << '\t'
        << to_string(e.record.target_bin) << '\t';
    if (e.status == EventStatus::Ok) {
      std::snprintf(buf, sizeof buf, "%.17g", e.record.word_logprob);
      out << (e.record.greedy_hit ? 1 : 0) << '\t' << (e.record.topk_hit ? 1 : 0) << '\t' << e.record.greedy_word
          << '\t' << buf << '\t' << e.units_consumed << '\t' << (e.exhausted ? 1 : 0);
    } else {
      out << "\t\t\t\t\t";
    }
    out << '\t' << sanitize(e.note) << '\n';
  }
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::size_t parse_size(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error(ErrorKind::Format, where + ": expected a non-negative integer, got '" + s + "'");
  }
}

bool parse_flag(const std::string& s, const std::string& where) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw Error(ErrorKind::Format, where + ": expected 0 or 1, got '" + s + "'");
}

}  // namespace

std::vector<EventRecord> read_records_tsv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("sentence\t", 0) != 0) {
    throw Error(ErrorKind::Format, source + ":1: missing record log header");
  }
  std::vector<EventRecord> events;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no);
    const auto f = split_tabs(line);
    if (f.size() != 12) {
      throw Error(ErrorKind::Format, where + ": expected 12 fields, found " + std::to_string(f.size()));
    }
    EventRecord e;
    e.sentence = parse_size(f[0], where);
    e.position = parse_size(f[1], where);
    try {
      e.status = parse_event_status(f[2]);
    } catch (const Error&) {
      throw Error(ErrorKind::Format, where + ": unknown event status '" + f[2] + "'");
    }
    e.record.target = f[3];
    if (e.record.target.empty()) throw Error(ErrorKind::Format, where + ": empty target");
    try {
      e.record.target_bin = parse_bin(f[4]);
    } catch (const Error&) {
      throw Error(ErrorKind::Format, where + ": unknown bin '" + f[4] + "'");
    }
    if (e.status == EventStatus::Ok) {
      e.record.greedy_hit = parse_flag(f[5], where);
      e.record.topk_hit = parse_flag(f[6], where);
      e.record.greedy_word = f[7];
      try {
        std::size_t used = 0;
        e.record.word_logprob = std::stod(f[8], &used);
        if (used != f[8].size()) throw std::invalid_argument(f[8]);
      } catch (const std::exception&) {
        throw Error(ErrorKind::Format, where + ": malformed log-probability '" + f[8] + "'");
      }
      e.units_consumed = parse_size(f[9], where);
      e.exhausted = parse_flag(f[10], where);
    }
    e.note = f[11];
    events.push_back(std::move(e));
  }
  return events;
}

std::vector<EventRecord> read_records_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  return read_records_tsv(in, path.string());
}

RecordLog summarize_log(std::span<const EventRecord> events) {
  RecordLog log;
  for (const auto& e : events) {
    switch (e.status) {
      case EventStatus::Ok: log.records.push_back(e.record); break;
      case EventStatus::Aborted: ++log.aborted; break;
      case EventStatus::Skipped: ++log.skipped; break;
    }
  }
  return log;
}

}  // namespace wordeval
