#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wordeval/corpus.hpp"
#include "wordeval/metrics.hpp"
#include "wordeval/predictor.hpp"
#include "wordeval/tokenizer.hpp"
#include "wordeval/worddecode.hpp"

namespace wordeval {

enum class EventStatus { Ok, Aborted, Skipped };

const char* to_string(EventStatus status);
EventStatus parse_event_status(std::string_view text);

/// One line of the per-event record log.
struct EventRecord {
  std::size_t sentence = 0;
  std::size_t position = 0;  // 0-based word index inside the sentence
  EventStatus status = EventStatus::Ok;
  PredictionRecord record;   // target is always set; the rest only for Ok events
  std::size_t units_consumed = 0;
  bool exhausted = false;
  std::string note;          // reason for Aborted/Skipped
};

struct EvaluationOptions {
  DecodeOptions decode;
  // Carry the words of preceding sentences as history. Prediction then
  // starts at the first word of every sentence after the first.
  bool rolling_context = false;
  // 0 uses the OpenMP default.
  int workers = 0;
};

// Creates an independent predictor session (e.g. a new adapter connection).
using SessionFactory = std::function<std::unique_ptr<Predictor>()>;

struct EvaluationRun {
  std::vector<EventRecord> events;  // sentence order, then position
  BinAssignment bins;
  std::uint64_t aborted = 0;
  std::uint64_t skipped = 0;

  std::vector<PredictionRecord> records() const;
  EvalReport report(std::size_t k) const;
};

/// Decodes every word event of the test corpus from the second word of each
/// sentence onward. A thread-safe predictor is shared across OpenMP workers;
/// otherwise each extra worker opens its own session through `sessions`, and
/// without a factory the run is serial. Transport failures mark the event
/// Aborted (and reopen the session when a factory exists); unsegmentable
/// targets are Skipped. Bins come from the train frequencies and the targets
/// of the completed events.
EvaluationRun evaluate(const Corpus& test, const FrequencyTable& train, const SubwordVocab& vocab,
                       Predictor& predictor, const EvaluationOptions& options = {},
                       const SessionFactory& sessions = {});

// Tags records with their bins and fills run.bins from the Ok targets.
void assign_record_bins(EvaluationRun& run, const FrequencyTable& train);

/// Tab-separated record log; logprobs use 17 significant digits so that
/// reading the log back reproduces every report number exactly.
void write_records_tsv(std::ostream& out, std::span<const EventRecord> events);
std::vector<EventRecord> read_records_tsv(std::istream& in, const std::string& source = "<stream>");
std::vector<EventRecord> read_records_tsv(const std::filesystem::path& path);

// Ok records of a log, with abort/skip tallies, ready for build_report.
struct RecordLog {
  std::vector<PredictionRecord> records;
  std::uint64_t aborted = 0;
  std::uint64_t skipped = 0;
};
RecordLog summarize_log(std::span<const EventRecord> events);

}  // namespace wordeval
