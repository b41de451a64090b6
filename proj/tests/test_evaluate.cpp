#include <doctest.h>

#include <atomic>
#include <random>
#include <sstream>

#include "support.hpp"
#include "wordeval/error.hpp"
#include "wordeval/evaluate.hpp"
#include "wordeval/reference.hpp"

using namespace wordeval;

namespace {

struct Fixture {
  SubwordVocab vocab = testing::letter_wordpiece("abcdef", {"ab", "##ab", "cd", "##cd", "fe", "##ef"});
  Corpus train;
  Corpus test;
  FrequencyTable train_freq;

  explicit Fixture(std::uint64_t seed, std::size_t train_sentences = 120, std::size_t test_sentences = 40) {
    std::mt19937_64 rng(seed);
    const auto lang = testing::make_language(rng, 60, "abcdef");
    train = testing::make_corpus(rng, lang, train_sentences, 2, 9);
    test = testing::make_corpus(rng, lang, test_sentences, 1, 8);
    train_freq = count_frequencies(train);
  }

  NGramModel model(int order = 3) const {
    std::vector<std::vector<UnitId>> seqs;
    for (const auto& s : train.sentences) seqs.push_back(vocab.encode(s));
    return NGramModel::train(seqs, vocab.size(), order, 0.75, vocab.end_of_text_id());
  }
};

// Wraps a predictor but is not safe to share; counts live instances.
class SessionPredictor final : public Predictor {
 public:
  SessionPredictor(Predictor& inner, std::atomic<int>& opened) : inner_(inner) { ++opened; }
  std::size_t vocab_size() const override { return inner_.vocab_size(); }
  UnitDistribution predict(std::span<const UnitId> context, std::size_t k) override {
    return inner_.predict(context, k);
  }

 private:
  Predictor& inner_;
};

// Dies after `budget` calls, like a dropped adapter connection.
class DyingPredictor final : public Predictor {
 public:
  DyingPredictor(Predictor& inner, std::size_t budget) : inner_(inner), budget_(budget) {}
  std::size_t vocab_size() const override { return inner_.vocab_size(); }
  UnitDistribution predict(std::span<const UnitId> context, std::size_t k) override {
    if (calls_++ >= budget_) throw Error(ErrorKind::Transport, "connection dropped");
    return inner_.predict(context, k);
  }

 private:
  Predictor& inner_;
  std::size_t budget_;
  std::size_t calls_ = 0;
};

void check_same_events(const EvaluationRun& a, const EvaluationRun& b) {
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    const auto& x = a.events[i];
    const auto& y = b.events[i];
    CHECK(x.sentence == y.sentence);
    CHECK(x.position == y.position);
    CHECK(x.status == y.status);
    CHECK(x.record.target == y.record.target);
    CHECK(x.record.target_bin == y.record.target_bin);
    CHECK(x.record.greedy_hit == y.record.greedy_hit);
    CHECK(x.record.topk_hit == y.record.topk_hit);
    CHECK(x.record.greedy_word == y.record.greedy_word);
    CHECK(x.record.word_logprob == y.record.word_logprob);
  }
  CHECK(a.aborted == b.aborted);
  CHECK(a.skipped == b.skipped);
}

std::string report_json(const EvalReport& r) {
  std::ostringstream out;
  write_report_json(out, r);
  return out.str();
}

}  // namespace

TEST_CASE("events start at the second word of every sentence") {
  Fixture f(1);
  NGramModel m = f.model();
  const auto run = evaluate(f.test, f.train_freq, f.vocab, m);
  std::size_t expected = 0;
  for (const auto& s : f.test.sentences) expected += s.size() - 1;
  REQUIRE(run.events.size() == expected);
  std::size_t i = 0;
  for (std::size_t s = 0; s < f.test.sentences.size(); ++s) {
    for (std::size_t p = 1; p < f.test.sentences[s].size(); ++p, ++i) {
      CHECK(run.events[i].sentence == s);
      CHECK(run.events[i].position == p);
      CHECK(run.events[i].record.target == f.test.sentences[s][p]);
    }
  }
  CHECK(run.aborted == 0);
  CHECK(run.skipped == 0);

  EvaluationOptions rolling;
  rolling.rolling_context = true;
  const auto rolled = evaluate(f.test, f.train_freq, f.vocab, m, rolling);
  CHECK(rolled.events.size() == f.test.token_count() - 1);
}

TEST_CASE("parallel evaluation equals the serial reference") {
  Fixture f(2);
  NGramModel m = f.model();
  testing::HashedRandomPredictor random(f.vocab.size(), 5, 4.0);
  for (Predictor* p : std::initializer_list<Predictor*>{&m, &random}) {
    for (bool rolling : {false, true}) {
      EvaluationOptions opt;
      opt.workers = 4;
      opt.rolling_context = rolling;
      opt.decode.k = 5;
      const auto fast = evaluate(f.test, f.train_freq, f.vocab, *p, opt);
      const auto slow = reference::evaluate(f.test, f.train_freq, f.vocab, *p, opt);
      check_same_events(fast, slow);
      CHECK(report_json(fast.report(5)) == report_json(slow.report(5)));
    }
  }
}

TEST_CASE("non-shareable predictors get one session per extra worker") {
  Fixture f(3);
  NGramModel m = f.model();
  std::atomic<int> opened{0};
  SessionPredictor first(m, opened);
  EvaluationOptions opt;
  opt.workers = 3;
  const auto run = evaluate(f.test, f.train_freq, f.vocab, first, opt,
                            [&] { return std::make_unique<SessionPredictor>(m, opened); });
  CHECK(opened.load() <= 3);
  check_same_events(run, reference::evaluate(f.test, f.train_freq, f.vocab, m, opt));
}

TEST_CASE("transport failures abort events and reopen sessions") {
  Fixture f(4);
  NGramModel m = f.model();
  const auto clean = evaluate(f.test, f.train_freq, f.vocab, m);

  SUBCASE("without a factory every later event aborts") {
    DyingPredictor dying(m, 40);
    const auto run = evaluate(f.test, f.train_freq, f.vocab, dying);
    CHECK(run.aborted > 0);
    CHECK(run.events.size() == clean.events.size());
    bool dead = false;
    for (std::size_t i = 0; i < run.events.size(); ++i) {
      if (run.events[i].status == EventStatus::Aborted) dead = true;
      if (dead) {
        CHECK(run.events[i].status == EventStatus::Aborted);
        CHECK(run.events[i].note.find("connection dropped") != std::string::npos);
      } else {
        CHECK(run.events[i].record.greedy_hit == clean.events[i].record.greedy_hit);
      }
    }
    const auto report = run.report(10);
    CHECK(report.aborted == run.aborted);
    CHECK(report.accuracy.events + run.aborted == run.events.size());
  }

  SUBCASE("with a factory the run recovers") {
    DyingPredictor dying(m, 40);
    int reopened = 0;
    const auto run = evaluate(f.test, f.train_freq, f.vocab, dying, {}, [&] {
      ++reopened;
      return std::make_unique<DyingPredictor>(m, 1000000);
    });
    CHECK(run.aborted == 1);
    CHECK(reopened >= 1);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < run.events.size(); ++i) {
      if (run.events[i].status != EventStatus::Ok) continue;
      ++ok;
      CHECK(run.events[i].record.topk_hit == clean.events[i].record.topk_hit);
    }
    CHECK(ok + 1 == run.events.size());
  }
}

TEST_CASE("unsegmentable words are skipped with a reason") {
  const SubwordVocab no_unk = SubwordVocab::wordpiece({"a", "b", "##a", "##b"});
  const Corpus test = ingest_text("a b ax b\nb a\nzz a b\n");
  FrequencyTable train;
  train.add("a", 20);
  train.add("b", 20);
  UniformPredictor u(no_unk.size());
  const auto run = evaluate(test, train, no_unk, u);
  // sentence 0: b ok, ax skipped, b skipped (history holds ax); 1: a ok; 2: a, b skipped
  REQUIRE(run.events.size() == 6);
  std::vector<EventStatus> statuses;
  for (const auto& e : run.events) statuses.push_back(e.status);
  CHECK(statuses == std::vector<EventStatus>{EventStatus::Ok, EventStatus::Skipped, EventStatus::Skipped,
                                             EventStatus::Ok, EventStatus::Skipped, EventStatus::Skipped});
  CHECK(run.skipped == 4);
  CHECK(run.events[1].note.find("ax") != std::string::npos);

  const SubwordVocab unk = SubwordVocab::wordpiece({"[UNK]", "a", "b", "##a", "##b"});
  UniformPredictor u2(unk.size());
  const auto with_unk = evaluate(test, train, unk, u2);
  CHECK(with_unk.events[1].status == EventStatus::Skipped);
  CHECK(with_unk.events[2].status == EventStatus::Ok);  // [UNK] is a usable history unit
}

TEST_CASE("bins are derived from completed targets") {
  Fixture f(5, 400, 60);
  NGramModel m = f.model();
  const auto run = evaluate(f.test, f.train_freq, f.vocab, m);
  std::unordered_set<std::string> targets;
  for (const auto& e : run.events) {
    if (e.status == EventStatus::Ok) targets.insert(e.record.target);
  }
  const auto bins = assign_bins(f.train_freq, targets);
  for (Bin b : {Bin::High, Bin::Mid, Bin::Low}) CHECK(run.bins.population(b) == bins.population(b));
  for (const auto& e : run.events) CHECK(e.record.target_bin == bins.bin(e.record.target));
  const auto records = run.records();
  const auto tagged = stratified_coverage(records, run.bins);
  const auto derived = stratified_coverage(records);
  for (Bin b : {Bin::High, Bin::Mid, Bin::Low}) {
    CHECK(tagged[b].population == derived[b].population);
    CHECK(tagged[b].type_coverage == derived[b].type_coverage);
  }
}

TEST_CASE("the record log replays to an identical report") {
  Fixture f(6);
  NGramModel m = f.model();
  DyingPredictor dying(m, 300);
  auto test = f.test;
  test.sentences.push_back({"ab", "xyz", "ab"});  // unsegmentable target and history
  const auto run = evaluate(test, f.train_freq, f.vocab, dying);
  REQUIRE(run.aborted > 0);
  REQUIRE(run.skipped > 0);

  std::stringstream log;
  write_records_tsv(log, run.events);
  const auto back = read_records_tsv(log, "records.tsv");
  REQUIRE(back.size() == run.events.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].status == run.events[i].status);
    CHECK(back[i].record.word_logprob == run.events[i].record.word_logprob);
    CHECK(back[i].note == run.events[i].note);
    CHECK(back[i].units_consumed == run.events[i].units_consumed);
  }
  const auto summary = summarize_log(back);
  EvalReport replay = build_report(summary.records, 10);
  replay.aborted = summary.aborted;
  replay.skipped = summary.skipped;
  CHECK(report_json(replay) == report_json(run.report(10)));

  std::stringstream again;
  write_records_tsv(again, back);
  log.clear();
  log.seekg(0);
  CHECK(again.str() == log.str());
}

TEST_CASE("record log format errors") {
  auto fails_at = [](const std::string& text, const std::string& where) {
    std::istringstream in(text);
    try {
      read_records_tsv(in, "r.tsv");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Format);
      CHECK_MESSAGE(std::string(e.what()).find(where) != std::string::npos, std::string(e.what()));
      return;
    }
    FAIL("expected a format error");
  };
  std::ostringstream good;
  EventRecord e;
  e.record.target = "ab";
  e.record.greedy_word = "ab";
  e.record.greedy_hit = e.record.topk_hit = true;
  e.record.word_logprob = -0.25;
  write_records_tsv(good, std::vector<EventRecord>{e});
  const std::string text = good.str();
  std::istringstream ok(text);
  CHECK(read_records_tsv(ok).size() == 1);
  fails_at(text + "0\t1\tok\tab\n", "r.tsv:3");
  fails_at(text + "0\t1\tweird\tab\thigh\t1\t1\tab\t-1\t1\t0\t\n", "r.tsv:3");
  fails_at(text + "0\t1\tok\tab\thigh\t1\t1\tab\tnope\t1\t0\t\n", "r.tsv:3");
  CHECK_THROWS_AS(read_records_tsv(std::filesystem::path("/nonexistent/records.tsv")), Error);
}

TEST_CASE("evaluation errors") {
  Fixture f(7);
  UniformPredictor wrong(f.vocab.size() + 3);
  try {
    evaluate(f.test, f.train_freq, f.vocab, wrong);
    FAIL("expected a configuration error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Configuration);
  }
  CHECK_THROWS_AS(evaluate(Corpus{}, f.train_freq, f.vocab, wrong), Error);
}
