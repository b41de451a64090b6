#include "wordeval/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "wordeval/corpus.hpp"
#include "wordeval/embedding.hpp"
#include "wordeval/error.hpp"
#include "wordeval/evaluate.hpp"
#include "wordeval/metrics.hpp"
#include "wordeval/neighbors.hpp"
#include "wordeval/paraphrase.hpp"
#include "wordeval/predictor.hpp"
#include "wordeval/remote.hpp"
#include "wordeval/tokenizer.hpp"

namespace fs = std::filesystem;

namespace wordeval {

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Transport:
    case ErrorKind::Protocol:
    case ErrorKind::Numeric:
    case ErrorKind::Consistency:
    case ErrorKind::Degenerate:
      return kExitRuntime;
    default:
      return kExitValidation;
  }
}

std::ofstream open_output(const fs::path& dir, const std::string& name) {
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / name).string());
  return out;
}

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorKind::Io, "--out: cannot create directory " + dir.string());
}

struct VocabArgs {
  std::string scheme = "wordpiece";
  std::string units;
  std::string merges;

  void add(CLI::App* cmd, bool required) {
    cmd->add_option("--scheme", scheme, "Subword scheme")->check(CLI::IsMember({"bpe", "wordpiece"}));
    auto* u = cmd->add_option("--units", units, "Unit vocabulary file")->check(CLI::ExistingFile);
    if (required) u->required();
    cmd->add_option("--merges", merges, "BPE merges file")->check(CLI::ExistingFile);
  }

  SubwordVocab load() const {
    const Scheme s = parse_scheme(scheme);
    if (s == Scheme::Bpe && merges.empty()) throw Error(ErrorKind::Configuration, "--merges is required for --scheme bpe");
    return load_vocab({units, merges}, s);
  }
};

struct RemoteArgs {
  std::string spawn;
  std::string connect;
  long timeout_ms = 30000;

  void add(CLI::App* cmd) {
    auto* s = cmd->add_option("--spawn", spawn, "Adapter command speaking the wire protocol on stdio");
    auto* c = cmd->add_option("--connect", connect, "Adapter address host:port");
    s->excludes(c);
    cmd->add_option("--timeout-ms", timeout_ms, "Per-request timeout")->check(CLI::PositiveNumber);
  }

  bool given() const { return !spawn.empty() || !connect.empty(); }

  std::unique_ptr<LineChannel> channel() const {
    return spawn.empty() ? tcp_channel(connect) : spawn_channel(spawn);
  }

  std::unique_ptr<RemotePredictor> open(const SubwordVocab& vocab) const {
    return std::make_unique<RemotePredictor>(channel(), vocab, RemoteOptions{std::chrono::milliseconds(timeout_ms)});
  }
};

// ---------------------------------------------------------------- stats

struct StatsArgs {
  std::string train;
  std::string test;
  std::string out = "out";
  bool lowercase = false;
};

void cmd_stats(const StatsArgs& a, std::ostream& log) {
  const Corpus train = ingest(a.train, {a.lowercase});
  const Corpus test = ingest(a.test, {a.lowercase});
  const FrequencyTable freq = count_frequencies(train);
  const BinAssignment bins = assign_bins(freq, test.types());
  const fs::path dir = a.out;
  prepare_out_dir(dir);
  {
    auto f = open_output(dir, "frequencies.tsv");
    write_frequency_tsv(f, freq);
  }
  {
    auto f = open_output(dir, "bins.tsv");
    write_bin_tsv(f, freq, bins);
  }
  {
    auto f = open_output(dir, "zipf.tsv");
    write_zipf_tsv(f, freq);
  }
  nlohmann::ordered_json j;
  j["train_tokens"] = freq.total();
  j["train_types"] = freq.size();
  j["test_tokens"] = test.token_count();
  j["test_types"] = test.types().size();
  j["eligible_types"] = bins.intersection_size();
  j["test_only_types"] = bins.test_only();
  j["populations"] = {{"high", bins.population(Bin::High)},
                      {"mid", bins.population(Bin::Mid)},
                      {"low", bins.population(Bin::Low)},
                      {"unbinned", bins.eligible_unbinned()}};
  auto f = open_output(dir, "stats.json");
  f << j.dump(2) << '\n';
  log << "stats: " << freq.total() << " train tokens, " << freq.size() << " types; populations high/mid/low = "
      << bins.population(Bin::High) << '/' << bins.population(Bin::Mid) << '/' << bins.population(Bin::Low) << '\n';
}

// ---------------------------------------------------------------- train-embeddings

struct TrainEmbeddingArgs {
  std::string train;
  std::string out = "out";
  bool lowercase = false;
  SgnsOptions sgns;
};

void cmd_train_embeddings(const TrainEmbeddingArgs& a, std::ostream& log) {
  const Corpus train = ingest(a.train, {a.lowercase});
  const EmbeddingTable table = train_sgns(train, a.sgns);
  const fs::path dir = a.out;
  prepare_out_dir(dir);
  auto f = open_output(dir, "embeddings.txt");
  save_embeddings(table, f);
  log << "train-embeddings: " << table.size() << " vectors of dimension " << table.dim() << '\n';
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string train;
  std::string test;
  std::string out = "out";
  bool lowercase = false;
  VocabArgs vocab;
  std::string predictor = "ngram";
  int order = 3;
  double discount = kDefaultDiscount;
  RemoteArgs remote;
  std::size_t k = 10;
  std::size_t max_units = kDefaultMaxUnitsPerWord;
  bool rolling_context = false;
  bool whole_word_rank = false;
  int workers = 0;
  std::string label;
  std::string embeddings;
  std::vector<std::size_t> depths = kDefaultSoftMatchDepths;
};

std::vector<std::vector<UnitId>> encode_training(const Corpus& train, const SubwordVocab& vocab, std::size_t& dropped) {
  std::vector<std::vector<UnitId>> out;
  dropped = 0;
  for (const auto& sentence : train.sentences) {
    try {
      out.push_back(vocab.encode(sentence));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Coverage) throw;
      ++dropped;
    }
  }
  return out;
}

std::unique_ptr<Predictor> make_predictor(const EvaluateArgs& a, const Corpus& train, const SubwordVocab& vocab,
                                          std::ostream& log) {
  if (a.predictor == "ngram") {
    if (a.remote.given()) throw Error(ErrorKind::Configuration, "--spawn/--connect require --predictor remote");
    std::size_t dropped = 0;
    const auto sequences = encode_training(train, vocab, dropped);
    if (dropped > 0) log << "evaluate: " << dropped << " train sentences dropped (unsegmentable words)\n";
    return std::make_unique<NGramModel>(
        NGramModel::train(sequences, vocab.size(), a.order, a.discount, vocab.end_of_text_id()));
  }
  if (!a.remote.given()) throw Error(ErrorKind::Configuration, "--predictor remote needs --spawn or --connect");
  return a.remote.open(vocab);
}

void write_evaluation(const fs::path& dir, const EvaluationRun& run, EvalReport& report, const std::string& label,
                      const std::optional<EmbeddingTable>& embeddings, std::span<const std::size_t> depths) {
  if (embeddings) {
    const auto records = run.records();
    const auto index = NeighborIndex::exact(*embeddings);
    report.softmatch = softmatch_rescore(records, index, depths);
    auto f = open_output(dir, "softmatch.tsv");
    write_softmatch_tsv(f, report.softmatch);
  }
  {
    auto f = open_output(dir, "records.tsv");
    write_records_tsv(f, run.events);
  }
  {
    auto f = open_output(dir, "report.txt");
    write_report_table(f, report, label);
  }
  {
    auto f = open_output(dir, "report.json");
    write_report_json(f, report);
  }
  auto f = open_output(dir, "coverage.tsv");
  write_coverage_tsv(f, stratified_coverage(run.records(), run.bins));
}

void cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& log) {
  const Corpus train = ingest(a.train, {a.lowercase});
  const Corpus test = ingest(a.test, {a.lowercase});
  const SubwordVocab vocab = a.vocab.load();
  std::optional<EmbeddingTable> embeddings;
  if (!a.embeddings.empty()) embeddings = load_embeddings(fs::path(a.embeddings));
  const fs::path dir = a.out;
  prepare_out_dir(dir);

  const FrequencyTable freq = count_frequencies(train);
  auto predictor = make_predictor(a, train, vocab, log);
  if (a.k > vocab.size()) log << "evaluate: k=" << a.k << " exceeds the vocabulary; clamped to " << vocab.size() << '\n';

  EvaluationOptions options;
  options.decode.k = std::min(a.k, vocab.size());
  options.decode.max_units = a.max_units;
  options.decode.whole_word_rank = a.whole_word_rank;
  options.rolling_context = a.rolling_context;
  options.workers = a.workers;
  SessionFactory sessions;
  if (a.predictor == "remote") {
    sessions = [&]() -> std::unique_ptr<Predictor> { return a.remote.open(vocab); };
  }

  const EvaluationRun run = evaluate(test, freq, vocab, *predictor, options, sessions);
  if (run.aborted + run.skipped == run.events.size()) {
    {
      auto f = open_output(dir, "records.tsv");
      write_records_tsv(f, run.events);
    }
    if (run.aborted > 0) {
      throw Error(ErrorKind::Transport, "no event completed (" + std::to_string(run.aborted) + " aborted, " +
                                            std::to_string(run.skipped) + " skipped); see records.tsv");
    }
    throw Error(ErrorKind::Coverage, "every event was skipped; the vocabulary cannot segment the test words");
  }
  EvalReport report = run.report(a.k);
  const std::string label = a.label.empty() ? a.predictor : a.label;
  write_evaluation(dir, run, report, label, embeddings, a.depths);
  write_report_table(out, report, label);
}

// ---------------------------------------------------------------- softmatch

struct SoftmatchArgs {
  std::string records;
  std::string embeddings;
  std::string out = "out";
  std::vector<std::size_t> depths = kDefaultSoftMatchDepths;
  std::string index = "exact";
  ForestOptions forest;
  bool topk_channel = false;
};

void cmd_softmatch(const SoftmatchArgs& a, std::ostream& out) {
  const auto events = read_records_tsv(fs::path(a.records));
  const auto log = summarize_log(events);
  const EmbeddingTable table = load_embeddings(fs::path(a.embeddings));
  const fs::path dir = a.out;
  prepare_out_dir(dir);
  const NeighborIndex index = a.index == "forest" ? NeighborIndex::forest(table, a.forest) : NeighborIndex::exact(table);
  const auto curve = softmatch_rescore(log.records, index, a.depths, a.topk_channel);
  {
    auto f = open_output(dir, "softmatch.tsv");
    write_softmatch_tsv(f, curve);
  }
  nlohmann::ordered_json j;
  j["events"] = log.records.size();
  j["attempted_types"] = attempted_types(log.records);
  j["aborted"] = log.aborted;
  j["skipped"] = log.skipped;
  j["index"] = a.index;
  j["channel"] = a.topk_channel ? "topk" : "greedy";
  auto points = nlohmann::ordered_json::array();
  for (const auto& p : curve) {
    points.push_back({{"depth", p.depth}, {"accuracy", p.accuracy}, {"unique_types", p.unique_types},
                      {"hits", p.hits}, {"hit_types", p.hit_types}});
  }
  j["curve"] = points;
  auto f = open_output(dir, "softmatch.json");
  f << j.dump(2) << '\n';
  write_softmatch_tsv(out, curve);
}

// ---------------------------------------------------------------- paraphrase

struct ParaphraseArgs {
  std::string triples;
  std::string embeddings;
  std::string train;
  std::string out = "out";
  bool lowercase = false;
  bool strict_conditions = false;
  bool yates = false;
  VocabArgs vocab;
  RemoteArgs remote;
};

void cmd_paraphrase(const ParaphraseArgs& a, std::ostream& out, std::ostream& log) {
  if (a.embeddings.empty() == !a.remote.given()) {
    throw Error(ErrorKind::Configuration, "paraphrase needs exactly one of --embeddings or --spawn/--connect");
  }
  const auto triples = load_triples(fs::path(a.triples), {a.lowercase});
  if (!a.train.empty()) {
    const FrequencyTable freq = count_frequencies(ingest(a.train, {a.lowercase}));
    const auto mismatches = check_conditions(triples, freq);
    for (const auto& m : mismatches) {
      log << "paraphrase: triple at line " << triples[m.triple].line << " is marked "
          << to_string(triples[m.triple].condition) << " but '" << m.variant << "' occurs " << m.train_frequency
          << " times in train\n";
    }
    if (a.strict_conditions && !mismatches.empty()) {
      throw Error(ErrorKind::Configuration, std::to_string(mismatches.size()) + " triples disagree with train frequency");
    }
  }
  const fs::path dir = a.out;
  prepare_out_dir(dir);

  ProbeReport report;
  std::optional<EmbeddingTable> table;
  std::unique_ptr<RemotePredictor> remote;
  if (!a.embeddings.empty()) {
    table = load_embeddings(fs::path(a.embeddings));
    StaticEmbeddingScorer scorer(*table);
    report = run_probes(triples, scorer, a.yates);
  } else {
    if (a.vocab.units.empty()) throw Error(ErrorKind::Configuration, "remote scoring needs --units for the handshake");
    const SubwordVocab vocab = a.vocab.load();
    remote = a.remote.open(vocab);
    RemoteEmbeddingScorer scorer(*remote);
    report = run_probes(triples, scorer, a.yates);
  }
  {
    auto f = open_output(dir, "paraphrase.tsv");
    write_contingency_tsv(f, report);
  }
  auto f = open_output(dir, "paraphrase.json");
  write_paraphrase_json(f, report, triples);

  write_contingency_tsv(out, report);
  if (report.chi_square) {
    out << "chi_square\t" << report.chi_square->statistic << "\tp\t" << report.chi_square->p_value << '\n';
  }
  if (!report.skipped.empty()) out << "skipped\t" << report.skipped.size() << '\n';
}

}  // namespace

std::vector<std::string> config_arguments(const std::string& path, const std::vector<std::string>& args) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "--config: file does not exist: " + path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path);
  } catch (const CLI::Error& e) {
    throw Error(ErrorKind::Format, "--config: " + std::string(e.what()));
  }
  const auto given = [&](const std::string& key) {
    const std::string flag = "--" + key;
    for (const auto& a : args) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };
  std::vector<std::string> out;
  for (const auto& item : items) {
    if (item.name.empty() || item.name == "++" || item.name == "--") continue;
    std::string key = item.name;
    std::replace(key.begin(), key.end(), '_', '-');
    if (given(key)) continue;
    if (item.inputs.empty()) {
      out.push_back("--" + key);
      continue;
    }
    for (const auto& value : item.inputs) out.push_back("--" + key + "=" + value);
  }
  return out;
}

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Whole-word evaluation of next-unit language models"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Flat key = value file; command-line options take precedence");

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Frequency table, bins and rank-frequency pairs");
  stats_cmd->add_option("--train", stats.train, "Train corpus")->required()->check(CLI::ExistingFile);
  stats_cmd->add_option("--test", stats.test, "Test corpus")->required()->check(CLI::ExistingFile);
  stats_cmd->add_option("--out", stats.out, "Output directory");
  stats_cmd->add_flag("--lowercase", stats.lowercase, "Lowercase tokens");

  TrainEmbeddingArgs emb;
  auto* emb_cmd = app.add_subcommand("train-embeddings", "Skip-gram negative-sampling word vectors");
  emb_cmd->add_option("--train", emb.train, "Train corpus")->required()->check(CLI::ExistingFile);
  emb_cmd->add_option("--out", emb.out, "Output directory");
  emb_cmd->add_flag("--lowercase", emb.lowercase, "Lowercase tokens");
  emb_cmd->add_option("--dim", emb.sgns.dim, "Vector dimension")->check(CLI::Range(2, 4096));
  emb_cmd->add_option("--window", emb.sgns.window, "Context window")->check(CLI::PositiveNumber);
  emb_cmd->add_option("--negatives", emb.sgns.negatives, "Negative samples per pair");
  emb_cmd->add_option("--epochs", emb.sgns.epochs, "Passes over the corpus");
  emb_cmd->add_option("--min-count", emb.sgns.min_count, "Minimum type frequency");
  emb_cmd->add_option("--learning-rate", emb.sgns.learning_rate, "Initial learning rate")->check(CLI::PositiveNumber);
  emb_cmd->add_option("--seed", emb.sgns.seed, "Random seed");
  emb_cmd->add_option("--workers", emb.sgns.workers, "Parallel workers (>1 is nondeterministic)")
      ->check(CLI::PositiveNumber);

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Greedy and top-k whole-word decoding over a test corpus");
  ev_cmd->add_option("--train", ev.train, "Train corpus")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--test", ev.test, "Test corpus")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--out", ev.out, "Output directory");
  ev_cmd->add_flag("--lowercase", ev.lowercase, "Lowercase tokens");
  ev.vocab.add(ev_cmd, true);
  ev_cmd->add_option("--predictor", ev.predictor, "ngram or remote")->check(CLI::IsMember({"ngram", "remote"}));
  ev_cmd->add_option("--order", ev.order, "N-gram order")->check(CLI::Range(1, 16));
  ev_cmd->add_option("--discount", ev.discount, "Absolute discount in (0,1)")->check(CLI::Range(0.0, 1.0));
  ev.remote.add(ev_cmd);
  ev_cmd->add_option("--k", ev.k, "Top-k width")->check(CLI::PositiveNumber);
  ev_cmd->add_option("--max-units", ev.max_units, "Units per decoded word")->check(CLI::PositiveNumber);
  ev_cmd->add_flag("--rolling-context", ev.rolling_context, "Carry history across sentences");
  ev_cmd->add_flag("--whole-word-rank", ev.whole_word_rank, "Experimental whole-word ranking for the top-k channel");
  ev_cmd->add_option("--workers", ev.workers, "Worker threads (0 = default)")->check(CLI::NonNegativeNumber);
  ev_cmd->add_option("--label", ev.label, "Model label in report.txt");
  ev_cmd->add_option("--embeddings", ev.embeddings, "Word vectors for a soft-match sweep")->check(CLI::ExistingFile);
  ev_cmd->add_option("--depths", ev.depths, "Soft-match depths")->delimiter(',');

  SoftmatchArgs sm;
  auto* sm_cmd = app.add_subcommand("softmatch", "Rescore a record log with embedding neighbors");
  sm_cmd->add_option("--records", sm.records, "records.tsv from evaluate")->required()->check(CLI::ExistingFile);
  sm_cmd->add_option("--embeddings", sm.embeddings, "Word vectors")->required()->check(CLI::ExistingFile);
  sm_cmd->add_option("--out", sm.out, "Output directory");
  sm_cmd->add_option("--depths", sm.depths, "Neighbor depths, ascending")->delimiter(',');
  sm_cmd->add_option("--index", sm.index, "exact or forest")->check(CLI::IsMember({"exact", "forest"}));
  sm_cmd->add_option("--trees", sm.forest.num_trees, "Forest trees")->check(CLI::PositiveNumber);
  sm_cmd->add_option("--leaf-size", sm.forest.leaf_size, "Forest leaf size")->check(CLI::PositiveNumber);
  sm_cmd->add_option("--search-k", sm.forest.search_k, "Forest candidate budget (0 = automatic)");
  sm_cmd->add_option("--seed", sm.forest.seed, "Forest seed");
  sm_cmd->add_flag("--topk-channel", sm.topk_channel, "Use top-k hits as the exact-match base");

  ParaphraseArgs pp;
  auto* pp_cmd = app.add_subcommand("paraphrase", "Rare/common paraphrase probes with a chi-square test");
  pp_cmd->add_option("--triples", pp.triples, "Probe triple file")->required()->check(CLI::ExistingFile);
  pp_cmd->add_option("--embeddings", pp.embeddings, "Static word vectors")->check(CLI::ExistingFile);
  pp_cmd->add_option("--train", pp.train, "Train corpus for the frequency check")->check(CLI::ExistingFile);
  pp_cmd->add_option("--out", pp.out, "Output directory");
  pp_cmd->add_flag("--lowercase", pp.lowercase, "Lowercase tokens");
  pp_cmd->add_flag("--strict-conditions", pp.strict_conditions, "Fail when a condition disagrees with train frequency");
  pp_cmd->add_flag("--yates", pp.yates, "Apply the continuity correction");
  pp.vocab.add(pp_cmd, false);
  pp.remote.add(pp_cmd);

  // Expand --config before parsing so explicit options win.
  std::vector<std::string> args = raw_args;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    std::size_t erase = 0;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      erase = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      erase = 1;
    }
    if (erase == 0) continue;
    try {
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + erase));
      const auto extra = config_arguments(path, args);
      args.insert(args.end(), extra.begin(), extra.end());
    } catch (const Error& e) {
      err << "wordeval: " << e.what() << '\n';
      return kExitValidation;
    }
    break;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "wordeval: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (*stats_cmd) cmd_stats(stats, err);
    if (*emb_cmd) cmd_train_embeddings(emb, err);
    if (*ev_cmd) cmd_evaluate(ev, out, err);
    if (*sm_cmd) cmd_softmatch(sm, out);
    if (*pp_cmd) cmd_paraphrase(pp, out, err);
  } catch (const Error& e) {
    err << "wordeval: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "wordeval: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace wordeval
