#include "wordeval/paraphrase.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "wordeval/error.hpp"
#include "wordeval/remote.hpp"

namespace wordeval {

const char* to_string(Condition condition) { return condition == Condition::Rare ? "rare" : "common"; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct PendingRecord {
  std::optional<Condition> condition;
  std::optional<Sentence> h, v, a;
  std::size_t first_line = 0;
  std::size_t last_line = 0;
};

ProbeTriple finish_record(PendingRecord& rec, const std::string& source) {
  const auto where = [&](std::size_t line) { return source + ":" + std::to_string(line); };
  if (!rec.condition) throw Error(ErrorKind::Format, where(rec.first_line) + ": record has no 'condition:' line");
  if (!rec.h || !rec.v || !rec.a) {
    std::string missing;
    if (!rec.h) missing += " h:";
    if (!rec.v) missing += " v:";
    if (!rec.a) missing += " a:";
    throw Error(ErrorKind::Format, where(rec.last_line) + ": record is missing" + missing);
  }
  ProbeTriple t;
  t.condition = *rec.condition;
  t.h = std::move(*rec.h);
  t.v = std::move(*rec.v);
  t.a = std::move(*rec.a);
  t.line = rec.first_line;
  if (t.h.size() != t.v.size() || t.h.size() != t.a.size()) {
    throw Error(ErrorKind::Format, where(rec.first_line) + ": the three sentences must have the same token count");
  }
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < t.h.size(); ++i) {
    if (t.h[i] != t.v[i] || t.h[i] != t.a[i]) slots.push_back(i);
  }
  if (slots.empty()) throw Error(ErrorKind::Format, where(rec.first_line) + ": sentences have no substitution slot");
  if (slots.size() > 1) {
    throw Error(ErrorKind::Format, where(rec.first_line) + ": sentences differ in " + std::to_string(slots.size()) +
                                       " positions, expected exactly one slot");
  }
  t.slot = slots.front();
  if (t.h[t.slot] == t.v[t.slot] || t.h[t.slot] == t.a[t.slot] || t.v[t.slot] == t.a[t.slot]) {
    throw Error(ErrorKind::Format, where(rec.first_line) + ": the slot must hold three distinct words");
  }
  return t;
}

}  // namespace

std::vector<ProbeTriple> load_triples(std::istream& in, const std::string& source, IngestOptions options) {
  std::vector<ProbeTriple> out;
  PendingRecord rec;
  bool open = false;
  std::string raw;
  std::size_t line_no = 0;
  const auto where = [&] { return source + ":" + std::to_string(line_no); };

  while (std::getline(in, raw)) {
    ++line_no;
    if (find_invalid_utf8(raw) != std::string::npos) throw Error(ErrorKind::Encoding, where() + ": invalid UTF-8");
    const std::string line = trim(raw);
    if (!line.empty() && line.front() == '#') continue;
    if (line.empty()) {
      if (open) out.push_back(finish_record(rec, source));
      rec = {};
      open = false;
      continue;
    }
    if (!open) {
      open = true;
      rec.first_line = line_no;
    }
    rec.last_line = line_no;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw Error(ErrorKind::Format, where() + ": expected '<field>: <value>'");
    const std::string key = trim(line.substr(0, colon));
    const std::string value = trim(line.substr(colon + 1));
    if (value.empty()) throw Error(ErrorKind::Format, where() + ": empty field '" + key + "'");

    if (key == "condition") {
      if (rec.condition) throw Error(ErrorKind::Format, where() + ": duplicate 'condition' field");
      if (value == "rare") {
        rec.condition = Condition::Rare;
      } else if (value == "common") {
        rec.condition = Condition::Common;
      } else {
        throw Error(ErrorKind::Format, where() + ": condition must be 'rare' or 'common', got '" + value + "'");
      }
      continue;
    }
    std::optional<Sentence>* slot = key == "h" ? &rec.h : key == "v" ? &rec.v : key == "a" ? &rec.a : nullptr;
    if (!slot) throw Error(ErrorKind::Format, where() + ": unknown field '" + key + "'");
    if (slot->has_value()) throw Error(ErrorKind::Format, where() + ": duplicate '" + key + "' field");
    const Corpus parsed = ingest_text(value, options);
    *slot = parsed.sentences.front();
  }
  if (open) out.push_back(finish_record(rec, source));
  if (out.empty()) throw Error(ErrorKind::EmptyInput, source + ": no probe triples");
  return out;
}

std::vector<ProbeTriple> load_triples(const std::filesystem::path& path, IngestOptions options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  return load_triples(in, path.string(), options);
}

std::vector<ConditionMismatch> check_conditions(std::span<const ProbeTriple> triples, const FrequencyTable& train) {
  std::vector<ConditionMismatch> out;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const auto freq = train.count(triples[i].variant_word());
    const bool rare = freq < kRareThreshold;
    if (rare != (triples[i].condition == Condition::Rare)) out.push_back({i, triples[i].variant_word(), freq});
  }
  return out;
}

std::optional<double> greedy_match_f1(std::span<const std::vector<float>> a, std::span<const std::vector<float>> b) {
  const auto usable = [](std::span<const std::vector<float>> side) {
    std::vector<std::vector<double>> unit;
    for (const auto& v : side) {
      double norm = 0.0;
      for (float x : v) norm += static_cast<double>(x) * x;
      if (v.empty() || norm == 0.0) continue;
      norm = std::sqrt(norm);
      std::vector<double> u(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) u[i] = v[i] / norm;
      unit.push_back(std::move(u));
    }
    return unit;
  };
  const auto ua = usable(a);
  const auto ub = usable(b);
  if (ua.empty() || ub.empty()) return std::nullopt;

  std::vector<double> row_max(ua.size(), -2.0);
  std::vector<double> col_max(ub.size(), -2.0);
  for (std::size_t i = 0; i < ua.size(); ++i) {
    for (std::size_t j = 0; j < ub.size(); ++j) {
      if (ua[i].size() != ub[j].size()) throw Error(ErrorKind::Format, "token vectors differ in dimension");
      double c = 0.0;
      for (std::size_t d = 0; d < ua[i].size(); ++d) c += ua[i][d] * ub[j][d];
      row_max[i] = std::max(row_max[i], c);
      col_max[j] = std::max(col_max[j], c);
    }
  }
  double precision = 0.0;
  for (double m : row_max) precision += m;
  precision /= static_cast<double>(row_max.size());
  double recall = 0.0;
  for (double m : col_max) recall += m;
  recall /= static_cast<double>(col_max.size());
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

namespace {

std::vector<std::vector<float>> lookup(const Sentence& s, const EmbeddingTable& table) {
  std::vector<std::vector<float>> out;
  for (const auto& w : s) {
    if (auto row = table.find(w)) {
      const auto v = table.vector(*row);
      out.emplace_back(v.begin(), v.end());
    }
  }
  return out;
}

}  // namespace

std::optional<double> sentence_similarity(const Sentence& a, const Sentence& b, const EmbeddingTable& table) {
  return greedy_match_f1(lookup(a, table), lookup(b, table));
}

std::optional<double> StaticEmbeddingScorer::similarity(const Sentence& a, const Sentence& b) {
  return sentence_similarity(a, b, table_);
}

std::optional<double> RemoteEmbeddingScorer::similarity(const Sentence& a, const Sentence& b) {
  const auto va = remote_.embed(a);
  const auto vb = remote_.embed(b);
  return greedy_match_f1(va, vb);
}

ProbeReport run_probes(std::span<const ProbeTriple> triples, SentenceScorer& scorer, bool yates) {
  ProbeReport report;
  report.results.resize(triples.size());
  const auto n = static_cast<std::int64_t>(triples.size());
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic) if (scorer.thread_safe())
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const auto& t = triples[static_cast<std::size_t>(i)];
      ProbeResult r;
      r.triple = static_cast<std::size_t>(i);
      r.sim_variant = scorer.similarity(t.h, t.v);
      r.sim_sibling = scorer.similarity(t.h, t.a);
      r.skipped = !r.sim_variant || !r.sim_sibling;
      r.hit = !r.skipped && *r.sim_variant > *r.sim_sibling;
      report.results[static_cast<std::size_t>(i)] = r;
    } catch (...) {
#pragma omp critical(wordeval_probe_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  for (const auto& r : report.results) {
    if (r.skipped) {
      report.skipped.push_back(r.triple);
      continue;
    }
    auto& counts = triples[r.triple].condition == Condition::Rare ? report.rare : report.common;
    (r.hit ? counts.hits : counts.misses) += 1;
  }
  if (report.rare.total() + report.common.total() == 0) {
    throw Error(ErrorKind::EmptyInput, "no usable probes: every triple was skipped");
  }
  if (report.rare.total() > 0 && report.common.total() > 0) {
    const Table2x2 table{{{report.rare.hits, report.rare.misses}, {report.common.hits, report.common.misses}}};
    const bool zero_column = (table[0][0] + table[1][0] == 0) || (table[0][1] + table[1][1] == 0);
    if (!zero_column) report.chi_square = chi_square_independence(table, yates);
  }
  return report;
}

double chi_square_survival_1df(double statistic) {
  if (statistic <= 0.0) return 1.0;
  return std::erfc(std::sqrt(statistic / 2.0));
}

ChiSquare chi_square_independence(const Table2x2& table, bool yates) {
  const double a = static_cast<double>(table[0][0]);
  const double b = static_cast<double>(table[0][1]);
  const double c = static_cast<double>(table[1][0]);
  const double d = static_cast<double>(table[1][1]);
  const double r0 = a + b, r1 = c + d, c0 = a + c, c1 = b + d;
  const double n = r0 + r1;
  if (r0 == 0 || r1 == 0 || c0 == 0 || c1 == 0) {
    throw Error(ErrorKind::Degenerate, "contingency table has a zero row or column total");
  }
  const std::array<double, 4> observed{a, b, c, d};
  const std::array<double, 4> expected{r0 * c0 / n, r0 * c1 / n, r1 * c0 / n, r1 * c1 / n};
  ChiSquare out;
  out.yates = yates;
  for (std::size_t i = 0; i < 4; ++i) {
    double diff = std::abs(observed[i] - expected[i]);
    if (yates) diff = std::max(0.0, diff - 0.5);
    out.statistic += diff * diff / expected[i];
  }
  out.p_value = chi_square_survival_1df(out.statistic);
  return out;
}

void write_contingency_tsv(std::ostream& out, const ProbeReport& report) {
  out << "condition\thits\tmisses\ttotal\n";
  out << "rare\t" << report.rare.hits << '\t' << report.rare.misses << '\t' << report.rare.total() << '\n';
  out << "common\t" << report.common.hits << '\t' << report.common.misses << '\t' << report.common.total() << '\n';
}

void write_paraphrase_json(std::ostream& out, const ProbeReport& report, std::span<const ProbeTriple> triples) {
  using json = nlohmann::ordered_json;
  json j;
  const auto row = [](const ConditionCounts& c) {
    return json{{"hits", c.hits}, {"misses", c.misses}, {"total", c.total()}};
  };
  j["rare"] = row(report.rare);
  j["common"] = row(report.common);
  if (report.chi_square) {
    j["chi_square"] = {{"statistic", report.chi_square->statistic},
                       {"p_value", report.chi_square->p_value},
                       {"degrees_of_freedom", report.chi_square->degrees_of_freedom},
                       {"yates", report.chi_square->yates}};
  } else {
    j["chi_square"] = nullptr;
  }
  json skipped = json::array();
  for (std::size_t i : report.skipped) {
    skipped.push_back({{"line", triples[i].line}, {"variant", triples[i].variant_word()}});
  }
  j["skipped"] = skipped;
  json probes = json::array();
  for (const auto& r : report.results) {
    const auto& t = triples[r.triple];
    json p{{"line", t.line},
           {"condition", to_string(t.condition)},
           {"anchor", t.anchor_word()},
           {"variant", t.variant_word()},
           {"sibling", t.sibling_word()}};
    p["sim_variant"] = r.sim_variant ? json(*r.sim_variant) : json(nullptr);
    p["sim_sibling"] = r.sim_sibling ? json(*r.sim_sibling) : json(nullptr);
    p["hit"] = r.hit;
    p["skipped"] = r.skipped;
    probes.push_back(std::move(p));
  }
  j["probes"] = probes;
  out << j.dump(2) << '\n';
}

}  // namespace wordeval
