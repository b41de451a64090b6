#include "wordeval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "wordeval/error.hpp"

namespace wordeval {

namespace {

double percent(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

void require_records(std::span<const PredictionRecord> records, const char* what) {
  if (records.empty()) throw Error(ErrorKind::EmptyInput, std::string(what) + " needs at least one record");
}

void finish(BinCoverage& c) {
  c.token_coverage = percent(c.token_hits, c.token_events);
  c.topk_token_coverage = percent(c.topk_token_hits, c.token_events);
  c.type_coverage = percent(c.hit_types, c.population);
  c.topk_type_coverage = percent(c.topk_hit_types, c.population);
}

StratifiedCoverage tally(std::span<const PredictionRecord> records) {
  StratifiedCoverage out;
  std::array<std::unordered_set<std::string>, 4> hit_types;
  std::array<std::unordered_set<std::string>, 4> topk_types;
  for (const auto& r : records) {
    const auto b = static_cast<std::size_t>(r.target_bin);
    auto& c = out.bins[b];
    ++c.token_events;
    if (r.greedy_hit) {
      ++c.token_hits;
      hit_types[b].insert(r.target);
    }
    if (r.topk_hit) {
      ++c.topk_token_hits;
      topk_types[b].insert(r.target);
    }
  }
  for (std::size_t b = 0; b < 4; ++b) {
    out.bins[b].hit_types = hit_types[b].size();
    out.bins[b].topk_hit_types = topk_types[b].size();
  }
  return out;
}

}  // namespace

Accuracy accuracy(std::span<const PredictionRecord> records) {
  require_records(records, "accuracy");
  Accuracy a;
  a.events = records.size();
  for (const auto& r : records) {
    a.greedy_hits += r.greedy_hit ? 1 : 0;
    a.topk_hits += r.topk_hit ? 1 : 0;
  }
  a.top1 = percent(a.greedy_hits, a.events);
  a.topk = percent(a.topk_hits, a.events);
  return a;
}

std::uint64_t attempted_types(std::span<const PredictionRecord> records) {
  std::unordered_set<std::string> types;
  for (const auto& r : records) types.insert(r.target);
  return types.size();
}

TypeDiversity type_diversity(std::span<const PredictionRecord> records, std::uint64_t test_type_count) {
  require_records(records, "type diversity");
  if (test_type_count == 0) throw Error(ErrorKind::Domain, "test type count must be >= 1");
  std::unordered_set<std::string> greedy;
  std::unordered_set<std::string> topk;
  for (const auto& r : records) {
    if (r.greedy_hit) greedy.insert(r.target);
    if (r.topk_hit) topk.insert(r.target);
  }
  TypeDiversity d;
  d.greedy_types = greedy.size();
  d.topk_types = topk.size();
  d.denominator = test_type_count;
  d.t1 = percent(d.greedy_types, test_type_count);
  d.tk = percent(d.topk_types, test_type_count);
  return d;
}

double word_perplexity(std::span<const PredictionRecord> records) {
  require_records(records, "word perplexity");
  double sum = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double lp = records[i].word_logprob;
    if (!std::isfinite(lp)) {
      throw Error(ErrorKind::Numeric, "event " + std::to_string(i) + " (target '" + records[i].target +
                                          "') has a non-finite log-probability");
    }
    sum += lp;
  }
  return std::exp(-sum / static_cast<double>(records.size()));
}

StratifiedCoverage stratified_coverage(std::span<const PredictionRecord> records, const BinAssignment& bins) {
  for (const auto& r : records) {
    if (bins.bin(r.target) != r.target_bin) {
      throw Error(ErrorKind::Consistency, "record for '" + r.target + "' is tagged " + to_string(r.target_bin) +
                                              " but the bin assignment says " + to_string(bins.bin(r.target)));
    }
  }
  StratifiedCoverage out = tally(records);
  for (Bin b : kStratifiedBins) out.bins[static_cast<std::size_t>(b)].population = bins.population(b);
  out.bins[3].population = bins.eligible_unbinned() + bins.test_only();
  for (auto& c : out.bins) finish(c);
  return out;
}

StratifiedCoverage stratified_coverage(std::span<const PredictionRecord> records) {
  StratifiedCoverage out = tally(records);
  std::array<std::unordered_set<std::string>, 4> types;
  for (const auto& r : records) types[static_cast<std::size_t>(r.target_bin)].insert(r.target);
  for (std::size_t b = 0; b < 4; ++b) {
    out.bins[b].population = types[b].size();
    finish(out.bins[b]);
  }
  return out;
}

std::vector<SoftMatchPoint> softmatch_rescore(std::span<const PredictionRecord> records, const NeighborIndex& index,
                                              std::span<const std::size_t> depths, bool topk_channel) {
  require_records(records, "soft-match rescoring");
  if (depths.empty()) throw Error(ErrorKind::Domain, "soft-match needs at least one depth");
  for (std::size_t i = 0; i < depths.size(); ++i) {
    if (depths[i] == 0 || (i > 0 && depths[i] <= depths[i - 1])) {
      throw Error(ErrorKind::Domain, "soft-match depths must be positive and strictly ascending");
    }
  }
  const std::size_t max_depth = depths.back();

  // distinct in-vocabulary targets -> neighbor lists
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::uint32_t> rows;
  for (const auto& r : records) {
    if ((topk_channel ? r.topk_hit : r.greedy_hit) || slot.count(r.target)) continue;
    if (auto row = index.find(r.target)) {
      slot.emplace(r.target, rows.size());
      rows.push_back(*row);
    }
  }
  bool any_known = !rows.empty();
  if (!any_known) {
    for (const auto& r : records) {
      if (index.find(r.target)) {
        any_known = true;
        break;
      }
    }
  }
  if (!any_known) {
    throw Error(ErrorKind::Configuration, "embedding vocabulary does not contain any record target");
  }
  const auto lists = max_depth > 1 ? index.search_rows(rows, max_depth) : std::vector<std::vector<Neighbor>>(rows.size());

  // 0 = exact hit, r >= 1 = 1-based neighbor rank, max = no soft match
  constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> rank(records.size(), kNever);
  const auto n = static_cast<std::int64_t>(records.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    auto& out = rank[static_cast<std::size_t>(i)];
    if (topk_channel ? r.topk_hit : r.greedy_hit) {
      out = 0;
      continue;
    }
    if (r.greedy_word.empty()) continue;
    auto it = slot.find(r.target);
    if (it == slot.end()) continue;
    const auto word_row = index.find(r.greedy_word);
    if (!word_row) continue;
    const auto& list = lists[it->second];
    for (std::size_t p = 0; p < list.size(); ++p) {
      if (list[p].row == *word_row) {
        out = p + 1;
        break;
      }
    }
  }

  const std::uint64_t type_den = attempted_types(records);
  std::vector<SoftMatchPoint> curve;
  for (std::size_t depth : depths) {
    SoftMatchPoint point;
    point.depth = depth;
    std::unordered_set<std::string> types;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const bool hit = rank[i] == 0 || (depth > 1 && rank[i] != kNever && rank[i] <= depth);
      if (hit) {
        ++point.hits;
        types.insert(records[i].target);
      }
    }
    point.hit_types = types.size();
    point.accuracy = percent(point.hits, records.size());
    point.unique_types = percent(point.hit_types, type_den);
    curve.push_back(point);
  }
  return curve;
}

UnitCrossEntropy unit_cross_entropy(std::span<const std::pair<UnitId, UnitDistribution>> events) {
  if (events.empty()) throw Error(ErrorKind::EmptyInput, "unit cross-entropy needs at least one event");
  double sum = 0.0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& [target, dist] = events[i];
    double lp = -std::numeric_limits<double>::infinity();
    for (const auto& e : dist.top) {
      if (e.unit == target) {
        lp = e.logprob;
        break;
      }
    }
    if (!std::isfinite(lp)) {
      throw Error(ErrorKind::Numeric, "unit event " + std::to_string(i) + " assigns zero probability to its target");
    }
    sum -= lp;
  }
  UnitCrossEntropy out;
  out.events = events.size();
  out.cross_entropy = sum / static_cast<double>(events.size());
  out.perplexity = std::exp(out.cross_entropy);
  return out;
}

void MetricAccumulator::add(const PredictionRecord& record) {
  ++events_;
  attempted_.insert(record.target);
  if (record.greedy_hit) {
    ++greedy_hits_;
    greedy_types_.insert(record.target);
  }
  if (record.topk_hit) {
    ++topk_hits_;
    topk_types_.insert(record.target);
  }
  logprob_sum_ += record.word_logprob;
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  events_ += other.events_;
  greedy_hits_ += other.greedy_hits_;
  topk_hits_ += other.topk_hits_;
  logprob_sum_ += other.logprob_sum_;
  greedy_types_.insert(other.greedy_types_.begin(), other.greedy_types_.end());
  topk_types_.insert(other.topk_types_.begin(), other.topk_types_.end());
  attempted_.insert(other.attempted_.begin(), other.attempted_.end());
}

EvalReport build_report(std::span<const PredictionRecord> records, std::size_t k) {
  EvalReport report;
  report.k = k;
  report.accuracy = accuracy(records);
  report.diversity = type_diversity(records, attempted_types(records));
  report.ppx = word_perplexity(records);
  report.coverage = stratified_coverage(records);
  return report;
}

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void write_report_table(std::ostream& out, const EvalReport& report, const std::string& label) {
  const std::string k = std::to_string(report.k);
  out << "model | top1 (top" << k << ") | T1 (T" << k << ") | ppx\n";
  out << label << " | " << fixed(report.accuracy.top1) << " (" << fixed(report.accuracy.topk) << ") | "
      << fixed(report.diversity.t1) << " (" << fixed(report.diversity.tk) << ") | " << fixed(report.ppx) << '\n';
  out << "events=" << report.accuracy.events << " types=" << report.diversity.denominator
      << " aborted=" << report.aborted << " skipped=" << report.skipped << '\n';
}

void write_report_json(std::ostream& out, const EvalReport& report) {
  using json = nlohmann::ordered_json;
  json j;
  j["k"] = report.k;
  j["events"] = report.accuracy.events;
  j["aborted"] = report.aborted;
  j["skipped"] = report.skipped;
  j["top1"] = {{"percent", report.accuracy.top1}, {"hits", report.accuracy.greedy_hits},
               {"events", report.accuracy.events}};
  j["topk"] = {{"percent", report.accuracy.topk}, {"hits", report.accuracy.topk_hits},
               {"events", report.accuracy.events}};
  j["T1"] = {{"percent", report.diversity.t1}, {"types", report.diversity.greedy_types},
             {"denominator", report.diversity.denominator}};
  j["Tk"] = {{"percent", report.diversity.tk}, {"types", report.diversity.topk_types},
             {"denominator", report.diversity.denominator}};
  j["ppx"] = report.ppx;
  json bins = json::object();
  for (std::size_t b = 0; b < 4; ++b) {
    const auto& c = report.coverage.bins[b];
    bins[to_string(static_cast<Bin>(b))] = {
        {"token_events", c.token_events},   {"token_hits", c.token_hits},
        {"topk_token_hits", c.topk_token_hits}, {"hit_types", c.hit_types},
        {"topk_hit_types", c.topk_hit_types}, {"population", c.population},
        {"token_coverage", c.token_coverage}, {"type_coverage", c.type_coverage},
        {"topk_token_coverage", c.topk_token_coverage}, {"topk_type_coverage", c.topk_type_coverage}};
  }
  j["coverage"] = bins;
  if (!report.softmatch.empty()) {
    json curve = json::array();
    for (const auto& p : report.softmatch) {
      curve.push_back({{"depth", p.depth}, {"hits", p.hits}, {"hit_types", p.hit_types},
                       {"accuracy", p.accuracy}, {"unique_types", p.unique_types}});
    }
    j["softmatch"] = curve;
  }
  out << j.dump(2) << '\n';
}

void write_coverage_tsv(std::ostream& out, const StratifiedCoverage& coverage) {
  out << "bin\tpopulation\ttoken_events\ttoken_hits\ttoken_coverage\thit_types\ttype_coverage"
         "\ttopk_token_hits\ttopk_token_coverage\ttopk_hit_types\ttopk_type_coverage\n";
  for (std::size_t b = 0; b < 4; ++b) {
    const auto& c = coverage.bins[b];
    out << to_string(static_cast<Bin>(b)) << '\t' << c.population << '\t' << c.token_events << '\t' << c.token_hits
        << '\t' << fixed(c.token_coverage, 4) << '\t' << c.hit_types << '\t' << fixed(c.type_coverage, 4) << '\t'
        << c.topk_token_hits << '\t' << fixed(c.topk_token_coverage, 4) << '\t' << c.topk_hit_types << '\t'
        << fixed(c.topk_type_coverage, 4) << '\n';
  }
}

void write_softmatch_tsv(std::ostream& out, std::span<const SoftMatchPoint> points) {
  out << "depth\taccuracy\tunique_types\thits\thit_types\n";
  for (const auto& p : points) {
    out << p.depth << '\t' << fixed(p.accuracy, 4) << '\t' << fixed(p.unique_types, 4) << '\t' << p.hits << '\t'
        << p.hit_types << '\n';
  }
}

}  // namespace wordeval
