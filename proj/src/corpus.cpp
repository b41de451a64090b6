#include "wordeval/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "wordeval/error.hpp"

namespace wordeval {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; }

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

Sentence split_line(std::string_view line, bool lowercase) {
  Sentence tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t start = i;
    while (i < line.size() && !is_space(line[i])) ++i;
    if (i > start) {
      std::string token(line.substr(start, i - start));
      if (lowercase) std::transform(token.begin(), token.end(), token.begin(), ascii_lower);
      tokens.push_back(std::move(token));
    }
  }
  return tokens;
}

}  // namespace

std::size_t find_invalid_utf8(std::string_view text) {
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    unsigned char c = s[i];
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len;
    std::uint32_t cp;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > n) return i;
    for (std::size_t j = 1; j < len; ++j) {
      if ((s[i + j] & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (s[i + j] & 0x3F);
    }
    // overlong encodings, surrogates, out of range
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      return i;
    }
    i += len;
  }
  return std::string_view::npos;
}

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

std::unordered_set<std::string> Corpus::types() const {
  std::unordered_set<std::string> out;
  for (const auto& s : sentences) out.insert(s.begin(), s.end());
  return out;
}

Corpus ingest_text(std::string_view text, IngestOptions options) {
  Corpus corpus;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    if (find_invalid_utf8(line) != std::string_view::npos) {
      throw Error(ErrorKind::Encoding, "invalid UTF-8 at line " + std::to_string(line_no));
    }
    Sentence sentence = split_line(line, options.lowercase);
    if (!sentence.empty()) corpus.sentences.push_back(std::move(sentence));
    if (end == text.size()) break;
    pos = end + 1;
  }
  return corpus;
}

Corpus ingest(const std::filesystem::path& path, IngestOptions options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw Error(ErrorKind::Io, "read failure on " + path.string());
  try {
    return ingest_text(buffer.str(), options);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Encoding) {
      throw Error(ErrorKind::Encoding, path.string() + ": " + std::string(e.what()));
    }
    throw;
  }
}

void FrequencyTable::add(const std::string& type, std::uint64_t count) {
  if (count == 0) return;
  counts_[type] += count;
  total_ += count;
}

void FrequencyTable::merge(const FrequencyTable& other) {
  for (const auto& [type, count] : other.counts_) counts_[type] += count;
  total_ += other.total_;
}

std::uint64_t FrequencyTable::count(const std::string& type) const {
  auto it = counts_.find(type);
  return it == counts_.end() ? 0 : it->second;
}

std::vector<std::pair<std::string, std::uint64_t>> FrequencyTable::sorted() const {
  std::vector<std::pair<std::string, std::uint64_t>> rows(counts_.begin(), counts_.end());
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return rows;
}

FrequencyTable count_frequencies(const Corpus& corpus) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyInput, "cannot count frequencies of an empty corpus");

  const auto n = static_cast<std::int64_t>(corpus.sentences.size());
  int shards = 1;
#ifdef _OPENMP
  shards = omp_get_max_threads();
#endif
  std::vector<FrequencyTable> partial(static_cast<std::size_t>(shards));

#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    int shard = 0;
#ifdef _OPENMP
    shard = omp_get_thread_num();
#endif
    auto& local = partial[static_cast<std::size_t>(shard)];
    for (const auto& token : corpus.sentences[static_cast<std::size_t>(i)]) local.add(token);
  }

  FrequencyTable merged = std::move(partial.front());
  for (std::size_t s = 1; s < partial.size(); ++s) merged.merge(partial[s]);
  return merged;
}

const char* to_string(Bin bin) {
  switch (bin) {
    case Bin::High: return "high";
    case Bin::Mid: return "mid";
    case Bin::Low: return "low";
    case Bin::Unbinned: return "unbinned";
  }
  return "unbinned";
}

Bin parse_bin(std::string_view text) {
  if (text == "high") return Bin::High;
  if (text == "mid") return Bin::Mid;
  if (text == "low") return Bin::Low;
  if (text == "unbinned") return Bin::Unbinned;
  throw Error(ErrorKind::Format, "unknown bin label '" + std::string(text) + "'");
}

Bin bin_for_frequency(std::uint64_t train_frequency) {
  if (train_frequency >= 1000) return Bin::High;
  if (train_frequency >= 100) return Bin::Mid;
  if (train_frequency >= 10) return Bin::Low;
  return Bin::Unbinned;
}

Bin BinAssignment::bin(const std::string& type) const {
  auto it = bins_.find(type);
  return it == bins_.end() ? Bin::Unbinned : it->second;
}

bool BinAssignment::eligible(const std::string& type) const { return eligible_.count(type) != 0; }

BinAssignment assign_bins(const FrequencyTable& train, const std::unordered_set<std::string>& test_types) {
  BinAssignment out;
  for (const auto& type : test_types) {
    const std::uint64_t freq = train.count(type);
    if (freq == 0) {
      out.bins_.emplace(type, Bin::Unbinned);
      ++out.test_only_;
      continue;
    }
    const Bin bin = bin_for_frequency(freq);
    out.bins_.emplace(type, bin);
    out.eligible_.insert(type);
    ++out.populations_[static_cast<std::size_t>(bin)];
  }
  return out;
}

void write_frequency_tsv(std::ostream& out, const FrequencyTable& table) {
  for (const auto& [type, count] : table.sorted()) out << type << '\t' << count << '\n';
}

void write_bin_tsv(std::ostream& out, const FrequencyTable& train, const BinAssignment& bins) {
  std::vector<std::pair<std::string, std::uint64_t>> rows;
  rows.reserve(bins.assignments().size());
  for (const auto& [type, bin] : bins.assignments()) rows.emplace_back(type, train.count(type));
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [type, count] : rows) out << type << '\t' << count << '\t' << to_string(bins.bin(type)) << '\n';
}

void write_zipf_tsv(std::ostream& out, const FrequencyTable& table) {
  std::size_t rank = 0;
  for (const auto& [type, count] : table.sorted()) out << ++rank << '\t' << count << '\n';
}

}  // namespace wordeval
