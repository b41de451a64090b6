#include "wordeval/tokenizer.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include "wordeval/error.hpp"

namespace wordeval {

namespace {

bool starts_with(std::string_view s, std::string_view prefix) {
  return !prefix.empty() && s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

bool is_bracketed(std::string_view s) { return s.size() > 2 && s.front() == '[' && s.back() == ']'; }

std::string merge_key(std::string_view a, std::string_view b) {
  std::string key;
  key.reserve(a.size() + b.size() + 1);
  key.append(a);
  key.push_back('\x01');
  key.append(b);
  return key;
}

std::string trim_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

const char* to_string(Scheme scheme) { return scheme == Scheme::Bpe ? "bpe" : "wordpiece"; }

Scheme parse_scheme(std::string_view text) {
  if (text == "bpe") return Scheme::Bpe;
  if (text == "wordpiece") return Scheme::WordPiece;
  throw Error(ErrorKind::Configuration, "unknown tokenizer scheme '" + std::string(text) + "' (expected bpe|wordpiece)");
}

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    len = std::min(len, text.size() - i);
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

SubwordVocab SubwordVocab::wordpiece(std::vector<std::string> units, std::string continuation_marker) {
  SubwordVocab v;
  v.scheme_ = Scheme::WordPiece;
  v.units_ = std::move(units);
  v.continuation_marker_ = std::move(continuation_marker);
  v.index_units();
  return v;
}

SubwordVocab SubwordVocab::bpe(std::vector<std::string> units, std::vector<std::pair<std::string, std::string>> merges,
                               std::string word_initial_marker, std::optional<std::string> unknown,
                               std::optional<std::string> end_of_text) {
  if (word_initial_marker.empty()) throw Error(ErrorKind::Format, "BPE vocabulary needs a word-initial marker");
  SubwordVocab v;
  v.scheme_ = Scheme::Bpe;
  v.units_ = std::move(units);
  v.merges_ = std::move(merges);
  v.word_initial_marker_ = std::move(word_initial_marker);
  v.index_units();
  auto resolve = [&](const std::optional<std::string>& name, const char* what) -> std::optional<UnitId> {
    if (!name) return std::nullopt;
    auto id = v.find(*name);
    if (!id) throw Error(ErrorKind::Format, std::string(what) + " unit '" + *name + "' is not in the vocabulary");
    return id;
  };
  v.unknown_ = resolve(unknown, "unknown");
  v.end_of_text_ = resolve(end_of_text, "end-of-text");
  for (auto special : {v.unknown_, v.end_of_text_}) {
    if (!special) continue;
    v.special_[*special] = true;
    v.word_initial_[*special] = true;
    v.surfaces_[*special].clear();
  }
  for (std::size_t r = 0; r < v.merges_.size(); ++r) {
    v.merge_ranks_.emplace(merge_key(v.merges_[r].first, v.merges_[r].second), r);
  }
  return v;
}

void SubwordVocab::index_units() {
  if (units_.size() > std::numeric_limits<UnitId>::max()) throw Error(ErrorKind::Format, "vocabulary too large");
  ids_.clear();
  surfaces_.assign(units_.size(), {});
  word_initial_.assign(units_.size(), false);
  special_.assign(units_.size(), false);
  for (std::size_t i = 0; i < units_.size(); ++i) {
    const std::string& u = units_[i];
    if (u.empty()) throw Error(ErrorKind::Format, "empty unit at id " + std::to_string(i));
    if (!ids_.emplace(u, static_cast<UnitId>(i)).second) {
      throw Error(ErrorKind::Format, "duplicate unit '" + u + "' at id " + std::to_string(i));
    }
    if (scheme_ == Scheme::WordPiece) {
      if (is_bracketed(u)) {
        special_[i] = true;
        word_initial_[i] = true;
        if (u == "[UNK]") unknown_ = static_cast<UnitId>(i);
        if (u == "[EOS]") end_of_text_ = static_cast<UnitId>(i);
      } else if (starts_with(u, continuation_marker_)) {
        surfaces_[i] = u.substr(continuation_marker_.size());
      } else {
        surfaces_[i] = u;
        word_initial_[i] = true;
      }
    } else {
      if (starts_with(u, word_initial_marker_)) {
        surfaces_[i] = u.substr(word_initial_marker_.size());
        word_initial_[i] = true;
      } else {
        surfaces_[i] = u;
      }
    }
  }
}

const std::string& SubwordVocab::unit(UnitId id) const {
  if (id >= units_.size()) throw Error(ErrorKind::Domain, "unit id " + std::to_string(id) + " out of range");
  return units_[id];
}

const std::string& SubwordVocab::surface(UnitId id) const {
  if (id >= units_.size()) throw Error(ErrorKind::Domain, "unit id " + std::to_string(id) + " out of range");
  return surfaces_[id];
}

std::optional<UnitId> SubwordVocab::find(std::string_view unit) const {
  auto it = ids_.find(std::string(unit));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

bool SubwordVocab::is_special(UnitId id) const {
  if (id >= units_.size()) throw Error(ErrorKind::Domain, "unit id " + std::to_string(id) + " out of range");
  return special_[id];
}

bool SubwordVocab::is_end_of_word(UnitId next_unit) const {
  if (next_unit >= units_.size()) {
    throw Error(ErrorKind::Domain, "unit id " + std::to_string(next_unit) + " out of range");
  }
  return word_initial_[next_unit];
}

Segmentation SubwordVocab::segment(std::string_view word) const {
  if (word.empty()) throw Error(ErrorKind::Domain, "cannot segment an empty word");
  return scheme_ == Scheme::WordPiece ? segment_wordpiece(word) : segment_bpe(word);
}

Segmentation SubwordVocab::segment_wordpiece(std::string_view word) const {
  Segmentation seg;
  seg.word = std::string(word);

  // code point boundaries, so longest-match never splits a multi-byte char
  std::vector<std::size_t> bounds{0};
  for (const auto& ch : utf8_chars(word)) bounds.push_back(bounds.back() + ch.size());

  std::size_t start = 0;
  while (start + 1 < bounds.size()) {
    std::optional<UnitId> match;
    std::size_t match_end = 0;
    for (std::size_t end = bounds.size() - 1; end > start; --end) {
      std::string piece(word.substr(bounds[start], bounds[end] - bounds[start]));
      if (start > 0) piece.insert(0, continuation_marker_);
      auto it = ids_.find(piece);
      if (it != ids_.end() && !special_[it->second]) {
        match = it->second;
        match_end = end;
        break;
      }
    }
    if (!match) {
      if (!unknown_) throw Error(ErrorKind::Coverage, "cannot segment word '" + seg.word + "'");
      seg.units.assign(1, *unknown_);
      seg.boundary_flags.assign(1, true);
      seg.has_unknown = true;
      return seg;
    }
    seg.units.push_back(*match);
    seg.boundary_flags.push_back(start == 0);
    start = match_end;
  }
  return seg;
}

std::vector<std::string> SubwordVocab::bpe_symbols(std::string_view word) const {
  std::vector<std::string> symbols = utf8_chars(word);
  symbols.front().insert(0, word_initial_marker_);

  while (symbols.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = merge_ranks_.find(merge_key(symbols[i], symbols[i + 1]));
      if (it != merge_ranks_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_pos = i;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;

    const std::string first = symbols[best_pos];
    const std::string second = symbols[best_pos + 1];
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size();) {
      if (i + 1 < symbols.size() && symbols[i] == first && symbols[i + 1] == second) {
        merged.push_back(first + second);
        i += 2;
      } else {
        merged.push_back(std::move(symbols[i]));
        ++i;
      }
    }
    symbols = std::move(merged);
  }
  return symbols;
}

Segmentation SubwordVocab::segment_bpe(std::string_view word) const {
  Segmentation seg;
  seg.word = std::string(word);
  const auto symbols = bpe_symbols(word);
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    auto it = ids_.find(symbols[i]);
    if (it == ids_.end() || special_[it->second]) {
      if (!unknown_) {
        throw Error(ErrorKind::Coverage, "cannot segment word '" + seg.word + "': no unit '" + symbols[i] + "'");
      }
      seg.units.push_back(*unknown_);
      seg.has_unknown = true;
    } else {
      seg.units.push_back(it->second);
    }
    seg.boundary_flags.push_back(i == 0);
  }
  return seg;
}

std::vector<UnitId> SubwordVocab::encode(std::span<const std::string> words) const {
  std::vector<UnitId> out;
  for (const auto& w : words) {
    auto seg = segment(w);
    out.insert(out.end(), seg.units.begin(), seg.units.end());
  }
  return out;
}

std::string SubwordVocab::spell(std::span<const UnitId> units) const {
  std::string out;
  for (UnitId u : units) out += surface(u);
  return out;
}

std::string SubwordVocab::sha256() const {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::Configuration, "SHA-256 unavailable");
  }
  for (const auto& u : units_) {
    EVP_DigestUpdate(ctx.get(), u.data(), u.size());
    EVP_DigestUpdate(ctx.get(), "\n", 1);
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

namespace {

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  return in;
}

SubwordVocab load_wordpiece(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::vector<std::string> units;
  std::string line;
  while (std::getline(in, line)) {
    line = trim_cr(std::move(line));
    if (line.empty()) continue;
    units.push_back(line);
  }
  try {
    return SubwordVocab::wordpiece(std::move(units));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

SubwordVocab load_bpe(const VocabFiles& files) {
  auto in = open_or_throw(files.units);
  std::string line;
  std::string marker;
  std::optional<std::string> unk;
  std::optional<std::string> eos;

  if (!std::getline(in, line) || !starts_with(line, "word_initial=")) {
    throw Error(ErrorKind::Format, files.units.string() + ":1: expected header 'word_initial=<marker>'");
  }
  {
    std::istringstream header(trim_cr(line));
    std::string field;
    while (header >> field) {
      auto eq = field.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::Format, files.units.string() + ":1: bad header field '" + field + "'");
      const std::string key = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      if (key == "word_initial") marker = value;
      else if (key == "unk") unk = value;
      else if (key == "eos") eos = value;
      else throw Error(ErrorKind::Format, files.units.string() + ":1: unknown header key '" + key + "'");
    }
  }

  std::vector<std::pair<std::string, std::optional<std::size_t>>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim_cr(std::move(line));
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      rows.emplace_back(line, std::nullopt);
      continue;
    }
    std::size_t id = 0;
    try {
      std::size_t used = 0;
      id = std::stoul(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorKind::Format, files.units.string() + ":" + std::to_string(line_no) + ": bad unit id");
    }
    rows.emplace_back(line.substr(0, tab), id);
  }

  std::vector<std::string> units(rows.size());
  std::vector<bool> filled(rows.size(), false);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t id = rows[i].second.value_or(i);
    if (id >= rows.size() || filled[id]) {
      throw Error(ErrorKind::Format, files.units.string() + ": unit ids must be dense and unique (id " +
                                         std::to_string(id) + ")");
    }
    units[id] = rows[i].first;
    filled[id] = true;
  }

  std::vector<std::pair<std::string, std::string>> merges;
  if (!files.merges.empty()) {
    auto min = open_or_throw(files.merges);
    line_no = 0;
    while (std::getline(min, line)) {
      ++line_no;
      line = trim_cr(std::move(line));
      if (line.empty() || line.front() == '#') continue;
      std::istringstream fields(line);
      std::string a, b, extra;
      if (!(fields >> a >> b) || (fields >> extra)) {
        throw Error(ErrorKind::Format, files.merges.string() + ":" + std::to_string(line_no) +
                                           ": malformed merge rule '" + line + "'");
      }
      merges.emplace_back(std::move(a), std::move(b));
    }
  }

  try {
    return SubwordVocab::bpe(std::move(units), std::move(merges), marker, unk, eos);
  } catch (const Error& e) {
    throw Error(e.kind(), files.units.string() + ": " + e.what());
  }
}

}  // namespace

SubwordVocab load_vocab(const VocabFiles& files, Scheme scheme) {
  return scheme == Scheme::WordPiece ? load_wordpiece(files.units) : load_bpe(files);
}

void save_vocab(const SubwordVocab& vocab, const VocabFiles& files) {
  std::ofstream out(files.units);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + files.units.string());
  if (vocab.scheme() == Scheme::Bpe) {
    out << "word_initial=" << vocab.word_initial_marker();
    if (auto unk = vocab.unknown_id()) out << " unk=" << vocab.unit(*unk);
    if (auto eos = vocab.end_of_text_id()) out << " eos=" << vocab.unit(*eos);
    out << '\n';
  }
  for (UnitId i = 0; i < vocab.size(); ++i) out << vocab.unit(i) << '\n';
  if (vocab.scheme() == Scheme::Bpe && !files.merges.empty()) {
    std::ofstream m(files.merges);
    if (!m) throw Error(ErrorKind::Io, "cannot write " + files.merges.string());
    for (const auto& [a, b] : vocab.merges()) m << a << ' ' << b << '\n';
  }
}

}  // namespace wordeval
