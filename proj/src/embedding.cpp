#include "wordeval/embedding.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "wordeval/error.hpp"

namespace wordeval {

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(ErrorKind::Domain, "embedding dimension must be positive");
}

void EmbeddingTable::add(std::string word, std::span<const float> vector) {
  if (vector.size() != dim_) {
    throw Error(ErrorKind::Format, "vector for '" + word + "' has " + std::to_string(vector.size()) +
                                       " components, expected " + std::to_string(dim_));
  }
  for (float v : vector) {
    if (!std::isfinite(v)) throw Error(ErrorKind::Format, "non-finite component in vector for '" + word + "'");
  }
  if (!rows_.emplace(word, words_.size()).second) throw Error(ErrorKind::Format, "duplicate word '" + word + "'");
  words_.push_back(std::move(word));
  data_.insert(data_.end(), vector.begin(), vector.end());
}

std::optional<std::size_t> EmbeddingTable::find(const std::string& word) const {
  auto it = rows_.find(word);
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

namespace {

constexpr float kMaxExp = 6.0f;

float sigmoid(float x) {
  if (x > kMaxExp) return 1.0f;
  if (x < -kMaxExp) return 0.0f;
  return 1.0f / (1.0f + std::exp(-x));
}

// One skip-gram update of `center` against `context` plus sampled negatives.
// `grad` is scratch space of length dim.
void sgns_step(std::vector<float>& input, std::vector<float>& output, std::size_t dim, std::size_t center,
               std::size_t context, std::span<const std::uint32_t> negative_table, std::size_t negatives,
               float alpha, std::mt19937_64& rng, std::vector<float>& grad) {
  float* in = &input[center * dim];
  std::fill(grad.begin(), grad.end(), 0.0f);
  std::uniform_int_distribution<std::size_t> pick(0, negative_table.size() - 1);
  for (std::size_t d = 0; d <= negatives; ++d) {
    std::size_t target;
    float label;
    if (d == 0) {
      target = context;
      label = 1.0f;
    } else {
      target = negative_table[pick(rng)];
      if (target == context) continue;
      label = 0.0f;
    }
    float* out = &output[target * dim];
    float f = 0.0f;
    for (std::size_t i = 0; i < dim; ++i) f += in[i] * out[i];
    const float g = (label - sigmoid(f)) * alpha;
    for (std::size_t i = 0; i < dim; ++i) grad[i] += g * out[i];
    for (std::size_t i = 0; i < dim; ++i) out[i] += g * in[i];
  }
  for (std::size_t i = 0; i < dim; ++i) in[i] += grad[i];
}

}  // namespace

EmbeddingTable train_sgns(const Corpus& corpus, const SgnsOptions& options) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyInput, "cannot train embeddings on an empty corpus");
  if (options.dim < 2) throw Error(ErrorKind::Domain, "embedding dimension must be >= 2");
  if (options.window == 0) throw Error(ErrorKind::Domain, "window must be >= 1");

  // vocabulary: count >= min_count, ordered by descending count then word
  const FrequencyTable freq = count_frequencies(corpus);
  std::vector<std::pair<std::string, std::uint64_t>> vocab;
  for (auto& row : freq.sorted()) {
    if (row.second >= options.min_count) vocab.push_back(std::move(row));
  }
  if (vocab.empty()) throw Error(ErrorKind::Degenerate, "no word reaches min_count");
  std::unordered_map<std::string, std::uint32_t> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(vocab[i].first, static_cast<std::uint32_t>(i));

  std::vector<std::vector<std::uint32_t>> sentences;
  std::size_t train_tokens = 0;
  for (const auto& sentence : corpus.sentences) {
    std::vector<std::uint32_t> ids;
    for (const auto& w : sentence) {
      auto it = index.find(w);
      if (it != index.end()) ids.push_back(it->second);
    }
    train_tokens += ids.size();
    if (ids.size() > 1) sentences.push_back(std::move(ids));
  }
  if (train_tokens <= options.window || sentences.empty()) {
    throw Error(ErrorKind::Degenerate, "corpus has " + std::to_string(train_tokens) +
                                           " usable tokens, not more than the window of " +
                                           std::to_string(options.window));
  }

  // unigram^0.75 table for negative sampling
  constexpr std::size_t kTableSize = 1 << 20;
  std::vector<std::uint32_t> table(kTableSize);
  {
    double norm = 0.0;
    for (const auto& [w, c] : vocab) norm += std::pow(static_cast<double>(c), 0.75);
    std::size_t word = 0;
    double cumulative = std::pow(static_cast<double>(vocab[0].second), 0.75) / norm;
    for (std::size_t a = 0; a < kTableSize; ++a) {
      table[a] = static_cast<std::uint32_t>(word);
      if (static_cast<double>(a) / kTableSize > cumulative && word + 1 < vocab.size()) {
        ++word;
        cumulative += std::pow(static_cast<double>(vocab[word].second), 0.75) / norm;
      }
    }
  }

  const std::size_t dim = options.dim;
  std::vector<float> input(vocab.size() * dim);
  std::vector<float> output(vocab.size() * dim, 0.0f);
  {
    std::mt19937_64 init(options.seed);
    std::uniform_real_distribution<float> u(-0.5f, 0.5f);
    for (auto& v : input) v = u(init) / static_cast<float>(dim);
  }

  const double total_steps = static_cast<double>(options.epochs) * static_cast<double>(train_tokens);
  const auto alpha_at = [&](double done) {
    return static_cast<float>(options.learning_rate * std::max(1.0 - done / (total_steps + 1.0), 1e-4));
  };

  const auto n_sentences = static_cast<std::int64_t>(sentences.size());
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    if (options.workers <= 1) {
      std::mt19937_64 rng(options.seed * 1000003ULL + epoch);
      std::vector<float> grad(dim);
      double done = static_cast<double>(epoch) * static_cast<double>(train_tokens);
      for (const auto& s : sentences) {
        for (std::size_t pos = 0; pos < s.size(); ++pos, done += 1.0) {
          const float alpha = alpha_at(done);
          const std::size_t reduce = std::uniform_int_distribution<std::size_t>(0, options.window - 1)(rng);
          const std::size_t span = options.window - reduce;
          const std::size_t lo = pos >= span ? pos - span : 0;
          const std::size_t hi = std::min(s.size() - 1, pos + span);
          for (std::size_t c = lo; c <= hi; ++c) {
            if (c == pos) continue;
            sgns_step(input, output, dim, s[c], s[pos], table, options.negatives, alpha, rng, grad);
          }
        }
      }
    } else {
      const double epoch_base = static_cast<double>(epoch) * static_cast<double>(train_tokens);
#pragma omp parallel num_threads(options.workers)
      {
        std::vector<float> grad(dim);
        std::mt19937_64 rng;
#pragma omp for schedule(static)
        for (std::int64_t si = 0; si < n_sentences; ++si) {
          rng.seed(options.seed * 1000003ULL + epoch * 7919ULL + static_cast<std::uint64_t>(si));
          const auto& s = sentences[static_cast<std::size_t>(si)];
          const float alpha = alpha_at(epoch_base + static_cast<double>(si) / n_sentences * train_tokens);
          for (std::size_t pos = 0; pos < s.size(); ++pos) {
            const std::size_t reduce = std::uniform_int_distribution<std::size_t>(0, options.window - 1)(rng);
            const std::size_t span = options.window - reduce;
            const std::size_t lo = pos >= span ? pos - span : 0;
            const std::size_t hi = std::min(s.size() - 1, pos + span);
            for (std::size_t c = lo; c <= hi; ++c) {
              if (c == pos) continue;
              sgns_step(input, output, dim, s[c], s[pos], table, options.negatives, alpha, rng, grad);
            }
          }
        }
      }
    }
  }

  EmbeddingTable out(dim);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out.add(vocab[i].first, std::span<const float>(input).subspan(i * dim, dim));
  }
  return out;
}

void save_embeddings(const EmbeddingTable& table, std::ostream& out) {
  out << table.size() << ' ' << table.dim() << '\n';
  char buf[64];
  for (std::size_t r = 0; r < table.size(); ++r) {
    out << table.word(r);
    for (float v : table.vector(r)) {
      auto res = std::to_chars(buf, buf + sizeof buf, v);
      out << ' ';
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  save_embeddings(table, out);
}

EmbeddingTable load_embeddings(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Format, source + ": missing '<count> <dim>' header");
  std::size_t count = 0;
  std::size_t dim = 0;
  {
    std::istringstream header(line);
    std::string extra;
    if (!(header >> count >> dim) || (header >> extra) || dim == 0) {
      throw Error(ErrorKind::Format, source + ":1: expected '<count> <dim>' header");
    }
  }
  EmbeddingTable table(dim);
  std::vector<float> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no);

    const char* p = line.data();
    const char* end = line.data() + line.size();
    auto blank = [](char c) { return c == ' ' || c == '\t'; };
    const char* word_end = std::find_if(p, end, blank);
    std::string word(p, word_end);
    values.clear();
    p = word_end;
    while (p < end) {
      while (p < end && blank(*p)) ++p;
      if (p == end) break;
      float v = 0.0f;
      auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc() || (res.ptr != end && !blank(*res.ptr))) {
        throw Error(ErrorKind::Format, where + ": malformed number");
      }
      values.push_back(v);
      p = res.ptr;
    }
    if (values.size() != dim) {
      throw Error(ErrorKind::Format, where + ": expected " + std::to_string(dim) + " components, found " +
                                         std::to_string(values.size()));
    }
    try {
      table.add(std::move(word), values);
    } catch (const Error& e) {
      throw Error(ErrorKind::Format, where + ": " + e.what());
    }
  }
  if (table.size() != count) {
    throw Error(ErrorKind::Format, source + ": header declares " + std::to_string(count) + " vectors, found " +
                                       std::to_string(table.size()));
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  return load_embeddings(in, path.string());
}

}  // namespace wordeval
