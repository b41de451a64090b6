#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wordeval/corpus.hpp"

namespace wordeval {

class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim);

  // Throws Format on dimension mismatch, duplicate word, or non-finite values.
  void add(std::string word, std::span<const float> vector);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  const std::string& word(std::size_t row) const { return words_[row]; }
  std::span<const float> vector(std::size_t row) const {
    return std::span<const float>(data_).subspan(row * dim_, dim_);
  }
  std::optional<std::size_t> find(const std::string& word) const;

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.dim_ == b.dim_ && a.words_ == b.words_ && a.data_ == b.data_;
  }

 private:
  std::size_t dim_;
  std::vector<std::string> words_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> rows_;
};

/// Skip-gram with negative sampling. Defaults follow the common word2vec
/// settings; `dim` defaults to 50.
struct SgnsOptions {
  std::size_t dim = 50;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  std::uint64_t min_count = 10;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;
  // >1 enables lock-free parallel updates; results are then nondeterministic.
  int workers = 1;
};

EmbeddingTable train_sgns(const Corpus& corpus, const SgnsOptions& options = {});

// Text format: "<count> <dim>" header, then "<word> <v1> ... <v_dim>" per line.
// Floats are written in shortest round-trip form, so save/load is exact.
void save_embeddings(const EmbeddingTable& table, std::ostream& out);
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_embeddings(std::istream& in, const std::string& source = "<stream>");
EmbeddingTable load_embeddings(const std::filesystem::path& path);

}  // namespace wordeval
