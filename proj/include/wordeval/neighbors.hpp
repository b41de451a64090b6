#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wordeval/embedding.hpp"

namespace wordeval {

enum class IndexBackend { Exact, Forest };

struct Neighbor {
  std::uint32_t row = 0;
  float similarity = 0.0f;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct ForestOptions {
  std::size_t num_trees = 16;
  std::size_t leaf_size = 16;
  // Candidate points gathered before exact re-ranking; 0 means num_trees * k * 8.
  std::size_t search_k = 0;
  std::uint64_t seed = 1;
};

float dot(std::span<const float> a, std::span<const float> b);

/// Cosine k-nearest-neighbor index over an embedding table.
///
/// Rows are stored unit-normalized in ascending lexicographic word order, so
/// a row index doubles as the tie-break key: results are ordered by
/// descending similarity, then ascending word.
class NeighborIndex {
 public:
  static NeighborIndex exact(const EmbeddingTable& table);
  static NeighborIndex forest(const EmbeddingTable& table, const ForestOptions& options = {});

  IndexBackend backend() const { return backend_; }
  std::size_t size() const { return words_.size(); }
  std::size_t dim() const { return dim_; }
  const std::string& word(std::uint32_t row) const { return words_[row]; }
  std::optional<std::uint32_t> find(const std::string& word) const;

  // k nearest words to `word`, excluding itself; nullopt when out of vocabulary.
  std::optional<std::vector<std::string>> knn(const std::string& word, std::size_t k) const;

  // Raw query; `exclude` drops one row from the results.
  std::vector<Neighbor> search(std::span<const float> query, std::size_t k,
                               std::optional<std::uint32_t> exclude = std::nullopt) const;

  // One result list per row query, computed in parallel.
  std::vector<std::vector<Neighbor>> search_rows(std::span<const std::uint32_t> rows, std::size_t k) const;

 private:
  struct Node {
    // internal: children >= 0; leaf: left == -1 and [begin, end) indexes leaf_items_
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
  };

  NeighborIndex() = default;
  void load_rows(const EmbeddingTable& table);
  std::int32_t build_node(std::vector<std::uint32_t>& items, std::size_t lo, std::size_t hi, std::uint64_t& state);
  std::vector<Neighbor> exact_search(std::span<const float> query, std::size_t k,
                                     std::optional<std::uint32_t> exclude) const;
  std::vector<Neighbor> forest_search(std::span<const float> query, std::size_t k,
                                      std::optional<std::uint32_t> exclude) const;
  std::span<const float> row(std::uint32_t r) const {
    return std::span<const float>(vectors_).subspan(static_cast<std::size_t>(r) * dim_, dim_);
  }

  IndexBackend backend_ = IndexBackend::Exact;
  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::vector<float> vectors_;

  ForestOptions forest_options_;
  std::vector<std::int32_t> roots_;
  std::vector<Node> nodes_;
  std::vector<float> normals_;  // dim_ floats per internal node, indexed by node id
  std::vector<std::uint32_t> leaf_items_;
};

// Keeps the k best (similarity desc, row asc) of a stream of candidates.
std::vector<Neighbor> select_top(std::vector<Neighbor> candidates, std::size_t k);

}  // namespace wordeval
