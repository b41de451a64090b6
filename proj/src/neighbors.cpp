#include "wordeval/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "wordeval/error.hpp"

namespace wordeval {

namespace {

// Better-first ordering: higher similarity, then lower row.
bool better(const Neighbor& a, const Neighbor& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.row < b.row;
}

struct WorseOnTop {
  bool operator()(const Neighbor& a, const Neighbor& b) const { return better(a, b); }
};

class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) {}

  void offer(Neighbor n) {
    if (k_ == 0) return;
    if (heap_.size() < k_) {
      heap_.push(n);
    } else if (better(n, heap_.top())) {
      heap_.pop();
      heap_.push(n);
    }
  }

  std::vector<Neighbor> take() {
    std::vector<Neighbor> out;
    out.reserve(heap_.size());
    while (!heap_.empty()) {
      out.push_back(heap_.top());
      heap_.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  std::size_t k_;
  std::priority_queue<Neighbor, std::vector<Neighbor>, WorseOnTop> heap_;
};

std::uint64_t splitmix(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void normalize(std::span<float> v) {
  double norm = 0.0;
  for (float x : v) norm += static_cast<double>(x) * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (float& x : v) x = static_cast<float>(x / norm);
  }
}

constexpr std::size_t kParallelScanThreshold = 1 << 15;

}  // namespace

float dot(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

std::vector<Neighbor> select_top(std::vector<Neighbor> candidates, std::size_t k) {
  k = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(), better);
  candidates.resize(k);
  return candidates;
}

void NeighborIndex::load_rows(const EmbeddingTable& table) {
  dim_ = table.dim();
  std::vector<std::size_t> order(table.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return table.word(a) < table.word(b); });
  words_.clear();
  vectors_.clear();
  words_.reserve(order.size());
  vectors_.reserve(order.size() * dim_);
  for (std::size_t r : order) {
    words_.push_back(table.word(r));
    auto v = table.vector(r);
    vectors_.insert(vectors_.end(), v.begin(), v.end());
    normalize(std::span<float>(vectors_).subspan(vectors_.size() - dim_, dim_));
  }
}

NeighborIndex NeighborIndex::exact(const EmbeddingTable& table) {
  NeighborIndex index;
  index.backend_ = IndexBackend::Exact;
  index.load_rows(table);
  return index;
}

NeighborIndex NeighborIndex::forest(const EmbeddingTable& table, const ForestOptions& options) {
  if (options.num_trees == 0) throw Error(ErrorKind::Domain, "forest needs at least one tree");
  if (options.leaf_size == 0) throw Error(ErrorKind::Domain, "leaf size must be positive");
  NeighborIndex index;
  index.backend_ = IndexBackend::Forest;
  index.forest_options_ = options;
  index.load_rows(table);

  std::uint64_t state = options.seed;
  std::vector<std::uint32_t> items(index.size());
  for (std::size_t t = 0; t < options.num_trees; ++t) {
    std::iota(items.begin(), items.end(), std::uint32_t{0});
    index.roots_.push_back(index.build_node(items, 0, items.size(), state));
  }
  return index;
}

std::int32_t NeighborIndex::build_node(std::vector<std::uint32_t>& items, std::size_t lo, std::size_t hi,
                                       std::uint64_t& state) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.emplace_back();
  normals_.resize(nodes_.size() * dim_, 0.0f);
  const std::size_t n = hi - lo;

  if (n <= forest_options_.leaf_size) {
    nodes_[id].begin = static_cast<std::uint32_t>(leaf_items_.size());
    leaf_items_.insert(leaf_items_.end(), items.begin() + static_cast<std::ptrdiff_t>(lo),
                       items.begin() + static_cast<std::ptrdiff_t>(hi));
    nodes_[id].end = static_cast<std::uint32_t>(leaf_items_.size());
    return id;
  }

  // Two-means over a pair of sampled points; the split hyperplane passes
  // through the origin with normal (c1 - c2).
  std::vector<float> c1(dim_), c2(dim_), acc1(dim_), acc2(dim_);
  {
    const auto a = items[lo + splitmix(state) % n];
    auto b = items[lo + splitmix(state) % n];
    for (int tries = 0; b == a && tries < 8; ++tries) b = items[lo + splitmix(state) % n];
    std::copy_n(row(a).begin(), dim_, c1.begin());
    std::copy_n(row(b).begin(), dim_, c2.begin());
  }
  for (int iter = 0; iter < 3; ++iter) {
    std::fill(acc1.begin(), acc1.end(), 0.0f);
    std::fill(acc2.begin(), acc2.end(), 0.0f);
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      auto v = row(items[i]);
      if (dot(v, c1) >= dot(v, c2)) {
        for (std::size_t d = 0; d < dim_; ++d) acc1[d] += v[d];
        ++n1;
      } else {
        for (std::size_t d = 0; d < dim_; ++d) acc2[d] += v[d];
        ++n2;
      }
    }
    if (n1 == 0 || n2 == 0) break;
    normalize(acc1);
    normalize(acc2);
    c1 = acc1;
    c2 = acc2;
  }
  std::span<float> normal(normals_.data() + static_cast<std::size_t>(id) * dim_, dim_);
  for (std::size_t d = 0; d < dim_; ++d) normal[d] = c1[d] - c2[d];
  normalize(normal);

  auto first = items.begin() + static_cast<std::ptrdiff_t>(lo);
  auto last = items.begin() + static_cast<std::ptrdiff_t>(hi);
  auto mid = std::partition(first, last, [&](std::uint32_t r) { return dot(row(r), normal) > 0.0f; });
  if (mid == first || mid == last) {
    // degenerate split (duplicates or zero vectors): halve deterministically
    std::fill(normal.begin(), normal.end(), 0.0f);
    mid = first + static_cast<std::ptrdiff_t>(n / 2);
  }
  const std::size_t split = lo + static_cast<std::size_t>(mid - first);
  const auto left = build_node(items, lo, split, state);
  const auto right = build_node(items, split, hi, state);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::optional<std::uint32_t> NeighborIndex::find(const std::string& word) const {
  auto it = std::lower_bound(words_.begin(), words_.end(), word);
  if (it == words_.end() || *it != word) return std::nullopt;
  return static_cast<std::uint32_t>(it - words_.begin());
}

std::optional<std::vector<std::string>> NeighborIndex::knn(const std::string& word, std::size_t k) const {
  if (k == 0) throw Error(ErrorKind::Domain, "k must be >= 1");
  auto r = find(word);
  if (!r) return std::nullopt;
  std::vector<std::string> out;
  for (const auto& n : search(row(*r), k, *r)) out.push_back(words_[n.row]);
  return out;
}

std::vector<Neighbor> NeighborIndex::search(std::span<const float> query, std::size_t k,
                                            std::optional<std::uint32_t> exclude) const {
  if (query.size() != dim_) throw Error(ErrorKind::Domain, "query dimension mismatch");
  std::vector<float> q(query.begin(), query.end());
  normalize(q);
  return backend_ == IndexBackend::Exact ? exact_search(q, k, exclude) : forest_search(q, k, exclude);
}

std::vector<Neighbor> NeighborIndex::exact_search(std::span<const float> query, std::size_t k,
                                                  std::optional<std::uint32_t> exclude) const {
  const auto n = static_cast<std::int64_t>(words_.size());
  if (static_cast<std::size_t>(n) < kParallelScanThreshold) {
    TopK top(k);
    for (std::int64_t r = 0; r < n; ++r) {
      const auto row_id = static_cast<std::uint32_t>(r);
      if (exclude && *exclude == row_id) continue;
      top.offer({row_id, dot(query, row(row_id))});
    }
    return top.take();
  }

  std::vector<float> sims(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r) sims[static_cast<std::size_t>(r)] = dot(query, row(static_cast<std::uint32_t>(r)));
  TopK top(k);
  for (std::int64_t r = 0; r < n; ++r) {
    const auto row_id = static_cast<std::uint32_t>(r);
    if (exclude && *exclude == row_id) continue;
    top.offer({row_id, sims[static_cast<std::size_t>(r)]});
  }
  return top.take();
}

std::vector<Neighbor> NeighborIndex::forest_search(std::span<const float> query, std::size_t k,
                                                   std::optional<std::uint32_t> exclude) const {
  const std::size_t budget =
      forest_options_.search_k != 0 ? forest_options_.search_k : forest_options_.num_trees * k * 8;

  // (priority, node): a node's priority is the smallest margin on its path.
  // Each pop walks straight down the closer side and queues the far sides.
  using Entry = std::pair<float, std::int32_t>;
  std::vector<Entry> frontier;
  frontier.reserve(roots_.size() * 16);
  for (auto root : roots_) frontier.emplace_back(std::numeric_limits<float>::infinity(), root);
  std::make_heap(frontier.begin(), frontier.end());

  thread_local std::vector<std::uint32_t> stamp;
  thread_local std::uint32_t epoch = 0;
  if (stamp.size() < words_.size()) {
    stamp.assign(words_.size(), 0);
    epoch = 0;
  }
  if (++epoch == 0) {
    std::fill(stamp.begin(), stamp.end(), 0);
    epoch = 1;
  }

  std::vector<std::uint32_t> candidates;
  candidates.reserve(budget + forest_options_.leaf_size);
  while (!frontier.empty() && candidates.size() < budget) {
    std::pop_heap(frontier.begin(), frontier.end());
    auto [priority, id] = frontier.back();
    frontier.pop_back();
    for (;;) {
      const Node& node = nodes_[static_cast<std::size_t>(id)];
      if (node.left < 0) {
        for (std::uint32_t i = node.begin; i < node.end; ++i) {
          const auto r = leaf_items_[i];
          if (stamp[r] != epoch) {
            stamp[r] = epoch;
            candidates.push_back(r);
          }
        }
        break;
      }
      const float margin =
          dot(query, std::span<const float>(normals_.data() + static_cast<std::size_t>(id) * dim_, dim_));
      const bool go_left = margin >= 0.0f;
      frontier.emplace_back(std::min(priority, go_left ? -margin : margin), go_left ? node.right : node.left);
      std::push_heap(frontier.begin(), frontier.end());
      priority = std::min(priority, go_left ? margin : -margin);
      id = go_left ? node.left : node.right;
    }
  }

  TopK top(k);
  for (auto r : candidates) {
    if (exclude && *exclude == r) continue;
    top.offer({r, dot(query, row(r))});
  }
  return top.take();
}

std::vector<std::vector<Neighbor>> NeighborIndex::search_rows(std::span<const std::uint32_t> rows,
                                                              std::size_t k) const {
  std::vector<std::vector<Neighbor>> out(rows.size());
  const auto n = static_cast<std::int64_t>(rows.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto r = rows[static_cast<std::size_t>(i)];
    if (r >= words_.size()) continue;
    out[static_cast<std::size_t>(i)] = backend_ == IndexBackend::Exact ? exact_search(row(r), k, r)
                                                                       : forest_search(row(r), k, r);
  }
  return out;
}

}  // namespace wordeval
