#include "wordeval/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "wordeval/error.hpp"

namespace wordeval {

namespace {

std::string history_key(std::span<const UnitId> history) {
  std::string key(history.size() * sizeof(UnitId), '\0');
  if (!history.empty()) std::memcpy(key.data(), history.data(), key.size());
  return key;
}

}  // namespace

double Predictor::logprob(std::span<const UnitId> context, UnitId unit) {
  if (unit >= vocab_size()) throw Error(ErrorKind::Domain, "unit id " + std::to_string(unit) + " out of range");
  const auto dist = predict(context, vocab_size());
  for (const auto& entry : dist.top) {
    if (entry.unit == unit) return entry.logprob;
  }
  return -std::numeric_limits<double>::infinity();
}

UnitDistribution top_k_from_probabilities(std::span<const double> probabilities, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::Domain, "k must be positive");
  UnitDistribution out;
  if (k > probabilities.size()) {
    k = probabilities.size();
    out.clamped = true;
  }
  std::vector<UnitId> order(probabilities.size());
  std::iota(order.begin(), order.end(), UnitId{0});
  auto better = [&](UnitId a, UnitId b) {
    if (probabilities[a] != probabilities[b]) return probabilities[a] > probabilities[b];
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  out.top.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double p = probabilities[order[i]];
    out.top.push_back({order[i], std::log(p)});
    out.total_mass_accounted += p;
  }
  out.total_mass_accounted = std::min(out.total_mass_accounted, 1.0);
  return out;
}

UniformPredictor::UniformPredictor(std::size_t vocab_size) : size_(vocab_size) {
  if (vocab_size == 0) throw Error(ErrorKind::Domain, "uniform predictor needs a non-empty vocabulary");
}

UnitDistribution UniformPredictor::predict(std::span<const UnitId>, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::Domain, "k must be positive");
  UnitDistribution out;
  if (k > size_) {
    k = size_;
    out.clamped = true;
  }
  const double lp = -std::log(static_cast<double>(size_));
  for (std::size_t i = 0; i < k; ++i) out.top.push_back({static_cast<UnitId>(i), lp});
  out.total_mass_accounted = static_cast<double>(k) / static_cast<double>(size_);
  return out;
}

double UniformPredictor::logprob(std::span<const UnitId>, UnitId unit) {
  if (unit >= size_) throw Error(ErrorKind::Domain, "unit id " + std::to_string(unit) + " out of range");
  return -std::log(static_cast<double>(size_));
}

NGramModel NGramModel::train(std::span<const std::vector<UnitId>> sequences, std::size_t vocab_size, int order,
                             double discount, std::optional<UnitId> end_of_text) {
  if (order < 1) throw Error(ErrorKind::Domain, "n-gram order must be >= 1");
  if (!(discount > 0.0 && discount < 1.0)) throw Error(ErrorKind::Domain, "discount must lie in (0, 1)");
  if (vocab_size == 0) throw Error(ErrorKind::Domain, "empty unit vocabulary");

  NGramModel model;
  model.order_ = order;
  model.discount_ = discount;
  model.vocab_size_ = vocab_size;
  model.start_symbol_ = static_cast<UnitId>(vocab_size);

  const auto pad = static_cast<std::size_t>(order - 1);
  std::size_t events = 0;
  std::vector<UnitId> padded;
  for (const auto& seq : sequences) {
    if (seq.empty()) continue;
    padded.assign(pad, model.start_symbol_);
    for (UnitId u : seq) {
      if (u >= vocab_size) throw Error(ErrorKind::Domain, "unit id " + std::to_string(u) + " out of range");
      padded.push_back(u);
    }
    if (end_of_text) padded.push_back(*end_of_text);

    for (std::size_t i = pad; i < padded.size(); ++i) {
      for (std::size_t h = 0; h <= pad; ++h) {
        auto history = std::span<const UnitId>(padded).subspan(i - h, h);
        auto& stats = model.histories_[history_key(history)];
        ++stats.total;
        ++stats.counts[padded[i]];
      }
      ++events;
    }
  }
  if (events == 0) throw Error(ErrorKind::EmptyInput, "cannot train an n-gram model on an empty corpus");
  return model;
}

std::vector<UnitId> NGramModel::effective_history(std::span<const UnitId> context) const {
  const auto want = static_cast<std::size_t>(order_ - 1);
  std::vector<UnitId> history;
  history.reserve(want);
  if (context.size() < want) history.assign(want - context.size(), start_symbol_);
  const std::size_t take = std::min(want, context.size());
  for (std::size_t i = context.size() - take; i < context.size(); ++i) {
    if (context[i] >= vocab_size_) {
      throw Error(ErrorKind::Domain, "context unit id " + std::to_string(context[i]) + " out of range");
    }
    history.push_back(context[i]);
  }
  return history;
}

const NGramModel::HistoryStats* NGramModel::stats(std::span<const UnitId> history) const {
  auto it = histories_.find(history_key(history));
  return it == histories_.end() ? nullptr : &it->second;
}

std::vector<double> NGramModel::distribution(std::span<const UnitId> context) const {
  const auto history = effective_history(context);
  std::vector<double> p(vocab_size_, 1.0 / static_cast<double>(vocab_size_));
  for (std::size_t h = 0; h <= history.size(); ++h) {
    const auto* s = stats(std::span<const UnitId>(history).subspan(history.size() - h, h));
    if (s == nullptr || s->total == 0) continue;
    const double total = static_cast<double>(s->total);
    const double backoff = discount_ * static_cast<double>(s->counts.size()) / total;
    for (auto& v : p) v *= backoff;
    for (const auto& [unit, count] : s->counts) {
      if (unit < vocab_size_) p[unit] += std::max(static_cast<double>(count) - discount_, 0.0) / total;
    }
  }
  return p;
}

double NGramModel::probability(std::span<const UnitId> context, UnitId unit) const {
  if (unit >= vocab_size_) throw Error(ErrorKind::Domain, "unit id " + std::to_string(unit) + " out of range");
  const auto history = effective_history(context);
  double p = 1.0 / static_cast<double>(vocab_size_);
  for (std::size_t h = 0; h <= history.size(); ++h) {
    const auto* s = stats(std::span<const UnitId>(history).subspan(history.size() - h, h));
    if (s == nullptr || s->total == 0) continue;
    const double total = static_cast<double>(s->total);
    auto it = s->counts.find(unit);
    const double count = it == s->counts.end() ? 0.0 : static_cast<double>(it->second);
    p = std::max(count - discount_, 0.0) / total + discount_ * static_cast<double>(s->counts.size()) / total * p;
  }
  return p;
}

UnitDistribution NGramModel::predict(std::span<const UnitId> context, std::size_t k) {
  const auto p = distribution(context);
  return top_k_from_probabilities(p, k);
}

double NGramModel::logprob(std::span<const UnitId> context, UnitId unit) {
  return std::log(probability(context, unit));
}

}  // namespace wordeval
