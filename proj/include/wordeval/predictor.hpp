#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wordeval/tokenizer.hpp"

namespace wordeval {

struct ScoredUnit {
  UnitId unit = 0;
  double logprob = 0.0;

  friend bool operator==(const ScoredUnit&, const ScoredUnit&) = default;
};

struct UnitDistribution {
  // Descending probability; ties by ascending unit id.
  std::vector<ScoredUnit> top;
  double total_mass_accounted = 0.0;
  // Set when the requested k exceeded the vocabulary and was clamped.
  bool clamped = false;
};

/// Source of next-unit distributions. Implementations must be deterministic
/// for a given (context, k).
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual UnitDistribution predict(std::span<const UnitId> context, std::size_t k) = 0;

  // Natural-log probability of one unit. The default asks for the full
  // distribution; local models override with a direct lookup.
  virtual double logprob(std::span<const UnitId> context, UnitId unit);

  // Whether concurrent predict() calls on one instance are safe.
  virtual bool thread_safe() const { return false; }
};

// Selects the k best entries of a full probability vector (ties by ascending id).
UnitDistribution top_k_from_probabilities(std::span<const double> probabilities, std::size_t k);

class UniformPredictor final : public Predictor {
 public:
  explicit UniformPredictor(std::size_t vocab_size);

  std::size_t vocab_size() const override { return size_; }
  UnitDistribution predict(std::span<const UnitId> context, std::size_t k) override;
  double logprob(std::span<const UnitId> context, UnitId unit) override;
  bool thread_safe() const override { return true; }

 private:
  std::size_t size_;
};

inline constexpr double kDefaultDiscount = 0.75;

/// Interpolated absolute-discounting n-gram model over unit ids.
///
///   P_h(u) = max(c(h,u) - d, 0) / c(h) + d * N1+(h .) / c(h) * P_{h'}(u)
///
/// where h' drops the oldest unit of h, P over the empty history backs off to
/// the uniform distribution, and histories never seen in training use P_{h'}
/// directly. Every sentence is left-padded with order-1 start symbols and,
/// when an end-of-text unit is given, terminated with it.
class NGramModel final : public Predictor {
 public:
  static NGramModel train(std::span<const std::vector<UnitId>> sequences, std::size_t vocab_size, int order,
                          double discount = kDefaultDiscount, std::optional<UnitId> end_of_text = std::nullopt);

  int order() const { return order_; }
  double discount() const { return discount_; }

  std::size_t vocab_size() const override { return vocab_size_; }
  UnitDistribution predict(std::span<const UnitId> context, std::size_t k) override;
  double logprob(std::span<const UnitId> context, UnitId unit) override;
  bool thread_safe() const override { return true; }

  std::vector<double> distribution(std::span<const UnitId> context) const;
  double probability(std::span<const UnitId> context, UnitId unit) const;

 private:
  struct HistoryStats {
    std::uint64_t total = 0;
    std::unordered_map<UnitId, std::uint64_t> counts;
  };

  NGramModel() = default;
  // Last order-1 symbols of the start-padded context.
  std::vector<UnitId> effective_history(std::span<const UnitId> context) const;
  const HistoryStats* stats(std::span<const UnitId> history) const;

  int order_ = 1;
  double discount_ = kDefaultDiscount;
  std::size_t vocab_size_ = 0;
  UnitId start_symbol_ = 0;
  std::unordered_map<std::string, HistoryStats> histories_;
};

}  // namespace wordeval
