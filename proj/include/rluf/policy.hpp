#pragma once

// Per-category softmax policies over the finite response library.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "rluf/rng.hpp"
#include "rluf/world.hpp"

namespace rluf {

class Policy {
 public:
  /// Uniform policy (all-zero logits), the default base policy.
  Policy(std::size_t library_size, std::uint64_t library_hash);
  Policy(std::vector<double> logits, std::size_t library_size, std::uint64_t library_hash,
         double temperature = 1.0);

  static Policy uniform(const World& world) { return Policy(world.library_size(), world.library_hash()); }

  std::size_t library_size() const { return library_size_; }
  std::uint64_t library_hash() const { return library_hash_; }
  double temperature() const { return temperature_; }
  std::optional<std::uint64_t> base_ref() const { return base_ref_; }
  void set_base_ref(std::uint64_t ref) { base_ref_ = ref; }

  std::span<const double> logits(Category c) const {
    return {logits_.data() + index_of(c) * library_size_, library_size_};
  }
  std::span<double> mutable_logits(Category c) {
    return {logits_.data() + index_of(c) * library_size_, library_size_};
  }
  const std::vector<double>& all_logits() const { return logits_; }

  /// softmax(logits[c] / temperature) via max-subtracted log-sum-exp.
  std::vector<double> probabilities(Category c) const;
  void probabilities(Category c, std::span<double> out) const;
  /// ln pi(r | c) for all r.
  std::vector<double> log_probabilities(Category c) const;

  /// Throws DataError when the policy was built for another library.
  void check_library(const World& world) const;

  /// Identity used for base_ref (hash of logits, temperature and library).
  std::uint64_t fingerprint() const;

 private:
  std::vector<double> logits_;
  std::size_t library_size_;
  std::uint64_t library_hash_;
  double temperature_ = 1.0;
  std::optional<std::uint64_t> base_ref_;
};

/// Precomputed inverse-CDF tables for fast repeated sampling.
class PolicySampler {
 public:
  explicit PolicySampler(const Policy& policy);
  std::size_t sample(Category c, Rng& rng) const;
  double probability(Category c, std::size_t r) const { return probs_[index_of(c) * n_ + r]; }
  std::span<const double> probabilities(Category c) const { return {probs_.data() + index_of(c) * n_, n_}; }
  std::size_t library_size() const { return n_; }

 private:
  std::size_t n_;
  std::vector<double> probs_;
  std::vector<double> cdf_;
};

std::size_t sample_response(const Policy& policy, const PromptContext& ctx, Rng& rng);

struct KlResult {
  double nats = 0.0;
  /// Base assigns zero probability where the policy is positive.
  bool infinite = false;
};

/// Exact sum_c P(c) sum_r pi(r|c) ln(pi(r|c) / pi_base(r|c)).
KlResult kl_to_base(const Policy& policy, const Policy& base, const CategoryWeights& prompt_distribution);
/// Single-row KL between two probability vectors.
KlResult kl_divergence(std::span<const double> p, std::span<const double> q);

/// Scores a (category, response) cell.
using CellScorer = std::function<double(Category, std::size_t)>;

/// Exact expectation of the scorer under the policy, averaged over the
/// prompt categories in prompt_set.
double expected_score(const Policy& policy, const CellScorer& scorer, std::span<const Category> prompt_set);
/// Same, with a precomputed [category x library] score table.
double expected_score(const Policy& policy, std::span<const double> score_table,
                      std::span<const Category> prompt_set);

/// Fixed seeded prompt set drawn from a category distribution.
std::vector<Category> make_prompt_set(const CategoryWeights& distribution, std::size_t n, std::uint64_t seed);

nlohmann::json to_json(const Policy& policy);
Policy policy_from_json(const nlohmann::json& j);

}  // namespace rluf
