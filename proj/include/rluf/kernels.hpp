#pragma once

// Data-parallel kernels. Each kernel has a serial reference in
// kernels::serial and an OpenMP version in kernels::omp. Work is split into
// fixed shards/chunks that do not depend on the thread count, and partial
// results are combined in shard order, so both versions return bitwise
// identical results.

#include <cstdint>
#include <span>
#include <vector>

#include "rluf/conversation_log.hpp"
#include "rluf/policy.hpp"
#include "rluf/traffic.hpp"
#include "rluf/world.hpp"

namespace rluf {

class RewardModel;
struct PreferencePair;

namespace kernels {

inline constexpr std::uint64_t kShardSize = 1ULL << 14;
/// Records per gradient chunk.
inline constexpr std::size_t kChunkSize = 64;

inline std::uint64_t shard_count(std::uint64_t n) { return (n + kShardSize - 1) / kShardSize; }

/// Draws turns [shard * kShardSize, min(n, (shard + 1) * kShardSize)) and
/// hands each to `visit(turn_index, ctx, response_id, labels)`.
template <class Visitor>
void simulate_shard(const World& world, const PolicySampler& sampler, std::uint64_t seed, std::uint64_t shard,
                    std::uint64_t n_total, Visitor&& visit) {
  Rng rng(derive_seed(seed, "traffic", shard));
  const std::uint64_t begin = shard * kShardSize;
  const std::uint64_t end = std::min(n_total, begin + kShardSize);
  const std::uint64_t n_users = world.config().n_users;
  for (std::uint64_t i = begin; i < end; ++i) {
    PromptContext ctx;
    ctx.category = world.sample_category(rng);
    ctx.user_id = rng.below(n_users);
    ctx.turn_index = static_cast<std::uint32_t>(rng.below(10));
    ctx.prior_positive_signals = rng.poisson(0.02 * ctx.turn_index);
    const std::size_t r = sampler.sample(ctx.category, rng);
    const FeedbackLabels labels = world.sample_feedback(ctx.category, r, world.user(ctx.user_id), rng);
    visit(i, ctx, r, labels);
  }
}

namespace serial {
ConversationLog simulate_log(const World& world, const PolicySampler& sampler, std::uint64_t n, std::uint64_t seed);
TrafficTally simulate_tally(const World& world, const PolicySampler& sampler, std::uint64_t n, std::uint64_t seed);
/// Model scores for every (category, response) cell, category-major.
std::vector<double> score_table(const RewardModel& model, const World& world);
/// Mean loss over `rows`; the gradient is written to `grad` (resized).
double bce_loss_grad(const RewardModel& model, const LabeledDataset& data, std::span<const std::size_t> rows,
                     std::vector<double>& grad);
double bt_loss_grad(const RewardModel& model, std::span<const PreferencePair> pairs,
                    std::span<const std::size_t> rows, std::vector<double>& grad);
}  // namespace serial

namespace omp {
ConversationLog simulate_log(const World& world, const PolicySampler& sampler, std::uint64_t n, std::uint64_t seed);
TrafficTally simulate_tally(const World& world, const PolicySampler& sampler, std::uint64_t n, std::uint64_t seed);
std::vector<double> score_table(const RewardModel& model, const World& world);
double bce_loss_grad(const RewardModel& model, const LabeledDataset& data, std::span<const std::size_t> rows,
                     std::vector<double>& grad);
double bt_loss_grad(const RewardModel& model, std::span<const PreferencePair> pairs,
                    std::span<const std::size_t> rows, std::vector<double>& grad);
}  // namespace omp

/// Worker count used by the omp kernels (RLUF_THREADS caps it).
int thread_count();
void set_thread_count(int n);

}  // namespace kernels
}  // namespace rluf
