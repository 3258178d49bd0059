#include "rluf/traffic.hpp"

#include "rluf/error.hpp"
#include "rluf/kernels.hpp"

namespace rluf {

std::uint64_t TrafficTally::total() const {
  std::uint64_t n = 0;
  for (const auto& c : per_category) n += c.n;
  return n;
}

std::uint64_t TrafficTally::loves() const {
  std::uint64_t n = 0;
  for (const auto& c : per_category) n += c.love;
  return n;
}

void TrafficTally::add(Category c, const ResponseFeatures& f, const FeedbackLabels& l) {
  auto& t = per_category[index_of(c)];
  ++t.n;
  t.love += l.love ? 1 : 0;
  t.thumbs_up += l.thumbs_up ? 1 : 0;
  t.thumbs_down += l.thumbs_down ? 1 : 0;
  bye += f.contains_bye ? 1 : 0;
  followup += f.followup_question ? 1 : 0;
  refusal += f.is_refusal ? 1 : 0;
  length_sum += f.length_tokens;
  tone_sum += f.tone_positivity;
}

void TrafficTally::merge(const TrafficTally& o) {
  for (std::size_t k = 0; k < kNumCategories; ++k) {
    per_category[k].n += o.per_category[k].n;
    per_category[k].love += o.per_category[k].love;
    per_category[k].thumbs_up += o.per_category[k].thumbs_up;
    per_category[k].thumbs_down += o.per_category[k].thumbs_down;
  }
  bye += o.bye;
  followup += o.followup;
  refusal += o.refusal;
  length_sum += o.length_sum;
  tone_sum += o.tone_sum;
}

ConversationLog simulate_traffic(const World& world, const Policy& policy, std::uint64_t n_prompts,
                                 std::uint64_t seed) {
  policy.check_library(world);
  if (n_prompts == 0) return {};
  const PolicySampler sampler(policy);
  return kernels::omp::simulate_log(world, sampler, n_prompts, seed);
}

TrafficTally tally_traffic(const World& world, const Policy& policy, std::uint64_t n_prompts, std::uint64_t seed) {
  policy.check_library(world);
  if (n_prompts == 0) return {};
  const PolicySampler sampler(policy);
  return kernels::omp::simulate_tally(world, sampler, n_prompts, seed);
}

TrafficTally tally_log(std::span<const ConversationTurn> log) {
  // Same shard-wise summation as the simulation kernels, so tone sums match bitwise.
  TrafficTally t;
  for (std::size_t b = 0; b < log.size(); b += kernels::kShardSize) {
    TrafficTally part;
    for (const auto& turn : log.subspan(b, std::min<std::size_t>(kernels::kShardSize, log.size() - b)))
      part.add(turn.context.category, turn.features, turn.labels);
    t.merge(part);
  }
  return t;
}

std::vector<UserDaySummary> simulate_user_days(const World& world, const Policy& policy, std::uint64_t n_users,
                                               std::uint64_t seed) {
  policy.check_library(world);
  const PolicySampler sampler(policy);
  const WorldConfig& cfg = world.config();
  std::vector<UserDaySummary> out(n_users);
  const auto n = static_cast<std::ptrdiff_t>(n_users);
#pragma omp parallel for schedule(static) num_threads(kernels::thread_count())
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::uint64_t>(k);
    Rng rng(derive_seed(seed, "user_day", i));
    const UserProfile user = i < cfg.n_users ? world.user(i) : make_user(cfg, i);
    UserDaySummary& s = out[static_cast<std::size_t>(k)];
    s.user_id = i;
    s.prompt_count = 1 + static_cast<std::uint32_t>(rng.poisson(7.0));
    s.image_gen_count = static_cast<std::uint32_t>(rng.binomial(s.prompt_count, 0.1));
    for (std::uint32_t p = 0; p < s.prompt_count; ++p) {
      const Category c = world.sample_category(rng);
      const std::size_t r = sampler.sample(c, rng);
      const FeedbackLabels l = world.sample_feedback(c, r, user, rng);
      s.love_count += l.love ? 1 : 0;
      s.thumbs_up_count += l.thumbs_up ? 1 : 0;
      s.thumbs_down_count += l.thumbs_down ? 1 : 0;
    }
    s.retained = simulate_retention(cfg, s, rng);
  }
  return out;
}

}  // namespace rluf
