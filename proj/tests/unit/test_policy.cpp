#include <doctest.h>

#include <cmath>

#include "rluf/error.hpp"
#include "rluf/policy.hpp"

using namespace rluf;

namespace {

const World& world() {
  static const World w(default_world_config());
  return w;
}

Policy one_hot(std::size_t target) {
  const std::size_t n = world().library_size();
  std::vector<double> logits(kNumCategories * n, 0.0);
  for (std::size_t c = 0; c < kNumCategories; ++c) logits[c * n + target] = 1000.0;
  return Policy(std::move(logits), n, world().library_hash());
}

}  // namespace

TEST_CASE("uniform policy probabilities") {
  const Policy p = Policy::uniform(world());
  for (double v : p.probabilities(Category::kCoding)) CHECK(v == doctest::Approx(1.0 / 256));
  const auto lp = p.log_probabilities(Category::kCoding);
  CHECK(lp[7] == doctest::Approx(-std::log(256.0)));
}

TEST_CASE("one-hot logits always pick the target") {
  const Policy p = one_hot(17);
  Rng rng(1);
  PromptContext ctx;
  for (int i = 0; i < 1000; ++i) CHECK(sample_response(p, ctx, rng) == 17);
}

TEST_CASE("uniform draws match the multinomial") {
  const Policy p = Policy::uniform(world());
  const PolicySampler s(p);
  Rng rng(2);
  std::vector<int> hits(256, 0);
  const int n = 1'000'000;
  for (int i = 0; i < n; ++i) hits[s.sample(Category::kCasualChat, rng)]++;
  const double q = 1.0 / 256;
  const double se = std::sqrt(n * q * (1 - q));
  int outside = 0;
  for (int h : hits) outside += std::abs(h - n * q) > 3 * se;
  // 3-SE band: about 0.27% of cells fall outside by chance.
  CHECK(outside <= 4);
}

TEST_CASE("KL to base") {
  const Policy base = Policy::uniform(world());
  const auto dist = world().config().prompt_distribution;
  CHECK(kl_to_base(base, base, dist).nats == 0.0);
  std::vector<double> logits(base.all_logits().size());
  Rng rng(4);
  for (double& v : logits) v = rng.normal();
  const Policy p(logits, 256, world().library_hash());
  const double k = kl_to_base(p, base, dist).nats;
  CHECK(k > 0.0);
  for (double& v : logits) v += 3.5;
  const Policy shifted(logits, 256, world().library_hash());
  CHECK(kl_to_base(shifted, base, dist).nats == doctest::Approx(k).epsilon(1e-12));
  const std::vector<double> a{0.5, 0.5}, b{1.0, 0.0};
  CHECK(kl_divergence(a, b).infinite);
  CHECK_FALSE(kl_divergence(b, a).infinite);
  CHECK(kl_divergence(b, a).nats == doctest::Approx(std::log(2.0)));
}

TEST_CASE("policies are bound to their library") {
  const Policy wrong(256, 12345);
  CHECK_THROWS_AS(wrong.check_library(world()), DataError);
  CHECK_NOTHROW(Policy::uniform(world()).check_library(world()));
  CHECK_THROWS(Policy(std::vector<double>(5), 256, 1));
  CHECK_THROWS(Policy(std::vector<double>(2560), 256, 1, 0.0));
}

TEST_CASE("policy JSON round-trip") {
  Policy p = one_hot(3);
  p.set_base_ref(77);
  const Policy back = policy_from_json(to_json(p));
  CHECK(back.all_logits() == p.all_logits());
  CHECK(back.base_ref() == p.base_ref());
  CHECK(back.fingerprint() == p.fingerprint());
  auto bad = to_json(p);
  bad["library_size"] = 3;
  CHECK_THROWS_AS(policy_from_json(bad), DataError);
}

TEST_CASE("expected score is exact") {
  const Policy p = one_hot(9);
  const std::vector<Category> prompts{Category::kCoding, Category::kAiBonding};
  CellScorer f = [](Category c, std::size_t r) { return static_cast<double>(r) + (c == Category::kCoding ? 1 : 0); };
  CHECK(expected_score(p, f, prompts) == doctest::Approx(9.5));
  const Policy u = Policy::uniform(world());
  CHECK(expected_score(u, f, prompts) == doctest::Approx(127.5 + 0.5));
  const auto set = make_prompt_set(world().config().prompt_distribution, 100, 3);
  CHECK(set.size() == 100);
  CHECK(make_prompt_set(world().config().prompt_distribution, 100, 3) == set);
}
