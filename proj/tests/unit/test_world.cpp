#include <doctest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "rluf/error.hpp"
#include "rluf/math.hpp"
#include "rluf/rng.hpp"
#include "rluf/world.hpp"

using namespace rluf;
using Big = boost::multiprecision::cpp_bin_float_50;

TEST_CASE("sigmoid agrees with a 50-digit oracle") {
  for (double x : {-745.0, -40.0, -7.5, -1.0, -1e-9, 0.0, 1e-9, 0.3, 2.0, 19.0, 40.0, 700.0}) {
    const Big oracle = Big(1) / (Big(1) + exp(-Big(x)));
    const double ref = oracle.convert_to<double>();
    if (ref == 0.0) {
      CHECK(sigmoid(x) < 1e-300);
    } else {
      CHECK(std::abs(sigmoid(x) - ref) / ref < 1e-15);
    }
  }
  CHECK(softplus(800.0) == doctest::Approx(800.0));
  CHECK(softplus(-800.0) >= 0.0);
}

TEST_CASE("derived seeds are deterministic and label-sensitive") {
  CHECK(derive_seed(1, "a", 0) == derive_seed(1, "a", 0));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "b", 0));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
  CHECK(derive_seed(1, "a", 0) != derive_seed(2, "a", 0));
  Rng r(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(r.below(3) < 3);
  }
}

TEST_CASE("category names round-trip and unknown names are rejected") {
  for (Category c : kAllCategories) CHECK(parse_category(category_name(c)) == c);
  CHECK_THROWS_AS(parse_category("smalltalk"), DataError);
  CHECK(is_emotional(Category::kAiBonding));
  CHECK_FALSE(is_emotional(Category::kCoding));
}

TEST_CASE("default world is calibrated to the target love rate") {
  const WorldConfig& c = default_world_config();
  const double rate = base_policy_love_rate(c, c.love_intercept);
  CHECK(std::abs(rate - 0.001) <= 0.00002);
  for (const auto& w : c.love_weights) CHECK(w[1] == doctest::Approx(std::numbers::ln2));
  CHECK(base_policy_signal_rate(c, c.thumbs_up, c.thumbs_up.intercept) == doctest::Approx(0.005).epsilon(1e-6));
  CHECK(base_policy_signal_rate(c, c.thumbs_down, c.thumbs_down.intercept) == doctest::Approx(0.003).epsilon(1e-6));
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("bye doubles love odds at small base rates") {
  const WorldConfig& c = default_world_config();
  ResponseFeatures f = c.response_library.front().features;
  f.contains_bye = false;
  ResponseFeatures g = f;
  g.contains_bye = true;
  const UserProfile u{};
  const PromptContext ctx{};
  CHECK(love_probability(c, u, ctx, g) / love_probability(c, u, ctx, f) == doctest::Approx(2.0).epsilon(0.01));
}

TEST_CASE("response library respects feature invariants") {
  const auto lib = generate_response_library(5, 4);
  CHECK(lib.size() == 256);
  std::map<std::string, int> counts;
  for (std::size_t i = 0; i < lib.size(); ++i) {
    CHECK(lib[i].response_id == i);
    CHECK_NOTHROW(lib[i].features.validate());
    if (lib[i].features.is_refusal) CHECK(lib[i].features.helpfulness_content == 0.0);
    counts[lib[i].archetype]++;
  }
  CHECK(counts.size() == 7);
  CHECK(counts["cheerful_closer"] == 24);
  CHECK(generate_response_library(5, 4) == lib);
  CHECK_THROWS_AS(generate_response_library(5, 4, 3), PreconditionError);
}

TEST_CASE("feature validation rejects out-of-range fields") {
  ResponseFeatures f;
  f.nuisance = {0, 0, 0, 0};
  CHECK_NOTHROW(f.validate());
  f.tone_positivity = 1.5;
  CHECK_THROWS_AS(f.validate(), PreconditionError);
  f.tone_positivity = 0.5;
  f.is_refusal = true;
  f.helpfulness_content = 0.2;
  CHECK_THROWS_AS(f.validate(), PreconditionError);
  f.is_refusal = false;
  f.length_tokens = 0;
  CHECK_THROWS_AS(f.validate(), PreconditionError);
  f.length_tokens = 5;
  std::vector<double> out(3);
  CHECK_THROWS_AS(f.encode(out), PreconditionError);
}

TEST_CASE("world JSON round-trips and rejects bad documents") {
  const WorldConfig& c = default_world_config();
  const auto j = to_json(c);
  const WorldConfig back = world_config_from_json(j);
  CHECK(library_hash(back.response_library) == library_hash(c.response_library));
  CHECK(back.love_intercept == doctest::Approx(c.love_intercept));
  auto bad = j;
  bad["schema_version"] = 99;
  CHECK_THROWS_AS(world_config_from_json(bad), DataError);
  auto bad2 = j;
  bad2["prompt_distribution"] = nlohmann::json::array({1, 2});
  CHECK_THROWS_AS(world_config_from_json(bad2), DataError);
  CHECK_THROWS_AS(world_config_from_json(nlohmann::json::array()), DataError);
}

TEST_CASE("table-driven feedback matches the direct model") {
  const World w(default_world_config());
  for (std::uint64_t k = 0; k < 200; ++k) {
    const Category c = kAllCategories[k % kNumCategories];
    const std::size_t r = (k * 37) % w.library_size();
    const UserProfile& u = w.user(k);
    Rng a(k), b(k);
    PromptContext ctx;
    ctx.category = c;
    CHECK(w.sample_feedback(c, r, u, a) == sample_feedback(w.config(), u, ctx, w.response(r).features, b));
    CHECK(w.love_probability(c, r, u) ==
          doctest::Approx(love_probability(w.config(), u, ctx, w.response(r).features)).epsilon(1e-12));
  }
}

TEST_CASE("users are deterministic with the configured affect spread") {
  const WorldConfig& c = default_world_config();
  CHECK(make_user(c, 5).affect_bias == make_user(c, 5).affect_bias);
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double a = make_user(c, i).affect_bias;
    s += a;
    s2 += a * a;
  }
  const double mean = s / n;
  CHECK(std::abs(mean) < 3 * c.user_affect_sd / std::sqrt(n));
  CHECK(std::sqrt(s2 / n - mean * mean) == doctest::Approx(c.user_affect_sd).epsilon(0.03));
}

TEST_CASE("retention rejects inconsistent user-days") {
  const WorldConfig& c = default_world_config();
  Rng rng(1);
  UserDaySummary s;
  s.prompt_count = 0;
  CHECK_THROWS_AS(simulate_retention(c, s, rng), PreconditionError);
  s.prompt_count = 2;
  s.love_count = 3;
  CHECK_THROWS_AS(simulate_retention(c, s, rng), PreconditionError);
  s.love_count = 1;
  CHECK_NOTHROW(simulate_retention(c, s, rng));
  UserDaySummary more = s;
  more.love_count = 2;
  CHECK(retention_probability(c, more) > retention_probability(c, s));
}

TEST_CASE("category sampling follows the distribution") {
  const World w(default_world_config());
  Rng rng(3);
  std::array<int, kNumCategories> hits{};
  const int n = 200000;
  for (int i = 0; i < n; ++i) hits[index_of(w.sample_category(rng))]++;
  const auto p = normalized(w.config().prompt_distribution);
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    const double se = std::sqrt(p[c] * (1 - p[c]) / n);
    CHECK(std::abs(hits[c] / double(n) - p[c]) < 4 * se);
  }
  CategoryWeights zero{};
  CHECK_THROWS(normalized(zero));
}
