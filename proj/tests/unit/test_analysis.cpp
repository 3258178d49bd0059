#include <doctest.h>

#include <cmath>

#include "rluf/analysis.hpp"
#include "rluf/error.hpp"
#include "rluf/math.hpp"

using namespace rluf;

namespace {

const World& world() {
  static const World w(default_world_config());
  return w;
}

struct Design {
  std::vector<double> x;
  std::vector<std::uint8_t> y;
};

Design logistic_data(std::size_t n, std::uint64_t seed, const std::vector<double>& beta) {
  Rng rng(seed);
  Design d;
  const std::size_t p = beta.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(p, 1.0);
    for (std::size_t j = 1; j < p; ++j) row[j] = rng.normal();
    d.x.insert(d.x.end(), row.begin(), row.end());
    d.y.push_back(rng.bernoulli(sigmoid(dot(row, beta))) ? 1 : 0);
  }
  return d;
}

// Inverse of a small symmetric positive-definite matrix by Gauss-Jordan.
std::vector<double> invert(std::vector<double> a, std::size_t p) {
  std::vector<double> inv(p * p, 0.0);
  for (std::size_t i = 0; i < p; ++i) inv[i * p + i] = 1.0;
  for (std::size_t c = 0; c < p; ++c) {
    const double piv = a[c * p + c];
    for (std::size_t k = 0; k < p; ++k) {
      a[c * p + k] /= piv;
      inv[c * p + k] /= piv;
    }
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const double f = a[r * p + c];
      for (std::size_t k = 0; k < p; ++k) {
        a[r * p + k] -= f * a[c * p + k];
        inv[r * p + k] -= f * inv[c * p + k];
      }
    }
  }
  return inv;
}

}  // namespace

TEST_CASE("IRLS solves the score equations with Fisher standard errors") {
  const std::vector<double> beta{-0.5, 1.0, -0.7};
  const auto d = logistic_data(4000, 1, beta);
  const std::size_t p = 3;
  const auto fit = fit_logistic(d.x, d.y, p, {"a", "b", "c"});
  std::vector<double> score(p, 0.0), info(p * p, 0.0);
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    const std::span<const double> row(d.x.data() + i * p, p);
    const double mu = sigmoid(dot(row, fit.coefficients));
    for (std::size_t j = 0; j < p; ++j) {
      score[j] += row[j] * (d.y[i] - mu);
      for (std::size_t k = 0; k < p; ++k) info[j * p + k] += row[j] * row[k] * mu * (1 - mu);
    }
  }
  for (double s : score) CHECK(std::abs(s) < 1e-6);
  const auto cov = invert(info, p);
  for (std::size_t j = 0; j < p; ++j) {
    CHECK(fit.standard_errors[j] == doctest::Approx(std::sqrt(cov[j * p + j])).epsilon(1e-6));
    CHECK(std::abs(fit.coefficients[j] - beta[j]) < 4 * fit.standard_errors[j]);
  }
  CHECK(fit.odds_ratios()[1] == doctest::Approx(std::exp(fit.coefficients[1])));
  CHECK(fit.iterations < 100);
}

TEST_CASE("IRLS error paths") {
  const auto d = logistic_data(200, 2, {0.0, 1.0});
  std::vector<std::uint8_t> ones(d.y.size(), 1);
  CHECK_THROWS_AS(fit_logistic(d.x, ones, 2, {"a", "b"}), PreconditionError);
  CHECK_THROWS_AS(fit_logistic(d.x, d.y, 2, {"a"}), PreconditionError);

  // Third column duplicates the second.
  std::vector<double> x3;
  for (std::size_t i = 0; i < d.y.size(); ++i) x3.insert(x3.end(), {1.0, d.x[2 * i + 1], d.x[2 * i + 1]});
  try {
    fit_logistic(x3, d.y, 3, {"intercept", "u", "u_copy"});
    FAIL("expected rank deficiency");
  } catch (const PreconditionError& e) {
    CHECK(std::string(e.what()).find("u_copy") != std::string::npos);
  }

  // Perfect separation on the second column.
  std::vector<std::uint8_t> sep(d.y.size());
  for (std::size_t i = 0; i < d.y.size(); ++i) sep[i] = d.x[2 * i + 1] > 0.0;
  CHECK_THROWS_AS(fit_logistic(d.x, sep, 2, {"a", "b"}), NumericalError);
}

TEST_CASE("retention regression recovers planted signs") {
  const auto days = simulate_user_days(world(), Policy::uniform(world()), 30000, 5);
  CHECK(days.size() == 30000);
  const auto fit = fit_retention_regression(days);
  CHECK(fit.names[1] == "love_count");
  CHECK(fit.coefficients[2] > 0.0);
  CHECK(fit.coefficients[3] < 0.0);
  std::vector<UserDaySummary> bad(days.begin(), days.begin() + 20);
  bad[0].love_count = bad[0].prompt_count + 1;
  CHECK_THROWS_AS(fit_retention_regression(bad), DataError);
}

TEST_CASE("Pearson correlation") {
  CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), UndefinedMetricError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{1}), PreconditionError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), PreconditionError);
}

TEST_CASE("backtest with the true love table") {
  std::vector<NamedPolicy> cands;
  for (int k = 0; k < 4; ++k) {
    std::vector<double> logits(kNumCategories * 256, 0.0);
    for (std::size_t c = 0; c < kNumCategories; ++c)
      for (std::size_t r = 0; r < 256; ++r)
        logits[c * 256 + r] = 0.8 * k * world().love_feature_logit(kAllCategories[c], r);
    cands.push_back({"k" + std::to_string(k), Policy(logits, 256, world().library_hash())});
  }
  const auto res = backtest(world(), true_love_table(world()), cands, 2000, 200000, 3);
  REQUIRE(res.r.has_value());
  CHECK(*res.r > 0.95);
  CHECK(res.points.size() == 4);
  CHECK_THROWS_AS(backtest(world(), true_love_table(world()), std::span(cands).first(2), 10, 10, 1),
                  PreconditionError);
  CHECK(backtest_csv(res).find("k3") != std::string::npos);
}

TEST_CASE("hacking reports and ratios") {
  TrafficTally t;
  ResponseFeatures bye;
  bye.contains_bye = true;
  bye.length_tokens = 100;
  bye.tone_positivity = 1.0;
  ResponseFeatures plain;
  plain.followup_question = true;
  plain.length_tokens = 300;
  t.add(Category::kCasualChat, bye, {});
  t.add(Category::kCasualChat, plain, {});
  const auto a = hacking_report(t, "a");
  CHECK(a.bye_rate == 0.5);
  CHECK(a.followup_rate == 0.5);
  CHECK(a.mean_length == 200.0);
  TrafficTally u;
  u.add(Category::kCasualChat, plain, {});
  const auto b = hacking_report(u, "b");
  const std::vector<HackingReport> reports{b, a};
  const auto deltas = compare_hacking(reports, "b");
  CHECK_FALSE(deltas[1].bye_ratio.has_value());
  CHECK(*deltas[1].followup_ratio == 0.5);
  CHECK_THROWS_AS(hacking_report(std::span<const ConversationTurn>(), "x"), PreconditionError);
}
