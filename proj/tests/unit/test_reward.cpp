#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rluf/error.hpp"
#include "rluf/kernels.hpp"
#include "rluf/reward.hpp"

using namespace rluf;

namespace {

const World& world() {
  static const World w(default_world_config());
  return w;
}

LabeledDataset separable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  LabeledDataset d;
  d.dim = 3;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
    d.push_back(x, 2.0 * x[0] - x[1] + 0.3 * rng.normal() > 0.0);
  }
  d.refresh_positive_fraction();
  return d;
}

}  // namespace

TEST_CASE("zero model scores 0 and predicts 0.5") {
  const auto m = RewardModel::zeros(Architecture::kMlp, 4);
  const std::vector<double> x{1, 2, 3, 4};
  CHECK(m.score(x) == 0.0);
  CHECK(m.p_love(x) == 0.5);
  const std::vector<double> short_x{1, 2};
  CHECK_THROWS_AS(m.score(short_x), PreconditionError);
}

TEST_CASE("BCE training separates a separable toy set") {
  const auto d = separable(2000, 1);
  TrainConfig tc{Architecture::kLinear, 16, 3, 800, 128, 0.2};
  const auto m = train_bce(d, tc);
  CHECK(m.training_meta().final_loss < m.training_meta().initial_loss);
  std::vector<double> s(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) s[i] = m.score(d.row(i));
  CHECK(auroc(s, d.labels) > 0.97);
  CHECK(train_bce(d, tc).parameters() == m.parameters());
  LabeledDataset empty;
  empty.dim = 3;
  CHECK_THROWS_AS(train_bce(empty, tc), PreconditionError);
}

TEST_CASE("BT training recovers the utility ordering") {
  const auto pairs = make_preference_pairs(world(), 3000, Task::kHelpfulness, 4);
  TrainConfig tc{Architecture::kLinear, 16, 1, 1500, 256, 0.05};
  const auto m = train_bt(pairs, tc);
  CHECK(m.loss_kind() == LossKind::kBradleyTerry);
  double hits = 0;
  for (const auto& p : pairs) hits += m.score(p.input_preferred) > m.score(p.input_rejected);
  CHECK(hits / pairs.size() > 0.6);
  CHECK_THROWS_AS(train_bt(std::span<const PreferencePair>(), tc), PreconditionError);
  CHECK_THROWS_AS(make_preference_pairs(world(), 10, Task::kLove, 1), PreconditionError);
}

TEST_CASE("safety pairs only use safety prompts") {
  for (const auto& p : make_preference_pairs(world(), 500, Task::kSafety, 2))
    CHECK((p.category == Category::kAdversarialSafety || p.category == Category::kBenignSensitive));
}

TEST_CASE("AUROC examples and errors") {
  const std::vector<std::uint8_t> y{1, 1, 0, 0};
  CHECK(auroc(std::vector<double>{4, 3, 2, 1}, y) == 1.0);
  CHECK(auroc(std::vector<double>{1, 2, 3, 4}, y) == 0.0);
  CHECK(auroc(std::vector<double>{1, 1, 1, 1}, y) == 0.5);
  CHECK_THROWS_AS(auroc(std::vector<double>{1, 2}, std::vector<std::uint8_t>{1, 1}), UndefinedMetricError);
  CHECK_THROWS_AS(auroc(std::vector<double>{1}, y), PreconditionError);
}

TEST_CASE("calibration bins partition the predictions") {
  const std::vector<double> p{0.05, 0.15, 0.95, 1.0, 0.0};
  const std::vector<std::uint8_t> y{0, 1, 1, 1, 0};
  const auto bins = calibration_bins(p, y);
  CHECK(bins.size() == 10);
  std::size_t total = 0;
  for (const auto& b : bins) total += b.count;
  CHECK(total == 5);
  CHECK(bins[9].count == 2);
  CHECK(bins[9].empirical_rate == 1.0);
  CHECK(bins[0].count == 2);
}

TEST_CASE("evaluation on a held-out set") {
  const auto d = separable(500, 2);
  TrainConfig tc{Architecture::kMlp, 8, 3, 300, 64, 0.1};
  const auto m = train_bce(d, tc);
  std::vector<double> lengths(d.size());
  std::iota(lengths.begin(), lengths.end(), 0.0);
  const auto r = evaluate(m, d, lengths);
  CHECK(r.n == d.size());
  CHECK(r.positives == d.positives());
  CHECK(r.auroc > 0.9);
  CHECK(std::abs(r.length_correlation) < 0.2);
  CHECK_THROWS_AS(evaluate(m, d, std::span<const double>(lengths).first(3)), PreconditionError);
}

TEST_CASE("reward model JSON round-trip") {
  const auto m = RewardModel::initialized(Architecture::kMlp, 5, 4, 11);
  const auto back = reward_model_from_json(to_json(m));
  const std::vector<double> x{0.1, -0.2, 0.3, 0.4, 0.5};
  CHECK(back.score(x) == doctest::Approx(m.score(x)).epsilon(1e-8));
  auto bad = to_json(m);
  bad["architecture"] = "transformer";
  CHECK_THROWS_AS(reward_model_from_json(bad), DataError);
  auto bad2 = to_json(m);
  bad2["parameters"] = nlohmann::json::array({1.0});
  CHECK_THROWS_AS(reward_model_from_json(bad2), DataError);
}

TEST_CASE("linear weights map back to the raw input scale") {
  auto m = RewardModel::initialized(Architecture::kLinear, 3, 0, 5);
  m.set_normalization({1.0, -2.0, 0.5}, {2.0, 0.5, 3.0});
  const auto [w, b] = m.raw_linear_weights();
  const std::vector<double> x{0.3, 1.1, -0.7};
  CHECK(w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + b == doctest::Approx(m.score(x)));
}

TEST_CASE("serial and OpenMP gradients are bitwise identical") {
  const auto d = separable(1000, 7);
  const auto pairs = make_preference_pairs(world(), 700, Task::kHelpfulness, 8);
  std::vector<std::size_t> rows(d.size()), prow(pairs.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::iota(prow.begin(), prow.end(), 0);
  for (Architecture arch : {Architecture::kLinear, Architecture::kMlp}) {
    const auto m = RewardModel::initialized(arch, 3, 8, 2);
    const auto mp = RewardModel::initialized(arch, pairs[0].input_preferred.size(), 8, 2);
    std::vector<double> g1, g2, h1, h2;
    kernels::set_thread_count(4);
    const double l1 = kernels::serial::bce_loss_grad(m, d, rows, g1);
    const double l2 = kernels::omp::bce_loss_grad(m, d, rows, g2);
    const double k1 = kernels::serial::bt_loss_grad(mp, pairs, prow, h1);
    const double k2 = kernels::omp::bt_loss_grad(mp, pairs, prow, h2);
    kernels::set_thread_count(0);
    CHECK(l1 == l2);
    CHECK(g1 == g2);
    CHECK(k1 == k2);
    CHECK(h1 == h2);
    CHECK(kernels::serial::score_table(mp, world()) == kernels::omp::score_table(mp, world()));
  }
}
