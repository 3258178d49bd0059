#include <doctest.h>

#include <cmath>
#include <set>

#include "rluf/bench.hpp"
#include "rluf/error.hpp"

using namespace rluf;

namespace {

const World& world() {
  static const World w(default_world_config());
  return w;
}

PreferencePair pair_of(double pref, double rej, std::uint64_t id = 0) {
  return {{pref}, {rej}, id};
}

}  // namespace

TEST_CASE("unpairing keeps one side per pair") {
  const auto pairs = make_preference_pairs(world(), 10000, Task::kHelpfulness, 1);
  std::vector<std::uint64_t> ids;
  const auto d = make_unpaired_from_paired(pairs, 2, &ids);
  CHECK(d.size() == pairs.size());
  const double frac = static_cast<double>(d.positives()) / d.size();
  CHECK(std::abs(frac - 0.5) < 3 * std::sqrt(0.25 / d.size()));
  CHECK(std::set<std::uint64_t>(ids.begin(), ids.end()).size() == ids.size());
  for (std::size_t i = 0; i < 200; ++i) {
    const auto& p = pairs[i];
    const auto row = d.row(i);
    const auto& side = d.labels[i] ? p.input_preferred : p.input_rejected;
    CHECK(std::equal(row.begin(), row.end(), side.begin()));
  }
  const auto one = make_unpaired_from_paired(std::span(pairs).first(1), 3);
  CHECK(one.size() == 1);
  CHECK_THROWS_AS(make_unpaired_from_paired(std::span<const PreferencePair>(), 1), PreconditionError);
}

TEST_CASE("paired BCE keeps both sides") {
  const auto pairs = make_preference_pairs(world(), 100, Task::kHelpfulness, 1);
  const auto d = make_paired_bce_dataset(pairs);
  CHECK(d.size() == 200);
  CHECK(d.positives() == 100);
}

TEST_CASE("preference accuracy examples") {
  const std::vector<PreferencePair> ps{pair_of(1.0, 0.2), pair_of(0.1, 0.4)};
  auto ident = [](std::span<const double> x) { return x[0]; };
  CHECK(preference_accuracy(ident, ps) == 0.5);
  auto constant = [](std::span<const double>) { return 3.0; };
  CHECK(preference_accuracy(constant, ps) == 0.5);
  CHECK_THROWS_AS(preference_accuracy(ident, std::span<const PreferencePair>()), PreconditionError);
}

TEST_CASE("ground-truth scorer reaches the Bayes rate") {
  const auto pairs = make_preference_pairs(world(), 20000, Task::kHelpfulness, 9);
  const auto& cfg = world().config();
  double bayes = 0.0;
  double hits = 0.0;
  for (const auto& p : pairs) {
    const double ua = helpfulness_utility(cfg, world().response(p.preferred_response).features);
    const double ub = helpfulness_utility(cfg, world().response(p.rejected_response).features);
    bayes += std::max(preference_probability(ua, ub), preference_probability(ub, ua));
    hits += ua > ub ? 1.0 : (ua == ub ? 0.5 : 0.0);
  }
  bayes /= pairs.size();
  hits /= pairs.size();
  CHECK(hits >= 0.5);
  CHECK(std::abs(hits - bayes) < 4 * std::sqrt(0.25 / pairs.size()));
}

TEST_CASE("bench configuration checks") {
  BenchConfig c;
  CHECK_NOTHROW(c.validate());
  c.sample_sizes = {1000, 1000};
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  c = BenchConfig{};
  c.seeds.clear();
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  CHECK(parse_bench_arm("paired_bt") == BenchArm::kPairedBt);
  CHECK_THROWS_AS(parse_bench_arm("paired_mse"), DataError);
}

TEST_CASE("small bench run") {
  BenchConfig c;
  c.sample_sizes = {300, 1000};
  c.seeds = {1, 2};
  c.n_eval_pairs = 1000;
  c.train.steps = 300;
  const auto r = run_bench(world(), c, 4);
  CHECK(r.cells.size() == 2 * 2 * 3);
  CHECK(r.summary.size() == 2 * 3);
  for (const auto& cell : r.cells)
    if (cell.sample_size >= 1000) CHECK(cell.accuracy > 0.5);
  const auto j = bench_summary_json(r, c);
  CHECK(j.at("gaps").size() == 2);
  CHECK(bench_table_csv(r).rfind("arm,sample_size,seed,accuracy", 0) == 0);
  CHECK_THROWS_AS(r.mean(BenchArm::kPairedBt, 5), PreconditionError);
}

TEST_CASE("pair CSV round-trip and errors") {
  const auto pairs = make_preference_pairs(world(), 20, Task::kHelpfulness, 1);
  const auto back = parse_pairs_csv(pairs_csv(pairs));
  REQUIRE(back.size() == 20);
  CHECK(back[3].input_preferred == pairs[3].input_preferred);
  CHECK(back[3].context_id == pairs[3].context_id);
  try {
    parse_pairs_csv("context_id,preferred_0,rejected_0\n1,0.5,0.2\n2,0.5\n");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_pairs_csv(""), DataError);
  CHECK_THROWS_AS(parse_pairs_csv("id,a\n"), DataError);
  CHECK_THROWS_AS(parse_pairs_csv("context_id,preferred_0,rejected_0\n1,abc,0.2\n"), DataError);
  const auto source = pool_pair_source(pairs);
  CHECK(source(5, 1).size() == 5);
  CHECK_THROWS_AS(source(50, 1), DataError);
}
