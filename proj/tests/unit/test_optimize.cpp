#include <doctest.h>

#include <cmath>

#include "rluf/error.hpp"
#include "rluf/optimize.hpp"

using namespace rluf;

namespace {

const World& world() {
  static const World w(default_world_config());
  return w;
}

Policy one_hot_world(std::size_t target) {
  const std::size_t n = world().library_size();
  std::vector<double> logits(kNumCategories * n, 0.0);
  for (std::size_t c = 0; c < kNumCategories; ++c) logits[c * n + target] = 1000.0;
  return Policy(std::move(logits), n, world().library_hash());
}

// Two-response library; response 1 scores higher everywhere.
TaskBinding toy_binding(Task task = Task::kHelpfulness) {
  TaskBinding b;
  b.task = task;
  b.prompt_set[index_of(Category::kCoding)] = 1.0;
  b.score_table.assign(kNumCategories * 2, 0.0);
  for (std::size_t c = 0; c < kNumCategories; ++c) b.score_table[c * 2 + 1] = 1.0;
  return b;
}

TaskBinding linear_binding(Task task) {
  TaskBinding b;
  b.task = task;
  b.prompt_set = default_task_prompt_distribution(task, world().config());
  b.score_table.resize(kNumCategories * world().library_size());
  for (std::size_t i = 0; i < b.score_table.size(); ++i) b.score_table[i] = std::sin(0.37 * i);
  return b;
}

}  // namespace

TEST_CASE("best-of-N selection") {
  CHECK(best_of_n_select(std::vector<double>{0.3}) == 0);
  CHECK(best_of_n_select(std::vector<double>{0.2, 0.9, 0.9, 0.1}) == 1);
  CHECK_THROWS_AS(best_of_n_select(std::vector<double>{}), PreconditionError);
}

TEST_CASE("one step raises the probability of the preferred response") {
  const Policy base(2, 42);
  CandidateSpec spec;
  Rng rng(5);
  const auto res = optimization_step(base, base, toy_binding(), spec, rng);
  CHECK(res.policy.probabilities(Category::kCoding)[1] > 0.5);
  // Untouched categories stay put.
  CHECK(res.policy.probabilities(Category::kAiBonding)[1] == doctest::Approx(0.5));
  CHECK(res.record.update_norm > 0.0);
  CHECK(std::isfinite(res.record.loss));
}

TEST_CASE("KL term has no gradient at the base policy") {
  const Policy base(2, 42);
  CandidateSpec a, b;
  a.kl_coefficient = 0.0;
  b.kl_coefficient = 1e6;
  Rng r1(9), r2(9);
  const auto x = optimization_step(base, base, toy_binding(), a, r1);
  const auto y = optimization_step(base, base, toy_binding(), b, r2);
  CHECK(x.policy.all_logits() == y.policy.all_logits());
  CHECK(x.record.update_norm == y.record.update_norm);
}

TEST_CASE("optimization steps are deterministic given the stream") {
  const Policy base(2, 42);
  CandidateSpec spec;
  Rng r1(3), r2(3);
  CHECK(optimization_step(base, base, toy_binding(), spec, r1).policy.all_logits() ==
        optimization_step(base, base, toy_binding(), spec, r2).policy.all_logits());
  TaskBinding bad = toy_binding();
  bad.score_table.pop_back();
  CHECK_THROWS_AS(optimization_step(base, base, bad, spec, r1), PreconditionError);
}

TEST_CASE("task choice follows normalized weights") {
  const TaskWeights w{0.7, 0.3, 0.3};
  CHECK(choose_task(w, 0.0) == Task::kHelpfulness);
  CHECK(choose_task(w, 0.7 / 1.3 - 1e-9) == Task::kHelpfulness);
  CHECK(choose_task(w, 0.7 / 1.3 + 1e-9) == Task::kSafety);
  CHECK(choose_task(w, 0.99999) == Task::kLove);
  const TaskWeights scaled{7, 3, 3};
  for (double u = 0.0; u < 1.0; u += 0.01) CHECK(choose_task(w, u) == choose_task(scaled, u));
  CHECK_THROWS_AS(choose_task(TaskWeights{}, 0.5), PreconditionError);
}

TEST_CASE("presets and spec validation") {
  CHECK(preset("baseline").weights.love == 0.0);
  CHECK(preset("moderate").weights.love == 0.1);
  CHECK(preset("aggressive").weights.love == 0.3);
  CHECK(preset("aggressive").weights.helpfulness == 0.7);
  CHECK(preset("aggressive").n_best_of == 4);
  CHECK_THROWS_AS(preset("reckless"), DataError);
  CandidateSpec s;
  s.weights = {0, 0, 0};
  CHECK_THROWS_AS(s.validate(), PreconditionError);
  s = CandidateSpec{};
  s.weights.safety = -1;
  CHECK_THROWS_AS(s.validate(), PreconditionError);
  s = CandidateSpec{};
  s.batch_size = 0;
  CHECK_THROWS_AS(s.validate(), PreconditionError);
  const auto back = candidate_spec_from_json(to_json(preset("moderate", 4)));
  CHECK(back.weights.love == 0.1);
  CHECK(back.seed == 4);
}

TEST_CASE("single-task runs only touch that task") {
  CandidateSpec spec;
  spec.weights = {1, 0, 0};
  spec.steps = 50;
  const std::vector<TaskBinding> b{linear_binding(Task::kHelpfulness)};
  const auto res = run_optimization(world(), b, spec);
  CHECK(res.trace.size() == 50);
  for (const auto& r : res.trace) CHECK(r.task == Task::kHelpfulness);
  spec.weights = {1, 0, 0.5};
  CHECK_THROWS_AS(run_optimization(world(), b, spec), PreconditionError);
  const auto csv = trace_csv(res.trace);
  CHECK(csv.rfind("step,task,mean_selected_reward,kl,update_norm", 0) == 0);
}

TEST_CASE("large KL coefficient keeps the policy near base") {
  CandidateSpec spec;
  spec.weights = {0.7, 0.3, 0.3};
  spec.kl_coefficient = 1000.0;
  spec.steps = 3000;
  const std::vector<TaskBinding> b{linear_binding(Task::kHelpfulness), linear_binding(Task::kSafety),
                                   linear_binding(Task::kLove)};
  const auto res = run_optimization(world(), b, spec);
  CHECK(kl_to_base(res.policy, Policy::uniform(world()), world().config().prompt_distribution).nats < 0.05);
}

TEST_CASE("safety evaluation extremes") {
  std::size_t refusal = 0, risky = 0;
  double max_risk = -1.0;
  for (std::size_t r = 0; r < world().library_size(); ++r) {
    const auto& f = world().response(r).features;
    if (f.is_refusal) refusal = r;
    if (!f.is_refusal && f.safety_risk > max_risk) {
      max_risk = f.safety_risk;
      risky = r;
    }
  }
  const auto a = safety_eval(world(), one_hot_world(refusal), 1000, 1);
  CHECK(a.svr == 0.0);
  CHECK(a.frr == 1.0);
  const auto b = safety_eval(world(), one_hot_world(risky), 1000, 1);
  CHECK(b.svr == 1.0);
  CHECK(b.frr == 0.0);
  CHECK(a.n_adversarial + a.n_benign == 1000);
  CHECK_THROWS_AS(safety_eval(world(), one_hot_world(risky), 1, 1), PreconditionError);
  const auto u = safety_eval(world(), Policy::uniform(world()), 4000, 2);
  CHECK((u.svr > 0.0 && u.svr < 1.0 && u.frr > 0.0 && u.frr < 1.0));
}

TEST_CASE("bye mass of simple policies") {
  std::size_t bye = 0;
  while (!world().response(bye).features.contains_bye) ++bye;
  CHECK(bye_mass(world(), one_hot_world(bye), world().config().prompt_distribution) == doctest::Approx(1.0));
  CHECK(bye_mass(world(), Policy::uniform(world()), world().config().prompt_distribution) ==
        doctest::Approx(24.0 / 256));
}
