#include "rluf/optimize.hpp"

#include <cmath>
#include <sstream>

#include "rluf/error.hpp"
#include "rluf/format.hpp"
#include "rluf/kernels.hpp"

namespace rluf {

double TaskWeights::operator[](Task t) const {
  switch (t) {
    case Task::kHelpfulness:
      return helpfulness;
    case Task::kSafety:
      return safety;
    case Task::kLove:
      return love;
  }
  return 0.0;
}

void CandidateSpec::validate() const {
  for (double w : {weights.helpfulness, weights.safety, weights.love})
    require(w >= 0.0 && std::isfinite(w), "candidate weights must be finite and non-negative");
  require(weights.sum() > 0.0, "candidate weights must not all be zero");
  require(n_best_of >= 1, "n_best_of must be positive");
  require(steps >= 1, "steps must be positive");
  require(batch_size >= 1, "batch_size must be positive");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  require(kl_coefficient >= 0.0 && std::isfinite(kl_coefficient), "kl_coefficient must be non-negative");
}

bool is_preset_name(std::string_view name) {
  for (auto p : kPresetNames)
    if (p == name) return true;
  return false;
}

CandidateSpec preset(std::string_view name, std::uint64_t seed) {
  CandidateSpec s;
  s.name = std::string(name);
  s.seed = seed;
  if (name == "baseline") {
    s.weights = {0.7, 0.3, 0.0};
  } else if (name == "moderate") {
    s.weights = {0.7, 0.3, 0.1};
  } else if (name == "aggressive") {
    s.weights = {0.7, 0.3, 0.3};
  } else {
    throw DataError("unknown preset '" + std::string(name) + "'");
  }
  return s;
}

TaskBinding bind_task(const World& world, Task task, const RewardModel& model,
                      std::optional<CategoryWeights> prompt_set) {
  TaskBinding b;
  b.task = task;
  b.model_hash = json_hash(to_json(model));
  b.prompt_set = normalized(prompt_set ? *prompt_set : default_task_prompt_distribution(task, world.config()));
  b.score_table = kernels::omp::score_table(model, world);
  return b;
}

std::size_t best_of_n_select(std::span<const double> scores) {
  require(!scores.empty(), "best_of_n_select: empty score list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

StepResult optimization_step(const Policy& policy, const Policy& base, const TaskBinding& binding,
                             const CandidateSpec& spec, Rng& rng, const CategoryWeights* kl_distribution) {
  const std::size_t n = policy.library_size();
  require(binding.score_table.size() == kNumCategories * n, "task binding does not match the policy library");
  const double temp = policy.temperature();
  const PolicySampler sampler(policy);

  std::vector<double> grad(kNumCategories * n, 0.0);
  std::vector<double> scores(spec.n_best_of);
  std::vector<std::size_t> drawn(spec.n_best_of);
  std::array<std::size_t, kNumCategories> rows_used{};
  double reward_sum = 0.0;
  double ce_sum = 0.0;

  for (std::size_t b = 0; b < spec.batch_size; ++b) {
    const Category c = sample_category(rng, binding.prompt_set);
    for (std::size_t k = 0; k < spec.n_best_of; ++k) {
      drawn[k] = sampler.sample(c, rng);
      scores[k] = binding.score(c, drawn[k], n);
    }
    const std::size_t pick = best_of_n_select(scores);
    const std::size_t sel = drawn[pick];
    reward_sum += scores[pick];
    ++rows_used[index_of(c)];
    const auto p = sampler.probabilities(c);
    ce_sum -= std::log(p[sel]);
    double* g = grad.data() + index_of(c) * n;
    for (std::size_t r = 0; r < n; ++r) g[r] += p[r] / temp;
    g[sel] -= 1.0 / temp;
  }

  const double inv_batch = 1.0 / static_cast<double>(spec.batch_size);
  double kl_batch = 0.0;
  if (spec.kl_coefficient > 0.0) {
    for (Category c : kAllCategories) {
      const std::size_t cnt = rows_used[index_of(c)];
      if (cnt == 0) continue;
      const auto p = sampler.probabilities(c);
      const auto lp = policy.log_probabilities(c);
      const auto lq = base.log_probabilities(c);
      double kl = 0.0;
      for (std::size_t r = 0; r < n; ++r) kl += p[r] * (lp[r] - lq[r]);
      kl_batch += static_cast<double>(cnt) * kl;
      const double coef = spec.kl_coefficient * static_cast<double>(cnt) / temp;
      double* g = grad.data() + index_of(c) * n;
      for (std::size_t r = 0; r < n; ++r) g[r] += coef * p[r] * (lp[r] - lq[r] - kl);
    }
  }

  StepRecord rec;
  rec.loss = (ce_sum + spec.kl_coefficient * kl_batch) * inv_batch;
  if (!std::isfinite(rec.loss))
    throw NumericalError("non-finite optimization loss (task " + std::string(task_name(binding.task)) +
                         ", ce " + format_sig(ce_sum * inv_batch, 6) + ", kl " + format_sig(kl_batch * inv_batch, 6) +
                         ")");

  std::vector<double> logits = policy.all_logits();
  double norm2 = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double delta = spec.learning_rate * grad[i] * inv_batch;
    logits[i] -= delta;
    norm2 += delta * delta;
  }
  Policy next(std::move(logits), n, policy.library_hash(), temp);
  if (policy.base_ref()) next.set_base_ref(*policy.base_ref());

  rec.task = binding.task;
  rec.mean_selected_reward = reward_sum * inv_batch;
  rec.update_norm = std::sqrt(norm2);
  const KlResult kl = kl_to_base(next, base, kl_distribution ? *kl_distribution : binding.prompt_set);
  rec.kl = kl.nats;
  return {std::move(next), rec};
}

Task choose_task(const TaskWeights& weights, double u) {
  const double total = weights.sum();
  require(total > 0.0, "choose_task: all weights zero");
  double acc = 0.0;
  Task last = Task::kHelpfulness;
  for (Task t : {Task::kHelpfulness, Task::kSafety, Task::kLove}) {
    const double w = weights[t];
    if (w <= 0.0) continue;
    acc += w / total;
    last = t;
    if (u < acc) return t;
  }
  return last;
}

OptimizationResult run_optimization(const World& world, std::span<const TaskBinding> bindings,
                                    const CandidateSpec& spec) {
  spec.validate();
  std::array<const TaskBinding*, kNumTasks> by_task{};
  for (const auto& b : bindings) by_task[static_cast<std::size_t>(b.task)] = &b;
  for (Task t : {Task::kHelpfulness, Task::kSafety, Task::kLove}) {
    if (spec.weights[t] > 0.0 && by_task[static_cast<std::size_t>(t)] == nullptr)
      throw PreconditionError("no reward model bound for task '" + std::string(task_name(t)) + "'");
  }

  const Policy base = Policy::uniform(world);
  Policy policy = base;
  policy.set_base_ref(base.fingerprint());
  const CategoryWeights production = normalized(world.config().prompt_distribution);

  OptimizationResult out{policy, {}};
  out.trace.reserve(spec.steps);
  for (std::size_t step = 0; step < spec.steps; ++step) {
    Rng rng(derive_seed(spec.seed, "optimize_step", step));
    const Task task = choose_task(spec.weights, rng.uniform());
    try {
      auto res = optimization_step(out.policy, base, *by_task[static_cast<std::size_t>(task)], spec, rng,
                                   &production);
      res.record.step = step;
      out.policy = std::move(res.policy);
      out.trace.push_back(res.record);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step));
    }
  }
  return out;
}

SafetyEval safety_eval(const World& world, const Policy& policy, std::uint64_t n_prompts, std::uint64_t seed) {
  policy.check_library(world);
  require(n_prompts >= 2, "safety_eval needs at least two prompts");
  const PolicySampler sampler(policy);
  Rng rng(derive_seed(seed, "safety_eval"));
  SafetyEval out;
  out.n_adversarial = (n_prompts + 1) / 2;
  out.n_benign = n_prompts / 2;
  std::uint64_t violations = 0;
  std::uint64_t refusals = 0;
  for (std::uint64_t i = 0; i < out.n_adversarial; ++i) {
    const auto& f = world.response(sampler.sample(Category::kAdversarialSafety, rng)).features;
    if (f.safety_risk > world.config().violation_threshold) ++violations;
  }
  for (std::uint64_t i = 0; i < out.n_benign; ++i) {
    const auto& f = world.response(sampler.sample(Category::kBenignSensitive, rng)).features;
    if (f.is_refusal) ++refusals;
  }
  out.svr = static_cast<double>(violations) / static_cast<double>(out.n_adversarial);
  out.frr = static_cast<double>(refusals) / static_cast<double>(out.n_benign);
  return out;
}

double bye_mass(const World& world, const Policy& policy, const CategoryWeights& distribution) {
  const auto dist = normalized(distribution);
  double total = 0.0;
  for (Category c : kAllCategories) {
    if (dist[index_of(c)] == 0.0) continue;
    const auto p = policy.probabilities(c);
    double m = 0.0;
    for (std::size_t r = 0; r < p.size(); ++r)
      if (world.response(r).features.contains_bye) m += p[r];
    total += dist[index_of(c)] * m;
  }
  return total;
}

std::string trace_csv(const TrainingTrace& trace) {
  std::ostringstream os;
  os << "step,task,mean_selected_reward,kl,update_norm\n";
  for (const auto& r : trace) {
    os << r.step << ',' << task_name(r.task) << ',' << format_sig(r.mean_selected_reward, 9) << ','
       << format_sig(r.kl, 9) << ',' << format_sig(r.update_norm, 9) << '\n';
  }
  return os.str();
}

nlohmann::json to_json(const CandidateSpec& s) {
  return {{"name", s.name},
          {"weights", {{"helpfulness", s.weights.helpfulness}, {"safety", s.weights.safety}, {"love", s.weights.love}}},
          {"n_best_of", s.n_best_of},
          {"kl_coefficient", s.kl_coefficient},
          {"steps", s.steps},
          {"batch_size", s.batch_size},
          {"learning_rate", s.learning_rate},
          {"seed", s.seed}};
}

CandidateSpec candidate_spec_from_json(const nlohmann::json& j) {
  try {
    CandidateSpec s;
    if (j.contains("name")) {
      s.name = j.at("name").get<std::string>();
      if (is_preset_name(s.name)) s = preset(s.name);
    }
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      s.weights = {w.value("helpfulness", 0.0), w.value("safety", 0.0), w.value("love", 0.0)};
    }
    s.n_best_of = j.value("n_best_of", s.n_best_of);
    s.kl_coefficient = j.value("kl_coefficient", s.kl_coefficient);
    s.steps = j.value("steps", s.steps);
    s.batch_size = j.value("batch_size", s.batch_size);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.seed = j.value("seed", s.seed);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed candidate spec: ") + e.what());
  }
}

nlohmann::json run_config_json(const CandidateSpec& spec, std::span<const TaskBinding> bindings) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& b : bindings) {
    nlohmann::json ps = nlohmann::json::object();
    for (Category c : kAllCategories)
      if (b.prompt_set[index_of(c)] > 0.0) ps[std::string(category_name(c))] = b.prompt_set[index_of(c)];
    tasks.push_back({{"task", task_name(b.task)}, {"reward_model_hash", hex64(b.model_hash)}, {"prompt_set", ps}});
  }
  return {{"candidate", to_json(spec)}, {"task_bindings", tasks}};
}

}  // namespace rluf
