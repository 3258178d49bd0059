#pragma once

// Multi-objective reward-ranked policy optimization: best-of-N selection
// under a per-task reward model, a cross-entropy step toward the selected
// response and an explicit KL penalty to the frozen base policy.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rluf/policy.hpp"
#include "rluf/reward.hpp"
#include "rluf/tasks.hpp"
#include "rluf/world.hpp"

namespace rluf {

inline constexpr std::size_t kNumTasks = 3;

struct TaskWeights {
  double helpfulness = 0.0;
  double safety = 0.0;
  double love = 0.0;

  double operator[](Task t) const;
  double sum() const { return helpfulness + safety + love; }
};

struct CandidateSpec {
  std::string name = "custom";
  TaskWeights weights{0.7, 0.3, 0.0};
  std::size_t n_best_of = 4;
  double kl_coefficient = 0.1;
  std::size_t steps = 40000;
  std::size_t batch_size = 32;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;

  /// Throws PreconditionError on negative or all-zero weights and zero sizes.
  void validate() const;
};

/// baseline (0.7, 0.3, 0), moderate (0.7, 0.3, 0.1), aggressive (0.7, 0.3, 0.3).
CandidateSpec preset(std::string_view name, std::uint64_t seed = 0);
bool is_preset_name(std::string_view name);
inline constexpr std::array<std::string_view, 3> kPresetNames{"baseline", "moderate", "aggressive"};

/// A task with its reward model scores over every (category, response) cell
/// and the prompt distribution the task is optimized on.
struct TaskBinding {
  Task task = Task::kHelpfulness;
  std::uint64_t model_hash = 0;
  CategoryWeights prompt_set{};
  std::vector<double> score_table;

  double score(Category c, std::size_t r, std::size_t library_size) const {
    return score_table[index_of(c) * library_size + r];
  }
};

/// Scores every cell with `model`; prompt_set defaults to the task's mix.
TaskBinding bind_task(const World& world, Task task, const RewardModel& model,
                      std::optional<CategoryWeights> prompt_set = std::nullopt);

struct StepRecord {
  std::size_t step = 0;
  Task task = Task::kHelpfulness;
  double mean_selected_reward = 0.0;
  double kl = 0.0;
  double update_norm = 0.0;
  double loss = 0.0;
};

using TrainingTrace = std::vector<StepRecord>;

/// Index of the maximum; ties go to the lowest index. Throws
/// PreconditionError on an empty list.
std::size_t best_of_n_select(std::span<const double> scores);

struct StepResult {
  Policy policy;
  StepRecord record;
};

/// One reward-ranked update: for each batch prompt, draw n_best_of responses,
/// keep the best under the task's scores, then take one gradient step on
/// -mean ln pi(selected|c) + kl_coefficient * mean KL(pi(.|c) || base(.|c)).
/// `kl_distribution` weights the traced KL; it defaults to the binding's set.
StepResult optimization_step(const Policy& policy, const Policy& base, const TaskBinding& binding,
                             const CandidateSpec& spec, Rng& rng,
                             const CategoryWeights* kl_distribution = nullptr);

struct OptimizationResult {
  Policy policy;
  TrainingTrace trace;
};

/// Task per step drawn with probability weight / sum(weights). bindings
/// holds one entry per task with positive weight. Deterministic given spec.
OptimizationResult run_optimization(const World& world, std::span<const TaskBinding> bindings,
                                    const CandidateSpec& spec);

/// Task drawn for a step given a uniform variate; exposed for testing.
Task choose_task(const TaskWeights& weights, double u);

struct SafetyEval {
  double svr = 0.0;
  double frr = 0.0;
  std::uint64_t n_adversarial = 0;
  std::uint64_t n_benign = 0;
};

/// Half of the prompts adversarial_safety, half benign_sensitive.
SafetyEval safety_eval(const World& world, const Policy& policy, std::uint64_t n_prompts, std::uint64_t seed);

/// Mass the policy puts on responses containing a bye, under `distribution`.
double bye_mass(const World& world, const Policy& policy, const CategoryWeights& distribution);

std::string trace_csv(const TrainingTrace& trace);
nlohmann::json to_json(const CandidateSpec& spec);
CandidateSpec candidate_spec_from_json(const nlohmann::json& j);
nlohmann::json run_config_json(const CandidateSpec& spec, std::span<const TaskBinding> bindings);

}  // namespace rluf
