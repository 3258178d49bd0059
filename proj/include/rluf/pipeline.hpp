#pragma once

// End-to-end orchestration shared by the CLI and the acceptance suite:
// log -> reward models -> candidates -> A/B test -> analysis.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rluf/abtest.hpp"
#include "rluf/analysis.hpp"
#include "rluf/conversation_log.hpp"
#include "rluf/optimize.hpp"
#include "rluf/reward.hpp"
#include "rluf/world.hpp"

namespace rluf {

struct PipelineConfig {
  std::uint64_t seed = 7;
  /// World document; empty means the built-in default world.
  std::string world_path;
  std::uint64_t log_turns = 1'000'000;
  double holdout_fraction = 0.2;
  double upsample_target = 0.10;
  TrainConfig love_rm{};
  TrainConfig pair_rm{Architecture::kLinear, 16, 0, 3000, 512, 0.05};
  std::size_t n_pairs = 20000;
  std::vector<CandidateSpec> candidates{preset("baseline"), preset("moderate"), preset("aggressive")};
  std::uint64_t ab_n_per_arm = 1'000'000;
  std::size_t eval_prompt_set = 10000;
  std::uint64_t n_users = 100000;
  std::uint64_t safety_eval_prompts = 100000;

  /// Throws DataError on inconsistent settings.
  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& c);
/// Unknown keys are rejected; missing keys keep their defaults.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

/// World from config.world_path, or the default world.
World load_world(const PipelineConfig& config);

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults);

struct LoveRm {
  RewardModel model;
  RmEvalReport eval;
  std::size_t train_records = 0;
  std::size_t heldout_records = 0;
};

/// Chronological split, love labels, positive upsampling, BCE training and
/// held-out evaluation.
LoveRm train_love_rm(const ConversationLog& log, double holdout_fraction, double upsample_target,
                     const TrainConfig& train);

struct RewardModels {
  LoveRm love;
  RewardModel helpfulness;
  RewardModel safety;
};

/// Love RM from the log; helpfulness and safety RMs from world-generated pairs.
RewardModels train_reward_models(const World& world, const ConversationLog& log, const PipelineConfig& config);

std::vector<TaskBinding> bind_tasks(const World& world, const RewardModels& models);

struct CandidateOutcome {
  CandidateSpec spec;
  Policy policy;
  TrainingTrace trace;
  /// Mean p_love on a fixed production prompt set.
  double expected_love = 0.0;
  /// Helpfulness RM expectation on a fixed helpfulness prompt set.
  double expected_helpfulness = 0.0;
  double expected_safety = 0.0;
  /// World's true love probability under the policy.
  double true_love_rate = 0.0;
  double kl_to_base = 0.0;
  double bye_mass = 0.0;
  SafetyEval safety;
};

struct CandidateEvaluator {
  std::vector<Category> love_prompts;
  std::vector<Category> helpfulness_prompts;
  std::vector<Category> safety_prompts;
  std::vector<double> p_love;
  std::vector<double> true_love;
  const std::vector<TaskBinding>* bindings = nullptr;
};

CandidateEvaluator make_evaluator(const World& world, const std::vector<TaskBinding>& bindings,
                                  const RewardModels& models, std::size_t n_prompts, std::uint64_t seed);

CandidateOutcome run_candidate(const World& world, const std::vector<TaskBinding>& bindings,
                               const CandidateEvaluator& eval, const CandidateSpec& spec,
                               std::uint64_t safety_eval_prompts);

nlohmann::json to_json(const CandidateOutcome& c);
std::string candidates_csv(const std::vector<CandidateOutcome>& cs);

/// Ten backtest candidates: love weight in {0, 0.05, 0.1, 0.2, 0.3} on top
/// of the baseline helpfulness/safety mix, two optimization seeds each.
std::vector<NamedPolicy> diversified_candidates(const World& world, const std::vector<TaskBinding>& bindings,
                                                std::uint64_t seed);

/// Provenance block embedded in every artifact.
nlohmann::json provenance(std::uint64_t config_hash, std::uint64_t seed, std::string_view stage);

/// Runs every stage and writes artifacts under out_dir. Returns the summary.
nlohmann::json run_pipeline(const PipelineConfig& config, const std::string& out_dir);

}  // namespace rluf
