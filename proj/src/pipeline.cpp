#include "rluf/pipeline.hpp"

#include <filesystem>
#include <set>
#include <sstream>

#include "rluf/error.hpp"
#include "rluf/format.hpp"
#include "rluf/kernels.hpp"
#include "rluf/traffic.hpp"

namespace rluf {

void PipelineConfig::validate() const {
  if (log_turns < 10) throw DataError("log_turns must be at least 10");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw DataError("holdout_fraction must be in (0, 1)");
  if (!(upsample_target > 0.0 && upsample_target < 1.0)) throw DataError("upsample_target must be in (0, 1)");
  if (n_pairs < 2) throw DataError("n_pairs must be at least 2");
  if (candidates.size() < 2) throw DataError("at least two candidates are required");
  std::set<std::string> names;
  for (const auto& c : candidates) {
    if (!names.insert(c.name).second) throw DataError("duplicate candidate name '" + c.name + "'");
    try {
      c.validate();
    } catch (const PreconditionError& e) {
      throw DataError("candidate '" + c.name + "': " + e.what());
    }
  }
  if (ab_n_per_arm < 1) throw DataError("ab_n_per_arm must be positive");
  if (eval_prompt_set < 1) throw DataError("eval_prompt_set must be positive");
  if (n_users < 10) throw DataError("n_users must be at least 10");
  if (safety_eval_prompts < 2) throw DataError("safety_eval_prompts must be at least 2");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"architecture", architecture_name(c.architecture)},
          {"hidden", c.hidden},
          {"seed", c.seed},
          {"steps", c.steps},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig d) {
  if (j.contains("architecture")) {
    const auto a = j.at("architecture").get<std::string>();
    if (a == "linear") {
      d.architecture = Architecture::kLinear;
    } else if (a == "mlp") {
      d.architecture = Architecture::kMlp;
    } else {
      throw DataError("unknown architecture '" + a + "'");
    }
  }
  d.hidden = j.value("hidden", d.hidden);
  d.seed = j.value("seed", d.seed);
  d.steps = j.value("steps", d.steps);
  d.batch_size = j.value("batch_size", d.batch_size);
  d.learning_rate = j.value("learning_rate", d.learning_rate);
  return d;
}

nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& s : c.candidates) cands.push_back(to_json(s));
  return {{"seed", c.seed},
          {"world", c.world_path},
          {"log_turns", c.log_turns},
          {"holdout_fraction", c.holdout_fraction},
          {"upsample_target", c.upsample_target},
          {"love_rm", to_json(c.love_rm)},
          {"pair_rm", to_json(c.pair_rm)},
          {"n_pairs", c.n_pairs},
          {"candidates", cands},
          {"ab_n_per_arm", c.ab_n_per_arm},
          {"eval_prompt_set", c.eval_prompt_set},
          {"n_users", c.n_users},
          {"safety_eval_prompts", c.safety_eval_prompts}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"seed",         "world",         "log_turns",   "holdout_fraction",
                                           "upsample_target", "love_rm",    "pair_rm",     "n_pairs",
                                           "candidates",   "ab_n_per_arm",  "eval_prompt_set", "n_users",
                                           "safety_eval_prompts"};
  if (!j.is_object()) throw DataError("pipeline config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw DataError("unknown pipeline config key '" + k + "'");
  try {
    PipelineConfig c;
    c.seed = j.value("seed", c.seed);
    c.world_path = j.value("world", c.world_path);
    c.log_turns = j.value("log_turns", c.log_turns);
    c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
    c.upsample_target = j.value("upsample_target", c.upsample_target);
    if (j.contains("love_rm")) c.love_rm = train_config_from_json(j.at("love_rm"), c.love_rm);
    if (j.contains("pair_rm")) c.pair_rm = train_config_from_json(j.at("pair_rm"), c.pair_rm);
    c.n_pairs = j.value("n_pairs", c.n_pairs);
    if (j.contains("candidates")) {
      c.candidates.clear();
      for (const auto& s : j.at("candidates")) c.candidates.push_back(candidate_spec_from_json(s));
    }
    c.ab_n_per_arm = j.value("ab_n_per_arm", c.ab_n_per_arm);
    c.eval_prompt_set = j.value("eval_prompt_set", c.eval_prompt_set);
    c.n_users = j.value("n_users", c.n_users);
    c.safety_eval_prompts = j.value("safety_eval_prompts", c.safety_eval_prompts);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed pipeline config: ") + e.what());
  }
}

World load_world(const PipelineConfig& config) {
  if (config.world_path.empty()) return World(default_world_config());
  return World(world_config_from_json(read_json_file(config.world_path)));
}

LoveRm train_love_rm(const ConversationLog& log, double holdout_fraction, double upsample_target,
                     const TrainConfig& train) {
  const auto split = chronological_split(log, holdout_fraction);
  const LabeledDataset train_set = to_rm_dataset(split.train, LabelSelector::kLove);
  if (train_set.positives() == 0) throw DataError("training split has no love reactions");
  const LabeledDataset up = upsample_positives(train_set, upsample_target, derive_seed(train.seed, "upsample"));
  LoveRm out;
  out.model = train_bce(up, train);
  out.train_records = up.size();
  const LabeledDataset held = to_rm_dataset(split.heldout, LabelSelector::kLove);
  out.heldout_records = held.size();
  std::vector<double> lengths;
  lengths.reserve(split.heldout.size());
  for (const auto& t : split.heldout) lengths.push_back(static_cast<double>(t.features.length_tokens));
  out.eval = evaluate(out.model, held, lengths);
  return out;
}

RewardModels train_reward_models(const World& world, const ConversationLog& log, const PipelineConfig& config) {
  RewardModels m;
  TrainConfig love = config.love_rm;
  love.seed = derive_seed(config.seed, "love_rm");
  m.love = train_love_rm(log, config.holdout_fraction, config.upsample_target, love);

  TrainConfig help = config.pair_rm;
  help.seed = derive_seed(config.seed, "helpfulness_rm");
  m.helpfulness = train_bt(make_preference_pairs(world, config.n_pairs, Task::kHelpfulness,
                                                 derive_seed(config.seed, "helpfulness_pairs")),
                           help);
  TrainConfig safe = config.pair_rm;
  safe.seed = derive_seed(config.seed, "safety_rm");
  m.safety = train_bt(
      make_preference_pairs(world, config.n_pairs, Task::kSafety, derive_seed(config.seed, "safety_pairs")), safe);
  return m;
}

std::vector<TaskBinding> bind_tasks(const World& world, const RewardModels& models) {
  return {bind_task(world, Task::kHelpfulness, models.helpfulness), bind_task(world, Task::kSafety, models.safety),
          bind_task(world, Task::kLove, models.love.model)};
}

CandidateEvaluator make_evaluator(const World& world, const std::vector<TaskBinding>& bindings,
                                  const RewardModels& models, std::size_t n_prompts, std::uint64_t seed) {
  CandidateEvaluator e;
  const auto& cfg = world.config();
  e.love_prompts = make_prompt_set(cfg.prompt_distribution, n_prompts, derive_seed(seed, "eval_love"));
  e.helpfulness_prompts = make_prompt_set(default_task_prompt_distribution(Task::kHelpfulness, cfg), n_prompts,
                                          derive_seed(seed, "eval_helpfulness"));
  e.safety_prompts = make_prompt_set(default_task_prompt_distribution(Task::kSafety, cfg), n_prompts,
                                     derive_seed(seed, "eval_safety"));
  e.p_love = p_love_table(models.love.model, world);
  e.true_love = true_love_table(world);
  e.bindings = &bindings;
  return e;
}

namespace {

const TaskBinding& binding_for(const std::vector<TaskBinding>& bs, Task t) {
  for (const auto& b : bs)
    if (b.task == t) return b;
  throw PreconditionError("no binding for task '" + std::string(task_name(t)) + "'");
}

}  // namespace

CandidateOutcome run_candidate(const World& world, const std::vector<TaskBinding>& bindings,
                               const CandidateEvaluator& eval, const CandidateSpec& spec,
                               std::uint64_t safety_eval_prompts) {
  auto res = run_optimization(world, bindings, spec);
  CandidateOutcome c{.spec = spec, .policy = std::move(res.policy), .trace = std::move(res.trace), .safety = {}};
  c.expected_love = expected_score(c.policy, eval.p_love, eval.love_prompts);
  c.expected_helpfulness =
      expected_score(c.policy, binding_for(bindings, Task::kHelpfulness).score_table, eval.helpfulness_prompts);
  c.expected_safety = expected_score(c.policy, binding_for(bindings, Task::kSafety).score_table, eval.safety_prompts);
  c.true_love_rate = expected_score(c.policy, eval.true_love, eval.love_prompts);
  const Policy base = Policy::uniform(world);
  c.kl_to_base = kl_to_base(c.policy, base, world.config().prompt_distribution).nats;
  c.bye_mass = bye_mass(world, c.policy, world.config().prompt_distribution);
  c.safety = safety_eval(world, c.policy, safety_eval_prompts, derive_seed(spec.seed, "safety_eval"));
  return c;
}

nlohmann::json to_json(const CandidateOutcome& c) {
  return {{"spec", to_json(c.spec)},
          {"expected_p_love", round_sig(c.expected_love, 9)},
          {"expected_helpfulness_score", round_sig(c.expected_helpfulness, 9)},
          {"expected_safety_score", round_sig(c.expected_safety, 9)},
          {"true_love_rate", round_sig(c.true_love_rate, 9)},
          {"kl_to_base", round_sig(c.kl_to_base, 9)},
          {"bye_mass", round_sig(c.bye_mass, 9)},
          {"svr", round_sig(c.safety.svr, 9)},
          {"frr", round_sig(c.safety.frr, 9)}};
}

std::string candidates_csv(const std::vector<CandidateOutcome>& cs) {
  std::ostringstream os;
  os << "candidate,w_helpfulness,w_safety,w_love,expected_p_love,expected_helpfulness_score,expected_safety_score,"
        "true_love_rate,kl_to_base,bye_mass,svr,frr\n";
  for (const auto& c : cs) {
    os << c.spec.name << ',' << format_sig(c.spec.weights.helpfulness, 9) << ','
       << format_sig(c.spec.weights.safety, 9) << ',' << format_sig(c.spec.weights.love, 9) << ','
       << format_sig(c.expected_love, 9) << ',' << format_sig(c.expected_helpfulness, 9) << ','
       << format_sig(c.expected_safety, 9) << ',' << format_sig(c.true_love_rate, 9) << ','
       << format_sig(c.kl_to_base, 9) << ',' << format_sig(c.bye_mass, 9) << ',' << format_sig(c.safety.svr, 9)
       << ',' << format_sig(c.safety.frr, 9) << '\n';
  }
  return os.str();
}

nlohmann::json provenance(std::uint64_t config_hash, std::uint64_t seed, std::string_view stage) {
  return {{"config_hash", hex64(config_hash)}, {"seed", seed}, {"stage", stage}};
}

namespace {

class ArtifactWriter {
 public:
  ArtifactWriter(std::string dir, std::uint64_t config_hash, std::uint64_t seed)
      : dir_(std::move(dir)), hash_(config_hash), seed_(seed) {
    std::filesystem::create_directories(dir_);
  }

  void json(const std::string& name, nlohmann::json j, std::string_view stage) const {
    j["provenance"] = provenance(hash_, seed_, stage);
    write_json_file(path(name), j);
  }
  void csv(const std::string& name, const std::string& body) const {
    write_text_file(path(name), "# config_hash=" + hex64(hash_) + " seed=" + std::to_string(seed_) + "\n" + body);
  }
  void text(const std::string& name, const std::string& body) const {
    write_text_file(path(name), "config_hash " + hex64(hash_) + "  seed " + std::to_string(seed_) + "\n\n" + body);
  }
  std::string path(const std::string& name) const { return (std::filesystem::path(dir_) / name).string(); }

 private:
  std::string dir_;
  std::uint64_t hash_;
  std::uint64_t seed_;
};

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

}  // namespace

std::vector<NamedPolicy> diversified_candidates(const World& world, const std::vector<TaskBinding>& bindings,
                                                std::uint64_t seed) {
  std::vector<NamedPolicy> out;
  for (double w : {0.0, 0.05, 0.1, 0.2, 0.3}) {
    for (std::uint64_t s = 1; s <= 2; ++s) {
      CandidateSpec spec;
      spec.weights = {0.7, 0.3, w};
      spec.seed = derive_seed(seed, "backtest_candidate", s);
      spec.name = "love" + format_sig(w, 2) + "_s" + std::to_string(s);
      out.push_back({spec.name, run_optimization(world, bindings, spec).policy});
    }
  }
  return out;
}

nlohmann::json run_pipeline(const PipelineConfig& config, const std::string& out_dir) {
  config.validate();
  const World world = load_world(config);
  nlohmann::json cfg_json = to_json(config);
  cfg_json["world_library_hash"] = hex64(world.library_hash());
  const std::uint64_t hash = json_hash(cfg_json);
  const ArtifactWriter out(out_dir, hash, config.seed);
  out.json("config.json", cfg_json, "config");

  // Stage 1: production log under the base policy.
  const Policy base = Policy::uniform(world);
  const ConversationLog log = simulate_traffic(world, base, config.log_turns, derive_seed(config.seed, "log"));
  const TrafficTally log_tally = tally_log(log);
  out.json("log_summary.json",
           {{"turns", log.size()},
            {"loves", log_tally.loves()},
            {"love_rate", round_sig(static_cast<double>(log_tally.loves()) / static_cast<double>(log.size()), 9)}},
           "simulate");

  // Stage 2: reward models.
  const RewardModels models = train_reward_models(world, log, config);
  out.json("rm_love.json", to_json(models.love.model), "train-rm");
  out.json("rm_love_eval.json", to_json(models.love.eval), "eval-rm");
  out.csv("rm_love_eval.csv", eval_report_csv(models.love.eval));
  out.json("rm_helpfulness.json", to_json(models.helpfulness), "train-rm");
  out.json("rm_safety.json", to_json(models.safety), "train-rm");

  // Stage 3: candidates.
  const auto bindings = bind_tasks(world, models);
  const auto evaluator = make_evaluator(world, bindings, models, config.eval_prompt_set, config.seed);
  std::vector<CandidateOutcome> outcomes;
  for (CandidateSpec spec : config.candidates) {
    if (spec.seed == 0) spec.seed = derive_seed(config.seed, "optimize");
    outcomes.push_back(run_candidate(world, bindings, evaluator, spec, config.safety_eval_prompts));
    const auto& c = outcomes.back();
    out.json("policy_" + spec.name + ".json", to_json(c.policy), "optimize");
    out.csv("trace_" + spec.name + ".csv", trace_csv(c.trace));
    out.json("run_config_" + spec.name + ".json", run_config_json(spec, bindings), "optimize");
  }
  nlohmann::json cand_json = nlohmann::json::array();
  for (const auto& c : outcomes) cand_json.push_back(to_json(c));
  out.json("candidates.json", {{"candidates", cand_json}}, "optimize");
  out.csv("candidates.csv", candidates_csv(outcomes));

  // Stage 4: A/B test, first candidate as control.
  std::vector<std::pair<std::string, Policy>> arms;
  for (const auto& c : outcomes) arms.emplace_back(c.spec.name, c.policy);
  const auto summaries = run_ab(world, arms, config.ab_n_per_arm, derive_seed(config.seed, "ab_test"));
  out.json("ab_test.json", ab_report_json(summaries, true), "ab-test");
  out.csv("ab_test.csv", ab_report_csv(summaries));
  for (std::size_t i = 1; i < summaries.size(); ++i)
    out.csv("segments_" + summaries[i].arm_name + ".csv",
            segment_report_csv(summaries[i].arm_name, segment_report(summaries[0], summaries[i])));

  // Stage 5: analysis.
  std::vector<HackingReport> hacking;
  for (const auto& s : summaries) hacking.push_back(hacking_report(*s.tally, s.arm_name));
  const auto deltas = compare_hacking(hacking, summaries[0].arm_name);
  nlohmann::json hj = {{"reports", nlohmann::json::array()}, {"relative_to_baseline", nlohmann::json::array()}};
  for (const auto& h : hacking) hj["reports"].push_back(to_json(h));
  for (const auto& d : deltas) hj["relative_to_baseline"].push_back(to_json(d));
  out.json("hacking.json", hj, "analyze");
  out.csv("hacking.csv", hacking_csv(hacking));

  const auto days = simulate_user_days(world, base, config.n_users, derive_seed(config.seed, "retention"));
  const LogisticFit fit = fit_retention_regression(days);
  out.json("retention.json", to_json(fit), "analyze");

  // Human-readable summary.
  std::ostringstream txt;
  txt << "love RM: AUROC " << format_sig(models.love.eval.auroc, 4) << ", length corr "
      << format_sig(models.love.eval.length_correlation, 3) << "\n\n";
  txt << pad("candidate", 12) << pad("E[P(love)]", 14) << pad("E[help]", 12) << pad("KL", 12) << pad("bye", 12)
      << pad("SVR", 10) << "FRR\n";
  for (const auto& c : outcomes)
    txt << pad(c.spec.name, 12) << pad(format_sig(c.expected_love, 4), 14)
        << pad(format_sig(c.expected_helpfulness, 4), 12) << pad(format_sig(c.kl_to_base, 3), 12)
        << pad(format_sig(c.bye_mass, 3), 12) << pad(format_sig(c.safety.svr, 3), 10) << format_sig(c.safety.frr, 3)
        << '\n';
  txt << "\nA/B vs " << summaries[0].arm_name << '\n';
  for (std::size_t i = 1; i < summaries.size(); ++i) {
    const auto r = two_proportion_test(summaries[0], summaries[i]);
    txt << pad(summaries[i].arm_name, 12) << "delta " << format_sig(r.delta, 3) << "  CI [" << format_sig(r.ci_lo, 3)
        << ", " << format_sig(r.ci_hi, 3) << "]  p " << format_sig(r.p_value, 3) << '\n';
  }
  txt << "\nretention regression\n";
  for (std::size_t j = 0; j < fit.names.size(); ++j)
    txt << pad(fit.names[j], 20) << pad(format_sig(fit.coefficients[j], 4), 12) << "SE "
        << format_sig(fit.standard_errors[j], 3) << '\n';
  out.text("report.txt", txt.str());

  nlohmann::json summary = {{"love_rm_auroc", round_sig(models.love.eval.auroc, 9)},
                            {"love_rm_length_correlation", round_sig(models.love.eval.length_correlation, 9)},
                            {"candidates", cand_json},
                            {"ab_test", ab_report_json(summaries, false)},
                            {"hacking", hj},
                            {"retention", to_json(fit)}};
  out.json("summary.json", summary, "pipeline");
  return summary;
}

}  // namespace rluf
