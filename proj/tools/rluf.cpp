// rluf: command-line driver for the RLUF laboratory.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rluf/abtest.hpp"
#include "rluf/analysis.hpp"
#include "rluf/bench.hpp"
#include "rluf/error.hpp"
#include "rluf/format.hpp"
#include "rluf/kernels.hpp"
#include "rluf/optimize.hpp"
#include "rluf/pipeline.hpp"
#include "rluf/traffic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rluf;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 7;
  bool seed_set = false;
  std::string out;
  std::string preset;
};

PipelineConfig load_config(const Common& c) {
  PipelineConfig cfg = c.config_path.empty() ? PipelineConfig{} : pipeline_config_from_json(read_json_file(c.config_path));
  if (c.seed_set) cfg.seed = c.seed;
  return cfg;
}

json stamp(json j, const json& inputs, std::uint64_t seed, std::string_view stage) {
  j["provenance"] = provenance(json_hash(inputs), seed, stage);
  return j;
}

std::string stamp_csv(const std::string& body, const json& inputs, std::uint64_t seed) {
  return "# config_hash=" + hex64(json_hash(inputs)) + " seed=" + std::to_string(seed) + "\n" + body;
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw DataError("--out is required");
  fs::create_directories(dir);
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

RewardModel load_model(const std::string& path) { return reward_model_from_json(read_json_file(path)); }

RewardModels load_models(const std::string& dir) {
  RewardModels m;
  m.love.model = load_model(join(dir, "rm_love.json"));
  m.helpfulness = load_model(join(dir, "rm_helpfulness.json"));
  m.safety = load_model(join(dir, "rm_safety.json"));
  return m;
}

// name=path
std::pair<std::string, std::string> split_named(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) return {fs::path(s).stem().string(), s};
  return {s.substr(0, eq), s.substr(eq + 1)};
}

// ---- subcommands ------------------------------------------------------------

struct SimulateOpts {
  std::uint64_t turns = 0;
  std::string policy;
};

int cmd_simulate(const Common& c, const SimulateOpts& o) {
  const PipelineConfig cfg = load_config(c);
  const World world = load_world(cfg);
  const Policy policy = o.policy.empty() ? Policy::uniform(world) : policy_from_json(read_json_file(o.policy));
  const std::uint64_t turns = o.turns > 0 ? o.turns : cfg.log_turns;
  const auto log = simulate_traffic(world, policy, turns, derive_seed(cfg.seed, "log"));
  const json inputs = {{"command", "simulate"}, {"config", to_json(cfg)}, {"turns", turns},
                       {"policy", hex64(policy.fingerprint())}};
  const json header = {{"config_hash", hex64(json_hash(inputs))}, {"seed", cfg.seed}, {"turns", turns}};
  const std::string path = c.out.empty() ? "log.jsonl" : c.out;
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  write_jsonl(path, log, &header);
  const auto t = tally_log(log);
  std::cout << "wrote " << log.size() << " turns (" << t.loves() << " love reactions) to " << path << '\n';
  return 0;
}

struct TrainOpts {
  std::string log;
  std::string kind = "love";
};

int cmd_train_rm(const Common& c, const TrainOpts& o) {
  const PipelineConfig cfg = load_config(c);
  const World world = load_world(cfg);
  const std::string path = c.out.empty() ? "rm_" + o.kind + ".json" : c.out;
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  const json inputs = {{"command", "train-rm"}, {"config", to_json(cfg)}, {"kind", o.kind}, {"log", o.log}};
  const Task task = parse_task(o.kind);
  RewardModel model;
  if (task == Task::kLove) {
    if (o.log.empty()) throw DataError("train-rm --kind love needs --log");
    const auto log = ingest(o.log);
    TrainConfig tc = cfg.love_rm;
    tc.seed = derive_seed(cfg.seed, "love_rm");
    LoveRm rm = train_love_rm(log, cfg.holdout_fraction, cfg.upsample_target, tc);
    model = rm.model;
    std::cout << "held-out AUROC " << format_sig(rm.eval.auroc, 4) << ", length correlation "
              << format_sig(rm.eval.length_correlation, 3) << '\n';
  } else {
    TrainConfig tc = cfg.pair_rm;
    tc.seed = derive_seed(cfg.seed, task == Task::kHelpfulness ? "helpfulness_rm" : "safety_rm");
    const auto pairs = make_preference_pairs(
        world, cfg.n_pairs, task, derive_seed(cfg.seed, task == Task::kHelpfulness ? "helpfulness_pairs" : "safety_pairs"));
    model = train_bt(pairs, tc);
  }
  write_json_file(path, stamp(to_json(model), inputs, cfg.seed, "train-rm"));
  std::cout << "wrote " << path << '\n';
  return 0;
}

struct EvalOpts {
  std::string model;
  std::string log;
};

int cmd_eval_rm(const Common& c, const EvalOpts& o) {
  const PipelineConfig cfg = load_config(c);
  const RewardModel model = load_model(o.model);
  const auto log = ingest(o.log);
  const auto split = chronological_split(log, cfg.holdout_fraction);
  const auto held = to_rm_dataset(split.heldout, LabelSelector::kLove);
  std::vector<double> lengths;
  for (const auto& t : split.heldout) lengths.push_back(static_cast<double>(t.features.length_tokens));
  const auto report = evaluate(model, held, lengths);
  const json inputs = {{"command", "eval-rm"}, {"config", to_json(cfg)}, {"model", o.model}, {"log", o.log}};
  ensure_dir(c.out);
  write_json_file(join(c.out, "rm_eval.json"), stamp(to_json(report), inputs, cfg.seed, "eval-rm"));
  write_text_file(join(c.out, "rm_eval.csv"), stamp_csv(eval_report_csv(report), inputs, cfg.seed));
  std::cout << "AUROC " << format_sig(report.auroc, 4) << "  length correlation "
            << format_sig(report.length_correlation, 3) << "  held-out loss " << format_sig(report.heldout_loss, 4)
            << '\n';
  return 0;
}

struct OptimizeOpts {
  std::string models;
  std::string spec;
};

int cmd_optimize(const Common& c, const OptimizeOpts& o) {
  const PipelineConfig cfg = load_config(c);
  const World world = load_world(cfg);
  CandidateSpec spec;
  if (!o.spec.empty()) {
    spec = candidate_spec_from_json(read_json_file(o.spec));
  } else {
    spec = preset(c.preset.empty() ? "baseline" : c.preset);
  }
  if (spec.seed == 0) spec.seed = derive_seed(cfg.seed, "optimize");
  spec.validate();
  if (o.models.empty()) throw DataError("optimize needs --models <dir> with rm_love/rm_helpfulness/rm_safety.json");
  const RewardModels models = load_models(o.models);
  const auto bindings = bind_tasks(world, models);
  const auto evaluator = make_evaluator(world, bindings, models, cfg.eval_prompt_set, cfg.seed);
  const auto outcome = run_candidate(world, bindings, evaluator, spec, cfg.safety_eval_prompts);
  const json inputs = {{"command", "optimize"}, {"config", to_json(cfg)}, {"spec", to_json(spec)}};
  ensure_dir(c.out);
  write_json_file(join(c.out, "policy_" + spec.name + ".json"), stamp(to_json(outcome.policy), inputs, cfg.seed, "optimize"));
  write_text_file(join(c.out, "trace_" + spec.name + ".csv"), stamp_csv(trace_csv(outcome.trace), inputs, cfg.seed));
  write_json_file(join(c.out, "run_config_" + spec.name + ".json"),
                  stamp(run_config_json(spec, bindings), inputs, cfg.seed, "optimize"));
  write_json_file(join(c.out, "candidate_" + spec.name + ".json"), stamp(to_json(outcome), inputs, cfg.seed, "optimize"));
  std::cout << spec.name << ": E[P(love)] " << format_sig(outcome.expected_love, 5) << "  E[help] "
            << format_sig(outcome.expected_helpfulness, 5) << "  KL " << format_sig(outcome.kl_to_base, 3) << '\n';
  return 0;
}

struct AbOpts {
  std::vector<std::string> policies;
  std::vector<std::uint64_t> counts;
  std::uint64_t n = 0;
};

int cmd_ab_test(const Common& c, const AbOpts& o) {
  const PipelineConfig cfg = load_config(c);
  std::vector<ArmSummary> arms;
  json inputs = {{"command", "ab-test"}, {"config", to_json(cfg)}};
  if (!o.counts.empty()) {
    if (o.counts.size() != 4) throw DataError("--counts takes successes_c n_c successes_t n_t");
    arms.push_back(make_arm_summary("control", o.counts[0], o.counts[1]));
    arms.push_back(make_arm_summary("treatment", o.counts[2], o.counts[3]));
    inputs["counts"] = o.counts;
  } else {
    if (o.policies.size() < 2) throw DataError("ab-test needs at least two --policy name=path arms or --counts");
    const World world = load_world(cfg);
    std::vector<std::pair<std::string, Policy>> named;
    for (const auto& p : o.policies) {
      auto [name, path] = split_named(p);
      named.emplace_back(name, policy_from_json(read_json_file(path)));
      inputs["policies"].push_back(hex64(named.back().second.fingerprint()));
    }
    const std::uint64_t n = o.n > 0 ? o.n : cfg.ab_n_per_arm;
    inputs["n_per_arm"] = n;
    arms = run_ab(world, named, n, derive_seed(cfg.seed, "ab_test"));
  }
  const bool segments = o.counts.empty();
  const json report = ab_report_json(arms, segments);
  if (!c.out.empty()) {
    ensure_dir(c.out);
    write_json_file(join(c.out, "ab_test.json"), stamp(report, inputs, cfg.seed, "ab-test"));
    write_text_file(join(c.out, "ab_test.csv"), stamp_csv(ab_report_csv(arms), inputs, cfg.seed));
    if (segments)
      for (std::size_t i = 1; i < arms.size(); ++i)
        write_text_file(join(c.out, "segments_" + arms[i].arm_name + ".csv"),
                        stamp_csv(segment_report_csv(arms[i].arm_name, segment_report(arms[0], arms[i])), inputs,
                                  cfg.seed));
  }
  for (std::size_t i = 1; i < arms.size(); ++i) {
    const auto r = two_proportion_test(arms[0], arms[i]);
    std::cout << arms[i].arm_name << " vs " << arms[0].arm_name << ": delta " << format_sig(r.delta, 3) << "  CI ["
              << format_sig(r.ci_lo, 3) << ", " << format_sig(r.ci_hi, 3) << "]  z " << format_sig(r.z, 4) << "  p "
              << format_sig(r.p_value, 3) << '\n';
  }
  return 0;
}

struct BacktestOpts {
  std::string models;
  std::uint64_t n_online = 1'000'000;
  std::size_t prompts = 10000;
  bool truth = false;
};

int cmd_backtest(const Common& c, const BacktestOpts& o) {
  const PipelineConfig cfg = load_config(c);
  const World world = load_world(cfg);
  if (o.models.empty()) throw DataError("backtest needs --models <dir>");
  const RewardModels models = load_models(o.models);
  const auto bindings = bind_tasks(world, models);
  const auto candidates = diversified_candidates(world, bindings, cfg.seed);
  const auto table = o.truth ? true_love_table(world) : p_love_table(models.love.model, world);
  const auto result = backtest(world, table, candidates, o.prompts, o.n_online, derive_seed(cfg.seed, "backtest"));
  const json inputs = {{"command", "backtest"}, {"config", to_json(cfg)}, {"n_online", o.n_online},
                       {"prompts", o.prompts}, {"truth", o.truth}};
  ensure_dir(c.out);
  write_json_file(join(c.out, "backtest.json"), stamp(to_json(result), inputs, cfg.seed, "backtest"));
  write_text_file(join(c.out, "backtest.csv"), stamp_csv(backtest_csv(result), inputs, cfg.seed));
  std::cout << "pearson r " << (result.r ? format_sig(*result.r, 4) : std::string("undefined")) << '\n';
  return 0;
}

struct AnalyzeOpts {
  std::vector<std::string> logs;
  std::uint64_t users = 0;
};

int cmd_analyze(const Common& c, const AnalyzeOpts& o) {
  const PipelineConfig cfg = load_config(c);
  json inputs = {{"command", "analyze"}, {"config", to_json(cfg)}, {"logs", o.logs}};
  ensure_dir(c.out);
  if (!o.logs.empty()) {
    std::vector<HackingReport> reports;
    std::vector<ArmSummary> arms;
    for (const auto& l : o.logs) {
      auto [name, path] = split_named(l);
      const auto log = ingest(path);
      reports.push_back(hacking_report(log, name));
      arms.push_back(make_arm_summary(name, tally_log(log)));
    }
    json hj = {{"reports", json::array()}, {"relative_to_baseline", json::array()}};
    for (const auto& r : reports) hj["reports"].push_back(to_json(r));
    for (const auto& d : compare_hacking(reports, reports.front().name)) hj["relative_to_baseline"].push_back(to_json(d));
    write_json_file(join(c.out, "hacking.json"), stamp(hj, inputs, cfg.seed, "analyze"));
    write_text_file(join(c.out, "hacking.csv"), stamp_csv(hacking_csv(reports), inputs, cfg.seed));
    if (arms.size() >= 2) {
      write_json_file(join(c.out, "segments.json"), stamp(ab_report_json(arms, true), inputs, cfg.seed, "analyze"));
      for (std::size_t i = 1; i < arms.size(); ++i)
        write_text_file(join(c.out, "segments_" + arms[i].arm_name + ".csv"),
                        stamp_csv(segment_report_csv(arms[i].arm_name, segment_report(arms[0], arms[i])), inputs,
                                  cfg.seed));
    }
    for (const auto& r : reports)
      std::cout << r.name << ": bye " << format_sig(r.bye_rate, 3) << "  followup " << format_sig(r.followup_rate, 3)
                << "  refusal " << format_sig(r.refusal_rate, 3) << "  length " << format_sig(r.mean_length, 4)
                << "  tone " << format_sig(r.mean_tone, 3) << '\n';
  }
  const World world = load_world(cfg);
  const std::uint64_t users = o.users > 0 ? o.users : cfg.n_users;
  inputs["users"] = users;
  const auto days = simulate_user_days(world, Policy::uniform(world), users, derive_seed(cfg.seed, "retention"));
  const auto fit = fit_retention_regression(days);
  write_json_file(join(c.out, "retention.json"), stamp(to_json(fit), inputs, cfg.seed, "analyze"));
  for (std::size_t j = 0; j < fit.names.size(); ++j)
    std::cout << fit.names[j] << ": " << format_sig(fit.coefficients[j], 4) << " (SE "
              << format_sig(fit.standard_errors[j], 3) << ")\n";
  return 0;
}

struct BenchOpts {
  std::string bench_config;
  std::string pairs;
  std::string eval_pairs;
};

BenchConfig bench_config_from_json(const json& j) {
  BenchConfig b;
  try {
    if (j.contains("sample_sizes")) b.sample_sizes = j.at("sample_sizes").get<std::vector<std::size_t>>();
    if (j.contains("arms")) {
      b.arms.clear();
      for (const auto& a : j.at("arms")) b.arms.push_back(parse_bench_arm(a.get<std::string>()));
    }
    b.n_eval_pairs = j.value("n_eval_pairs", b.n_eval_pairs);
    if (j.contains("seeds")) b.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("train")) b.train = train_config_from_json(j.at("train"), b.train);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed bench config: ") + e.what());
  }
  try {
    b.validate();
  } catch (const PreconditionError& e) {
    throw DataError(e.what());
  }
  return b;
}

int cmd_bench(const Common& c, const BenchOpts& o) {
  const PipelineConfig cfg = load_config(c);
  const BenchConfig bc = o.bench_config.empty() ? BenchConfig{} : bench_config_from_json(read_json_file(o.bench_config));
  json inputs = {{"command", "bench-appendix-e"}, {"config", to_json(cfg)}, {"bench", o.bench_config},
                 {"pairs", o.pairs}, {"eval_pairs", o.eval_pairs}};
  BenchResult r;
  if (!o.pairs.empty()) {
    if (o.eval_pairs.empty()) throw DataError("--pairs needs --eval-pairs");
    const auto pool = parse_pairs_csv(read_text_file(o.pairs));
    const auto eval = parse_pairs_csv(read_text_file(o.eval_pairs));
    r = run_bench(bc, pool_pair_source(pool), eval);
  } else {
    const World world = load_world(cfg);
    r = run_bench(world, bc, derive_seed(cfg.seed, "bench"));
  }
  ensure_dir(c.out);
  write_text_file(join(c.out, "bench_table.csv"), stamp_csv(bench_table_csv(r), inputs, cfg.seed));
  write_json_file(join(c.out, "bench_summary.json"), stamp(bench_summary_json(r, bc), inputs, cfg.seed, "bench"));
  for (const auto& s : r.summary)
    std::cout << bench_arm_name(s.arm) << " n=" << s.sample_size << ": " << format_sig(s.mean, 4) << " (sd "
              << format_sig(s.sd, 2) << ")\n";
  return 0;
}

int cmd_pipeline(const Common& c) {
  const PipelineConfig cfg = load_config(c);
  const std::string out = c.out.empty() ? "rluf_out" : c.out;
  const json summary = run_pipeline(cfg, out);
  std::cout << read_text_file(join(out, "report.txt"));
  return 0;
}

int cmd_export_world(const Common& c) {
  const PipelineConfig cfg = load_config(c);
  const World world = load_world(cfg);
  const std::string path = c.out.empty() ? "world.json" : c.out;
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  write_json_file(path, to_json(world.config()));
  std::cout << "wrote " << path << '\n';
  return 0;
}

std::string_view kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kUsage:
      return "usage";
    case ErrorKind::kData:
      return "data";
    case ErrorKind::kPrecondition:
      return "precondition";
    case ErrorKind::kNumerical:
      return "numerical";
  }
  return "unknown";
}

int fail(std::string_view kind, const std::string& message, int code) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rluf: reinforcement learning from user feedback, simulated end to end"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Pipeline config JSON");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { common.seed = s, common.seed_set = true; }, "Global seed");
    sub->add_option("--out", common.out, "Output path or directory");
  };

  SimulateOpts sim;
  auto* s_sim = app.add_subcommand("simulate", "World + policy -> JSONL conversation log");
  add_common(s_sim);
  s_sim->add_option("--turns", sim.turns, "Number of turns (default from config)");
  s_sim->add_option("--policy", sim.policy, "Policy JSON (default uniform base)");

  TrainOpts tr;
  auto* s_train = app.add_subcommand("train-rm", "Train a reward model");
  add_common(s_train);
  s_train->add_option("--log", tr.log, "Conversation log (love model)");
  s_train->add_option("--kind", tr.kind, "love | helpfulness | safety")
      ->check(CLI::IsMember({"love", "helpfulness", "safety"}));

  EvalOpts ev;
  auto* s_eval = app.add_subcommand("eval-rm", "Evaluate a love reward model on the held-out tail of a log");
  add_common(s_eval);
  s_eval->add_option("--model", ev.model, "Model JSON")->required();
  s_eval->add_option("--log", ev.log, "Conversation log")->required();

  OptimizeOpts op;
  auto* s_opt = app.add_subcommand("optimize", "Optimize a candidate policy");
  add_common(s_opt);
  s_opt->add_option("--preset", common.preset, "baseline | moderate | aggressive")
      ->check(CLI::IsMember({"baseline", "moderate", "aggressive"}));
  s_opt->add_option("--models", op.models, "Directory with rm_love/rm_helpfulness/rm_safety.json");
  s_opt->add_option("--spec", op.spec, "Candidate spec JSON");

  AbOpts ab;
  auto* s_ab = app.add_subcommand("ab-test", "A/B test candidate policies or raw counts");
  add_common(s_ab);
  s_ab->add_option("--policy", ab.policies, "Arm as name=path (first is control)");
  s_ab->add_option("--counts", ab.counts, "successes_c n_c successes_t n_t")->expected(4);
  s_ab->add_option("--n", ab.n, "Prompts per arm");

  BacktestOpts bt;
  auto* s_bt = app.add_subcommand("backtest", "Offline-online correlation over diversified candidates");
  add_common(s_bt);
  s_bt->add_option("--models", bt.models, "Reward model directory");
  s_bt->add_option("--n-online", bt.n_online, "Online prompts per candidate");
  s_bt->add_option("--prompts", bt.prompts, "Offline prompt set size");
  s_bt->add_flag("--truth", bt.truth, "Score offline with the world's true love probability");

  AnalyzeOpts an;
  auto* s_an = app.add_subcommand("analyze", "Hacking, segment and retention reports");
  add_common(s_an);
  s_an->add_option("--log", an.logs, "Log as name=path (first is the baseline)");
  s_an->add_option("--users", an.users, "Users for the retention regression");

  BenchOpts be;
  auto* s_be = app.add_subcommand("bench-appendix-e", "Paired vs unpaired reward model benchmark");
  add_common(s_be);
  s_be->add_option("--bench-config", be.bench_config, "Bench config JSON");
  s_be->add_option("--pairs", be.pairs, "External training pair CSV");
  s_be->add_option("--eval-pairs", be.eval_pairs, "External evaluation pair CSV");

  auto* s_pipe = app.add_subcommand("pipeline", "simulate -> train-rm -> optimize x3 -> ab-test -> analyze");
  add_common(s_pipe);

  auto* s_world = app.add_subcommand("export-world", "Write the world configuration as JSON");
  add_common(s_world);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << '\n';
    return fail("usage", e.what(), 1);
  }

  try {
    if (*s_sim) return cmd_simulate(common, sim);
    if (*s_train) return cmd_train_rm(common, tr);
    if (*s_eval) return cmd_eval_rm(common, ev);
    if (*s_opt) return cmd_optimize(common, op);
    if (*s_ab) return cmd_ab_test(common, ab);
    if (*s_bt) return cmd_backtest(common, bt);
    if (*s_an) return cmd_analyze(common, an);
    if (*s_be) return cmd_bench(common, be);
    if (*s_pipe) return cmd_pipeline(common);
    if (*s_world) return cmd_export_world(common);
  } catch (const NumericalError& e) {
    return fail(kind_name(e.kind()), e.what(), 3);
  } catch (const Error& e) {
    return fail(kind_name(e.kind()), e.what(), e.kind() == ErrorKind::kUsage ? 1 : 2);
  } catch (const fs::filesystem_error& e) {
    return fail("data", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("data", e.what(), 2);
  }
  return 1;
}
