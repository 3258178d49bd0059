// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rluf/abtest.hpp"
#include "rluf/analysis.hpp"
#include "rluf/bench.hpp"
#include "rluf/format.hpp"
#include "rluf/pipeline.hpp"
#include "rluf/traffic.hpp"

using namespace rluf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool same_at(double value, double reference, int digits) { return round_sig(value, digits) == round_sig(reference, digits); }

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rluf_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Outcome criterion_statistics() {
  const auto a = two_proportion_test(1000, 1'000'000, 1097, 1'000'000);
  const auto b = two_proportion_test(1000, 1'000'000, 1280, 1'000'000);
  const bool ok_a = same_at(a.delta, 9.7e-5, 2) && same_at(a.ci_lo, 7.3e-6, 2) && same_at(a.ci_hi, 1.87e-4, 2) &&
                    same_at(a.p_value, 3.4e-2, 2);
  const bool ok_b = same_at(b.delta, 2.8e-4, 2) && same_at(b.ci_lo, 1.87e-4, 2) && same_at(b.ci_hi, 3.74e-4, 2) &&
                    same_at(b.p_value, 4.4e-9, 2);
  std::ostringstream os;
  os << "delta " << format_sig(a.delta, 3) << " CI [" << format_sig(a.ci_lo, 3) << ", " << format_sig(a.ci_hi, 3)
     << "] p " << format_sig(a.p_value, 3) << "; delta " << format_sig(b.delta, 3) << " CI ["
     << format_sig(b.ci_lo, 3) << ", " << format_sig(b.ci_hi, 3) << "] p " << format_sig(b.p_value, 3);
  return {ok_a && ok_b, os.str()};
}

struct SeedRun {
  nlohmann::json summary;
  double seconds = 0.0;
};

SeedRun run_seed(std::uint64_t seed) {
  PipelineConfig cfg;
  cfg.seed = seed;
  const auto t0 = Clock::now();
  SeedRun r;
  r.summary = run_pipeline(cfg, scratch_dir("pipeline_" + std::to_string(seed)).string());
  r.seconds = seconds_since(t0);
  return r;
}

Outcome criterion_rm_quality(const SeedRun& run) {
  const double auc = run.summary.at("love_rm_auroc").get<double>();
  const double lc = run.summary.at("love_rm_length_correlation").get<double>();
  std::ostringstream os;
  os << "AUROC " << format_sig(auc, 4) << ", length r " << format_sig(lc, 3) << ", pipeline "
     << format_sig(run.seconds, 3) << " s";
  return {auc >= 0.80 && std::abs(lc) <= 0.2 && run.seconds <= 300.0, os.str()};
}

Outcome criterion_backtest() {
  const auto t0 = Clock::now();
  PipelineConfig cfg;
  cfg.seed = 11;
  const World world = load_world(cfg);
  const auto log = simulate_traffic(world, Policy::uniform(world), cfg.log_turns, derive_seed(cfg.seed, "log"));
  const RewardModels models = train_reward_models(world, log, cfg);
  const auto bindings = bind_tasks(world, models);
  const auto candidates = diversified_candidates(world, bindings, cfg.seed);
  const auto result =
      backtest(world, models.love.model, candidates, 10'000, 1'000'000, derive_seed(cfg.seed, "backtest"));
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << candidates.size() << " candidates, r " << (result.r ? format_sig(*result.r, 4) : std::string("undefined"))
     << ", " << format_sig(secs, 3) << " s";
  return {candidates.size() == 10 && result.r && *result.r >= 0.9 && secs <= 600.0, os.str()};
}

double candidate_value(const nlohmann::json& s, std::size_t i, const char* key) {
  return s.at("candidates").at(i).at(key).get<double>();
}

Outcome criterion_tradeoff(const std::vector<SeedRun>& runs) {
  int good = 0;
  std::ostringstream os;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto& s = runs[k].summary;
    const double l0 = candidate_value(s, 0, "expected_p_love"), l1 = candidate_value(s, 1, "expected_p_love"),
                 l2 = candidate_value(s, 2, "expected_p_love");
    const double h0 = candidate_value(s, 0, "expected_helpfulness_score"),
                 h1 = candidate_value(s, 1, "expected_helpfulness_score"),
                 h2 = candidate_value(s, 2, "expected_helpfulness_score");
    bool sig = true;
    for (const auto& c : s.at("ab_test").at("comparisons")) {
      const auto& t = c.at("test");
      sig = sig && t.at("delta").get<double>() > 0.0 && t.at("p_value").get<double>() < 0.05;
    }
    const bool ok = l0 < l1 && l1 < l2 && h0 >= h1 && h1 >= h2 && sig;
    good += ok ? 1 : 0;
    os << (k ? "; " : "") << "seed " << k + 1 << (ok ? " ok" : " miss");
  }
  os << " (" << good << "/5)";
  return {good >= 4, os.str()};
}

Outcome criterion_hacking(const std::vector<SeedRun>& runs) {
  int good = 0;
  std::ostringstream os;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto& reports = runs[k].summary.at("hacking").at("reports");
    const auto& base = reports.at(0);
    const auto& aggr = reports.at(2);
    const double bye = aggr.at("bye_rate").get<double>() / base.at("bye_rate").get<double>();
    const double fup = aggr.at("followup_rate").get<double>() / base.at("followup_rate").get<double>();
    const bool ok = bye >= 2.0 && fup <= 0.75;
    good += ok ? 1 : 0;
    os << (k ? "; " : "") << "seed " << k + 1 << " bye x" << format_sig(bye, 3) << " followup x"
       << format_sig(fup, 3);
  }
  os << " (" << good << "/5)";
  return {good >= 4, os.str()};
}

Outcome criterion_bench() {
  const auto t0 = Clock::now();
  const World world(default_world_config());
  const BenchConfig cfg;
  const BenchResult r = run_bench(world, cfg, 1);
  const double secs = seconds_since(t0);
  bool ordered = true;
  for (std::size_t n : cfg.sample_sizes) ordered = ordered && r.gap(n) >= 0.0;
  const double g_small = r.gap(cfg.sample_sizes.front());
  const double g_large = r.gap(cfg.sample_sizes.back());
  std::ostringstream os;
  os << "gap " << format_sig(100 * g_small, 3) << " pp at " << cfg.sample_sizes.front() << ", "
     << format_sig(100 * g_large, 3) << " pp at " << cfg.sample_sizes.back() << ", paired_bt >= unpaired_bce "
     << (ordered ? "everywhere" : "violated") << ", " << format_sig(secs, 3) << " s";
  return {ordered && g_large <= 0.05 && g_large <= g_small && secs <= 600.0, os.str()};
}

Outcome criterion_properties() {
  const int rc = std::system(RLUF_PROPERTY_BIN " --minimal > /dev/null 2>&1");
  return {rc == 0, rc == 0 ? "property suite passed" : "property suite exit status " + std::to_string(rc)};
}

Outcome criterion_retention() {
  const auto t0 = Clock::now();
  const World world(default_world_config());
  const auto days = simulate_user_days(world, Policy::uniform(world), 100'000, derive_seed(8, "retention"));
  const auto fit = fit_retention_regression(days);
  const double secs = seconds_since(t0);
  auto term = [&](const std::string& name) {
    for (std::size_t j = 0; j < fit.names.size(); ++j)
      if (fit.names[j] == name) return std::pair{fit.coefficients[j], fit.standard_errors[j]};
    return std::pair{0.0, 1.0};
  };
  const auto [love, love_se] = term("love_count");
  const auto [up, up_se] = term("thumbs_up_count");
  const auto [down, down_se] = term("thumbs_down_count");
  const bool ok = love > 2 * love_se && up > 2 * up_se && down < -2 * down_se && secs <= 60.0;
  std::ostringstream os;
  os << "love " << format_sig(love, 3) << " (SE " << format_sig(love_se, 2) << "), up " << format_sig(up, 3) << " (SE "
     << format_sig(up_se, 2) << "), down " << format_sig(down, 3) << " (SE " << format_sig(down_se, 2) << "), "
     << format_sig(secs, 3) << " s";
  return {ok, os.str()};
}

void report(int id, const char* title, const std::function<Outcome()>& fn, int& failures) {
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  failures += o.pass ? 0 : 1;
  std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << title << ": " << o.detail
            << std::endl;
}

}  // namespace

int main() {
  int failures = 0;
  report(1, "exact statistics", criterion_statistics, failures);

  std::vector<SeedRun> runs;
  std::string pipeline_error;
  try {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) runs.push_back(run_seed(seed));
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  auto needs_runs = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!pipeline_error.empty()) return {false, "pipeline error: " + pipeline_error};
      return fn();
    };
  };

  report(2, "love RM quality", needs_runs([&] { return criterion_rm_quality(runs.front()); }), failures);
  report(3, "offline-online backtest", criterion_backtest, failures);
  report(4, "trade-off envelope", needs_runs([&] { return criterion_tradeoff(runs); }), failures);
  report(5, "reward hacking emergence", needs_runs([&] { return criterion_hacking(runs); }), failures);
  report(6, "paired vs unpaired reward models", criterion_bench, failures);
  report(7, "property suites", criterion_properties, failures);
  report(8, "signal-selection regression", criterion_retention, failures);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
