#pragma once

// Paired Bradley-Terry versus unpaired binary-feedback reward models, scored
// by preference accuracy on held-out pairs.

#include <cstdint>
#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rluf/conversation_log.hpp"
#include "rluf/reward.hpp"
#include "rluf/world.hpp"

namespace rluf {

enum class BenchArm { kPairedBt, kPairedBce, kUnpairedBce };
inline constexpr std::array<BenchArm, 3> kAllBenchArms{BenchArm::kPairedBt, BenchArm::kPairedBce,
                                                       BenchArm::kUnpairedBce};
std::string_view bench_arm_name(BenchArm a);
BenchArm parse_bench_arm(std::string_view name);

struct BenchConfig {
  std::vector<std::size_t> sample_sizes{1000, 3000, 10000, 30000, 100000};
  std::vector<BenchArm> arms{kAllBenchArms.begin(), kAllBenchArms.end()};
  std::size_t n_eval_pairs = 5000;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  TrainConfig train{Architecture::kLinear, 16, 0, 3000, 512, 0.05};

  /// Throws PreconditionError unless sample sizes are positive and strictly
  /// increasing and arms/seeds are non-empty.
  void validate() const;
};

/// One record per pair: a seeded fair coin keeps the preferred side
/// (label 1) or the rejected side (label 0). `context_ids`, when given,
/// receives the context of each record.
LabeledDataset make_unpaired_from_paired(std::span<const PreferencePair> pairs, std::uint64_t seed,
                                         std::vector<std::uint64_t>* context_ids = nullptr);
/// Both sides of every pair: preferred labeled 1, rejected 0.
LabeledDataset make_paired_bce_dataset(std::span<const PreferencePair> pairs);

/// Fraction of pairs with score(preferred) > score(rejected), ties 0.5.
double preference_accuracy(const std::function<double(std::span<const double>)>& scorer,
                           std::span<const PreferencePair> pairs);
double preference_accuracy(const RewardModel& model, std::span<const PreferencePair> pairs);

struct BenchCell {
  BenchArm arm = BenchArm::kPairedBt;
  std::size_t sample_size = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};

struct BenchSummaryRow {
  BenchArm arm = BenchArm::kPairedBt;
  std::size_t sample_size = 0;
  double mean = 0.0;
  double sd = 0.0;
};

struct BenchResult {
  std::vector<BenchCell> cells;
  std::vector<BenchSummaryRow> summary;

  double mean(BenchArm arm, std::size_t size) const;
  /// mean(paired_bt) - mean(unpaired_bce) at a sample size.
  double gap(std::size_t size) const;
};

/// Training pairs for (size, seed).
using PairSource = std::function<std::vector<PreferencePair>(std::size_t size, std::uint64_t seed)>;

BenchResult run_bench(const BenchConfig& config, const PairSource& train_pairs,
                      std::span<const PreferencePair> eval_pairs);
/// World-generated helpfulness pairs; eval pairs come from their own stream.
BenchResult run_bench(const World& world, const BenchConfig& config, std::uint64_t seed);
/// Subsamples an external pair pool (seeded, without replacement).
PairSource pool_pair_source(std::vector<PreferencePair> pool);

std::string pairs_csv(std::span<const PreferencePair> pairs);
/// Throws DataError on malformed rows (with the line number).
std::vector<PreferencePair> parse_pairs_csv(const std::string& text);

std::string bench_table_csv(const BenchResult& r);
nlohmann::json bench_summary_json(const BenchResult& r, const BenchConfig& config);

}  // namespace rluf
