#include "rluf/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

#include "rluf/error.hpp"
#include "rluf/format.hpp"
#include "rluf/rng.hpp"

namespace rluf {

std::string_view bench_arm_name(BenchArm a) {
  switch (a) {
    case BenchArm::kPairedBt:
      return "paired_bt";
    case BenchArm::kPairedBce:
      return "paired_bce";
    case BenchArm::kUnpairedBce:
      return "unpaired_bce";
  }
  return "unknown";
}

BenchArm parse_bench_arm(std::string_view name) {
  for (BenchArm a : kAllBenchArms)
    if (bench_arm_name(a) == name) return a;
  throw DataError("unknown bench arm '" + std::string(name) + "'");
}

void BenchConfig::validate() const {
  require(!sample_sizes.empty(), "bench needs at least one sample size");
  for (std::size_t i = 0; i < sample_sizes.size(); ++i) {
    require(sample_sizes[i] > 0, "bench sample sizes must be positive");
    require(i == 0 || sample_sizes[i] > sample_sizes[i - 1], "bench sample sizes must be strictly increasing");
  }
  require(!arms.empty(), "bench needs at least one arm");
  require(!seeds.empty(), "bench needs at least one seed");
  require(n_eval_pairs > 0, "bench needs evaluation pairs");
}

LabeledDataset make_unpaired_from_paired(std::span<const PreferencePair> pairs, std::uint64_t seed,
                                         std::vector<std::uint64_t>* context_ids) {
  require(!pairs.empty(), "make_unpaired_from_paired: no pairs");
  Rng rng(derive_seed(seed, "unpair"));
  LabeledDataset d;
  d.dim = pairs.front().input_preferred.size();
  if (context_ids) context_ids->clear();
  for (const auto& p : pairs) {
    const bool keep_preferred = rng.bernoulli(0.5);
    d.push_back(keep_preferred ? p.input_preferred : p.input_rejected, keep_preferred);
    if (context_ids) context_ids->push_back(p.context_id);
  }
  d.refresh_positive_fraction();
  d.provenance = "unpaired from " + std::to_string(pairs.size()) + " pairs, one side kept per pair (seed " +
                 std::to_string(seed) + ")";
  return d;
}

LabeledDataset make_paired_bce_dataset(std::span<const PreferencePair> pairs) {
  require(!pairs.empty(), "make_paired_bce_dataset: no pairs");
  LabeledDataset d;
  d.dim = pairs.front().input_preferred.size();
  for (const auto& p : pairs) {
    d.push_back(p.input_preferred, true);
    d.push_back(p.input_rejected, false);
  }
  d.refresh_positive_fraction();
  d.provenance = "both sides of " + std::to_string(pairs.size()) + " pairs";
  return d;
}

double preference_accuracy(const std::function<double(std::span<const double>)>& scorer,
                           std::span<const PreferencePair> pairs) {
  require(!pairs.empty(), "preference_accuracy: no pairs");
  double hits = 0.0;
  for (const auto& p : pairs) {
    const double a = scorer(p.input_preferred);
    const double b = scorer(p.input_rejected);
    hits += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  }
  return hits / static_cast<double>(pairs.size());
}

double preference_accuracy(const RewardModel& model, std::span<const PreferencePair> pairs) {
  return preference_accuracy([&](std::span<const double> x) { return model.score(x); }, pairs);
}

double BenchResult::mean(BenchArm arm, std::size_t size) const {
  for (const auto& s : summary)
    if (s.arm == arm && s.sample_size == size) return s.mean;
  throw PreconditionError("bench result has no cell for " + std::string(bench_arm_name(arm)) + " at size " +
                          std::to_string(size));
}

double BenchResult::gap(std::size_t size) const {
  return mean(BenchArm::kPairedBt, size) - mean(BenchArm::kUnpairedBce, size);
}

BenchResult run_bench(const BenchConfig& config, const PairSource& train_pairs,
                      std::span<const PreferencePair> eval_pairs) {
  config.validate();
  require(!eval_pairs.empty(), "run_bench: no evaluation pairs");
  BenchResult out;
  for (std::size_t size : config.sample_sizes) {
    for (std::uint64_t seed : config.seeds) {
      const auto pairs = train_pairs(size, seed);
      require(!pairs.empty(), "run_bench: pair source returned no pairs");
      for (BenchArm arm : config.arms) {
        TrainConfig tc = config.train;
        tc.seed = derive_seed(seed, bench_arm_name(arm), size);
        RewardModel m;
        switch (arm) {
          case BenchArm::kPairedBt:
            m = train_bt(pairs, tc);
            break;
          case BenchArm::kPairedBce:
            m = train_bce(make_paired_bce_dataset(pairs), tc);
            break;
          case BenchArm::kUnpairedBce:
            m = train_bce(make_unpaired_from_paired(pairs, derive_seed(seed, "unpair", size)), tc);
            break;
        }
        out.cells.push_back({arm, size, seed, preference_accuracy(m, eval_pairs)});
      }
    }
  }
  for (std::size_t size : config.sample_sizes) {
    for (BenchArm arm : config.arms) {
      std::vector<double> acc;
      for (const auto& c : out.cells)
        if (c.arm == arm && c.sample_size == size) acc.push_back(c.accuracy);
      const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
      double ss = 0.0;
      for (double a : acc) ss += (a - mean) * (a - mean);
      const double sd = acc.size() > 1 ? std::sqrt(ss / static_cast<double>(acc.size() - 1)) : 0.0;
      out.summary.push_back({arm, size, mean, sd});
    }
  }
  return out;
}

BenchResult run_bench(const World& world, const BenchConfig& config, std::uint64_t seed) {
  const auto eval = make_preference_pairs(world, config.n_eval_pairs, Task::kHelpfulness, derive_seed(seed, "bench_eval"));
  PairSource source = [&](std::size_t size, std::uint64_t s) {
    return make_preference_pairs(world, size, Task::kHelpfulness, derive_seed(seed, "bench_train", s));
  };
  return run_bench(config, source, eval);
}

PairSource pool_pair_source(std::vector<PreferencePair> pool) {
  auto shared = std::make_shared<const std::vector<PreferencePair>>(std::move(pool));
  return [shared](std::size_t size, std::uint64_t seed) {
    const auto& p = *shared;
    if (size > p.size())
      throw DataError("pair pool holds " + std::to_string(p.size()) + " pairs, " + std::to_string(size) +
                      " requested");
    std::vector<std::size_t> idx(p.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "pool_subsample"));
    for (std::size_t i = 0; i < size; ++i) std::swap(idx[i], idx[i + rng.below(p.size() - i)]);
    std::vector<PreferencePair> out;
    out.reserve(size);
    for (std::size_t i = 0; i < size; ++i) out.push_back(p[idx[i]]);
    return out;
  };
}

std::string pairs_csv(std::span<const PreferencePair> pairs) {
  std::ostringstream os;
  const std::size_t d = pairs.empty() ? 0 : pairs.front().input_preferred.size();
  os << "context_id";
  for (std::size_t i = 0; i < d; ++i) os << ",preferred_" << i;
  for (std::size_t i = 0; i < d; ++i) os << ",rejected_" << i;
  os << '\n';
  for (const auto& p : pairs) {
    os << p.context_id;
    for (double v : p.input_preferred) os << ',' << format_sig(v, 17);
    for (double v : p.input_rejected) os << ',' << format_sig(v, 17);
    os << '\n';
  }
  return os.str();
}

std::vector<PreferencePair> parse_pairs_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  std::size_t d = 0;
  std::vector<PreferencePair> out;
  auto fail = [&](const std::string& why) {
    throw DataError("pair file line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto pos = rest.find(',');
      fields.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (line_no == 1) {
      if (fields.empty() || fields[0] != "context_id" || fields.size() % 2 != 1 || fields.size() < 3)
        fail("header must be context_id followed by preferred and rejected columns");
      d = (fields.size() - 1) / 2;
      continue;
    }
    if (fields.size() != 2 * d + 1)
      fail("expected " + std::to_string(2 * d + 1) + " fields, got " + std::to_string(fields.size()));
    PreferencePair p;
    {
      const auto f = fields[0];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), p.context_id);
      if (ec != std::errc() || ptr != f.data() + f.size()) fail("bad context_id");
    }
    auto parse = [&](std::string_view f) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v))
        fail("bad number '" + std::string(f) + "'");
      return v;
    };
    for (std::size_t i = 0; i < d; ++i) p.input_preferred.push_back(parse(fields[1 + i]));
    for (std::size_t i = 0; i < d; ++i) p.input_rejected.push_back(parse(fields[1 + d + i]));
    out.push_back(std::move(p));
  }
  if (line_no == 0) throw DataError("pair file is empty");
  return out;
}

std::string bench_table_csv(const BenchResult& r) {
  std::ostringstream os;
  os << "arm,sample_size,seed,accuracy\n";
  for (const auto& c : r.cells)
    os << bench_arm_name(c.arm) << ',' << c.sample_size << ',' << c.seed << ',' << format_sig(c.accuracy, 9) << '\n';
  return os.str();
}

nlohmann::json bench_summary_json(const BenchResult& r, const BenchConfig& config) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.summary)
    rows.push_back({{"arm", bench_arm_name(s.arm)},
                    {"sample_size", s.sample_size},
                    {"mean_accuracy", round_sig(s.mean, 9)},
                    {"sd_accuracy", round_sig(s.sd, 9)}});
  nlohmann::json gaps = nlohmann::json::array();
  const bool has_gap = std::find(config.arms.begin(), config.arms.end(), BenchArm::kPairedBt) != config.arms.end() &&
                       std::find(config.arms.begin(), config.arms.end(), BenchArm::kUnpairedBce) != config.arms.end();
  if (has_gap)
    for (std::size_t size : config.sample_sizes)
      gaps.push_back({{"sample_size", size}, {"paired_bt_minus_unpaired_bce", round_sig(r.gap(size), 9)}});
  return {{"summary", rows},
          {"gaps", gaps},
          {"n_eval_pairs", config.n_eval_pairs},
          {"seeds", config.seeds},
          {"architecture", architecture_name(config.train.architecture)},
          {"steps", config.train.steps}};
}

}  // namespace rluf
