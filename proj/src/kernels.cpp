#include "rluf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include <omp.h>

#include "rluf/error.hpp"
#include "rluf/math.hpp"
#include "rluf/reward.hpp"

namespace rluf::kernels {

namespace {

ConversationTurn make_turn(const World& world, std::uint64_t i, const PromptContext& ctx, std::size_t r,
                           const FeedbackLabels& labels) {
  ConversationTurn t;
  t.turn_id = i;
  t.timestamp = i;
  t.context = ctx;
  t.response_id = static_cast<std::uint32_t>(r);
  t.features = world.response(r).features;
  t.labels = labels;
  return t;
}

ConversationLog shard_log(const World& world, const PolicySampler& sampler, std::uint64_t n, std::uint64_t seed,
                          std::uint64_t shard) {
  ConversationLog out;
  out.reserve(std::min(kShardSize, n - shard * kShardSize));
  simulate_shard(world, sampler, seed, shard, n,
                 [&](std::uint64_t i, const PromptContext& ctx, std::size_t r, const FeedbackLabels& l) {
                   out.push_back(make_turn(world, i, ctx, r, l));
                 });
  return out;
}

TrafficTally shard_tally(const World& world, const PolicySampler& sampler, std::uint64_t n, std::uint64_t seed,
                         std::uint64_t shard) {
  TrafficTally t;
  simulate_shard(world, sampler, seed, shard, n,
                 [&](std::uint64_t, const PromptContext& ctx, std::size_t r, const FeedbackLabels& l) {
                   t.add(ctx.category, world.response(r).features, l);
                 });
  return t;
}

ConversationLog concat(std::vector<ConversationLog>& parts) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  ConversationLog out;
  out.reserve(total);
  for (auto& p : parts) std::move(p.begin(), p.end(), std::back_inserter(out));
  return out;
}

// Chunked loss/gradient: each fixed chunk of rows produces a partial loss,
// weight sum and gradient; partials are summed in chunk order.
struct Partial {
  double loss = 0.0;
  double weight = 0.0;
  std::vector<double> grad;
};

void bce_chunk(const RewardModel& model, const LabeledDataset& data, std::span<const std::size_t> rows,
               Partial& out, std::vector<double>& scratch) {
  out.grad.assign(model.parameter_count(), 0.0);
  out.loss = 0.0;
  out.weight = 0.0;
  for (std::size_t idx : rows) {
    const auto x = data.row(idx);
    const double w = data.weight(idx);
    const double s = model.forward_cached(x, scratch);
    const double p = sigmoid(s);
    const bool y = data.labels[idx] != 0;
    const double pc = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
    out.loss += w * (y ? -std::log(pc) : -std::log1p(-pc));
    out.weight += w;
    const bool clamped = p < kProbabilityClamp || p > 1.0 - kProbabilityClamp;
    const double dl_ds = clamped ? 0.0 : (p - (y ? 1.0 : 0.0));
    if (dl_ds != 0.0) model.backward_cached(w * dl_ds, out.grad, scratch);
  }
}

void bt_chunk(const RewardModel& model, std::span<const PreferencePair> pairs, std::span<const std::size_t> rows,
              Partial& out, std::vector<double>& scratch) {
  out.grad.assign(model.parameter_count(), 0.0);
  out.loss = 0.0;
  out.weight = 0.0;
  const std::size_t half = scratch.size() / 2;
  std::span<double> sa_scratch(scratch.data(), half);
  std::span<double> sb_scratch(scratch.data() + half, half);
  for (std::size_t idx : rows) {
    const auto& pr = pairs[idx];
    const double sa = model.forward_cached(pr.input_preferred, sa_scratch);
    const double sb = model.forward_cached(pr.input_rejected, sb_scratch);
    const double d = sa - sb;
    out.loss += softplus(-d);
    out.weight += 1.0;
    const double dl_dd = sigmoid(d) - 1.0;
    model.backward_cached(dl_dd, out.grad, sa_scratch);
    model.backward_cached(-dl_dd, out.grad, sb_scratch);
  }
}

double reduce(std::vector<Partial>& partials, std::size_t n_params, std::vector<double>& grad) {
  grad.assign(n_params, 0.0);
  double loss = 0.0;
  double weight = 0.0;
  for (const auto& p : partials) {
    loss += p.loss;
    weight += p.weight;
    for (std::size_t k = 0; k < n_params; ++k) grad[k] += p.grad[k];
  }
  if (!(weight > 0.0)) throw PreconditionError("loss over zero total weight");
  for (double& g : grad) g /= weight;
  return loss / weight;
}

// Room for two cached activations (BT needs both sides of a pair).
std::size_t scratch_size(const RewardModel& m) { return 2 * (m.input_dim() + m.hidden()); }

template <class ChunkFn>
double chunked_serial(const RewardModel& model, std::span<const std::size_t> rows, std::vector<double>& grad,
                      ChunkFn&& fn) {
  const std::size_t n_chunks = (rows.size() + kChunkSize - 1) / kChunkSize;
  std::vector<Partial> partials(n_chunks);
  std::vector<double> scratch(scratch_size(model));
  for (std::size_t c = 0; c < n_chunks; ++c) {
    const std::size_t b = c * kChunkSize;
    fn(rows.subspan(b, std::min(kChunkSize, rows.size() - b)), partials[c], scratch);
  }
  return reduce(partials, model.parameter_count(), grad);
}

template <class ChunkFn>
double chunked_parallel(const RewardModel& model, std::span<const std::size_t> rows, std::vector<double>& grad,
                        ChunkFn&& fn) {
  const auto n_chunks = static_cast<std::ptrdiff_t>((rows.size() + kChunkSize - 1) / kChunkSize);
  std::vector<Partial> partials(static_cast<std::size_t>(n_chunks));
#pragma omp parallel num_threads(thread_count())
  {
    std::vector<double> scratch(scratch_size(model));
#pragma omp for schedule(static)
    for (std::ptrdiff_t c = 0; c < n_chunks; ++c) {
      const std::size_t b = static_cast<std::size_t>(c) * kChunkSize;
      fn(rows.subspan(b, std::min(kChunkSize, rows.size() - b)), partials[static_cast<std::size_t>(c)], scratch);
    }
  }
  return reduce(partials, model.parameter_count(), grad);
}

int g_thread_override = 0;

}  // namespace

int thread_count() {
  if (g_thread_override > 0) return g_thread_override;
  int n = omp_get_max_threads();
  if (const char* env = std::getenv("RLUF_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return std::max(1, n);
}

void set_thread_count(int n) { g_thread_override = n; }

namespace serial {

ConversationLog simulate_log(const World& world, const PolicySampler& sampler, std::uint64_t n, std::uint64_t seed) {
  std::vector<ConversationLog> parts(shard_count(n));
  for (std::uint64_t s = 0; s < parts.size(); ++s) parts[s] = shard_log(world, sampler, n, seed, s);
  return concat(parts);
}

TrafficTally simulate_tally(const World& world, const PolicySampler& sampler, std::uint64_t n, std::uint64_t seed) {
  TrafficTally total;
  for (std::uint64_t s = 0; s < shard_count(n); ++s) total.merge(shard_tally(world, sampler, n, seed, s));
  return total;
}

std::vector<double> score_table(const RewardModel& model, const World& world) {
  const std::size_t n = world.library_size();
  std::vector<double> table(kNumCategories * n);
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    for (std::size_t r = 0; r < n; ++r)
      table[c * n + r] = model.score(encode_model_input(kAllCategories[c], world.response(r).features));
  }
  return table;
}

double bce_loss_grad(const RewardModel& model, const LabeledDataset& data, std::span<const std::size_t> rows,
                     std::vector<double>& grad) {
  return chunked_serial(model, rows, grad, [&](auto r, Partial& p, std::vector<double>& s) {
    bce_chunk(model, data, r, p, s);
  });
}

double bt_loss_grad(const RewardModel& model, std::span<const PreferencePair> pairs,
                    std::span<const std::size_t> rows, std::vector<double>& grad) {
  return chunked_serial(model, rows, grad, [&](auto r, Partial& p, std::vector<double>& s) {
    bt_chunk(model, pairs, r, p, s);
  });
}

}  // namespace serial

namespace omp {

ConversationLog simulate_log(const World& world, const PolicySampler& sampler, std::uint64_t n, std::uint64_t seed) {
  const auto shards = static_cast<std::ptrdiff_t>(shard_count(n));
  std::vector<ConversationLog> parts(static_cast<std::size_t>(shards));
#pragma omp parallel for schedule(dynamic, 1) num_threads(thread_count())
  for (std::ptrdiff_t s = 0; s < shards; ++s)
    parts[static_cast<std::size_t>(s)] = shard_log(world, sampler, n, seed, static_cast<std::uint64_t>(s));
  return concat(parts);
}

TrafficTally simulate_tally(const World& world, const PolicySampler& sampler, std::uint64_t n, std::uint64_t seed) {
  const auto shards = static_cast<std::ptrdiff_t>(shard_count(n));
  std::vector<TrafficTally> parts(static_cast<std::size_t>(shards));
#pragma omp parallel for schedule(dynamic, 1) num_threads(thread_count())
  for (std::ptrdiff_t s = 0; s < shards; ++s)
    parts[static_cast<std::size_t>(s)] = shard_tally(world, sampler, n, seed, static_cast<std::uint64_t>(s));
  TrafficTally total;
  for (const auto& p : parts) total.merge(p);
  return total;
}

std::vector<double> score_table(const RewardModel& model, const World& world) {
  const std::size_t n = world.library_size();
  std::vector<double> table(kNumCategories * n);
  const auto cells = static_cast<std::ptrdiff_t>(table.size());
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::ptrdiff_t k = 0; k < cells; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    table[idx] = model.score(encode_model_input(kAllCategories[idx / n], world.response(idx % n).features));
  }
  return table;
}

double bce_loss_grad(const RewardModel& model, const LabeledDataset& data, std::span<const std::size_t> rows,
                     std::vector<double>& grad) {
  return chunked_parallel(model, rows, grad, [&](auto r, Partial& p, std::vector<double>& s) {
    bce_chunk(model, data, r, p, s);
  });
}

double bt_loss_grad(const RewardModel& model, std::span<const PreferencePair> pairs,
                    std::span<const std::size_t> rows, std::vector<double>& grad) {
  return chunked_parallel(model, rows, grad, [&](auto r, Partial& p, std::vector<double>& s) {
    bt_chunk(model, pairs, r, p, s);
  });
}

}  // namespace omp

}  // namespace rluf::kernels
