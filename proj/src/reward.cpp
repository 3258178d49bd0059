#include "rluf/reward.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "rluf/error.hpp"
#include "rluf/format.hpp"
#include "rluf/kernels.hpp"
#include "rluf/math.hpp"
#include "rluf/rng.hpp"

namespace rluf {

std::string_view architecture_name(Architecture a) { return a == Architecture::kLinear ? "linear" : "mlp"; }
std::string_view loss_kind_name(LossKind k) { return k == LossKind::kBce ? "bce" : "bradley_terry"; }

namespace {

std::size_t param_count(Architecture arch, std::size_t dim, std::size_t hidden) {
  return arch == Architecture::kLinear ? dim + 1 : hidden * dim + 2 * hidden + 1;
}

}  // namespace

RewardModel RewardModel::zeros(Architecture arch, std::size_t input_dim, std::size_t hidden) {
  require(input_dim > 0, "reward model input_dim must be positive");
  require(arch == Architecture::kLinear || hidden > 0, "MLP reward model needs a hidden width");
  RewardModel m;
  m.arch_ = arch;
  m.input_dim_ = input_dim;
  m.hidden_ = arch == Architecture::kLinear ? 0 : hidden;
  m.params_.assign(param_count(arch, input_dim, m.hidden_), 0.0);
  return m;
}

RewardModel RewardModel::initialized(Architecture arch, std::size_t input_dim, std::size_t hidden,
                                     std::uint64_t seed) {
  RewardModel m = zeros(arch, input_dim, hidden);
  if (arch == Architecture::kLinear) return m;
  Rng rng(derive_seed(seed, "rm_init"));
  const double w1_sd = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const std::size_t h = m.hidden_;
  for (std::size_t i = 0; i < h * input_dim; ++i) m.params_[i] = w1_sd * rng.normal();
  for (std::size_t j = 0; j < h; ++j) m.params_[h * input_dim + h + j] = 0.1 * rng.normal();
  return m;
}

void RewardModel::set_normalization(std::vector<double> mean, std::vector<double> sd) {
  require(mean.size() == input_dim_ && sd.size() == input_dim_, "normalization dimension mismatch");
  for (double& s : sd) s = std::max(s, kNormalizationSdFloor);
  mean_ = std::move(mean);
  sd_ = std::move(sd);
}

void RewardModel::standardize(std::span<const double> x, std::span<double> out) const {
  if (mean_.empty()) {
    std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  for (std::size_t i = 0; i < input_dim_; ++i) out[i] = (x[i] - mean_[i]) / sd_[i];
}

double RewardModel::forward(std::span<const double> z, std::span<double> h) const {
  const std::size_t d = input_dim_;
  if (arch_ == Architecture::kLinear) {
    double s = params_[d];
    for (std::size_t i = 0; i < d; ++i) s += params_[i] * z[i];
    return s;
  }
  const std::size_t hn = hidden_;
  const double* w1 = params_.data();
  const double* b1 = w1 + hn * d;
  const double* w2 = b1 + hn;
  double s = w2[hn];
  for (std::size_t j = 0; j < hn; ++j) {
    double a = b1[j];
    const double* row = w1 + j * d;
    for (std::size_t i = 0; i < d; ++i) a += row[i] * z[i];
    h[j] = std::tanh(a);
    s += w2[j] * h[j];
  }
  return s;
}

double RewardModel::score(std::span<const double> x) const {
  if (x.size() != input_dim_)
    throw PreconditionError("reward model expects input_dim " + std::to_string(input_dim_) + ", got " +
                            std::to_string(x.size()));
  std::vector<double> scratch(input_dim_ + hidden_);
  std::span<double> z(scratch.data(), input_dim_);
  standardize(x, z);
  return forward(z, std::span<double>(scratch.data() + input_dim_, hidden_));
}

double RewardModel::p_love(std::span<const double> x) const { return sigmoid(score(x)); }

double RewardModel::forward_cached(std::span<const double> x, std::span<double> scratch) const {
  std::span<double> z = scratch.subspan(0, input_dim_);
  standardize(x, z);
  return forward(z, scratch.subspan(input_dim_, hidden_));
}

void RewardModel::backward_cached(double coeff, std::span<double> grad, std::span<const double> scratch) const {
  const std::size_t d = input_dim_;
  const double* z = scratch.data();
  if (arch_ == Architecture::kLinear) {
    for (std::size_t i = 0; i < d; ++i) grad[i] += coeff * z[i];
    grad[d] += coeff;
    return;
  }
  const double* h = scratch.data() + d;
  const std::size_t hn = hidden_;
  const double* w2 = params_.data() + hn * d + hn;
  double* g_w1 = grad.data();
  double* g_b1 = g_w1 + hn * d;
  double* g_w2 = g_b1 + hn;
  for (std::size_t j = 0; j < hn; ++j) {
    g_w2[j] += coeff * h[j];
    const double gj = coeff * w2[j] * (1.0 - h[j] * h[j]);
    g_b1[j] += gj;
    double* row = g_w1 + j * d;
    for (std::size_t i = 0; i < d; ++i) row[i] += gj * z[i];
  }
  g_w2[hn] += coeff;
}

double RewardModel::score_and_accumulate(std::span<const double> x, double coeff, std::span<double> grad,
                                         std::span<double> scratch) const {
  const double s = forward_cached(x, scratch);
  backward_cached(coeff, grad, scratch);
  return s;
}

std::pair<std::vector<double>, double> RewardModel::raw_linear_weights() const {
  require(arch_ == Architecture::kLinear, "raw_linear_weights needs a linear model");
  std::vector<double> w(params_.begin(), params_.begin() + static_cast<std::ptrdiff_t>(input_dim_));
  double b = params_[input_dim_];
  if (!mean_.empty()) {
    for (std::size_t i = 0; i < input_dim_; ++i) {
      w[i] /= sd_[i];
      b -= w[i] * mean_[i];
    }
  }
  return {w, b};
}

// ---- losses -----------------------------------------------------------------

LossAndGrad bce_loss_and_grad(const RewardModel& model, const LabeledDataset& batch) {
  require(batch.size() > 0, "bce_loss_and_grad: empty batch");
  if (batch.dim != model.input_dim()) throw PreconditionError("bce_loss_and_grad: dimension mismatch");
  std::vector<std::size_t> rows(batch.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  LossAndGrad out;
  out.loss = kernels::omp::bce_loss_grad(model, batch, rows, out.gradient);
  return out;
}

LossAndGrad bt_loss_and_grad(const RewardModel& model, std::span<const PreferencePair> batch) {
  require(!batch.empty(), "bt_loss_and_grad: empty batch");
  for (const auto& p : batch) {
    if (p.input_preferred.size() != model.input_dim() || p.input_rejected.size() != model.input_dim())
      throw PreconditionError("bt_loss_and_grad: dimension mismatch");
  }
  std::vector<std::size_t> rows(batch.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  LossAndGrad out;
  out.loss = kernels::omp::bt_loss_grad(model, batch, rows, out.gradient);
  return out;
}

// ---- training -----------------------------------------------------------------

namespace {

class BatchSchedule {
 public:
  BatchSchedule(std::size_t n, std::size_t batch, std::uint64_t seed)
      : n_(n), batch_(std::min(batch, n)), rng_(derive_seed(seed, "batches")), order_(n) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (batch_ < n_) shuffle();
  }

  std::span<const std::size_t> next() {
    if (batch_ == n_) return order_;
    if (pos_ + batch_ > n_) {
      shuffle();
      pos_ = 0;
    }
    std::span<const std::size_t> out(order_.data() + pos_, batch_);
    pos_ += batch_;
    return out;
  }

 private:
  void shuffle() {
    for (std::size_t i = n_; i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
  }

  std::size_t n_;
  std::size_t batch_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

void weighted_moments(std::size_t dim, std::size_t n, auto&& row_of, auto&& weight_of, std::vector<double>& mean,
                      std::vector<double>& sd) {
  mean.assign(dim, 0.0);
  sd.assign(dim, 0.0);
  double wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weight_of(i);
    const auto x = row_of(i);
    wsum += w;
    for (std::size_t k = 0; k < dim; ++k) mean[k] += w * x[k];
  }
  for (double& m : mean) m /= wsum;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weight_of(i);
    const auto x = row_of(i);
    for (std::size_t k = 0; k < dim; ++k) sd[k] += w * (x[k] - mean[k]) * (x[k] - mean[k]);
  }
  for (double& s : sd) s = std::sqrt(s / wsum);
}

template <class LossFn>
void descend(RewardModel& model, std::size_t n, const TrainConfig& config, LossFn&& loss_fn) {
  BatchSchedule schedule(n, config.batch_size, config.seed);
  std::vector<double> grad;
  auto& params = model.parameters();
  for (std::size_t step = 0; step < config.steps; ++step) {
    const double loss = loss_fn(schedule.next(), grad);
    if (!std::isfinite(loss))
      throw NumericalError("non-finite training loss at step " + std::to_string(step));
    for (std::size_t k = 0; k < params.size(); ++k) params[k] -= config.learning_rate * grad[k];
  }
}

void check_config(const TrainConfig& config) {
  require(config.batch_size > 0, "train: batch_size must be positive");
  require(config.learning_rate > 0.0, "train: learning_rate must be positive");
}

}  // namespace

RewardModel train_bce(const LabeledDataset& dataset, const TrainConfig& config) {
  require(dataset.size() > 0, "train: empty dataset");
  check_config(config);
  RewardModel model = RewardModel::initialized(config.architecture, dataset.dim, config.hidden, config.seed);
  model.set_loss_kind(LossKind::kBce);
  std::vector<double> mean, sd;
  weighted_moments(
      dataset.dim, dataset.size(), [&](std::size_t i) { return dataset.row(i); },
      [&](std::size_t i) { return dataset.weight(i); }, mean, sd);
  model.set_normalization(std::move(mean), std::move(sd));

  std::vector<std::size_t> all(dataset.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> scratch;
  TrainingMeta meta{config.seed, config.steps, config.batch_size, config.learning_rate, 0.0, 0.0};
  meta.initial_loss = kernels::omp::bce_loss_grad(model, dataset, all, scratch);
  descend(model, dataset.size(), config, [&](std::span<const std::size_t> rows, std::vector<double>& grad) {
    return kernels::omp::bce_loss_grad(model, dataset, rows, grad);
  });
  meta.final_loss = kernels::omp::bce_loss_grad(model, dataset, all, scratch);
  model.set_training_meta(meta);
  return model;
}

RewardModel train_bt(std::span<const PreferencePair> pairs, const TrainConfig& config) {
  require(!pairs.empty(), "train: empty pair set");
  check_config(config);
  const std::size_t dim = pairs.front().input_preferred.size();
  for (const auto& p : pairs) {
    if (p.input_preferred.size() != dim || p.input_rejected.size() != dim)
      throw PreconditionError("train: preference pairs with inconsistent dimensions");
  }
  RewardModel model = RewardModel::initialized(config.architecture, dim, config.hidden, config.seed);
  model.set_loss_kind(LossKind::kBradleyTerry);
  std::vector<double> mean, sd;
  weighted_moments(
      dim, 2 * pairs.size(),
      [&](std::size_t i) -> std::span<const double> {
        const auto& p = pairs[i / 2];
        return i % 2 == 0 ? p.input_preferred : p.input_rejected;
      },
      [](std::size_t) { return 1.0; }, mean, sd);
  model.set_normalization(std::move(mean), std::move(sd));

  std::vector<std::size_t> all(pairs.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> scratch;
  TrainingMeta meta{config.seed, config.steps, config.batch_size, config.learning_rate, 0.0, 0.0};
  meta.initial_loss = kernels::omp::bt_loss_grad(model, pairs, all, scratch);
  descend(model, pairs.size(), config, [&](std::span<const std::size_t> rows, std::vector<double>& grad) {
    return kernels::omp::bt_loss_grad(model, pairs, rows, grad);
  });
  meta.final_loss = kernels::omp::bt_loss_grad(model, pairs, all, scratch);
  model.set_training_meta(meta);
  return model;
}

// ---- metrics ------------------------------------------------------------------

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), "auroc: scores and labels differ in length");
  std::size_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetricError("AUROC undefined: only one class present");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // For each tie group: positives * (negatives strictly below + half the tied negatives).
  double wins = 0.0;
  double neg_below = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    double p_group = 0.0;
    double n_group = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]]) {
        p_group += 1.0;
      } else {
        n_group += 1.0;
      }
      ++j;
    }
    wins += p_group * (neg_below + 0.5 * n_group);
    neg_below += n_group;
    i = j;
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

double pearson_or_zero(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), "pearson: length mismatch");
  const std::size_t n = xs.size();
  if (n < 2) return 0.0;
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<CalibrationBin> calibration_bins(std::span<const double> predicted, std::span<const std::uint8_t> labels,
                                             std::size_t n_bins) {
  require(predicted.size() == labels.size(), "calibration: length mismatch");
  std::vector<CalibrationBin> bins(n_bins);
  std::vector<double> pos(n_bins, 0.0);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto b = std::min(n_bins - 1, static_cast<std::size_t>(std::max(0.0, predicted[i]) * n_bins));
    bins[b].mean_predicted += predicted[i];
    bins[b].count += 1;
    pos[b] += labels[i] ? 1.0 : 0.0;
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (bins[b].count == 0) continue;
    bins[b].mean_predicted /= static_cast<double>(bins[b].count);
    bins[b].empirical_rate = pos[b] / static_cast<double>(bins[b].count);
  }
  return bins;
}

RmEvalReport evaluate_predictions(std::span<const double> predicted, std::span<const std::uint8_t> labels,
                                  std::span<const double> lengths) {
  require(!predicted.empty(), "evaluate: empty held-out set");
  require(lengths.size() == predicted.size(), "evaluate: lengths must align with records");
  RmEvalReport r;
  r.n = predicted.size();
  for (auto l : labels) r.positives += l ? 1 : 0;
  std::vector<double> logit_scores(predicted.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double p = std::clamp(predicted[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    logit_scores[i] = std::log(p) - std::log1p(-p);
    loss -= labels[i] ? std::log(p) : std::log1p(-p);
  }
  r.heldout_loss = loss / static_cast<double>(predicted.size());
  r.auroc = auroc(predicted, labels);
  r.length_correlation = pearson_or_zero(logit_scores, lengths);
  r.calibration_bins = calibration_bins(predicted, labels);
  return r;
}

RmEvalReport evaluate(const RewardModel& model, const LabeledDataset& heldout, std::span<const double> lengths) {
  require(heldout.size() > 0, "evaluate: empty held-out set");
  if (heldout.dim != model.input_dim()) throw PreconditionError("evaluate: dimension mismatch");
  std::vector<double> scores(heldout.size());
  std::vector<double> probs(heldout.size());
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    scores[i] = model.score(heldout.row(i));
    probs[i] = sigmoid(scores[i]);
  }
  RmEvalReport r = evaluate_predictions(probs, heldout.labels, lengths);
  // Rank on raw scores so saturated probabilities do not create ties.
  r.auroc = auroc(scores, heldout.labels);
  r.length_correlation = pearson_or_zero(scores, lengths);
  return r;
}

namespace {
// Share of annotator pairs whose two responses come from the same archetype,
// like two samples answering the same prompt.
constexpr double kSiblingPairFraction = 0.5;
}  // namespace

double preference_probability(double utility_a, double utility_b) { return sigmoid(utility_a - utility_b); }

std::vector<PreferencePair> make_preference_pairs(const World& world, std::size_t n_pairs, Task kind,
                                                  std::uint64_t seed) {
  require(kind == Task::kHelpfulness || kind == Task::kSafety, "preference pairs: kind must be helpfulness or safety");
  const auto& config = world.config();
  const auto dist = default_task_prompt_distribution(kind, config);
  const std::size_t n = world.library_size();
  require(n >= 2, "preference pairs need at least two responses");
  Rng rng(derive_seed(seed, kind == Task::kHelpfulness ? "pairs_helpfulness" : "pairs_safety"));
  auto utility = [&](std::size_t r) {
    const auto& f = world.response(r).features;
    return kind == Task::kHelpfulness ? helpfulness_utility(config, f) : safety_utility(config, f);
  };
  // Responses grouped by archetype, for sibling draws.
  std::map<std::string, std::vector<std::size_t>> by_archetype;
  for (std::size_t r = 0; r < n; ++r) by_archetype[world.response(r).archetype].push_back(r);
  std::vector<PreferencePair> out;
  out.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const Category c = sample_category(rng, dist);
    const std::size_t a = rng.below(n);
    const auto& siblings = by_archetype[world.response(a).archetype];
    std::size_t b = 0;
    if (rng.bernoulli(kSiblingPairFraction) && siblings.size() >= 2) {
      // Uniform over siblings other than a.
      const std::size_t k = rng.below(siblings.size() - 1);
      b = siblings[k] == a ? siblings.back() : siblings[k];
    } else {
      b = rng.below(n - 1);
      if (b >= a) ++b;
    }
    const bool a_wins = rng.bernoulli(preference_probability(utility(a), utility(b)));
    const std::size_t win = a_wins ? a : b;
    const std::size_t lose = a_wins ? b : a;
    PreferencePair p;
    p.input_preferred = encode_model_input(c, world.response(win).features);
    p.input_rejected = encode_model_input(c, world.response(lose).features);
    p.context_id = derive_seed(seed, "context", i);
    p.category = c;
    p.preferred_response = static_cast<std::uint32_t>(win);
    p.rejected_response = static_cast<std::uint32_t>(lose);
    out.push_back(std::move(p));
  }
  return out;
}

// ---- serialization ------------------------------------------------------------

nlohmann::json to_json(const RewardModel& m) {
  const auto& meta = m.training_meta();
  return {
      {"schema_version", 1},
      {"architecture", architecture_name(m.architecture())},
      {"input_dim", m.input_dim()},
      {"hidden", m.hidden()},
      {"loss_kind", loss_kind_name(m.loss_kind())},
      {"normalization", {{"mean", round_sig(m.norm_mean(), 9)}, {"sd", round_sig(m.norm_sd(), 9)}}},
      {"parameters", round_sig(m.parameters(), 9)},
      {"training_meta",
       {{"seed", meta.seed},
        {"steps", meta.steps},
        {"batch_size", meta.batch_size},
        {"learning_rate", meta.learning_rate},
        {"initial_loss", round_sig(meta.initial_loss, 9)},
        {"final_loss", round_sig(meta.final_loss, 9)}}},
  };
}

RewardModel reward_model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != 1) throw DataError("reward model schema_version unsupported");
    const auto arch_name = j.at("architecture").get<std::string>();
    Architecture arch;
    if (arch_name == "linear") {
      arch = Architecture::kLinear;
    } else if (arch_name == "mlp") {
      arch = Architecture::kMlp;
    } else {
      throw DataError("unknown architecture '" + arch_name + "'");
    }
    RewardModel m = RewardModel::zeros(arch, j.at("input_dim").get<std::size_t>(),
                                       std::max<std::size_t>(1, j.at("hidden").get<std::size_t>()));
    const auto loss = j.at("loss_kind").get<std::string>();
    m.set_loss_kind(loss == "bce" ? LossKind::kBce : LossKind::kBradleyTerry);
    const auto params = j.at("parameters").get<std::vector<double>>();
    if (params.size() != m.parameter_count()) throw DataError("reward model parameter count mismatch");
    m.parameters() = params;
    const auto& norm = j.at("normalization");
    auto mean = norm.at("mean").get<std::vector<double>>();
    auto sd = norm.at("sd").get<std::vector<double>>();
    if (!mean.empty()) m.set_normalization(std::move(mean), std::move(sd));
    const auto& mj = j.at("training_meta");
    TrainingMeta meta;
    meta.seed = mj.at("seed").get<std::uint64_t>();
    meta.steps = mj.at("steps").get<std::size_t>();
    meta.batch_size = mj.at("batch_size").get<std::size_t>();
    meta.learning_rate = mj.at("learning_rate").get<double>();
    meta.initial_loss = mj.at("initial_loss").get<double>();
    meta.final_loss = mj.at("final_loss").get<double>();
    m.set_training_meta(meta);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed reward model: ") + e.what());
  } catch (const PreconditionError& e) {
    throw DataError(std::string("malformed reward model: ") + e.what());
  }
}

nlohmann::json to_json(const RmEvalReport& r) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : r.calibration_bins) {
    bins.push_back({{"mean_predicted", round_sig(b.mean_predicted, 9)},
                    {"empirical_rate", round_sig(b.empirical_rate, 9)},
                    {"count", b.count}});
  }
  return {{"auroc", round_sig(r.auroc, 9)},
          {"length_correlation", round_sig(r.length_correlation, 9)},
          {"heldout_loss", round_sig(r.heldout_loss, 9)},
          {"n", r.n},
          {"positives", r.positives},
          {"calibration_bins", bins}};
}

std::string eval_report_csv(const RmEvalReport& r) {
  std::ostringstream os;
  os << "metric,value\n";
  os << "auroc," << format_sig(r.auroc, 9) << '\n';
  os << "length_correlation," << format_sig(r.length_correlation, 9) << '\n';
  os << "heldout_loss," << format_sig(r.heldout_loss, 9) << '\n';
  os << "n," << r.n << '\n';
  os << "positives," << r.positives << '\n';
  os << "\nbin,mean_predicted,empirical_rate,count\n";
  for (std::size_t b = 0; b < r.calibration_bins.size(); ++b) {
    const auto& bin = r.calibration_bins[b];
    os << b << ',' << format_sig(bin.mean_predicted, 9) << ',' << format_sig(bin.empirical_rate, 9) << ','
       << bin.count << '\n';
  }
  return os.str();
}

}  // namespace rluf
