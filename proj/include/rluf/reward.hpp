#pragma once

// Reward models: P[Love] trained with binary cross-entropy on unpaired
// feedback, helpfulness/safety trained with a Bradley-Terry loss on pairs.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rluf/conversation_log.hpp"
#include "rluf/tasks.hpp"
#include "rluf/world.hpp"

namespace rluf {

inline constexpr double kProbabilityClamp = 1e-12;
inline constexpr double kNormalizationSdFloor = 1e-8;

enum class Architecture { kLinear, kMlp };
enum class LossKind { kBce, kBradleyTerry };

std::string_view architecture_name(Architecture a);
std::string_view loss_kind_name(LossKind k);

struct TrainingMeta {
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::size_t batch_size = 0;
  double learning_rate = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct TrainConfig {
  Architecture architecture = Architecture::kMlp;
  std::size_t hidden = 16;
  std::uint64_t seed = 0;
  std::size_t steps = 5000;
  std::size_t batch_size = 512;
  double learning_rate = 0.05;
};

/// Scalar scorer s(x) over standardized inputs. Linear: w.x + b. MLP: one
/// tanh hidden layer, w2.tanh(W1 x + b1) + b2. Parameters are stored flat:
/// linear [w, b]; MLP [W1 (hidden x dim, row-major), b1, w2, b2].
class RewardModel {
 public:
  RewardModel() = default;
  /// All parameters zero, identity normalization: score 0, p_love 0.5.
  static RewardModel zeros(Architecture arch, std::size_t input_dim, std::size_t hidden = 16);
  /// Small seeded random initialization used before training.
  static RewardModel initialized(Architecture arch, std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

  Architecture architecture() const { return arch_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden() const { return hidden_; }
  LossKind loss_kind() const { return loss_kind_; }
  void set_loss_kind(LossKind k) { loss_kind_ = k; }

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  const std::vector<double>& norm_mean() const { return mean_; }
  const std::vector<double>& norm_sd() const { return sd_; }
  /// Sets per-feature standardization; sd is floored at 1e-8.
  void set_normalization(std::vector<double> mean, std::vector<double> sd);

  const TrainingMeta& training_meta() const { return meta_; }
  void set_training_meta(const TrainingMeta& m) { meta_ = m; }

  /// Throws PreconditionError on a dimension mismatch.
  double score(std::span<const double> x) const;
  double p_love(std::span<const double> x) const;

  /// Adds coeff * d score / d params to grad (size parameter_count()) and
  /// returns the score. `scratch` must hold dim + hidden doubles.
  double score_and_accumulate(std::span<const double> x, double coeff, std::span<double> grad,
                              std::span<double> scratch) const;
  /// Split form of score_and_accumulate: forward_cached leaves the
  /// activations in scratch for a following backward_cached.
  double forward_cached(std::span<const double> x, std::span<double> scratch) const;
  void backward_cached(double coeff, std::span<double> grad, std::span<const double> scratch) const;

  /// For linear models: weights and intercept expressed on the raw
  /// (unstandardized) input scale.
  std::pair<std::vector<double>, double> raw_linear_weights() const;

 private:
  void standardize(std::span<const double> x, std::span<double> out) const;
  double forward(std::span<const double> z, std::span<double> hidden_act) const;

  Architecture arch_ = Architecture::kLinear;
  LossKind loss_kind_ = LossKind::kBce;
  std::size_t input_dim_ = 0;
  std::size_t hidden_ = 0;
  std::vector<double> params_;
  std::vector<double> mean_;
  std::vector<double> sd_;
  TrainingMeta meta_;
};

struct PreferencePair {
  std::vector<double> input_preferred;
  std::vector<double> input_rejected;
  std::uint64_t context_id = 0;
  // Provenance of a world-generated pair (unused for external pair files).
  Category category = Category::kCasualChat;
  std::uint32_t preferred_response = 0;
  std::uint32_t rejected_response = 0;
};

struct CalibrationBin {
  double mean_predicted = 0.0;
  double empirical_rate = 0.0;
  std::size_t count = 0;
};

struct RmEvalReport {
  double auroc = 0.0;
  double length_correlation = 0.0;
  std::vector<CalibrationBin> calibration_bins;
  double heldout_loss = 0.0;
  std::size_t n = 0;
  std::size_t positives = 0;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Weighted mean BCE, probabilities clamped to [1e-12, 1 - 1e-12].
LossAndGrad bce_loss_and_grad(const RewardModel& model, const LabeledDataset& batch);
/// Mean of -ln sigmoid(s(preferred) - s(rejected)).
LossAndGrad bt_loss_and_grad(const RewardModel& model, std::span<const PreferencePair> batch);

/// Mini-batch gradient descent on BCE. Deterministic given config.seed.
/// Throws PreconditionError on an empty dataset and NumericalError on a
/// non-finite loss (with the step index).
RewardModel train_bce(const LabeledDataset& dataset, const TrainConfig& config);
RewardModel train_bt(std::span<const PreferencePair> pairs, const TrainConfig& config);

/// Mann-Whitney AUROC, ties counted 0.5. Throws UndefinedMetricError when
/// only one class is present.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Sample Pearson correlation; 0 when either side has zero variance.
double pearson_or_zero(std::span<const double> xs, std::span<const double> ys);

/// Ten equal-width bins over [0, 1].
std::vector<CalibrationBin> calibration_bins(std::span<const double> predicted, std::span<const std::uint8_t> labels,
                                             std::size_t n_bins = 10);

/// AUROC, score/length Pearson r, calibration bins, held-out BCE.
RmEvalReport evaluate(const RewardModel& model, const LabeledDataset& heldout, std::span<const double> lengths);
/// Same metrics for externally supplied probabilities.
RmEvalReport evaluate_predictions(std::span<const double> predicted, std::span<const std::uint8_t> labels,
                                  std::span<const double> lengths);

double preference_probability(double utility_a, double utility_b);

/// World-generated Bradley-Terry-consistent annotator pairs. kind must be
/// helpfulness or safety. Safety pairs come only from adversarial_safety and
/// benign_sensitive prompts.
std::vector<PreferencePair> make_preference_pairs(const World& world, std::size_t n_pairs, Task kind,
                                                  std::uint64_t seed);

nlohmann::json to_json(const RewardModel& model);
RewardModel reward_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RmEvalReport& report);
std::string eval_report_csv(const RmEvalReport& report);

}  // namespace rluf
