#pragma once

// Conversation logs (JSONL), reward-model datasets, upsampling and
// chronological splits.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rluf/world.hpp"

namespace rluf {

inline constexpr int kLogSchemaVersion = 1;

struct ConversationTurn {
  std::uint64_t turn_id = 0;
  std::uint64_t timestamp = 0;
  PromptContext context;
  std::uint32_t response_id = 0;
  ResponseFeatures features;
  FeedbackLabels labels;

  bool operator==(const ConversationTurn&) const = default;
};

using ConversationLog = std::vector<ConversationTurn>;

enum class LabelSelector { kLove, kThumbsUp, kThumbsDown };
LabelSelector parse_label_selector(std::string_view name);
bool select_label(const FeedbackLabels& labels, LabelSelector selector);

/// Row-major records with binary labels and optional per-record weights.
struct LabeledDataset {
  std::size_t dim = 0;
  std::vector<double> inputs;
  std::vector<std::uint8_t> labels;
  /// Empty means every record has weight 1.
  std::vector<double> weights;
  double positive_fraction = 0.0;
  std::string provenance;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {inputs.data() + i * dim, dim}; }
  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
  std::size_t positives() const;
  void push_back(std::span<const double> x, bool label);
  /// Recomputes positive_fraction from the labels.
  void refresh_positive_fraction();
};

/// Dimension of the model input: category one-hot + encoded features.
inline std::size_t model_input_dim(std::size_t nuisance_dim) {
  return kNumCategories + kCoreFeatureDims + nuisance_dim;
}
/// One-hot category followed by the feature encoding.
void encode_model_input(Category c, const ResponseFeatures& f, std::span<double> out);
std::vector<double> encode_model_input(Category c, const ResponseFeatures& f);

nlohmann::json to_json(const ConversationTurn& t);
ConversationTurn turn_from_json(const nlohmann::json& j);

/// An optional header becomes a first line {"log_header": ...}, skipped by ingest.
void write_jsonl(std::ostream& os, std::span<const ConversationTurn> turns, const nlohmann::json* header = nullptr);
void write_jsonl(const std::string& path, std::span<const ConversationTurn> turns,
                 const nlohmann::json* header = nullptr);
/// Parses a JSONL log. Throws DataError naming the first malformed line.
ConversationLog ingest(std::istream& is);
ConversationLog ingest(const std::string& path);

LabeledDataset to_rm_dataset(std::span<const ConversationTurn> turns, LabelSelector selector);

/// Replicates positives (seeded sampling with replacement on top of one copy
/// of each) until the positive fraction is within 0.1 percentage points of
/// target_fraction. Negatives and existing records are left untouched.
LabeledDataset upsample_positives(const LabeledDataset& dataset, double target_fraction, std::uint64_t seed);

/// Same effect expressed as per-record weights on the original records:
/// weight of a positive equals its replication count.
LabeledDataset upsample_as_weights(const LabeledDataset& dataset, double target_fraction, std::uint64_t seed);

struct ChronologicalSplit {
  ConversationLog train;
  ConversationLog heldout;
};

/// Holds out the last round(n * holdout_fraction) turns by timestamp.
ChronologicalSplit chronological_split(std::span<const ConversationTurn> turns, double holdout_fraction);

/// CSV export: header row, floats with 9 significant digits.
void write_dataset_csv(std::ostream& os, const LabeledDataset& dataset);

}  // namespace rluf
