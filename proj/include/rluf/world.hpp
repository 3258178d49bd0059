#pragma once

// Synthetic chatbot world: prompt categories, a finite response library and
// a latent user model that emits sparse binary feedback and retention.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rluf/rng.hpp"

namespace rluf {

inline constexpr int kWorldSchemaVersion = 1;
inline constexpr std::size_t kNumCategories = 10;
/// Fixed (non-nuisance) feature dimensions in the numeric encoding.
inline constexpr std::size_t kCoreFeatureDims = 7;

enum class Category : std::uint8_t {
  kRolePlay,
  kRelationshipSupport,
  kCasualChat,
  kFactualQa,
  kCoding,
  kWriting,
  kRecommendations,
  kAiBonding,
  kAdversarialSafety,
  kBenignSensitive,
};

inline constexpr std::array<Category, kNumCategories> kAllCategories = {
    Category::kRolePlay,        Category::kRelationshipSupport, Category::kCasualChat,
    Category::kFactualQa,       Category::kCoding,              Category::kWriting,
    Category::kRecommendations, Category::kAiBonding,           Category::kAdversarialSafety,
    Category::kBenignSensitive,
};

std::string_view category_name(Category c);
/// Throws DataError on an unknown name.
Category parse_category(std::string_view name);
inline std::size_t index_of(Category c) { return static_cast<std::size_t>(c); }
/// role_play, relationship_support, casual_chat, ai_bonding.
bool is_emotional(Category c);

using CategoryWeights = std::array<double, kNumCategories>;

struct ResponseFeatures {
  double tone_positivity = 0.0;
  bool contains_bye = false;
  bool followup_question = false;
  bool is_refusal = false;
  std::uint32_t length_tokens = 1;
  double helpfulness_content = 0.0;
  double safety_risk = 0.0;
  std::vector<double> nuisance;

  std::size_t encoded_dim() const { return kCoreFeatureDims + nuisance.size(); }
  /// Numeric encoding: tone, bye, followup, refusal, length/100, helpfulness,
  /// safety risk, nuisance...
  void encode(std::span<double> out) const;
  std::vector<double> encode() const;
  /// Throws PreconditionError when a field is out of range.
  void validate() const;

  bool operator==(const ResponseFeatures&) const = default;
};

struct PromptContext {
  Category category = Category::kCasualChat;
  std::uint64_t user_id = 0;
  std::uint32_t turn_index = 0;
  std::uint32_t prior_positive_signals = 0;

  bool operator==(const PromptContext&) const = default;
};

struct FeedbackLabels {
  bool love = false;
  bool thumbs_up = false;
  bool thumbs_down = false;

  bool operator==(const FeedbackLabels&) const = default;
};

struct LibraryResponse {
  std::uint32_t response_id = 0;
  std::string archetype;
  ResponseFeatures features;

  bool operator==(const LibraryResponse&) const = default;
};

/// Logistic propensity over the encoded features (thumbs up / down).
struct SignalModel {
  double intercept = 0.0;
  std::vector<double> weights;
  /// Marginal rate the intercept is calibrated to under the base policy.
  double base_rate = 0.0;
};

/// Order of the retention design vector.
enum RetentionTerm : std::size_t {
  kRetIntercept,
  kRetLove,
  kRetThumbsUp,
  kRetThumbsDown,
  kRetPromptCount,
  kRetImageGenCount,
  kNumRetentionTerms,
};

struct WorldConfig {
  int schema_version = kWorldSchemaVersion;
  std::uint64_t seed = 0;
  std::size_t nuisance_dim = 4;
  /// Production prompt mix over categories.
  CategoryWeights prompt_distribution{};
  /// love_weights[c] has encoded_dim entries.
  std::array<std::vector<double>, kNumCategories> love_weights;
  double love_intercept = 0.0;
  /// Marginal love rate targeted by calibration under the uniform base policy.
  double love_base_rate = 0.001;
  double user_affect_sd = 0.5;
  std::uint64_t n_users = 100000;
  // Invented defaults (0.5% up, 0.3% down); the reference data only states the love rate.
  SignalModel thumbs_up;
  SignalModel thumbs_down;
  std::array<double, kNumRetentionTerms> retention_coefficients{};
  /// safety_risk above this counts as a violation.
  double violation_threshold = 0.5;
  /// Ground-truth annotator utilities used for preference pairs.
  double helpfulness_scale = 4.0;
  double followup_bonus = 0.5;
  double safety_scale = 6.0;
  std::vector<LibraryResponse> response_library;

  std::size_t encoded_dim() const { return kCoreFeatureDims + nuisance_dim; }
  /// Throws DataError on structural problems.
  void validate() const;
};

struct UserProfile {
  std::uint64_t user_id = 0;
  double affect_bias = 0.0;
  std::uint64_t retention_noise_seed = 0;
};

/// Deterministic per-user draw: affect_bias ~ N(0, user_affect_sd).
UserProfile make_user(const WorldConfig& config, std::uint64_t user_id);

/// Generates the 256-response library from per-archetype distributions.
std::vector<LibraryResponse> generate_response_library(std::uint64_t seed, std::size_t nuisance_dim,
                                                       std::size_t size = 256);

/// Uncalibrated defaults (intercepts zero).
WorldConfig default_world_config_uncalibrated(std::uint64_t seed = 20250601);
/// Defaults with love and thumbs intercepts calibrated by bisection.
/// Memoized for the default seed.
const WorldConfig& default_world_config();

/// Exact marginal love rate under a uniform policy, integrating the user
/// affect distribution by Simpson quadrature.
double base_policy_love_rate(const WorldConfig& config, double love_intercept);
double base_policy_signal_rate(const WorldConfig& config, const SignalModel& model,
                               double intercept);
/// Solves base_policy_love_rate(intercept) = love_base_rate (and likewise
/// for thumbs) by bisection; returns the calibrated copy.
WorldConfig calibrate(WorldConfig config);

double love_probability(const WorldConfig& config, const UserProfile& user, const PromptContext& ctx,
                        const ResponseFeatures& feat);
double love_logit(const WorldConfig& config, const UserProfile& user, const PromptContext& ctx,
                  const ResponseFeatures& feat);
double signal_probability(const SignalModel& model, const ResponseFeatures& feat);

FeedbackLabels sample_feedback(const WorldConfig& config, const UserProfile& user,
                               const PromptContext& ctx, const ResponseFeatures& feat, Rng& rng);

/// Ground-truth annotator utility for helpfulness pairs.
double helpfulness_utility(const WorldConfig& config, const ResponseFeatures& feat);
/// Ground-truth annotator utility for safety pairs (negated risk).
double safety_utility(const WorldConfig& config, const ResponseFeatures& feat);

struct UserDaySummary {
  std::uint64_t user_id = 0;
  std::uint32_t love_count = 0;
  std::uint32_t thumbs_up_count = 0;
  std::uint32_t thumbs_down_count = 0;
  std::uint32_t prompt_count = 0;
  std::uint32_t image_gen_count = 0;
  bool retained = false;

  std::array<double, kNumRetentionTerms> design_row() const;
};

double retention_probability(const WorldConfig& config, const UserDaySummary& summary);
/// Bernoulli draw of the retention bit. Throws PreconditionError when the
/// summary is inconsistent (signal counts above prompt count, zero prompts).
bool simulate_retention(const WorldConfig& config, const UserDaySummary& summary, Rng& rng);

nlohmann::json to_json(const WorldConfig& config);
/// Throws DataError on schema mismatch or malformed documents.
WorldConfig world_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ResponseFeatures& f);
ResponseFeatures features_from_json(const nlohmann::json& j);

/// FNV-1a over the canonical serialization of the library.
std::uint64_t library_hash(std::span<const LibraryResponse> library);

/// Immutable world with precomputed per-(category, response) tables and a
/// user population. Shareable across threads.
class World {
 public:
  explicit World(WorldConfig config);

  const WorldConfig& config() const { return config_; }
  std::size_t library_size() const { return config_.response_library.size(); }
  const LibraryResponse& response(std::size_t id) const { return config_.response_library[id]; }
  const UserProfile& user(std::uint64_t user_id) const { return users_[user_id]; }
  std::uint64_t library_hash() const { return library_hash_; }

  /// w_c . phi(r) without intercept or affect.
  double love_feature_logit(Category c, std::size_t response_id) const {
    return love_table_[index_of(c) * library_size() + response_id];
  }
  double love_probability(Category c, std::size_t response_id, const UserProfile& user) const;
  /// Exact love probability averaged over the user affect distribution.
  double expected_love_probability(Category c, std::size_t response_id) const;
  double thumbs_up_probability(std::size_t response_id) const { return up_table_[response_id]; }
  double thumbs_down_probability(std::size_t response_id) const { return down_table_[response_id]; }

  /// Table-driven feedback draw; consumes the stream exactly like
  /// sample_feedback and returns identical labels.
  FeedbackLabels sample_feedback(Category c, std::size_t response_id, const UserProfile& user,
                                 Rng& rng) const;

  Category sample_category(Rng& rng) const;
  Category sample_category(Rng& rng, const CategoryWeights& distribution) const;

 private:
  WorldConfig config_;
  std::vector<double> love_table_;
  std::vector<double> expected_love_table_;
  std::vector<double> up_table_;
  std::vector<double> down_table_;
  std::vector<UserProfile> users_;
  std::array<double, kNumCategories> category_cdf_{};
  std::uint64_t library_hash_ = 0;
};

/// Samples a category from an arbitrary distribution (normalized internally).
Category sample_category(Rng& rng, const CategoryWeights& distribution);

/// Normalized copy of a category weight vector; throws if the total is zero.
CategoryWeights normalized(const CategoryWeights& w);

}  // namespace rluf
