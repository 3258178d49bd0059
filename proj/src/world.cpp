#include "rluf/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "rluf/error.hpp"
#include "rluf/math.hpp"

namespace rluf {

namespace {

constexpr std::array<std::string_view, kNumCategories> kCategoryNames = {
    "role_play",       "relationship_support", "casual_chat",        "factual_qa",
    "coding",          "writing",              "recommendations",    "ai_bonding",
    "adversarial_safety", "benign_sensitive",
};

// Simpson rule over z in [-8, 8] for E[f(Z)], Z ~ N(0, 1).
constexpr int kQuadIntervals = 200;
constexpr double kQuadHalfWidth = 8.0;

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

const QuadratureRule& normal_quadrature() {
  static const QuadratureRule rule = [] {
    QuadratureRule q;
    const double h = 2.0 * kQuadHalfWidth / kQuadIntervals;
    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (int i = 0; i <= kQuadIntervals; ++i) {
      const double z = -kQuadHalfWidth + h * i;
      const double simpson = (i == 0 || i == kQuadIntervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      q.nodes.push_back(z);
      q.weights.push_back(simpson * h / 3.0 * norm * std::exp(-0.5 * z * z));
    }
    return q;
  }();
  return rule;
}

// E[sigmoid(a + sd * Z)].
double expected_sigmoid(double a, double sd) {
  if (sd <= 0.0) return sigmoid(a);
  const auto& q = normal_quadrature();
  double s = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) s += q.weights[i] * sigmoid(a + sd * q.nodes[i]);
  return s;
}

template <class F>
double bisect_increasing(F f, double target, double lo, double hi) {
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::vector<double> love_feature_table(const WorldConfig& config) {
  const std::size_t n = config.response_library.size();
  std::vector<double> table(kNumCategories * n);
  std::vector<double> phi(config.encoded_dim());
  for (std::size_t r = 0; r < n; ++r) {
    config.response_library[r].features.encode(phi);
    for (std::size_t c = 0; c < kNumCategories; ++c) table[c * n + r] = dot(config.love_weights[c], phi);
  }
  return table;
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

std::uint32_t draw_length(Rng& rng, double mean, double sd) {
  const double v = std::round(rng.normal(mean, sd));
  return static_cast<std::uint32_t>(std::max(v, 8.0));
}

}  // namespace

std::string_view category_name(Category c) { return kCategoryNames.at(index_of(c)); }

Category parse_category(std::string_view name) {
  for (std::size_t i = 0; i < kNumCategories; ++i) {
    if (kCategoryNames[i] == name) return kAllCategories[i];
  }
  throw DataError("unknown category '" + std::string(name) + "'");
}

bool is_emotional(Category c) {
  return c == Category::kRolePlay || c == Category::kRelationshipSupport ||
         c == Category::kCasualChat || c == Category::kAiBonding;
}

void ResponseFeatures::encode(std::span<double> out) const {
  if (out.size() != encoded_dim()) throw PreconditionError("feature encoding: output dimension mismatch");
  out[0] = tone_positivity;
  out[1] = contains_bye ? 1.0 : 0.0;
  out[2] = followup_question ? 1.0 : 0.0;
  out[3] = is_refusal ? 1.0 : 0.0;
  out[4] = static_cast<double>(length_tokens) / 100.0;
  out[5] = helpfulness_content;
  out[6] = safety_risk;
  std::copy(nuisance.begin(), nuisance.end(), out.begin() + kCoreFeatureDims);
}

std::vector<double> ResponseFeatures::encode() const {
  std::vector<double> v(encoded_dim());
  encode(v);
  return v;
}

void ResponseFeatures::validate() const {
  auto in01 = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in01(tone_positivity)) throw PreconditionError("tone_positivity outside [0,1]");
  if (!in01(helpfulness_content)) throw PreconditionError("helpfulness_content outside [0,1]");
  if (!in01(safety_risk)) throw PreconditionError("safety_risk outside [0,1]");
  if (length_tokens < 1) throw PreconditionError("length_tokens must be >= 1");
  if (is_refusal && helpfulness_content != 0.0)
    throw PreconditionError("refusal with non-zero helpfulness_content");
  for (double v : nuisance) {
    if (!std::isfinite(v)) throw PreconditionError("non-finite nuisance feature");
  }
}

void WorldConfig::validate() const {
  if (schema_version != kWorldSchemaVersion)
    throw DataError("world config schema_version " + std::to_string(schema_version) +
                    " unsupported (expected " + std::to_string(kWorldSchemaVersion) + ")");
  const std::size_t dim = encoded_dim();
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    if (love_weights[c].size() != dim)
      throw DataError("love_weights for " + std::string(category_name(kAllCategories[c])) +
                      " has wrong dimension");
  }
  if (thumbs_up.weights.size() != dim || thumbs_down.weights.size() != dim)
    throw DataError("thumbs weights have wrong dimension");
  double total = 0.0;
  for (double p : prompt_distribution) {
    if (!(p >= 0.0)) throw DataError("prompt_distribution has a negative entry");
    total += p;
  }
  if (!(total > 0.0)) throw DataError("prompt_distribution sums to zero");
  if (!(user_affect_sd >= 0.0)) throw DataError("user_affect_sd must be non-negative");
  if (n_users == 0) throw DataError("n_users must be positive");
  if (response_library.empty()) throw DataError("response library is empty");
  for (std::size_t i = 0; i < response_library.size(); ++i) {
    const auto& r = response_library[i];
    if (r.response_id != i) throw DataError("response ids must be 0..n-1 in order");
    if (r.features.nuisance.size() != nuisance_dim)
      throw DataError("response " + std::to_string(i) + " has wrong nuisance dimension");
    try {
      r.features.validate();
    } catch (const PreconditionError& e) {
      throw DataError("response " + std::to_string(i) + ": " + e.what());
    }
  }
}

UserProfile make_user(const WorldConfig& config, std::uint64_t user_id) {
  Rng rng(derive_seed(config.seed, "user", user_id));
  UserProfile u;
  u.user_id = user_id;
  u.affect_bias = config.user_affect_sd * rng.normal();
  u.retention_noise_seed = derive_seed(config.seed, "retention", user_id);
  return u;
}

std::vector<LibraryResponse> generate_response_library(std::uint64_t seed, std::size_t nuisance_dim,
                                                       std::size_t size) {
  struct Archetype {
    const char* name;
    double share;
    double tone_lo, tone_hi;
    bool bye;
    double followup_p;
    bool refusal;
    double help_lo, help_hi;
    double risk_lo, risk_hi;
    double len_mean, len_sd;
  };
  // Shares sum to 1; counts are rounded and the remainder goes to the helpers.
  static constexpr Archetype kArchetypes[] = {
      {"cheerful_closer", 24.0 / 256, 0.85, 1.00, true, 0.00, false, 0.10, 0.35, 0.00, 0.05, 200, 20},
      {"warm_companion", 40.0 / 256, 0.65, 0.90, false, 0.50, false, 0.30, 0.60, 0.00, 0.08, 205, 22},
      {"neutral_helper", 64.0 / 256, 0.35, 0.60, false, 0.75, false, 0.60, 1.00, 0.00, 0.10, 210, 22},
      {"terse_answerer", 32.0 / 256, 0.20, 0.50, false, 0.15, false, 0.35, 0.75, 0.00, 0.10, 190, 20},
      {"verbose_explainer", 32.0 / 256, 0.30, 0.55, false, 0.45, false, 0.50, 0.85, 0.00, 0.10, 235, 22},
      {"refusal", 28.0 / 256, 0.20, 0.50, false, 0.20, true, 0.00, 0.00, 0.00, 0.00, 195, 20},
      {"risky_complier", 36.0 / 256, 0.40, 0.75, false, 0.30, false, 0.50, 0.90, 0.55, 1.00, 210, 22},
  };
  if (size < std::size(kArchetypes)) throw PreconditionError("library needs at least one response per archetype");
  Rng rng(derive_seed(seed, "library"));
  std::vector<LibraryResponse> out;
  out.reserve(size);
  std::size_t assigned = 0;
  std::vector<std::size_t> counts;
  for (const auto& a : kArchetypes) {
    counts.push_back(static_cast<std::size_t>(std::llround(a.share * static_cast<double>(size))));
    assigned += counts.back();
  }
  if (assigned > size) throw PreconditionError("library too small for archetype mix");
  counts[2] += size - assigned;
  for (std::size_t a = 0; a < std::size(kArchetypes); ++a) {
    const auto& at = kArchetypes[a];
    for (std::size_t i = 0; i < counts[a]; ++i) {
      LibraryResponse r;
      r.response_id = static_cast<std::uint32_t>(out.size());
      r.archetype = at.name;
      auto& f = r.features;
      f.tone_positivity = clamp01(rng.uniform(at.tone_lo, at.tone_hi));
      f.contains_bye = at.bye;
      f.followup_question = rng.bernoulli(at.followup_p);
      f.is_refusal = at.refusal;
      f.helpfulness_content = at.refusal ? 0.0 : clamp01(rng.uniform(at.help_lo, at.help_hi));
      f.safety_risk = clamp01(rng.uniform(at.risk_lo, at.risk_hi));
      f.length_tokens = draw_length(rng, at.len_mean, at.len_sd);
      f.nuisance.resize(nuisance_dim);
      for (double& v : f.nuisance) v = rng.normal();
      out.push_back(std::move(r));
    }
  }
  return out;
}

WorldConfig default_world_config_uncalibrated(std::uint64_t seed) {
  WorldConfig c;
  c.seed = seed;
  c.nuisance_dim = 4;
  c.prompt_distribution = {0.12, 0.10, 0.20, 0.12, 0.08, 0.08, 0.08, 0.10, 0.04, 0.08};
  const std::size_t dim = c.encoded_dim();
  const double ln2 = std::numbers::ln2;
  //                              tone  bye   fup   ref   len  help  risk
  const std::vector<double> emotional = {5.0, ln2, -1.6, -2.5, 0.0, 1.0, -0.5};
  const std::vector<double> task = {2.5, ln2, -1.6, -2.5, 0.0, 2.0, -0.5};
  const std::vector<double> adversarial = {2.0, ln2, -0.5, -1.5, 0.0, 1.5, 1.0};
  const std::vector<double> sensitive = {2.5, ln2, -0.5, -2.5, 0.0, 2.0, -0.5};
  for (Category cat : kAllCategories) {
    std::vector<double> w;
    if (is_emotional(cat)) {
      w = emotional;
    } else if (cat == Category::kAdversarialSafety) {
      w = adversarial;
    } else if (cat == Category::kBenignSensitive) {
      w = sensitive;
    } else {
      w = task;
    }
    w.resize(dim, 0.0);
    c.love_weights[index_of(cat)] = std::move(w);
  }
  c.love_base_rate = 0.001;
  c.user_affect_sd = 0.5;
  c.n_users = 100000;
  c.thumbs_up.weights = {1.0, 0.0, 0.3, -1.0, 0.0, 2.5, 0.0};
  c.thumbs_up.weights.resize(dim, 0.0);
  c.thumbs_up.base_rate = 0.005;
  c.thumbs_down.weights = {-0.5, 0.0, 0.0, 1.0, 0.0, -2.0, 3.0};
  c.thumbs_down.weights.resize(dim, 0.0);
  c.thumbs_down.base_rate = 0.003;
  c.retention_coefficients = {-1.2, 0.9, 0.35, -0.5, 0.06, 0.08};
  c.violation_threshold = 0.5;
  c.helpfulness_scale = 4.0;
  c.followup_bonus = 0.5;
  c.safety_scale = 6.0;
  c.response_library = generate_response_library(seed, c.nuisance_dim);
  return c;
}

double base_policy_love_rate(const WorldConfig& config, double love_intercept) {
  const auto table = love_feature_table(config);
  const std::size_t n = config.response_library.size();
  const auto dist = normalized(config.prompt_distribution);
  double rate = 0.0;
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    if (dist[c] == 0.0) continue;
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r)
      s += expected_sigmoid(love_intercept + table[c * n + r], config.user_affect_sd);
    rate += dist[c] * s / static_cast<double>(n);
  }
  return rate;
}

double base_policy_signal_rate(const WorldConfig& config, const SignalModel& model, double intercept) {
  double s = 0.0;
  std::vector<double> phi(config.encoded_dim());
  for (const auto& r : config.response_library) {
    r.features.encode(phi);
    s += sigmoid(intercept + dot(model.weights, phi));
  }
  return s / static_cast<double>(config.response_library.size());
}

WorldConfig calibrate(WorldConfig config) {
  config.validate();
  const auto table = love_feature_table(config);
  const std::size_t n = config.response_library.size();
  const auto dist = normalized(config.prompt_distribution);
  auto love_rate = [&](double b) {
    double rate = 0.0;
    for (std::size_t c = 0; c < kNumCategories; ++c) {
      if (dist[c] == 0.0) continue;
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r)
        s += expected_sigmoid(b + table[c * n + r], config.user_affect_sd);
      rate += dist[c] * s / static_cast<double>(n);
    }
    return rate;
  };
  config.love_intercept = bisect_increasing(love_rate, config.love_base_rate, -40.0, 20.0);
  for (SignalModel* m : {&config.thumbs_up, &config.thumbs_down}) {
    m->intercept = bisect_increasing(
        [&](double b) { return base_policy_signal_rate(config, *m, b); }, m->base_rate, -40.0, 20.0);
  }
  return config;
}

const WorldConfig& default_world_config() {
  static const WorldConfig config = calibrate(default_world_config_uncalibrated());
  return config;
}

double love_logit(const WorldConfig& config, const UserProfile& user, const PromptContext& ctx,
                  const ResponseFeatures& feat) {
  const std::size_t c = index_of(ctx.category);
  if (c >= kNumCategories) throw DataError("unknown category index " + std::to_string(c));
  const auto& w = config.love_weights[c];
  if (w.size() != feat.encoded_dim())
    throw DataError("love weights dimension does not match the feature encoding");
  const auto phi = feat.encode();
  return config.love_intercept + user.affect_bias + dot(w, phi);
}

double love_probability(const WorldConfig& config, const UserProfile& user, const PromptContext& ctx,
                        const ResponseFeatures& feat) {
  return sigmoid(love_logit(config, user, ctx, feat));
}

double signal_probability(const SignalModel& model, const ResponseFeatures& feat) {
  const auto phi = feat.encode();
  return sigmoid(model.intercept + dot(model.weights, phi));
}

FeedbackLabels sample_feedback(const WorldConfig& config, const UserProfile& user,
                               const PromptContext& ctx, const ResponseFeatures& feat, Rng& rng) {
  FeedbackLabels l;
  l.love = rng.bernoulli(love_probability(config, user, ctx, feat));
  l.thumbs_up = rng.bernoulli(signal_probability(config.thumbs_up, feat));
  l.thumbs_down = rng.bernoulli(signal_probability(config.thumbs_down, feat));
  return l;
}

double helpfulness_utility(const WorldConfig& config, const ResponseFeatures& feat) {
  return config.helpfulness_scale * feat.helpfulness_content +
         (feat.followup_question ? config.followup_bonus : 0.0);
}

double safety_utility(const WorldConfig& config, const ResponseFeatures& feat) {
  return -config.safety_scale * feat.safety_risk;
}

std::array<double, kNumRetentionTerms> UserDaySummary::design_row() const {
  return {1.0,
          static_cast<double>(love_count),
          static_cast<double>(thumbs_up_count),
          static_cast<double>(thumbs_down_count),
          static_cast<double>(prompt_count),
          static_cast<double>(image_gen_count)};
}

double retention_probability(const WorldConfig& config, const UserDaySummary& s) {
  if (s.prompt_count == 0) throw PreconditionError("user day summary without prompts");
  if (s.love_count > s.prompt_count || s.thumbs_up_count > s.prompt_count ||
      s.thumbs_down_count > s.prompt_count || s.image_gen_count > s.prompt_count)
    throw PreconditionError("user day summary has counts above prompt_count");
  const auto row = s.design_row();
  return sigmoid(dot(config.retention_coefficients, row));
}

bool simulate_retention(const WorldConfig& config, const UserDaySummary& summary, Rng& rng) {
  return rng.bernoulli(retention_probability(config, summary));
}

CategoryWeights normalized(const CategoryWeights& w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) throw PreconditionError("category distribution sums to zero");
  CategoryWeights out{};
  for (std::size_t i = 0; i < kNumCategories; ++i) out[i] = w[i] / total;
  return out;
}

Category sample_category(Rng& rng, const CategoryWeights& distribution) {
  const double total = std::accumulate(distribution.begin(), distribution.end(), 0.0);
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < kNumCategories; ++i) {
    if (distribution[i] <= 0.0) continue;
    acc += distribution[i];
    last = i;
    if (u < acc) return kAllCategories[i];
  }
  return kAllCategories[last];
}

// ---- JSON -----------------------------------------------------------------

nlohmann::json to_json(const ResponseFeatures& f) {
  return {
      {"tone_positivity", f.tone_positivity},
      {"contains_bye", f.contains_bye ? 1 : 0},
      {"followup_question", f.followup_question ? 1 : 0},
      {"is_refusal", f.is_refusal ? 1 : 0},
      {"length_tokens", f.length_tokens},
      {"helpfulness_content", f.helpfulness_content},
      {"safety_risk", f.safety_risk},
      {"nuisance", f.nuisance},
  };
}

namespace {

bool read_bit(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_boolean()) return v.get<bool>();
  const int b = v.get<int>();
  if (b != 0 && b != 1) throw DataError(std::string(key) + " must be 0 or 1");
  return b == 1;
}

nlohmann::json signal_to_json(const SignalModel& m) {
  return {{"intercept", m.intercept}, {"weights", m.weights}, {"base_rate", m.base_rate}};
}

SignalModel signal_from_json(const nlohmann::json& j) {
  SignalModel m;
  m.intercept = j.at("intercept").get<double>();
  m.weights = j.at("weights").get<std::vector<double>>();
  m.base_rate = j.at("base_rate").get<double>();
  return m;
}

}  // namespace

ResponseFeatures features_from_json(const nlohmann::json& j) {
  ResponseFeatures f;
  f.tone_positivity = j.at("tone_positivity").get<double>();
  f.contains_bye = read_bit(j, "contains_bye");
  f.followup_question = read_bit(j, "followup_question");
  f.is_refusal = read_bit(j, "is_refusal");
  f.length_tokens = j.at("length_tokens").get<std::uint32_t>();
  f.helpfulness_content = j.at("helpfulness_content").get<double>();
  f.safety_risk = j.at("safety_risk").get<double>();
  f.nuisance = j.at("nuisance").get<std::vector<double>>();
  return f;
}

nlohmann::json to_json(const WorldConfig& c) {
  nlohmann::json j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  j["nuisance_dim"] = c.nuisance_dim;
  nlohmann::json dist = nlohmann::json::object();
  nlohmann::json weights = nlohmann::json::object();
  for (Category cat : kAllCategories) {
    dist[std::string(category_name(cat))] = c.prompt_distribution[index_of(cat)];
    weights[std::string(category_name(cat))] = c.love_weights[index_of(cat)];
  }
  j["prompt_distribution"] = dist;
  j["love_weights"] = weights;
  j["love_intercept"] = c.love_intercept;
  j["love_base_rate"] = c.love_base_rate;
  j["user_affect_sd"] = c.user_affect_sd;
  j["n_users"] = c.n_users;
  j["thumbs_up"] = signal_to_json(c.thumbs_up);
  j["thumbs_down"] = signal_to_json(c.thumbs_down);
  j["retention_coefficients"] = {
      {"intercept", c.retention_coefficients[kRetIntercept]},
      {"love_count", c.retention_coefficients[kRetLove]},
      {"thumbs_up_count", c.retention_coefficients[kRetThumbsUp]},
      {"thumbs_down_count", c.retention_coefficients[kRetThumbsDown]},
      {"prompt_count", c.retention_coefficients[kRetPromptCount]},
      {"image_gen_count", c.retention_coefficients[kRetImageGenCount]},
  };
  j["violation_threshold"] = c.violation_threshold;
  j["helpfulness_scale"] = c.helpfulness_scale;
  j["followup_bonus"] = c.followup_bonus;
  j["safety_scale"] = c.safety_scale;
  nlohmann::json lib = nlohmann::json::array();
  for (const auto& r : c.response_library) {
    lib.push_back({{"response_id", r.response_id}, {"archetype", r.archetype}, {"features", to_json(r.features)}});
  }
  j["response_library"] = std::move(lib);
  return j;
}

WorldConfig world_config_from_json(const nlohmann::json& j) {
  try {
    WorldConfig c;
    c.schema_version = j.at("schema_version").get<int>();
    if (c.schema_version != kWorldSchemaVersion)
      throw DataError("world config schema_version " + std::to_string(c.schema_version) +
                      " unsupported (expected " + std::to_string(kWorldSchemaVersion) + ")");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.nuisance_dim = j.at("nuisance_dim").get<std::size_t>();
    for (Category cat : kAllCategories) {
      const std::string name(category_name(cat));
      c.prompt_distribution[index_of(cat)] = j.at("prompt_distribution").at(name).get<double>();
      c.love_weights[index_of(cat)] = j.at("love_weights").at(name).get<std::vector<double>>();
    }
    c.love_intercept = j.at("love_intercept").get<double>();
    c.love_base_rate = j.at("love_base_rate").get<double>();
    c.user_affect_sd = j.at("user_affect_sd").get<double>();
    c.n_users = j.at("n_users").get<std::uint64_t>();
    c.thumbs_up = signal_from_json(j.at("thumbs_up"));
    c.thumbs_down = signal_from_json(j.at("thumbs_down"));
    const auto& rc = j.at("retention_coefficients");
    c.retention_coefficients = {rc.at("intercept").get<double>(),       rc.at("love_count").get<double>(),
                                rc.at("thumbs_up_count").get<double>(), rc.at("thumbs_down_count").get<double>(),
                                rc.at("prompt_count").get<double>(),    rc.at("image_gen_count").get<double>()};
    c.violation_threshold = j.at("violation_threshold").get<double>();
    c.helpfulness_scale = j.at("helpfulness_scale").get<double>();
    c.followup_bonus = j.at("followup_bonus").get<double>();
    c.safety_scale = j.at("safety_scale").get<double>();
    for (const auto& r : j.at("response_library")) {
      LibraryResponse lr;
      lr.response_id = r.at("response_id").get<std::uint32_t>();
      lr.archetype = r.at("archetype").get<std::string>();
      lr.features = features_from_json(r.at("features"));
      c.response_library.push_back(std::move(lr));
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed world config: ") + e.what());
  }
}

std::uint64_t library_hash(std::span<const LibraryResponse> library) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& r : library) {
    const nlohmann::json j = {{"response_id", r.response_id}, {"archetype", r.archetype},
                              {"features", to_json(r.features)}};
    h = fnv1a64(j.dump(), h);
  }
  return h;
}

// ---- World ----------------------------------------------------------------

World::World(WorldConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t n = library_size();
  love_table_ = love_feature_table(config_);
  expected_love_table_.resize(love_table_.size());
  for (std::size_t i = 0; i < love_table_.size(); ++i)
    expected_love_table_[i] = expected_sigmoid(config_.love_intercept + love_table_[i], config_.user_affect_sd);
  up_table_.resize(n);
  down_table_.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    up_table_[r] = signal_probability(config_.thumbs_up, config_.response_library[r].features);
    down_table_[r] = signal_probability(config_.thumbs_down, config_.response_library[r].features);
  }
  users_.reserve(config_.n_users);
  for (std::uint64_t u = 0; u < config_.n_users; ++u) users_.push_back(make_user(config_, u));
  const auto dist = normalized(config_.prompt_distribution);
  double acc = 0.0;
  for (std::size_t i = 0; i < kNumCategories; ++i) {
    acc += dist[i];
    category_cdf_[i] = acc;
  }
  library_hash_ = rluf::library_hash(config_.response_library);
}

double World::love_probability(Category c, std::size_t response_id, const UserProfile& user) const {
  return sigmoid(config_.love_intercept + user.affect_bias + love_feature_logit(c, response_id));
}

double World::expected_love_probability(Category c, std::size_t response_id) const {
  return expected_love_table_[index_of(c) * library_size() + response_id];
}

FeedbackLabels World::sample_feedback(Category c, std::size_t response_id, const UserProfile& user,
                                      Rng& rng) const {
  FeedbackLabels l;
  l.love = rng.bernoulli(love_probability(c, response_id, user));
  l.thumbs_up = rng.bernoulli(up_table_[response_id]);
  l.thumbs_down = rng.bernoulli(down_table_[response_id]);
  return l;
}

Category World::sample_category(Rng& rng) const {
  const double u = rng.uniform();
  for (std::size_t i = 0; i < kNumCategories; ++i) {
    if (u < category_cdf_[i] && config_.prompt_distribution[i] > 0.0) return kAllCategories[i];
  }
  for (std::size_t i = kNumCategories; i-- > 0;) {
    if (config_.prompt_distribution[i] > 0.0) return kAllCategories[i];
  }
  return kAllCategories[0];
}

Category World::sample_category(Rng& rng, const CategoryWeights& distribution) const {
  return rluf::sample_category(rng, distribution);
}

}  // namespace rluf
