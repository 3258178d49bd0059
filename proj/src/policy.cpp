#include "rluf/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rluf/error.hpp"

namespace rluf {

Policy::Policy(std::size_t library_size, std::uint64_t library_hash)
    : logits_(kNumCategories * library_size, 0.0), library_size_(library_size), library_hash_(library_hash) {
  require(library_size > 0, "policy over an empty library");
}

Policy::Policy(std::vector<double> logits, std::size_t library_size, std::uint64_t library_hash,
               double temperature)
    : logits_(std::move(logits)),
      library_size_(library_size),
      library_hash_(library_hash),
      temperature_(temperature) {
  require(library_size > 0, "policy over an empty library");
  require(logits_.size() == kNumCategories * library_size, "policy logits must be categories x library");
  require(temperature > 0.0 && std::isfinite(temperature), "policy temperature must be positive");
}

void Policy::probabilities(Category c, std::span<double> out) const {
  const auto row = logits(c);
  double m = -std::numeric_limits<double>::infinity();
  for (double v : row) m = std::max(m, v / temperature_);
  double z = 0.0;
  for (std::size_t r = 0; r < library_size_; ++r) {
    out[r] = std::exp(row[r] / temperature_ - m);
    z += out[r];
  }
  for (double& p : out) p /= z;
}

std::vector<double> Policy::probabilities(Category c) const {
  std::vector<double> p(library_size_);
  probabilities(c, p);
  return p;
}

std::vector<double> Policy::log_probabilities(Category c) const {
  const auto row = logits(c);
  double m = -std::numeric_limits<double>::infinity();
  for (double v : row) m = std::max(m, v / temperature_);
  double z = 0.0;
  for (double v : row) z += std::exp(v / temperature_ - m);
  const double lse = m + std::log(z);
  std::vector<double> out(library_size_);
  for (std::size_t r = 0; r < library_size_; ++r) out[r] = row[r] / temperature_ - lse;
  return out;
}

void Policy::check_library(const World& world) const {
  if (library_size_ != world.library_size() || library_hash_ != world.library_hash())
    throw DataError("policy was built for a different response library");
}

std::uint64_t Policy::fingerprint() const {
  std::uint64_t h = splitmix64(library_hash_ ^ std::bit_cast<std::uint64_t>(temperature_));
  for (double v : logits_) h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v));
  return h;
}

PolicySampler::PolicySampler(const Policy& policy)
    : n_(policy.library_size()), probs_(kNumCategories * n_), cdf_(kNumCategories * n_) {
  for (Category c : kAllCategories) {
    const std::size_t off = index_of(c) * n_;
    policy.probabilities(c, std::span<double>(probs_.data() + off, n_));
    double acc = 0.0;
    for (std::size_t r = 0; r < n_; ++r) {
      acc += probs_[off + r];
      cdf_[off + r] = acc;
    }
    cdf_[off + n_ - 1] = std::numeric_limits<double>::infinity();
  }
}

std::size_t PolicySampler::sample(Category c, Rng& rng) const {
  const double u = rng.uniform();
  const auto begin = cdf_.begin() + static_cast<std::ptrdiff_t>(index_of(c) * n_);
  const auto it = std::upper_bound(begin, begin + static_cast<std::ptrdiff_t>(n_), u);
  return static_cast<std::size_t>(it - begin);
}

std::size_t sample_response(const Policy& policy, const PromptContext& ctx, Rng& rng) {
  const auto p = policy.probabilities(ctx.category);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t r = 0; r + 1 < p.size(); ++r) {
    acc += p[r];
    if (u < acc) return r;
  }
  return p.size() - 1;
}

KlResult kl_divergence(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), "kl: distributions of different size");
  KlResult out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) {
      out.infinite = true;
      out.nats = std::numeric_limits<double>::infinity();
      return out;
    }
    out.nats += p[i] * std::log(p[i] / q[i]);
  }
  return out;
}

KlResult kl_to_base(const Policy& policy, const Policy& base, const CategoryWeights& prompt_distribution) {
  if (policy.library_size() != base.library_size() || policy.library_hash() != base.library_hash())
    throw DataError("kl_to_base: policy and base use different libraries");
  const auto dist = normalized(prompt_distribution);
  KlResult total;
  for (Category c : kAllCategories) {
    const double w = dist[index_of(c)];
    if (w == 0.0) continue;
    const auto row = kl_divergence(policy.probabilities(c), base.probabilities(c));
    if (row.infinite) return row;
    total.nats += w * row.nats;
  }
  return total;
}

double expected_score(const Policy& policy, const CellScorer& scorer, std::span<const Category> prompt_set) {
  require(!prompt_set.empty(), "expected_score: empty prompt set");
  std::array<std::size_t, kNumCategories> counts{};
  for (Category c : prompt_set) ++counts[index_of(c)];
  double total = 0.0;
  for (Category c : kAllCategories) {
    if (counts[index_of(c)] == 0) continue;
    const auto p = policy.probabilities(c);
    double e = 0.0;
    for (std::size_t r = 0; r < p.size(); ++r) e += p[r] * scorer(c, r);
    total += static_cast<double>(counts[index_of(c)]) * e;
  }
  return total / static_cast<double>(prompt_set.size());
}

double expected_score(const Policy& policy, std::span<const double> score_table,
                      std::span<const Category> prompt_set) {
  const std::size_t n = policy.library_size();
  require(score_table.size() == kNumCategories * n, "expected_score: score table shape mismatch");
  return expected_score(
      policy, [&](Category c, std::size_t r) { return score_table[index_of(c) * n + r]; }, prompt_set);
}

std::vector<Category> make_prompt_set(const CategoryWeights& distribution, std::size_t n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "prompt_set"));
  std::vector<Category> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_category(rng, distribution));
  return out;
}

nlohmann::json to_json(const Policy& policy) {
  nlohmann::json rows = nlohmann::json::object();
  for (Category c : kAllCategories) {
    const auto l = policy.logits(c);
    rows[std::string(category_name(c))] = std::vector<double>(l.begin(), l.end());
  }
  std::ostringstream hash;
  hash << std::hex << policy.library_hash();
  nlohmann::json j = {{"schema_version", 1},
                      {"temperature", policy.temperature()},
                      {"library_size", policy.library_size()},
                      {"library_hash", hash.str()},
                      {"logits", rows}};
  if (policy.base_ref()) {
    std::ostringstream b;
    b << std::hex << *policy.base_ref();
    j["base_ref"] = b.str();
  }
  return j;
}

Policy policy_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != 1) throw DataError("policy schema_version unsupported");
    const auto n = j.at("library_size").get<std::size_t>();
    const auto hash = std::stoull(j.at("library_hash").get<std::string>(), nullptr, 16);
    std::vector<double> logits;
    logits.reserve(kNumCategories * n);
    for (Category c : kAllCategories) {
      const auto row = j.at("logits").at(std::string(category_name(c))).get<std::vector<double>>();
      if (row.size() != n) throw DataError("policy logits row has wrong length");
      logits.insert(logits.end(), row.begin(), row.end());
    }
    Policy p(std::move(logits), n, hash, j.at("temperature").get<double>());
    if (j.contains("base_ref")) p.set_base_ref(std::stoull(j.at("base_ref").get<std::string>(), nullptr, 16));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed policy file: ") + e.what());
  }
}

}  // namespace rluf
