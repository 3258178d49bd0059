#include "rluf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "rluf/error.hpp"
#include "rluf/format.hpp"
#include "rluf/kernels.hpp"
#include "rluf/math.hpp"

namespace rluf {

std::vector<double> LogisticFit::odds_ratios() const {
  std::vector<double> out;
  out.reserve(coefficients.size());
  for (double b : coefficients) out.push_back(std::exp(b));
  return out;
}

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Columns that do not raise the rank of the columns before them.
std::vector<std::size_t> dependent_columns(const Matrix& x) {
  std::vector<std::size_t> dependent;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Matrix sub(x.rows(), static_cast<Eigen::Index>(kept.size()) + 1);
    for (std::size_t k = 0; k < kept.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = x.col(kept[k]);
    sub.col(sub.cols() - 1) = x.col(j);
    Eigen::ColPivHouseholderQR<Matrix> qr(sub);
    qr.setThreshold(1e-10);
    if (qr.rank() == sub.cols()) {
      kept.push_back(j);
    } else {
      dependent.push_back(static_cast<std::size_t>(j));
    }
  }
  return dependent;
}

}  // namespace

LogisticFit fit_logistic(std::span<const double> xs, std::span<const std::uint8_t> y, std::size_t p,
                         std::vector<std::string> names, const IrlsOptions& options) {
  require(p > 0 && names.size() == p, "fit_logistic: one name per column required");
  require(xs.size() == y.size() * p, "fit_logistic: design matrix shape mismatch");
  const auto n = static_cast<Eigen::Index>(y.size());
  std::size_t ones = 0;
  for (auto v : y) ones += v != 0 ? 1 : 0;
  if (ones == 0 || ones == y.size()) throw PreconditionError("fit_logistic: outcome has a single value");

  const Eigen::Map<const Matrix> x(xs.data(), n, static_cast<Eigen::Index>(p));
  const auto dependent = dependent_columns(x);
  if (!dependent.empty()) {
    std::string cols;
    for (std::size_t j : dependent) cols += (cols.empty() ? "" : ", ") + names[j];
    throw PreconditionError("rank-deficient design: column(s) " + cols + " collinear with preceding columns");
  }

  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv[i] = y[static_cast<std::size_t>(i)] != 0 ? 1.0 : 0.0;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  Eigen::VectorXd mu(n), w(n);
  LogisticFit fit;
  fit.names = std::move(names);

  bool converged = false;
  Eigen::MatrixXd info;
  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    const Eigen::VectorXd eta = x * beta;
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = sigmoid(eta[i]);
      w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-300);
    }
    info = x.transpose() * w.asDiagonal() * x;
    const Eigen::VectorXd score = x.transpose() * (yv - mu);
    const Eigen::VectorXd step = info.ldlt().solve(score);
    if (!step.allFinite()) throw NumericalError("fit_logistic: non-finite IRLS step at iteration " + std::to_string(it));
    beta += step;
    fit.iterations = it;
    if (beta.cwiseAbs().maxCoeff() > options.divergence_bound)
      throw NumericalError("fit_logistic: separation detected (coefficients diverging at iteration " +
                           std::to_string(it) + ")");
    if (step.cwiseAbs().maxCoeff() < options.tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw NumericalError("fit_logistic: IRLS did not converge in " + std::to_string(options.max_iterations) +
                         " iterations");

  const Eigen::VectorXd eta = x * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    mu[i] = sigmoid(eta[i]);
    w[i] = mu[i] * (1.0 - mu[i]);
    ll += yv[i] > 0.5 ? -softplus(-eta[i]) : -softplus(eta[i]);
  }
  info = x.transpose() * w.asDiagonal() * x;
  const Eigen::MatrixXd cov = info.inverse();
  fit.coefficients.assign(beta.data(), beta.data() + beta.size());
  for (Eigen::Index j = 0; j < cov.rows(); ++j) fit.standard_errors.push_back(std::sqrt(cov(j, j)));
  fit.log_likelihood = ll;
  return fit;
}

LogisticFit fit_retention_regression(std::span<const UserDaySummary> summaries, const IrlsOptions& options) {
  require(!summaries.empty(), "fit_retention_regression: no summaries");
  std::vector<double> x;
  std::vector<std::uint8_t> y;
  x.reserve(summaries.size() * kNumRetentionTerms);
  y.reserve(summaries.size());
  for (const auto& s : summaries) {
    if (s.love_count > s.prompt_count || s.thumbs_up_count > s.prompt_count || s.thumbs_down_count > s.prompt_count ||
        s.image_gen_count > s.prompt_count)
      throw DataError("user " + std::to_string(s.user_id) + ": signal counts exceed prompt count");
    const auto row = s.design_row();
    x.insert(x.end(), row.begin(), row.end());
    y.push_back(s.retained ? 1 : 0);
  }
  return fit_logistic(x, y, kNumRetentionTerms,
                      {"intercept", "love_count", "thumbs_up_count", "thumbs_down_count", "prompt_count",
                       "image_gen_count"},
                      options);
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), "pearson: length mismatch");
  require(xs.size() >= 2, "pearson: needs at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedMetricError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> p_love_table(const RewardModel& rm, const World& world) {
  auto t = kernels::omp::score_table(rm, world);
  for (double& v : t) v = sigmoid(v);
  return t;
}

std::vector<double> true_love_table(const World& world) {
  const std::size_t n = world.library_size();
  std::vector<double> t(kNumCategories * n);
  for (Category c : kAllCategories)
    for (std::size_t r = 0; r < n; ++r) t[index_of(c) * n + r] = world.expected_love_probability(c, r);
  return t;
}

BacktestResult backtest(const World& world, std::span<const double> offline_table,
                        std::span<const NamedPolicy> candidates, std::size_t prompt_set_size, std::uint64_t n_online,
                        std::uint64_t seed) {
  require(candidates.size() >= 3, "backtest needs at least three candidates");
  require(prompt_set_size >= 1 && n_online >= 1, "backtest sizes must be positive");
  const auto prompts = make_prompt_set(world.config().prompt_distribution, prompt_set_size,
                                       derive_seed(seed, "backtest_prompts"));
  BacktestResult out;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    BacktestPoint pt;
    pt.candidate_name = candidates[i].name;
    pt.offline_mean_score = expected_score(candidates[i].policy, offline_table, prompts);
    const TrafficTally t = tally_traffic(world, candidates[i].policy, n_online, derive_seed(seed, "backtest_online", i));
    pt.online_prompts = t.total();
    pt.online_loves = t.loves();
    pt.online_love_rate = static_cast<double>(pt.online_loves) / static_cast<double>(pt.online_prompts);
    xs.push_back(pt.offline_mean_score);
    ys.push_back(pt.online_love_rate);
    out.points.push_back(pt);
  }
  try {
    out.r = pearson(xs, ys);
  } catch (const UndefinedMetricError&) {
    out.r.reset();
  }
  return out;
}

BacktestResult backtest(const World& world, const RewardModel& rm, std::span<const NamedPolicy> candidates,
                        std::size_t prompt_set_size, std::uint64_t n_online, std::uint64_t seed) {
  const auto table = p_love_table(rm, world);
  return backtest(world, table, candidates, prompt_set_size, n_online, seed);
}

HackingReport hacking_report(const TrafficTally& t, std::string name) {
  const std::uint64_t n = t.total();
  require(n > 0, "hacking_report: empty traffic");
  const double dn = static_cast<double>(n);
  HackingReport r;
  r.name = std::move(name);
  r.n = n;
  r.bye_rate = static_cast<double>(t.bye) / dn;
  r.followup_rate = static_cast<double>(t.followup) / dn;
  r.refusal_rate = static_cast<double>(t.refusal) / dn;
  r.mean_length = static_cast<double>(t.length_sum) / dn;
  r.mean_tone = t.tone_sum / dn;
  return r;
}

HackingReport hacking_report(std::span<const ConversationTurn> log, std::string name) {
  require(!log.empty(), "hacking_report: empty log");
  return hacking_report(tally_log(log), std::move(name));
}

namespace {

std::optional<double> ratio(double v, double base) {
  if (base == 0.0) return std::nullopt;
  return v / base;
}

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(round_sig(*v, 9)) : nlohmann::json(nullptr);
}

}  // namespace

std::vector<HackingDelta> compare_hacking(std::span<const HackingReport> reports, std::string_view baseline) {
  const auto it = std::find_if(reports.begin(), reports.end(), [&](const auto& r) { return r.name == baseline; });
  if (it == reports.end()) throw PreconditionError("compare_hacking: no report named '" + std::string(baseline) + "'");
  std::vector<HackingDelta> out;
  for (const auto& r : reports) {
    HackingDelta d;
    d.name = r.name;
    d.baseline = it->name;
    d.bye_ratio = ratio(r.bye_rate, it->bye_rate);
    d.followup_ratio = ratio(r.followup_rate, it->followup_rate);
    d.refusal_ratio = ratio(r.refusal_rate, it->refusal_rate);
    d.length_ratio = ratio(r.mean_length, it->mean_length);
    d.tone_ratio = ratio(r.mean_tone, it->mean_tone);
    out.push_back(d);
  }
  return out;
}

nlohmann::json to_json(const LogisticFit& fit) {
  nlohmann::json terms = nlohmann::json::array();
  const auto odds = fit.odds_ratios();
  for (std::size_t j = 0; j < fit.coefficients.size(); ++j) {
    terms.push_back({{"name", fit.names[j]},
                     {"coefficient", round_sig(fit.coefficients[j], 9)},
                     {"standard_error", round_sig(fit.standard_errors[j], 9)},
                     {"z", round_sig(fit.coefficients[j] / fit.standard_errors[j], 9)},
                     {"odds_ratio", round_sig(odds[j], 9)}});
  }
  return {{"terms", terms}, {"iterations", fit.iterations}, {"log_likelihood", round_sig(fit.log_likelihood, 9)}};
}

nlohmann::json to_json(const BacktestResult& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.points) {
    pts.push_back({{"candidate", p.candidate_name},
                   {"offline_mean_score", round_sig(p.offline_mean_score, 9)},
                   {"online_love_rate", round_sig(p.online_love_rate, 9)},
                   {"online_prompts", p.online_prompts},
                   {"online_loves", p.online_loves}});
  }
  nlohmann::json j = {{"points", pts}};
  j["pearson_r"] = r.r ? nlohmann::json(round_sig(*r.r, 9)) : nlohmann::json(nullptr);
  if (!r.r) j["note"] = "pearson r undefined: zero variance across candidates";
  return j;
}

std::string backtest_csv(const BacktestResult& r) {
  std::ostringstream os;
  os << "candidate,offline_mean_score,online_love_rate,online_prompts,online_loves\n";
  for (const auto& p : r.points) {
    os << p.candidate_name << ',' << format_sig(p.offline_mean_score, 9) << ',' << format_sig(p.online_love_rate, 9)
       << ',' << p.online_prompts << ',' << p.online_loves << '\n';
  }
  return os.str();
}

nlohmann::json to_json(const HackingReport& r) {
  return {{"name", r.name},
          {"n", r.n},
          {"bye_rate", round_sig(r.bye_rate, 9)},
          {"followup_rate", round_sig(r.followup_rate, 9)},
          {"refusal_rate", round_sig(r.refusal_rate, 9)},
          {"mean_length", round_sig(r.mean_length, 9)},
          {"mean_tone", round_sig(r.mean_tone, 9)}};
}

nlohmann::json to_json(const HackingDelta& d) {
  return {{"name", d.name},          {"baseline", d.baseline},          {"bye_ratio", opt(d.bye_ratio)},
          {"followup_ratio", opt(d.followup_ratio)}, {"refusal_ratio", opt(d.refusal_ratio)},
          {"length_ratio", opt(d.length_ratio)},     {"tone_ratio", opt(d.tone_ratio)}};
}

std::string hacking_csv(std::span<const HackingReport> reports) {
  std::ostringstream os;
  os << "name,n,bye_rate,followup_rate,refusal_rate,mean_length,mean_tone\n";
  for (const auto& r : reports) {
    os << r.name << ',' << r.n << ',' << format_sig(r.bye_rate, 9) << ',' << format_sig(r.followup_rate, 9) << ','
       << format_sig(r.refusal_rate, 9) << ',' << format_sig(r.mean_length, 9) << ',' << format_sig(r.mean_tone, 9)
       << '\n';
  }
  return os.str();
}

}  // namespace rluf
