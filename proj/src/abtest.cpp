#include "rluf/abtest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rluf/error.hpp"
#include "rluf/format.hpp"

namespace rluf {

ArmSummary make_arm_summary(std::string name, std::uint64_t successes, std::uint64_t n) {
  require(n >= 1, "arm needs at least one prompt");
  require(successes <= n, "arm successes exceed prompts");
  ArmSummary a;
  a.arm_name = std::move(name);
  a.n_prompts = n;
  a.successes = successes;
  a.rate = static_cast<double>(successes) / static_cast<double>(n);
  return a;
}

ArmSummary make_arm_summary(std::string name, const TrafficTally& tally) {
  ArmSummary a = make_arm_summary(std::move(name), tally.loves(), tally.total());
  for (std::size_t k = 0; k < kNumCategories; ++k) {
    a.category_prompts[k] = tally.per_category[k].n;
    a.category_successes[k] = tally.per_category[k].love;
  }
  a.tally = tally;
  return a;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

ABTestResult two_proportion_test(std::uint64_t s_c, std::uint64_t n_c, std::uint64_t s_t, std::uint64_t n_t) {
  require(n_c >= 1 && n_t >= 1, "two_proportion_test: arm sizes must be positive");
  require(s_c <= n_c && s_t <= n_t, "two_proportion_test: successes exceed arm size");
  ABTestResult r;
  const double nc = static_cast<double>(n_c);
  const double nt = static_cast<double>(n_t);
  r.p_control = static_cast<double>(s_c) / nc;
  r.p_treatment = static_cast<double>(s_t) / nt;
  r.delta = r.p_treatment - r.p_control;
  r.se = std::sqrt(r.p_treatment * (1.0 - r.p_treatment) / nt + r.p_control * (1.0 - r.p_control) / nc);
  r.ci_lo = r.delta - 1.96 * r.se;
  r.ci_hi = r.delta + 1.96 * r.se;
  r.p_pooled = n_c == n_t ? (r.p_treatment + r.p_control) / 2.0 : static_cast<double>(s_c + s_t) / (nc + nt);
  r.se_pooled = std::sqrt(r.p_pooled * (1.0 - r.p_pooled) * (1.0 / nt + 1.0 / nc));
  if (r.se_pooled > 0.0) {
    r.z = r.delta / r.se_pooled;
    // 2 (1 - Phi(|z|)) written as erfc to keep precision in the tail.
    r.p_value = std::erfc(std::abs(r.z) / std::numbers::sqrt2);
  } else {
    r.z = 0.0;
    r.p_value = 1.0;
  }
  return r;
}

ABTestResult two_proportion_test(const ArmSummary& control, const ArmSummary& treatment) {
  return two_proportion_test(control.successes, control.n_prompts, treatment.successes, treatment.n_prompts);
}

std::vector<ArmSummary> run_ab(const World& world, std::span<const std::pair<std::string, Policy>> arms,
                               std::uint64_t n_per_arm, std::uint64_t seed) {
  require(arms.size() >= 2, "run_ab needs at least two arms");
  require(n_per_arm >= 1, "run_ab needs n_per_arm >= 1");
  std::vector<ArmSummary> out;
  out.reserve(arms.size());
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const TrafficTally t = tally_traffic(world, arms[i].second, n_per_arm, derive_seed(seed, "ab_arm", i));
    out.push_back(make_arm_summary(arms[i].first, t));
  }
  return out;
}

std::vector<SegmentResult> segment_report(const ArmSummary& control, const ArmSummary& treatment) {
  std::vector<SegmentResult> out;
  for (Category c : kAllCategories) {
    const std::size_t k = index_of(c);
    SegmentResult s;
    s.category = c;
    s.n_control = control.category_prompts[k];
    s.n_treatment = treatment.category_prompts[k];
    if (s.n_control > 0 && s.n_treatment > 0)
      s.result = two_proportion_test(control.category_successes[k], s.n_control, treatment.category_successes[k],
                                     s.n_treatment);
    out.push_back(s);
  }
  std::stable_sort(out.begin(), out.end(), [](const SegmentResult& a, const SegmentResult& b) {
    if (a.result.has_value() != b.result.has_value()) return a.result.has_value();
    if (!a.result) return false;
    return a.result->delta > b.result->delta;
  });
  return out;
}

nlohmann::json to_json(const ABTestResult& r) {
  return {{"p_control", round_sig(r.p_control, 9)}, {"p_treatment", round_sig(r.p_treatment, 9)},
          {"delta", round_sig(r.delta, 9)},         {"se", round_sig(r.se, 9)},
          {"ci95", {round_sig(r.ci_lo, 9), round_sig(r.ci_hi, 9)}},
          {"p_pooled", round_sig(r.p_pooled, 9)},   {"se_pooled", round_sig(r.se_pooled, 9)},
          {"z", round_sig(r.z, 9)},                 {"p_value", round_sig(r.p_value, 9)}};
}

nlohmann::json to_json(const ArmSummary& a) {
  nlohmann::json per = nlohmann::json::object();
  for (Category c : kAllCategories) {
    const std::size_t k = index_of(c);
    per[std::string(category_name(c))] = {{"n", a.category_prompts[k]}, {"successes", a.category_successes[k]}};
  }
  return {{"arm", a.arm_name},
          {"n_prompts", a.n_prompts},
          {"successes", a.successes},
          {"rate", round_sig(a.rate, 9)},
          {"per_category", per}};
}

nlohmann::json ab_report_json(std::span<const ArmSummary> arms, bool with_segments) {
  require(arms.size() >= 2, "A/B report needs a control and at least one treatment");
  nlohmann::json j;
  j["control"] = arms[0].arm_name;
  j["arms"] = nlohmann::json::array();
  for (const auto& a : arms) j["arms"].push_back(to_json(a));
  j["comparisons"] = nlohmann::json::array();
  for (std::size_t i = 1; i < arms.size(); ++i) {
    nlohmann::json cmp = {{"treatment", arms[i].arm_name}, {"test", to_json(two_proportion_test(arms[0], arms[i]))}};
    if (with_segments) {
      nlohmann::json segs = nlohmann::json::array();
      for (const auto& s : segment_report(arms[0], arms[i])) {
        nlohmann::json e = {{"category", category_name(s.category)},
                            {"n_control", s.n_control},
                            {"n_treatment", s.n_treatment}};
        e["test"] = s.result ? to_json(*s.result) : nlohmann::json(nullptr);
        if (!s.result) e["note"] = "undefined: no traffic in one arm";
        segs.push_back(e);
      }
      cmp["segments"] = segs;
    }
    j["comparisons"].push_back(cmp);
  }
  if (with_segments) j["note"] = kNoCorrectionNote;
  return j;
}

namespace {

void write_test_row(std::ostringstream& os, const ABTestResult& r) {
  os << format_sig(r.p_control, 9) << ',' << format_sig(r.p_treatment, 9) << ',' << format_sig(r.delta, 9) << ','
     << format_sig(r.se, 9) << ',' << format_sig(r.ci_lo, 9) << ',' << format_sig(r.ci_hi, 9) << ','
     << format_sig(r.p_pooled, 9) << ',' << format_sig(r.se_pooled, 9) << ',' << format_sig(r.z, 9) << ','
     << format_sig(r.p_value, 9);
}

constexpr std::string_view kTestColumns = "p_control,p_treatment,delta,se,ci_lo,ci_hi,p_pooled,se_pooled,z,p_value";

}  // namespace

std::string ab_report_csv(std::span<const ArmSummary> arms) {
  std::ostringstream os;
  os << "control,treatment,n_control,successes_control,n_treatment,successes_treatment," << kTestColumns << '\n';
  for (std::size_t i = 1; i < arms.size(); ++i) {
    os << arms[0].arm_name << ',' << arms[i].arm_name << ',' << arms[0].n_prompts << ',' << arms[0].successes << ','
       << arms[i].n_prompts << ',' << arms[i].successes << ',';
    write_test_row(os, two_proportion_test(arms[0], arms[i]));
    os << '\n';
  }
  return os.str();
}

std::string segment_report_csv(std::string_view treatment, std::span<const SegmentResult> segments) {
  std::ostringstream os;
  os << "treatment,category,n_control,n_treatment," << kTestColumns << '\n';
  for (const auto& s : segments) {
    os << treatment << ',' << category_name(s.category) << ',' << s.n_control << ',' << s.n_treatment << ',';
    if (s.result) {
      write_test_row(os, *s.result);
    } else {
      os << "undefined,,,,,,,,,";
    }
    os << '\n';
  }
  os << "# " << kNoCorrectionNote << '\n';
  return os.str();
}

}  // namespace rluf
