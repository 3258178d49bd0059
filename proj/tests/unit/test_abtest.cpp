#include <doctest.h>

#include <boost/math/special_functions/erf.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>

#include "rluf/abtest.hpp"
#include "rluf/error.hpp"
#include "rluf/format.hpp"

using namespace rluf;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

const World& world() {
  static const World w(default_world_config());
  return w;
}

// p-value recomputed entirely in 50-digit arithmetic.
double oracle_p(std::uint64_t sc, std::uint64_t nc, std::uint64_t st, std::uint64_t nt) {
  const Big pc = Big(sc) / Big(nc), pt = Big(st) / Big(nt);
  const Big pool = nc == nt ? (pc + pt) / 2 : Big(sc + st) / Big(nc + nt);
  const Big se = sqrt(pool * (1 - pool) * (Big(1) / nc + Big(1) / nt));
  const Big z = abs(pt - pc) / se;
  return boost::math::erfc(z / sqrt(Big(2))).convert_to<double>();
}

}  // namespace

TEST_CASE("reference A/B numbers") {
  const auto a = two_proportion_test(1000, 1'000'000, 1097, 1'000'000);
  CHECK(round_sig(a.delta, 2) == 9.7e-5);
  CHECK(round_sig(a.ci_lo, 2) == 7.3e-6);
  CHECK(round_sig(a.ci_hi, 2) == 1.9e-4);
  CHECK(round_sig(a.p_value, 2) == 3.4e-2);
  const auto b = two_proportion_test(1000, 1'000'000, 1280, 1'000'000);
  CHECK(round_sig(b.delta, 2) == 2.8e-4);
  CHECK(round_sig(b.ci_lo, 2) == 1.9e-4);
  CHECK(round_sig(b.ci_hi, 2) == 3.7e-4);
  CHECK(round_sig(b.p_value, 2) == 4.4e-9);
}

TEST_CASE("p-values agree with a high-precision oracle") {
  const std::uint64_t cases[][4] = {{1000, 1'000'000, 1097, 1'000'000},
                                    {1000, 1'000'000, 1280, 1'000'000},
                                    {5, 100, 9, 140},
                                    {100, 1000, 300, 1000},
                                    {50, 700, 51, 700}};
  for (const auto& c : cases) {
    const double ref = oracle_p(c[0], c[1], c[2], c[3]);
    CHECK(two_proportion_test(c[0], c[1], c[2], c[3]).p_value == doctest::Approx(ref).epsilon(1e-12));
  }
  for (double z : {-6.0, -1.0, 0.0, 0.5, 3.0}) {
    const Big ref = boost::math::erfc(-Big(z) / sqrt(Big(2))) / 2;
    CHECK(normal_cdf(z) == doctest::Approx(ref.convert_to<double>()).epsilon(1e-14));
  }
}

TEST_CASE("degenerate and invalid counts") {
  const auto r = two_proportion_test(0, 100, 0, 100);
  CHECK(r.z == 0.0);
  CHECK(r.p_value == 1.0);
  CHECK(r.delta == 0.0);
  CHECK_THROWS_AS(two_proportion_test(5, 0, 1, 10), PreconditionError);
  CHECK_THROWS_AS(two_proportion_test(11, 10, 1, 10), PreconditionError);
  const auto s = make_arm_summary("x", 3, 10);
  CHECK(s.rate == 0.3);
}

TEST_CASE("simulated A/B arms") {
  const std::vector<std::pair<std::string, Policy>> arms{{"a", Policy::uniform(world())},
                                                         {"b", Policy::uniform(world())}};
  const auto res = run_ab(world(), arms, 50000, 3);
  REQUIRE(res.size() == 2);
  CHECK(res[0].n_prompts == 50000);
  CHECK(res[0].successes != res[1].successes);
  CHECK(run_ab(world(), arms, 50000, 3)[1].successes == res[1].successes);
  CHECK_THROWS_AS(run_ab(world(), std::span(arms).first(1), 10, 1), PreconditionError);
  CHECK_THROWS_AS(run_ab(world(), arms, 0, 1), PreconditionError);

  const auto segs = segment_report(res[0], res[1]);
  CHECK(segs.size() == kNumCategories);
  for (std::size_t i = 1; i < segs.size(); ++i)
    if (segs[i].result && segs[i - 1].result) CHECK(segs[i - 1].result->delta >= segs[i].result->delta);
  const auto csv = segment_report_csv("b", segs);
  CHECK(csv.find(std::string(kNoCorrectionNote)) != std::string::npos);
  const auto j = ab_report_json(res, true);
  CHECK(j.at("comparisons").size() == 1);
  CHECK(j.at("comparisons")[0].at("segments").size() == kNumCategories);
  CHECK(ab_report_csv(res).find("b") != std::string::npos);
}

TEST_CASE("segments without traffic are undefined and listed last") {
  ArmSummary c = make_arm_summary("c", 10, 1000);
  ArmSummary t = make_arm_summary("t", 20, 1000);
  c.category_prompts[0] = 1000;
  c.category_successes[0] = 10;
  t.category_prompts[0] = 500;
  t.category_successes[0] = 10;
  t.category_prompts[1] = 500;
  t.category_successes[1] = 10;
  const auto segs = segment_report(c, t);
  CHECK(segs.front().result.has_value());
  CHECK_FALSE(segs.back().result.has_value());
  CHECK(segment_report_csv("t", segs).find("undefined") != std::string::npos);
}
