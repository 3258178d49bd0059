#include <doctest.h>

#include <sstream>

#include "rluf/conversation_log.hpp"
#include "rluf/error.hpp"
#include "rluf/kernels.hpp"
#include "rluf/traffic.hpp"

using namespace rluf;

namespace {

const World& world() {
  static const World w(default_world_config());
  return w;
}

LabeledDataset toy(std::size_t pos, std::size_t neg) {
  LabeledDataset d;
  d.dim = 2;
  for (std::size_t i = 0; i < pos; ++i) d.push_back(std::vector<double>{1.0, double(i)}, true);
  for (std::size_t i = 0; i < neg; ++i) d.push_back(std::vector<double>{0.0, double(i)}, false);
  d.refresh_positive_fraction();
  return d;
}

}  // namespace

TEST_CASE("JSONL round-trip with a header line") {
  const auto log = simulate_traffic(world(), Policy::uniform(world()), 500, 9);
  std::stringstream ss;
  const nlohmann::json header = {{"seed", 9}};
  write_jsonl(ss, log, &header);
  CHECK(ss.str().rfind("{\"log_header\"", 0) == 0);
  CHECK(ingest(ss) == log);
}

TEST_CASE("ingest names the malformed line") {
  const auto log = simulate_traffic(world(), Policy::uniform(world()), 3, 9);
  std::stringstream ss;
  write_jsonl(ss, log);
  std::string text = ss.str() + "{not json}\n";
  std::stringstream bad(text);
  try {
    ingest(bad);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  auto j = to_json(log[0]);
  j["labels"]["love"] = "maybe";
  std::stringstream bad2(j.dump() + "\n");
  CHECK_THROWS_AS(ingest(bad2), DataError);
}

TEST_CASE("simulated traffic is deterministic and thread-count independent") {
  const auto a = simulate_traffic(world(), Policy::uniform(world()), 40000, 4);
  kernels::set_thread_count(3);
  const auto b = simulate_traffic(world(), Policy::uniform(world()), 40000, 4);
  kernels::set_thread_count(0);
  CHECK(a == b);
  CHECK(a.size() == 40000);
  CHECK(tally_log(a) == tally_traffic(world(), Policy::uniform(world()), 40000, 4));
  CHECK(simulate_traffic(world(), Policy::uniform(world()), 0, 4).empty());
  const Policy alien(10, 1);
  CHECK_THROWS_AS(simulate_traffic(world(), alien, 5, 4), DataError);
}

TEST_CASE("model input is the category one-hot followed by features") {
  const auto& f = world().response(3).features;
  const auto x = encode_model_input(Category::kCoding, f);
  CHECK(x.size() == model_input_dim(4));
  for (std::size_t c = 0; c < kNumCategories; ++c) CHECK(x[c] == (c == index_of(Category::kCoding) ? 1.0 : 0.0));
  CHECK(x[kNumCategories + 5] == f.helpfulness_content);
}

TEST_CASE("upsampling reaches the target fraction") {
  const auto d = toy(10, 990);
  const auto up = upsample_positives(d, 0.10, 1);
  CHECK(std::abs(up.positive_fraction - 0.10) <= 0.001);
  CHECK(up.size() - up.positives() == 990);
  const auto w = upsample_as_weights(d, 0.10, 1);
  CHECK(w.size() == d.size());
  double pos_w = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    tot += w.weight(i);
    if (w.labels[i]) pos_w += w.weight(i);
  }
  CHECK(pos_w / tot == doctest::Approx(up.positive_fraction).epsilon(1e-9));
  CHECK_THROWS_AS(upsample_positives(toy(0, 10), 0.1, 1), PreconditionError);
  CHECK_THROWS_AS(upsample_positives(d, 1.5, 1), PreconditionError);
}

TEST_CASE("chronological split holds out the latest turns") {
  const auto log = simulate_traffic(world(), Policy::uniform(world()), 1000, 2);
  const auto s = chronological_split(log, 0.2);
  CHECK(s.heldout.size() == 200);
  CHECK(s.train.size() == 800);
  CHECK(s.train.back().timestamp <= s.heldout.front().timestamp);
  CHECK_THROWS_AS(chronological_split(log, 0.0), PreconditionError);
  CHECK_THROWS_AS(chronological_split(std::span(log).first(1), 0.5), PreconditionError);
}

TEST_CASE("label selectors and RM datasets") {
  CHECK(parse_label_selector("love") == LabelSelector::kLove);
  CHECK_THROWS(parse_label_selector("heart"));
  const auto log = simulate_traffic(world(), Policy::uniform(world()), 2000, 5);
  const auto d = to_rm_dataset(log, LabelSelector::kThumbsUp);
  CHECK(d.size() == 2000);
  CHECK(d.dim == model_input_dim(4));
  std::size_t ups = 0;
  for (const auto& t : log) ups += t.labels.thumbs_up;
  CHECK(d.positives() == ups);
  std::ostringstream os;
  write_dataset_csv(os, d);
  CHECK(os.str().find('\n') != std::string::npos);
}
