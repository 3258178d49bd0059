#include "rluf/conversation_log.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "rluf/error.hpp"
#include "rluf/format.hpp"
#include "rluf/rng.hpp"

namespace rluf {

LabelSelector parse_label_selector(std::string_view name) {
  if (name == "love") return LabelSelector::kLove;
  if (name == "thumbs_up") return LabelSelector::kThumbsUp;
  if (name == "thumbs_down") return LabelSelector::kThumbsDown;
  throw PreconditionError("label selector must be love, thumbs_up or thumbs_down");
}

bool select_label(const FeedbackLabels& labels, LabelSelector selector) {
  switch (selector) {
    case LabelSelector::kLove:
      return labels.love;
    case LabelSelector::kThumbsUp:
      return labels.thumbs_up;
    case LabelSelector::kThumbsDown:
      return labels.thumbs_down;
  }
  return false;
}

std::size_t LabeledDataset::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

void LabeledDataset::push_back(std::span<const double> x, bool label) {
  if (dim == 0) dim = x.size();
  require(x.size() == dim, "dataset record has wrong dimension");
  inputs.insert(inputs.end(), x.begin(), x.end());
  labels.push_back(label ? 1 : 0);
}

void LabeledDataset::refresh_positive_fraction() {
  positive_fraction = labels.empty() ? 0.0 : static_cast<double>(positives()) / static_cast<double>(labels.size());
}

void encode_model_input(Category c, const ResponseFeatures& f, std::span<double> out) {
  require(out.size() == kNumCategories + f.encoded_dim(), "model input dimension mismatch");
  std::fill(out.begin(), out.begin() + kNumCategories, 0.0);
  out[index_of(c)] = 1.0;
  f.encode(out.subspan(kNumCategories));
}

std::vector<double> encode_model_input(Category c, const ResponseFeatures& f) {
  std::vector<double> v(kNumCategories + f.encoded_dim());
  encode_model_input(c, f, v);
  return v;
}

nlohmann::json to_json(const ConversationTurn& t) {
  return {
      {"schema_version", kLogSchemaVersion},
      {"turn_id", t.turn_id},
      {"timestamp", t.timestamp},
      {"context",
       {{"category", std::string(category_name(t.context.category))},
        {"user_id", t.context.user_id},
        {"turn_index", t.context.turn_index},
        {"prior_positive_signals", t.context.prior_positive_signals}}},
      {"response_id", t.response_id},
      {"features", to_json(t.features)},
      {"labels",
       {{"love", t.labels.love ? 1 : 0},
        {"thumbs_up", t.labels.thumbs_up ? 1 : 0},
        {"thumbs_down", t.labels.thumbs_down ? 1 : 0}}},
  };
}

namespace {

bool bit_field(const nlohmann::json& j, const char* key) {
  const int v = j.at(key).get<int>();
  if (v != 0 && v != 1) throw DataError(std::string(key) + " is not a bit");
  return v == 1;
}

}  // namespace

ConversationTurn turn_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kLogSchemaVersion)
      throw DataError("schema_version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kLogSchemaVersion) + ")");
    ConversationTurn t;
    t.turn_id = j.at("turn_id").get<std::uint64_t>();
    t.timestamp = j.at("timestamp").get<std::uint64_t>();
    const auto& ctx = j.at("context");
    t.context.category = parse_category(ctx.at("category").get<std::string>());
    t.context.user_id = ctx.at("user_id").get<std::uint64_t>();
    t.context.turn_index = ctx.at("turn_index").get<std::uint32_t>();
    t.context.prior_positive_signals = ctx.at("prior_positive_signals").get<std::uint32_t>();
    t.response_id = j.at("response_id").get<std::uint32_t>();
    t.features = features_from_json(j.at("features"));
    const auto& l = j.at("labels");
    t.labels.love = bit_field(l, "love");
    t.labels.thumbs_up = bit_field(l, "thumbs_up");
    t.labels.thumbs_down = bit_field(l, "thumbs_down");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(e.what());
  }
}

void write_jsonl(std::ostream& os, std::span<const ConversationTurn> turns, const nlohmann::json* header) {
  if (header) os << nlohmann::json{{"log_header", *header}}.dump() << '\n';
  for (const auto& t : turns) os << to_json(t).dump() << '\n';
}

void write_jsonl(const std::string& path, std::span<const ConversationTurn> turns, const nlohmann::json* header) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  write_jsonl(os, turns, header);
  if (!os) throw DataError("failed writing " + path);
}

ConversationLog ingest(std::istream& is) {
  ConversationLog out;
  std::string line;
  std::size_t line_no = 0;
  bool seen_record = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (out.empty() && !seen_record && j.is_object() && j.contains("log_header")) {
        seen_record = true;
        continue;
      }
      seen_record = true;
      auto turn = turn_from_json(j);
      turn.features.validate();
      if (!out.empty() && turn.timestamp < out.back().timestamp)
        throw DataError("timestamp decreases");
      out.push_back(std::move(turn));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

ConversationLog ingest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open log " + path);
  return ingest(is);
}

LabeledDataset to_rm_dataset(std::span<const ConversationTurn> turns, LabelSelector selector) {
  LabeledDataset ds;
  if (!turns.empty()) ds.dim = kNumCategories + turns.front().features.encoded_dim();
  ds.inputs.reserve(turns.size() * ds.dim);
  ds.labels.reserve(turns.size());
  std::vector<double> x(ds.dim);
  for (const auto& t : turns) {
    encode_model_input(t.context.category, t.features, x);
    ds.push_back(x, select_label(t.labels, selector));
  }
  ds.refresh_positive_fraction();
  const char* name = selector == LabelSelector::kLove ? "love"
                     : selector == LabelSelector::kThumbsUp ? "thumbs_up"
                                                             : "thumbs_down";
  ds.provenance = "log of " + std::to_string(turns.size()) + " turns; label=" + name;
  return ds;
}

namespace {

// Number of extra positive copies drawn; zero when already at target.
std::vector<std::size_t> draw_extra_positives(const LabeledDataset& ds, double target, std::uint64_t seed) {
  require(target > 0.0 && target < 1.0, "upsample target_fraction must lie in (0, 1)");
  const std::size_t pos = ds.positives();
  const std::size_t neg = ds.size() - pos;
  require(pos >= 1, "upsample_positives: dataset has no positive records");
  require(neg >= 1, "upsample_positives: dataset has no negative records");
  const double current = static_cast<double>(pos) / static_cast<double>(ds.size());
  if (std::abs(current - target) <= 1e-3 || current > target) return {};
  const auto wanted = static_cast<std::size_t>(std::llround(target * static_cast<double>(neg) / (1.0 - target)));
  std::vector<std::size_t> positive_rows;
  positive_rows.reserve(pos);
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.labels[i]) positive_rows.push_back(i);
  Rng rng(derive_seed(seed, "upsample"));
  std::vector<std::size_t> extra;
  extra.reserve(wanted - pos);
  for (std::size_t k = pos; k < wanted; ++k) extra.push_back(positive_rows[rng.below(positive_rows.size())]);
  return extra;
}

}  // namespace

LabeledDataset upsample_positives(const LabeledDataset& dataset, double target_fraction, std::uint64_t seed) {
  const auto extra = draw_extra_positives(dataset, target_fraction, seed);
  if (extra.empty()) return dataset;
  LabeledDataset out = dataset;
  out.inputs.reserve(out.inputs.size() + extra.size() * out.dim);
  for (std::size_t i : extra) {
    out.inputs.insert(out.inputs.end(), dataset.inputs.begin() + static_cast<std::ptrdiff_t>(i * dataset.dim),
                      dataset.inputs.begin() + static_cast<std::ptrdiff_t>((i + 1) * dataset.dim));
    out.labels.push_back(1);
    if (!out.weights.empty()) out.weights.push_back(dataset.weights[i]);
  }
  out.refresh_positive_fraction();
  out.provenance += "; upsampled positives to " + format_sig(target_fraction, 9);
  return out;
}

LabeledDataset upsample_as_weights(const LabeledDataset& dataset, double target_fraction, std::uint64_t seed) {
  require(dataset.weights.empty(), "upsample_as_weights expects an unweighted dataset");
  const auto extra = draw_extra_positives(dataset, target_fraction, seed);
  LabeledDataset out = dataset;
  out.weights.assign(dataset.size(), 1.0);
  for (std::size_t i : extra) out.weights[i] += 1.0;
  double pos = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    total += out.weights[i];
    if (out.labels[i]) pos += out.weights[i];
  }
  out.positive_fraction = pos / total;
  out.provenance += "; positives reweighted to " + format_sig(target_fraction, 9);
  return out;
}

ChronologicalSplit chronological_split(std::span<const ConversationTurn> turns, double holdout_fraction) {
  require(holdout_fraction > 0.0 && holdout_fraction < 1.0, "holdout_fraction must lie in (0, 1)");
  require(turns.size() >= 2, "chronological_split needs at least 2 turns");
  std::vector<std::size_t> order(turns.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return turns[a].timestamp < turns[b].timestamp; });
  auto n_hold = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(turns.size())));
  n_hold = std::clamp<std::size_t>(n_hold, 1, turns.size() - 1);
  ChronologicalSplit out;
  out.train.reserve(turns.size() - n_hold);
  out.heldout.reserve(n_hold);
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < turns.size() - n_hold ? out.train : out.heldout).push_back(turns[order[k]]);
  }
  return out;
}

void write_dataset_csv(std::ostream& os, const LabeledDataset& ds) {
  os << "label,weight";
  for (std::size_t d = 0; d < ds.dim; ++d) os << ",x" << d;
  os << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << static_cast<int>(ds.labels[i]) << ',' << format_sig(ds.weight(i), 9);
    for (double v : ds.row(i)) os << ',' << format_sig(v, 9);
    os << '\n';
  }
}

}  // namespace rluf
