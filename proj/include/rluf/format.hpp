#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace rluf {

/// printf-style %.{digits}g.
std::string format_sig(double v, int digits);
/// Rounds to `digits` significant digits (round trip through text).
double round_sig(double v, int digits);
std::vector<double> round_sig(const std::vector<double>& v, int digits);

std::string hex64(std::uint64_t v);
/// FNV-1a of the compact canonical dump (keys sorted by nlohmann).
std::uint64_t json_hash(const nlohmann::json& j);

void write_text_file(const std::string& path, const std::string& contents);
void write_json_file(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::string& path);
std::string read_text_file(const std::string& path);

}  // namespace rluf
