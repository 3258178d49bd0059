#pragma once

#include <string_view>

#include "rluf/world.hpp"

namespace rluf {

enum class Task { kHelpfulness, kSafety, kLove };

std::string_view task_name(Task t);
Task parse_task(std::string_view name);

/// In-domain prompt mix for each task. Helpfulness: instruction-style
/// categories; safety: adversarial and benign-sensitive prompts; love: the
/// production mix of the world.
CategoryWeights default_task_prompt_distribution(Task task, const WorldConfig& config);

}  // namespace rluf
