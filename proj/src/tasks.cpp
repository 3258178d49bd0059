#include "rluf/tasks.hpp"

#include <string>

#include "rluf/error.hpp"

namespace rluf {

std::string_view task_name(Task t) {
  switch (t) {
    case Task::kHelpfulness:
      return "helpfulness";
    case Task::kSafety:
      return "safety";
    case Task::kLove:
      return "love";
  }
  return "unknown";
}

Task parse_task(std::string_view name) {
  if (name == "helpfulness") return Task::kHelpfulness;
  if (name == "safety") return Task::kSafety;
  if (name == "love") return Task::kLove;
  throw DataError("unknown task '" + std::string(name) + "'");
}

CategoryWeights default_task_prompt_distribution(Task task, const WorldConfig& config) {
  CategoryWeights w{};
  switch (task) {
    case Task::kHelpfulness:
      w[index_of(Category::kFactualQa)] = 0.30;
      w[index_of(Category::kCoding)] = 0.20;
      w[index_of(Category::kWriting)] = 0.20;
      w[index_of(Category::kRecommendations)] = 0.20;
      w[index_of(Category::kBenignSensitive)] = 0.10;
      return w;
    case Task::kSafety:
      w[index_of(Category::kAdversarialSafety)] = 0.60;
      w[index_of(Category::kBenignSensitive)] = 0.40;
      return w;
    case Task::kLove:
      return normalized(config.prompt_distribution);
  }
  return w;
}

}  // namespace rluf
