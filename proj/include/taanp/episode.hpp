#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "taanp/common.hpp"

namespace taanp {

// The three inference subtasks. Every target point carries exactly one tag.
enum class SubTask {
  EstimateUnobserved = 0,
  ForecastObserved = 1,
  ForecastUnobserved = 2,
};

constexpr int kNumSubTasks = 3;

inline const char* subtask_name(SubTask t) {
  switch (t) {
    case SubTask::EstimateUnobserved: return "estimate_unobserved";
    case SubTask::ForecastObserved: return "forecast_observed";
    case SubTask::ForecastUnobserved: return "forecast_unobserved";
  }
  throw ContractError("unknown SubTask");
}

inline SubTask subtask_from_name(const std::string& s) {
  if (s == "estimate_unobserved") return SubTask::EstimateUnobserved;
  if (s == "forecast_observed") return SubTask::ForecastObserved;
  if (s == "forecast_unobserved") return SubTask::ForecastUnobserved;
  throw ConfigError("unknown subtask name: " + s);
}

// A context pair: features plus the observed flow.
struct ContextPoint {
  std::vector<double> x;
  double y = 0.0;
  int segment = -1;
  int t = -1;
};

struct TargetPoint {
  std::vector<double> x;
  SubTask task = SubTask::EstimateUnobserved;
  std::optional<double> y_true;
  int segment = -1;
  int t = -1;
  int horizon = 0;  // steps past the history end; 0 for estimation targets
};

// One inference task instance. Context points span observed segments over
// the history window only; targets carry the subtask tag.
struct Episode {
  std::vector<ContextPoint> context;
  std::vector<TargetPoint> targets;
  int t0 = -1;        // last history step
  int history = 0;    // T
  int horizon = 0;    // H

  std::size_t x_dim() const {
    if (!context.empty()) return context.front().x.size();
    if (!targets.empty()) return targets.front().x.size();
    return 0;
  }

  void validate() const {
    check(!context.empty(), "Episode: context must be non-empty");
    std::size_t d = x_dim();
    for (const auto& c : context) {
      check(c.x.size() == d, "Episode: inconsistent feature dimension");
      check(std::isfinite(c.y) && c.y >= 0.0,
            "Episode: context flow must be finite and non-negative");
      if (t0 >= 0) check(c.t <= t0, "Episode: context leaks future time");
    }
    for (const auto& t : targets)
      check(t.x.size() == d, "Episode: inconsistent feature dimension");
  }

  std::vector<std::size_t> targets_with_task(SubTask task) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < targets.size(); ++i)
      if (targets[i].task == task) idx.push_back(i);
    return idx;
  }
};

}  // namespace taanp
