#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fleet {

using Json = nlohmann::ordered_json;

// Domain error carrying a stable machine-readable code plus structured
// details. The same codes travel over the wire as {"type":"error",...}.
class FleetError : public std::runtime_error {
 public:
  FleetError(std::string code, const std::string& message, Json details = Json::object())
      : std::runtime_error(message), code_(std::move(code)), details_(std::move(details)) {}

  const std::string& code() const { return code_; }
  const Json& details() const { return details_; }

 private:
  std::string code_;
  Json details_;
};

enum class TaskStatus { pending, ready, dispatched, running, succeeded, failed, cancelled };
enum class PlanStrategy { per_goal, big_dag, monolithic, manual };
enum class AllocMethod { milp, llm, round_robin };

const char* to_string(TaskStatus s);
const char* to_string(PlanStrategy s);
const char* to_string(AllocMethod m);
TaskStatus task_status_from_string(const std::string& s);
PlanStrategy plan_strategy_from_string(const std::string& s);
AllocMethod alloc_method_from_string(const std::string& s);

bool is_terminal(TaskStatus s);

// Planner/operator-supplied ids are folded to lowercase with spaces replaced
// by hyphens so CLI and wire references stay stable.
std::string normalize_task_id(const std::string& raw);

// Dedup key for task descriptions: trimmed, inner whitespace collapsed,
// lowercased.
std::string normalize_description(const std::string& raw);

inline constexpr int kMaxAttempts = 3;

struct Goal {
  std::string id;
  std::string text;
};

struct Task {
  std::string id;
  std::string description;
  std::vector<std::string> depends_on;             // sorted, unique
  std::vector<std::string> required_capabilities;  // sorted, unique
  std::string goal_id;                             // empty when unknown
  TaskStatus status = TaskStatus::pending;
  int attempts = 0;
  std::string assigned_robot;  // empty until allocated

  bool operator==(const Task&) const = default;
};

struct Plan {
  std::string id;
  PlanStrategy strategy = PlanStrategy::manual;
  std::map<std::string, Task> tasks;  // keyed by task id

  bool empty() const { return tasks.empty(); }
  std::size_t size() const { return tasks.size(); }
  const Task* find(const std::string& id) const;
  Task* find(const std::string& id);

  // Directed dependency edges (from, to): `from` must precede `to`.
  std::vector<std::pair<std::string, std::string>> edges() const;

  bool operator==(const Plan&) const = default;
};

struct RobotSpec {
  enum class DeployMode { container, native };

  std::string name;
  std::string description;
  std::vector<std::string> capabilities;  // sorted, unique, nonempty
  std::string host;
  int port = 0;
  DeployMode deploy_mode = DeployMode::native;
  std::string image;  // required iff container

  bool operator==(const RobotSpec&) const = default;
};

struct WorldStatement {
  enum class Source { operator_side, robot };

  std::string id;
  std::string text;
  std::int64_t added_at = 0;  // unix seconds
  Source source = Source::operator_side;

  bool operator==(const WorldStatement&) const = default;
};

struct WorldState {
  std::vector<WorldStatement> statements;
  int next_id = 1;

  // Appends and returns the assigned statement id (w1, w2, ...).
  std::string add(const std::string& text, WorldStatement::Source source, std::int64_t now);
  std::vector<std::string> texts() const;

  bool operator==(const WorldState&) const = default;
};

struct Allocation {
  std::map<std::string, std::string> assignments;  // task id -> robot name
  AllocMethod method = AllocMethod::milp;
  bool feasible = true;  // false when round-robin fallback was applied
  std::vector<std::string> warnings;

  bool operator==(const Allocation&) const = default;
};

// --- DAG algebra -----------------------------------------------------------

struct DagIssue {
  enum class Kind { cycle, dangling };
  Kind kind = Kind::cycle;
  std::vector<std::string> cycle;  // one cycle, in edge order
  std::string task_id;             // dangling: referencing task
  std::string missing_id;          // dangling: unresolved reference

  FleetError to_error() const;
};

// ok (= nullopt) iff every reference resolves and the graph is acyclic.
std::optional<DagIssue> validate_dag(const Plan& plan);

// Dependency-respecting total order; lexicographic task-id tie-break.
// Throws FleetError (code "cycle" / "dangling_dependency") on invalid plans.
std::vector<std::string> topo_order(const Plan& plan);

// Disjoint union; task ids become "<plan id>/<local id>". No cross-plan edges.
Plan merge_plans(const std::vector<Plan>& plans);

struct PlanProgress {
  std::map<TaskStatus, int> counts;
  std::vector<std::string> frontier;  // pending tasks whose deps all succeeded

  int count(TaskStatus s) const {
    auto it = counts.find(s);
    return it == counts.end() ? 0 : it->second;
  }
};

PlanProgress plan_progress(const Plan& plan);

// --- Canonical serialization ------------------------------------------------
// Stable key order and task order (sorted by id) so golden files diff cleanly.

Json task_to_json(const Task& t);
Task task_from_json(const Json& j);
Json plan_to_json(const Plan& p);
Plan plan_from_json(const Json& j);
Json robot_to_json(const RobotSpec& r);
RobotSpec robot_from_json(const Json& j);
Json world_to_json(const WorldState& w);
WorldState world_from_json(const Json& j);
Json allocation_to_json(const Allocation& a);
Allocation allocation_from_json(const Json& j);

}  // namespace fleet
