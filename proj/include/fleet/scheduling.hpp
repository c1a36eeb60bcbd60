#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fleet/allocation.hpp"
#include "fleet/model.hpp"
#include "fleet/planning.hpp"
#include "fleet/rational.hpp"

namespace fleet {

enum class EventKind { dispatched, started, succeeded, failed, replan_requested, cancelled };
const char* to_string(EventKind k);
EventKind event_kind_from_string(const std::string& s);

struct TraceEvent {
  Ratio time;  // seconds since mission start (simulated or wall-clock)
  std::string task_id;
  std::string robot;
  EventKind kind = EventKind::dispatched;
  std::string detail;

  bool operator==(const TraceEvent&) const = default;
};

struct ExecutionTrace {
  std::vector<TraceEvent> events;

  void append(Ratio time, const std::string& task, const std::string& robot, EventKind kind,
              const std::string& detail = "");
  // One event per line, fixed key order: time, kind, task_id, robot, detail.
  std::string to_records() const;
  static ExecutionTrace from_records(const std::string& text);

  bool operator==(const ExecutionTrace&) const = default;
};

Json trace_to_json(const ExecutionTrace& t);
ExecutionTrace trace_from_json(const Json& j);

enum class Phase { planning, allocating, executing, replanning, done, aborted };
const char* to_string(Phase p);
Phase phase_from_string(const std::string& s);

struct MissionState {
  std::string id;
  Plan plan;
  Allocation allocation;
  ExecutionTrace trace;
  Phase phase = Phase::planning;
  std::vector<std::string> goal_ids;  // goals this mission was planned from
  PlanStrategy strategy = PlanStrategy::per_goal;
  AllocMethod allocator = AllocMethod::milp;

  // Replan bookkeeping.
  int replan_round = 0;
  int fruitless_replans = 0;
  int succeeded_at_last_replan = 0;
  std::set<std::string> blocked_descriptions;  // normalized; exhausted retries
  std::set<std::string> retired_task_ids;      // discarded by replans; results dropped
  std::string diagnostic;
  std::vector<std::string> log;
};

Json mission_to_json(const MissionState& m);
MissionState mission_from_json(const Json& j);

// Tasks whose dependencies all succeeded and whose robot is idle, one task
// per robot, sorted by task id. phase must be executing.
std::vector<std::pair<std::string, std::string>> ready_set(const MissionState& state);

// Everything the mission driver must do next, expressed as data so the same
// engine serves the in-process simulator and the network service.
struct DispatchOrder {
  std::string task_id;
  std::string robot;
  std::string description;
  int attempt = 0;
};

struct EngineActions {
  std::vector<DispatchOrder> dispatches;
  std::vector<std::pair<std::string, std::string>> cancels;  // task, robot
  bool replan_needed = false;
  std::string replan_reason;
};

enum class ResultEffect { none, redispatch, trigger_replan, stale };

// Environment a replan needs: goals, registry, shared world, and backends.
struct ReplanEnv {
  std::vector<Goal> goals;
  std::vector<RobotSpec> robots;
  WorldState* world = nullptr;
  PlannerBackend* planner = nullptr;
  TextCompleter* llm_allocator = nullptr;
};

class MissionEngine {
 public:
  explicit MissionEngine(MissionState& state) : st_(state) {}

  // phase -> executing; dispatches the initial frontier.
  EngineActions begin(Ratio now);

  // Worker acknowledged: trace started, status running.
  void note_started(const std::string& task_id, Ratio now);

  // Applies on_task_result semantics and pumps follow-up dispatches.
  EngineActions on_result(const std::string& task_id, bool success, const std::string& detail,
                          Ratio now);

  // Robot-initiated replan request; statements go to the world first.
  EngineActions on_replan_request(const std::string& robot, const std::string& reason,
                                  const std::vector<std::string>& statements, WorldState& world,
                                  Ratio now);

  // Runs the replan (freeze/discard/re-plan/re-allocate); phase becomes
  // executing (with fresh dispatches), done, or aborted.
  EngineActions perform_replan(const ReplanEnv& env, Ratio now);

  bool finished() const { return st_.phase == Phase::done || st_.phase == Phase::aborted; }

 private:
  EngineActions pump(Ratio now);
  void check_done();
  MissionState& st_;
};

// Single-step result application (dispatch bookkeeping lives in the engine).
ResultEffect on_task_result(MissionState& state, const std::string& task_id, bool success,
                            const std::string& detail, Ratio now);

// Progress-aware replan. Succeeded tasks freeze; everything else is
// discarded; the planner re-runs over the mission goals with robot-reported
// statements and a progress summary; duplicates of frozen work are dropped
// (dependencies remapped onto the frozen task); new tasks are allocated.
void replan(MissionState& state, const ReplanEnv& env, Ratio now);

// 100 * sum_j (makespan - busy_j) / (robot_count * makespan), makespan
// measured from time origin 0 to the last terminal event. Exact arithmetic.
Ratio idle_percentage(const ExecutionTrace& trace, int robot_count);

// Delivers tasks and produces outcomes; simulated or networked.
class Dispatcher {
 public:
  virtual ~Dispatcher() = default;

  struct Outcome {
    Ratio time;
    std::string task_id;
    std::string robot;
    bool success = false;
    std::string detail;
    bool request_replan = false;  // discovery: statements follow
    std::vector<std::string> statements;
    std::string replan_reason;
  };

  // false = robot unreachable (counts as a task failure).
  virtual bool dispatch(const DispatchOrder& order, const std::vector<std::string>& context,
                        Ratio now) = 0;
  virtual void cancel(const std::string& task_id, const std::string& robot) = 0;
  // Next terminal outcome; nullopt when nothing is in flight.
  virtual std::optional<Outcome> next_outcome() = 0;
  virtual Ratio now() const = 0;
};

// Drives the engine against a dispatcher until done/aborted (or until a
// replan is needed and no environment was provided, leaving phase=replanning).
MissionState& run_mission(MissionState& state, Dispatcher& dispatcher,
                          const ReplanEnv* env = nullptr);

}  // namespace fleet
