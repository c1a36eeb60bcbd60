#include "fleet/scheduling.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace fleet {

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::dispatched: return "dispatched";
    case EventKind::started: return "started";
    case EventKind::succeeded: return "succeeded";
    case EventKind::failed: return "failed";
    case EventKind::replan_requested: return "replan_requested";
    case EventKind::cancelled: return "cancelled";
  }
  return "dispatched";
}

EventKind event_kind_from_string(const std::string& s) {
  for (EventKind k : {EventKind::dispatched, EventKind::started, EventKind::succeeded,
                      EventKind::failed, EventKind::replan_requested, EventKind::cancelled}) {
    if (s == to_string(k)) return k;
  }
  throw FleetError("bad_enum", "unknown event kind: " + s);
}

const char* to_string(Phase p) {
  switch (p) {
    case Phase::planning: return "planning";
    case Phase::allocating: return "allocating";
    case Phase::executing: return "executing";
    case Phase::replanning: return "replanning";
    case Phase::done: return "done";
    case Phase::aborted: return "aborted";
  }
  return "planning";
}

Phase phase_from_string(const std::string& s) {
  for (Phase p : {Phase::planning, Phase::allocating, Phase::executing, Phase::replanning,
                  Phase::done, Phase::aborted}) {
    if (s == to_string(p)) return p;
  }
  throw FleetError("bad_enum", "unknown phase: " + s);
}

void ExecutionTrace::append(Ratio time, const std::string& task, const std::string& robot,
                            EventKind kind, const std::string& detail) {
  if (!events.empty() && time < events.back().time) {
    throw FleetError("trace_order", "event times must be non-decreasing");
  }
  events.push_back(TraceEvent{time, task, robot, kind, detail});
}

std::string ExecutionTrace::to_records() const {
  std::ostringstream os;
  for (const TraceEvent& e : events) {
    Json j;
    j["time"] = ratio_to_string(e.time);
    j["kind"] = to_string(e.kind);
    j["task_id"] = e.task_id;
    j["robot"] = e.robot;
    j["detail"] = e.detail;
    os << j.dump() << '\n';
  }
  return os.str();
}

ExecutionTrace ExecutionTrace::from_records(const std::string& text) {
  ExecutionTrace t;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) throw FleetError("trace_parse", "bad trace record: " + line);
    t.events.push_back(TraceEvent{ratio_from_string(j.at("time").get<std::string>()),
                                  j.at("task_id").get<std::string>(),
                                  j.at("robot").get<std::string>(),
                                  event_kind_from_string(j.at("kind").get<std::string>()),
                                  j.at("detail").get<std::string>()});
  }
  return t;
}

Json trace_to_json(const ExecutionTrace& t) {
  Json arr = Json::array();
  for (const TraceEvent& e : t.events) {
    arr.push_back(Json{{"time", ratio_to_string(e.time)},
                       {"kind", to_string(e.kind)},
                       {"task_id", e.task_id},
                       {"robot", e.robot},
                       {"detail", e.detail}});
  }
  return arr;
}

ExecutionTrace trace_from_json(const Json& j) {
  ExecutionTrace t;
  for (const auto& e : j) {
    t.events.push_back(TraceEvent{ratio_from_string(e.at("time").get<std::string>()),
                                  e.at("task_id").get<std::string>(),
                                  e.at("robot").get<std::string>(),
                                  event_kind_from_string(e.at("kind").get<std::string>()),
                                  e.at("detail").get<std::string>()});
  }
  return t;
}

Json mission_to_json(const MissionState& m) {
  Json j;
  j["id"] = m.id;
  j["phase"] = to_string(m.phase);
  j["strategy"] = to_string(m.strategy);
  j["allocator"] = to_string(m.allocator);
  j["goal_ids"] = m.goal_ids;
  j["plan"] = plan_to_json(m.plan);
  j["allocation"] = allocation_to_json(m.allocation);
  j["trace"] = trace_to_json(m.trace);
  j["replan_round"] = m.replan_round;
  j["fruitless_replans"] = m.fruitless_replans;
  j["succeeded_at_last_replan"] = m.succeeded_at_last_replan;
  j["blocked_descriptions"] = std::vector<std::string>(m.blocked_descriptions.begin(),
                                                       m.blocked_descriptions.end());
  j["retired_task_ids"] =
      std::vector<std::string>(m.retired_task_ids.begin(), m.retired_task_ids.end());
  j["diagnostic"] = m.diagnostic;
  j["log"] = m.log;
  return j;
}

MissionState mission_from_json(const Json& j) {
  MissionState m;
  m.id = j.at("id").get<std::string>();
  m.phase = phase_from_string(j.at("phase").get<std::string>());
  m.strategy = plan_strategy_from_string(j.at("strategy").get<std::string>());
  m.allocator = alloc_method_from_string(j.at("allocator").get<std::string>());
  m.goal_ids = j.at("goal_ids").get<std::vector<std::string>>();
  m.plan = plan_from_json(j.at("plan"));
  m.allocation = allocation_from_json(j.at("allocation"));
  m.trace = trace_from_json(j.at("trace"));
  m.replan_round = j.at("replan_round").get<int>();
  m.fruitless_replans = j.at("fruitless_replans").get<int>();
  m.succeeded_at_last_replan = j.at("succeeded_at_last_replan").get<int>();
  for (const auto& d : j.at("blocked_descriptions")) m.blocked_descriptions.insert(d.get<std::string>());
  for (const auto& d : j.at("retired_task_ids")) m.retired_task_ids.insert(d.get<std::string>());
  m.diagnostic = j.at("diagnostic").get<std::string>();
  m.log = j.at("log").get<std::vector<std::string>>();
  return m;
}

std::vector<std::pair<std::string, std::string>> ready_set(const MissionState& state) {
  std::vector<std::pair<std::string, std::string>> out;
  if (state.phase != Phase::executing) return out;

  std::set<std::string> busy;
  for (const auto& [id, t] : state.plan.tasks) {
    if (t.status == TaskStatus::dispatched || t.status == TaskStatus::running) {
      auto it = state.allocation.assignments.find(id);
      if (it != state.allocation.assignments.end()) busy.insert(it->second);
    }
  }
  for (const auto& [id, t] : state.plan.tasks) {  // map order = sorted by id
    if (t.status != TaskStatus::pending) continue;
    bool deps_ok = true;
    for (const auto& dep : t.depends_on) {
      const Task* d = state.plan.find(dep);
      if (!d || d->status != TaskStatus::succeeded) {
        deps_ok = false;
        break;
      }
    }
    if (!deps_ok) continue;
    auto it = state.allocation.assignments.find(id);
    if (it == state.allocation.assignments.end()) continue;  // unallocated
    if (busy.count(it->second)) continue;                    // one task per robot
    busy.insert(it->second);
    out.emplace_back(id, it->second);
  }
  return out;
}

ResultEffect on_task_result(MissionState& state, const std::string& task_id, bool success,
                            const std::string& detail, Ratio now) {
  Task* t = state.plan.find(task_id);
  if (!t) {
    if (state.retired_task_ids.count(task_id)) {
      state.log.push_back("stale result for retired task '" + task_id + "' dropped");
      return ResultEffect::stale;
    }
    throw FleetError("unknown_task", "result for unknown task '" + task_id + "'",
                     Json{{"task", task_id}});
  }
  if (t->status != TaskStatus::dispatched && t->status != TaskStatus::running) {
    state.log.push_back("stale result for task '" + task_id + "' in status " +
                        to_string(t->status) + " dropped");
    return ResultEffect::stale;
  }

  const std::string robot = t->assigned_robot;
  if (success) {
    t->status = TaskStatus::succeeded;
    state.trace.append(now, task_id, robot, EventKind::succeeded, detail);
    return ResultEffect::none;
  }
  state.trace.append(now, task_id, robot, EventKind::failed, detail);
  if (t->attempts < kMaxAttempts) {
    return ResultEffect::redispatch;
  }
  t->status = TaskStatus::failed;
  return ResultEffect::trigger_replan;
}

// --- MissionEngine ----------------------------------------------------------

namespace {

DispatchOrder record_dispatch(MissionState& st, Task& t, const std::string& robot, Ratio now) {
  t.attempts++;
  t.status = TaskStatus::dispatched;
  t.assigned_robot = robot;
  st.trace.append(now, t.id, robot, EventKind::dispatched,
                  "attempt " + std::to_string(t.attempts));
  return DispatchOrder{t.id, robot, t.description, t.attempts};
}

void cancel_in_flight(MissionState& st, EngineActions& actions, Ratio now) {
  for (auto& [id, t] : st.plan.tasks) {
    if (t.status == TaskStatus::dispatched || t.status == TaskStatus::running) {
      t.status = TaskStatus::cancelled;
      st.trace.append(now, id, t.assigned_robot, EventKind::cancelled, "replan");
      actions.cancels.emplace_back(id, t.assigned_robot);
    }
  }
}

}  // namespace

EngineActions MissionEngine::begin(Ratio now) {
  st_.phase = Phase::executing;
  return pump(now);
}

void MissionEngine::note_started(const std::string& task_id, Ratio now) {
  Task* t = st_.plan.find(task_id);
  if (!t || t->status != TaskStatus::dispatched) return;  // late or stale ack
  t->status = TaskStatus::running;
  st_.trace.append(now, task_id, t->assigned_robot, EventKind::started);
}

EngineActions MissionEngine::on_result(const std::string& task_id, bool success,
                                       const std::string& detail, Ratio now) {
  EngineActions actions;
  ResultEffect effect = on_task_result(st_, task_id, success, detail, now);
  switch (effect) {
    case ResultEffect::none:
      break;
    case ResultEffect::stale:
      return actions;
    case ResultEffect::redispatch: {
      Task* t = st_.plan.find(task_id);
      actions.dispatches.push_back(record_dispatch(st_, *t, t->assigned_robot, now));
      return actions;
    }
    case ResultEffect::trigger_replan: {
      Task* t = st_.plan.find(task_id);
      st_.trace.append(now, "", t->assigned_robot, EventKind::replan_requested,
                       "task '" + task_id + "' failed " + std::to_string(kMaxAttempts) +
                           " times");
      cancel_in_flight(st_, actions, now);
      st_.phase = Phase::replanning;
      actions.replan_needed = true;
      actions.replan_reason = "retries exhausted for task '" + task_id + "'";
      return actions;
    }
  }
  EngineActions pumped = pump(now);
  pumped.cancels.insert(pumped.cancels.end(), actions.cancels.begin(), actions.cancels.end());
  return pumped;
}

EngineActions MissionEngine::on_replan_request(const std::string& robot, const std::string& reason,
                                               const std::vector<std::string>& statements,
                                               WorldState& world, Ratio now) {
  EngineActions actions;
  if (st_.phase == Phase::aborted) {
    st_.log.push_back("replan request from '" + robot + "' ignored: mission aborted");
    return actions;
  }
  for (const auto& text : statements) {
    world.add(text, WorldStatement::Source::robot, 0);
  }
  st_.trace.append(now, "", robot, EventKind::replan_requested, reason);
  cancel_in_flight(st_, actions, now);
  st_.phase = Phase::replanning;
  actions.replan_needed = true;
  actions.replan_reason = reason;
  return actions;
}

EngineActions MissionEngine::perform_replan(const ReplanEnv& env, Ratio now) {
  replan(st_, env, now);
  if (st_.phase == Phase::executing) return pump(now);
  return {};
}

EngineActions MissionEngine::pump(Ratio now) {
  EngineActions actions;
  if (st_.phase != Phase::executing) return actions;
  for (const auto& [task_id, robot] : ready_set(st_)) {
    Task* t = st_.plan.find(task_id);
    actions.dispatches.push_back(record_dispatch(st_, *t, robot, now));
  }
  check_done();
  return actions;
}

void MissionEngine::check_done() {
  if (st_.phase != Phase::executing) return;
  bool all_succeeded = true;
  for (const auto& [id, t] : st_.plan.tasks) {
    if (t.status != TaskStatus::succeeded) {
      all_succeeded = false;
      break;
    }
  }
  if (all_succeeded) st_.phase = Phase::done;
}

// --- replan -----------------------------------------------------------------

void replan(MissionState& st, const ReplanEnv& env, Ratio now) {
  if (!env.world || !env.planner) {
    throw FleetError("bad_arg", "replan needs a world state and a planner backend");
  }
  st.phase = Phase::replanning;

  // Liveness guard: three consecutive replans without a new success abort.
  int succeeded_now = 0;
  for (const auto& [id, t] : st.plan.tasks) {
    if (t.status == TaskStatus::succeeded) succeeded_now++;
  }
  if (succeeded_now == st.succeeded_at_last_replan) {
    st.fruitless_replans++;
  } else {
    st.fruitless_replans = 0;
  }
  st.succeeded_at_last_replan = succeeded_now;
  if (st.fruitless_replans >= 3) {
    st.phase = Phase::aborted;
    st.diagnostic = "aborted after 3 consecutive replans with no new successes";
    return;
  }

  // Quiesce anything still marked in flight (engine normally cancelled these).
  for (auto& [id, t] : st.plan.tasks) {
    if (t.status == TaskStatus::dispatched || t.status == TaskStatus::running) {
      t.status = TaskStatus::cancelled;
      st.trace.append(now, id, t.assigned_robot, EventKind::cancelled, "replan");
    }
  }

  // Tasks that exhausted retries never come back.
  for (const auto& [id, t] : st.plan.tasks) {
    if (t.status == TaskStatus::failed && t.attempts >= kMaxAttempts) {
      st.blocked_descriptions.insert(normalize_description(t.description));
    }
  }

  // Freeze succeeded work; everything else is discarded.
  std::map<std::string, Task> frozen;
  for (const auto& [id, t] : st.plan.tasks) {
    if (t.status == TaskStatus::succeeded) {
      frozen.emplace(id, t);
    } else {
      st.retired_task_ids.insert(id);
    }
  }

  // Progress summary rendered as statements for the planner prompt.
  PlannerContext ctx;
  {
    PlanProgress prog = plan_progress(st.plan);
    std::ostringstream head;
    head << "progress: " << prog.count(TaskStatus::succeeded) << " of " << st.plan.size()
         << " tasks succeeded";
    ctx.progress.push_back(head.str());
    for (const auto& [id, t] : frozen) ctx.progress.push_back("completed: " + t.description);
    for (const auto& desc : st.blocked_descriptions)
      ctx.progress.push_back("blocked after " + std::to_string(kMaxAttempts) +
                             " failed attempts: " + desc);
  }
  ctx.blocked_descriptions = st.blocked_descriptions;
  for (const RobotSpec& r : env.robots) {
    for (const auto& c : r.capabilities) ctx.fleet_capabilities.push_back(c);
  }
  std::sort(ctx.fleet_capabilities.begin(), ctx.fleet_capabilities.end());
  ctx.fleet_capabilities.erase(
      std::unique(ctx.fleet_capabilities.begin(), ctx.fleet_capabilities.end()),
      ctx.fleet_capabilities.end());

  std::vector<Goal> mission_goals;
  for (const Goal& g : env.goals) {
    if (st.goal_ids.empty() ||
        std::find(st.goal_ids.begin(), st.goal_ids.end(), g.id) != st.goal_ids.end()) {
      mission_goals.push_back(g);
    }
  }
  if (mission_goals.empty()) {
    st.phase = Phase::done;
    st.diagnostic = "no goals left to replan";
    return;
  }

  st.phase = Phase::planning;
  Plan fresh = build_plan(st.strategy, mission_goals, *env.world, *env.planner, &ctx);

  // Merge: duplicates of frozen work are dropped and their dependents point
  // at the frozen (already succeeded) task instead.
  std::map<std::string, std::string> desc_to_frozen;
  for (const auto& [id, t] : frozen) {
    desc_to_frozen.emplace(normalize_description(t.description), id);
  }
  Plan merged;
  merged.id = st.plan.id;
  merged.strategy = st.strategy;
  merged.tasks = frozen;

  std::map<std::string, std::string> remap;  // fresh id -> merged id ("" = dropped)
  std::vector<std::string> new_ids;
  for (const std::string& id : topo_order(fresh)) {
    const Task& src = *fresh.find(id);
    const std::string norm = normalize_description(src.description);
    auto fit = desc_to_frozen.find(norm);
    if (fit != desc_to_frozen.end()) {
      remap[id] = fit->second;
      continue;
    }
    if (st.blocked_descriptions.count(norm)) {
      remap[id] = "";
      continue;
    }
    Task t = src;
    t.status = TaskStatus::pending;
    t.attempts = 0;
    t.assigned_robot.clear();
    std::vector<std::string> deps;
    for (const auto& dep : t.depends_on) {
      auto rit = remap.find(dep);
      if (rit == remap.end()) continue;  // defensive: unknown refs were rejected by parse
      if (!rit->second.empty()) deps.push_back(rit->second);
    }
    std::sort(deps.begin(), deps.end());
    deps.erase(std::unique(deps.begin(), deps.end()), deps.end());
    t.depends_on = std::move(deps);
    std::string final_id = t.id;
    if (merged.tasks.count(final_id)) {
      final_id += "@r" + std::to_string(st.replan_round + 1);
    }
    remap[t.id] = final_id;
    t.id = final_id;
    new_ids.push_back(final_id);
    merged.tasks.emplace(final_id, std::move(t));
  }
  if (auto issue = validate_dag(merged)) throw issue->to_error();

  // Re-allocate only the new work; frozen assignments stay for the record.
  Allocation alloc;
  alloc.method = st.allocator;
  for (const auto& [id, t] : frozen) {
    auto it = st.allocation.assignments.find(id);
    if (it != st.allocation.assignments.end()) alloc.assignments[id] = it->second;
  }
  if (!new_ids.empty()) {
    std::vector<Task> new_tasks;
    std::set<std::string> new_set(new_ids.begin(), new_ids.end());
    for (const std::string& id : topo_order(merged)) {
      if (new_set.count(id)) new_tasks.push_back(*merged.find(id));
    }
    Allocation fresh_alloc = allocate_with_fallback(new_tasks, env.robots, st.allocator,
                                                    *env.world, env.llm_allocator);
    for (const auto& [task, robot] : fresh_alloc.assignments) {
      alloc.assignments[task] = robot;
      merged.find(task)->assigned_robot = robot;
    }
    alloc.method = fresh_alloc.method;
    alloc.feasible = fresh_alloc.feasible;
    alloc.warnings = st.allocation.warnings;
    alloc.warnings.insert(alloc.warnings.end(), fresh_alloc.warnings.begin(),
                          fresh_alloc.warnings.end());
  } else {
    alloc.feasible = st.allocation.feasible;
    alloc.warnings = st.allocation.warnings;
  }

  st.plan = std::move(merged);
  st.allocation = std::move(alloc);
  st.replan_round++;

  if (new_ids.empty()) {
    st.phase = Phase::done;
    if (!st.blocked_descriptions.empty()) {
      st.diagnostic = "finished with blocked tasks: " +
                      std::to_string(st.blocked_descriptions.size());
    }
  } else {
    st.phase = Phase::executing;
  }
}

// --- idle-time analytics ----------------------------------------------------

Ratio idle_percentage(const ExecutionTrace& trace, int robot_count) {
  if (robot_count < 1) throw FleetError("bad_arg", "robot_count must be >= 1");

  struct Open {
    std::string robot;
    Ratio since;
  };
  std::map<std::string, Open> open;  // task id -> running interval start
  std::map<std::string, Ratio> busy;
  bool saw_terminal = false;
  Ratio makespan(0);

  for (const TraceEvent& e : trace.events) {
    switch (e.kind) {
      case EventKind::started:
        open[e.task_id] = Open{e.robot, e.time};
        break;
      case EventKind::succeeded:
      case EventKind::failed:
      case EventKind::cancelled: {
        auto it = open.find(e.task_id);
        if (it != open.end()) {
          busy.emplace(it->second.robot, Ratio(0)).first->second += e.time - it->second.since;
          open.erase(it);
        }
        saw_terminal = true;
        if (e.time > makespan) makespan = e.time;
        break;
      }
      case EventKind::dispatched:
      case EventKind::replan_requested:
        break;
    }
  }
  if (!open.empty()) {
    throw FleetError("incomplete_trace", "trace has running tasks without a terminal event",
                     Json{{"open", open.begin()->first}});
  }
  if (!saw_terminal || makespan == Ratio(0)) return Ratio(0);

  Ratio total_busy(0);
  for (const auto& [robot, b] : busy) total_busy += b;
  Ratio denom = Ratio(robot_count) * makespan;
  return Ratio(100) * (denom - total_busy) / denom;
}

// --- driver -----------------------------------------------------------------

MissionState& run_mission(MissionState& state, Dispatcher& dispatcher, const ReplanEnv* env) {
  MissionEngine engine(state);

  auto context = [&]() -> std::vector<std::string> {
    if (env && env->world) return env->world->texts();
    return {};
  };

  // Dispatch failures feed straight back into the result path.
  std::function<void(EngineActions)> apply = [&](EngineActions actions) {
    for (const auto& [task, robot] : actions.cancels) dispatcher.cancel(task, robot);
    for (std::size_t i = 0; i < actions.dispatches.size(); ++i) {
      const DispatchOrder& order = actions.dispatches[i];
      if (state.plan.find(order.task_id) == nullptr ||
          state.plan.find(order.task_id)->status != TaskStatus::dispatched) {
        continue;  // a replan in between retired it
      }
      if (dispatcher.dispatch(order, context(), dispatcher.now())) {
        engine.note_started(order.task_id, dispatcher.now());
      } else {
        apply(engine.on_result(order.task_id, false, "dispatch error: robot unreachable",
                               dispatcher.now()));
      }
    }
  };

  apply(engine.begin(dispatcher.now()));

  while (!engine.finished()) {
    if (state.phase == Phase::replanning) {
      if (!env) return state;  // caller handles the replan
      apply(engine.perform_replan(*env, dispatcher.now()));
      continue;
    }
    auto outcome = dispatcher.next_outcome();
    if (!outcome) {
      if (state.phase == Phase::executing) {
        state.phase = Phase::aborted;
        state.diagnostic = "stalled: no outcomes while tasks remain";
      }
      break;
    }
    apply(engine.on_result(outcome->task_id, outcome->success, outcome->detail, outcome->time));
    if (outcome->request_replan) {
      if (env && env->world) {
        apply(engine.on_replan_request(outcome->robot, outcome->replan_reason,
                                       outcome->statements, *env->world, outcome->time));
      } else {
        WorldState scratch;
        apply(engine.on_replan_request(outcome->robot, outcome->replan_reason,
                                       outcome->statements, scratch, outcome->time));
      }
    }
  }
  return state;
}

}  // namespace fleet
