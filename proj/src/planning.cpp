#include "fleet/planning.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace fleet {

namespace {

std::string lowercase(const std::string& s) {
  std::string out = s;
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool contains_ci(const std::string& haystack, const std::string& needle) {
  return lowercase(haystack).find(lowercase(needle)) != std::string::npos;
}

}  // namespace

RecipeRuleset RecipeRuleset::from_json(const Json& j) {
  RecipeRuleset rs;
  if (!j.contains("rules") || !j.at("rules").is_array())
    throw FleetError("ruleset_parse", "ruleset must contain a 'rules' list");
  for (const auto& rj : j.at("rules")) {
    RecipeRule rule;
    rule.goal_pattern = rj.at("goal_pattern").get<std::string>();
    if (rj.contains("world_pattern")) rule.world_pattern = rj.at("world_pattern").get<std::string>();
    for (const auto& sj : rj.at("subtasks")) {
      RecipeSubtask st;
      st.id = normalize_task_id(sj.at("id").get<std::string>());
      st.description = sj.at("description").get<std::string>();
      if (sj.contains("depends_on")) {
        for (const auto& d : sj.at("depends_on")) st.depends_on.push_back(normalize_task_id(d.get<std::string>()));
      }
      if (sj.contains("capabilities")) {
        for (const auto& c : sj.at("capabilities")) st.capabilities.push_back(c.get<std::string>());
        std::sort(st.capabilities.begin(), st.capabilities.end());
        st.capabilities.erase(std::unique(st.capabilities.begin(), st.capabilities.end()),
                              st.capabilities.end());
      }
      rule.subtasks.push_back(std::move(st));
    }
    rs.rules.push_back(std::move(rule));
  }
  rs.validate();
  return rs;
}

RecipeRuleset RecipeRuleset::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FleetError("not_found", "cannot open ruleset file: " + path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw FleetError("ruleset_parse", "ruleset is not valid JSON: " + path);
  return from_json(j);
}

void RecipeRuleset::validate() const {
  for (const RecipeRule& rule : rules) {
    if (rule.goal_pattern.empty())
      throw FleetError("ruleset_parse", "rule with empty goal_pattern");
    std::set<std::string> ids;
    for (const RecipeSubtask& st : rule.subtasks) {
      if (st.id.empty() || st.description.empty())
        throw FleetError("ruleset_parse", "subtask with empty id or description in rule '" +
                                              rule.goal_pattern + "'");
      if (!ids.insert(st.id).second)
        throw FleetError("ruleset_parse",
                         "duplicate subtask id '" + st.id + "' in rule '" + rule.goal_pattern + "'");
    }
    for (const RecipeSubtask& st : rule.subtasks) {
      for (const auto& dep : st.depends_on) {
        if (!ids.count(dep))
          throw FleetError("ruleset_parse", "rule '" + rule.goal_pattern + "': subtask '" + st.id +
                                                "' depends on unknown local id '" + dep + "'");
      }
    }
  }
}

const RecipeRule* RecipeRuleset::match(const std::string& goal_text,
                                       const std::vector<std::string>& world) const {
  for (const RecipeRule& rule : rules) {
    if (!contains_ci(goal_text, rule.goal_pattern)) continue;
    if (!rule.world_pattern.empty()) {
      bool seen = std::any_of(world.begin(), world.end(), [&](const std::string& s) {
        return contains_ci(s, rule.world_pattern);
      });
      if (!seen) continue;
    }
    return &rule;
  }
  return nullptr;
}

RawPlanResponse PlannerBackend::repair(PlanStrategy strategy, const PlannerInput& input,
                                       const std::string&, const std::string&) {
  return complete(strategy, input);
}

RecipeBackend::RecipeBackend(RecipeRuleset ruleset, CapabilityLexicon lexicon)
    : ruleset_(std::move(ruleset)), lexicon_(std::move(lexicon)) {
  ruleset_.validate();
}

namespace {

struct ExpandedTask {
  std::string id;
  std::string description;
  std::vector<std::string> depends_on;
  std::vector<std::string> capabilities;
  std::string goal_id;
};

// Expands one goal's first matching rule, dropping blocked subtasks and any
// dependency pointing at them.
std::vector<ExpandedTask> expand_goal(const RecipeRuleset& rules, const Goal& goal,
                                      const PlannerInput& input, const std::string& id_prefix) {
  const RecipeRule* rule = rules.match(goal.text, input.world);
  if (!rule) {
    throw FleetError("planner_backend", "no recipe rule matches goal '" + goal.text + "'",
                     Json{{"goal", goal.id}});
  }
  std::set<std::string> omitted;
  for (const RecipeSubtask& st : rule->subtasks) {
    if (input.blocked_descriptions.count(normalize_description(st.description)))
      omitted.insert(st.id);
  }
  std::vector<ExpandedTask> out;
  for (const RecipeSubtask& st : rule->subtasks) {
    if (omitted.count(st.id)) continue;
    ExpandedTask t;
    t.id = id_prefix + st.id;
    t.description = st.description;
    for (const auto& dep : st.depends_on) {
      if (!omitted.count(dep)) t.depends_on.push_back(id_prefix + dep);
    }
    t.capabilities = st.capabilities;
    t.goal_id = goal.id;
    out.push_back(std::move(t));
  }
  return out;
}

Json expanded_to_payload(const std::vector<ExpandedTask>& tasks) {
  Json arr = Json::array();
  for (const ExpandedTask& t : tasks) {
    Json tj;
    tj["id"] = t.id;
    tj["description"] = t.description;
    tj["depends_on"] = t.depends_on;
    tj["capabilities"] = t.capabilities;
    tj["goal_id"] = t.goal_id;
    arr.push_back(std::move(tj));
  }
  return Json{{"tasks", std::move(arr)}};
}

Plan skeleton_plan(const std::vector<ExpandedTask>& tasks, const std::set<std::size_t>& removed) {
  Plan p;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (removed.count(i)) continue;
    Task t;
    t.id = tasks[i].id;
    t.description = tasks[i].description;
    t.depends_on = tasks[i].depends_on;
    std::sort(t.depends_on.begin(), t.depends_on.end());
    t.depends_on.erase(std::unique(t.depends_on.begin(), t.depends_on.end()), t.depends_on.end());
    p.tasks.emplace(t.id, std::move(t));
  }
  return p;
}

// Collapse duplicate descriptions across goals onto the lexicographically
// smallest id; a merge that would close a cycle keeps both nodes instead.
void dedup_across_goals(std::vector<ExpandedTask>& tasks) {
  std::map<std::string, std::vector<std::size_t>> groups;  // norm description -> indices
  for (std::size_t i = 0; i < tasks.size(); ++i)
    groups[normalize_description(tasks[i].description)].push_back(i);

  std::set<std::size_t> removed;
  for (auto& [desc, members] : groups) {
    if (members.size() < 2) continue;
    std::sort(members.begin(), members.end(),
              [&](std::size_t a, std::size_t b) { return tasks[a].id < tasks[b].id; });
    const std::size_t survivor = members[0];
    for (std::size_t k = 1; k < members.size(); ++k) {
      const std::size_t victim = members[k];
      if (tasks[victim].goal_id == tasks[survivor].goal_id) continue;  // only across goals

      const std::vector<ExpandedTask> saved = tasks;
      const std::string victim_id = tasks[victim].id;
      const std::string survivor_id = tasks[survivor].id;
      for (ExpandedTask& t : tasks) {
        for (auto& dep : t.depends_on) {
          if (dep == victim_id) dep = survivor_id;
        }
      }
      for (const auto& dep : saved[victim].depends_on) {
        if (dep != survivor_id && dep != victim_id) tasks[survivor].depends_on.push_back(dep);
      }
      std::erase(tasks[survivor].depends_on, survivor_id);
      removed.insert(victim);

      if (validate_dag(skeleton_plan(tasks, removed))) {
        tasks = saved;  // cycle: abandon this pair, keep both nodes
        removed.erase(victim);
      }
    }
  }
  std::vector<ExpandedTask> out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!removed.count(i)) out.push_back(tasks[i]);
  }
  tasks = std::move(out);
}

}  // namespace

RawPlanResponse RecipeBackend::complete(PlanStrategy strategy, const PlannerInput& input) {
  if (input.goals.empty()) throw FleetError("no_goals", "planner invoked with no goals");
  RawPlanResponse resp;
  resp.strategy = strategy;

  if (strategy == PlanStrategy::per_goal) {
    if (input.goals.size() != 1)
      throw FleetError("planner_backend", "per-goal invocation expects exactly one goal");
    auto tasks = expand_goal(ruleset_, input.goals[0], input, "");
    resp.payload = expanded_to_payload(tasks).dump();
    return resp;
  }

  std::vector<Goal> goals = input.goals;
  if (strategy == PlanStrategy::monolithic) {
    std::sort(goals.begin(), goals.end(),
              [](const Goal& a, const Goal& b) { return a.id < b.id; });
  }
  std::vector<ExpandedTask> all;
  for (const Goal& g : goals) {
    auto tasks = expand_goal(ruleset_, g, input, g.id + "/");
    all.insert(all.end(), tasks.begin(), tasks.end());
  }

  if (strategy == PlanStrategy::big_dag) {
    dedup_across_goals(all);
  } else if (strategy == PlanStrategy::monolithic) {
    // Emulated flat-list output: one serialized chain, recipe edges dropped.
    for (std::size_t i = 0; i < all.size(); ++i) {
      all[i].depends_on.clear();
      if (i > 0) all[i].depends_on.push_back(all[i - 1].id);
    }
  }
  resp.payload = expanded_to_payload(all).dump();
  return resp;
}

Plan parse_plan_response(const RawPlanResponse& raw, const CapabilityLexicon& lexicon) {
  Json j = Json::parse(raw.payload, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("tasks") || !j.at("tasks").is_array()) {
    throw FleetError("plan_parse", "payload is not a JSON object with a 'tasks' list");
  }
  Plan plan;
  plan.strategy = raw.strategy;
  for (const auto& tj : j.at("tasks")) {
    if (!tj.is_object() || !tj.contains("id") || !tj.contains("description")) {
      throw FleetError("plan_parse", "task entries need 'id' and 'description'");
    }
    Task t;
    t.id = normalize_task_id(tj.at("id").get<std::string>());
    t.description = tj.at("description").get<std::string>();
    if (t.id.empty()) throw FleetError("plan_parse", "task with empty id");
    if (t.description.empty())
      throw FleetError("plan_parse", "task '" + t.id + "' has an empty description");
    if (tj.contains("depends_on")) {
      if (!tj.at("depends_on").is_array())
        throw FleetError("plan_parse", "task '" + t.id + "': depends_on must be a list");
      for (const auto& d : tj.at("depends_on")) {
        if (!d.is_string())
          throw FleetError("plan_parse", "task '" + t.id + "': depends_on entries must be strings");
        t.depends_on.push_back(normalize_task_id(d.get<std::string>()));
      }
      std::sort(t.depends_on.begin(), t.depends_on.end());
      t.depends_on.erase(std::unique(t.depends_on.begin(), t.depends_on.end()),
                         t.depends_on.end());
    }
    if (tj.contains("capabilities")) {
      for (const auto& c : tj.at("capabilities")) t.required_capabilities.push_back(c.get<std::string>());
      std::sort(t.required_capabilities.begin(), t.required_capabilities.end());
      t.required_capabilities.erase(
          std::unique(t.required_capabilities.begin(), t.required_capabilities.end()),
          t.required_capabilities.end());
    } else {
      auto caps = extract_capabilities(t.description, lexicon);
      t.required_capabilities.assign(caps.begin(), caps.end());
    }
    if (tj.contains("goal_id") && !tj.at("goal_id").is_null())
      t.goal_id = tj.at("goal_id").get<std::string>();
    if (plan.tasks.count(t.id))
      throw FleetError("plan_parse", "duplicate task id '" + t.id + "'");
    plan.tasks.emplace(t.id, std::move(t));
  }
  if (auto issue = validate_dag(plan)) {
    FleetError cause = issue->to_error();
    throw FleetError("plan_parse", std::string("plan invalid: ") + cause.what(), cause.details());
  }
  return plan;
}

Plan request_plan(PlannerBackend& backend, PlanStrategy strategy, const PlannerInput& input,
                  const CapabilityLexicon& lexicon) {
  RawPlanResponse raw = backend.complete(strategy, input);
  std::string diagnostics;
  for (int attempt = 0;; ++attempt) {
    try {
      return parse_plan_response(raw, lexicon);
    } catch (const FleetError& e) {
      if (e.code() != "plan_parse" || attempt >= backend.max_repair_retries()) throw;
      diagnostics = e.what();
    }
    raw = backend.repair(strategy, input, raw.payload, diagnostics);
  }
}

PlannerInput make_planner_input(const std::vector<Goal>& goals, const WorldState& world,
                                const PlannerContext* ctx) {
  PlannerInput input;
  input.goals = goals;
  input.world = world.texts();
  if (ctx) {
    input.progress = ctx->progress;
    input.blocked_descriptions = ctx->blocked_descriptions;
    input.fleet_capabilities = ctx->fleet_capabilities;
  }
  return input;
}

Plan plan_per_goal(const std::vector<Goal>& goals, const WorldState& world,
                   PlannerBackend& backend, const PlannerContext* ctx) {
  if (goals.empty()) throw FleetError("no_goals", "per-goal planning needs at least one goal");
  std::vector<Plan> parts;
  for (const Goal& g : goals) {
    PlannerInput input = make_planner_input({g}, world, ctx);
    try {
      Plan p = request_plan(backend, PlanStrategy::per_goal, input);
      p.id = g.id;
      for (auto& [id, t] : p.tasks) {
        if (t.goal_id.empty()) t.goal_id = g.id;
      }
      parts.push_back(std::move(p));
    } catch (const FleetError& e) {
      if (e.code() == "planner_backend" || e.code() == "plan_parse") {
        throw FleetError("planner_backend",
                         "planning failed for goal '" + g.id + "': " + e.what(),
                         Json{{"goal", g.id}, {"cause", e.code()}});
      }
      throw;
    }
  }
  Plan merged = merge_plans(parts);
  merged.strategy = PlanStrategy::per_goal;
  if (auto issue = validate_dag(merged)) throw issue->to_error();
  return merged;
}

Plan plan_big_dag(const std::vector<Goal>& goals, const WorldState& world,
                  PlannerBackend& backend, const PlannerContext* ctx) {
  if (goals.empty()) throw FleetError("no_goals", "big-dag planning needs at least one goal");
  Plan p = request_plan(backend, PlanStrategy::big_dag, make_planner_input(goals, world, ctx));
  p.strategy = PlanStrategy::big_dag;
  if (auto issue = validate_dag(p)) throw issue->to_error();
  return p;
}

Plan plan_monolithic(const std::vector<Goal>& goals, const WorldState& world,
                     PlannerBackend& backend, const PlannerContext* ctx) {
  if (goals.empty()) throw FleetError("no_goals", "monolithic planning needs at least one goal");
  Plan p = request_plan(backend, PlanStrategy::monolithic,
                        make_planner_input(goals, world, ctx));
  p.strategy = PlanStrategy::monolithic;
  if (auto issue = validate_dag(p)) throw issue->to_error();
  return p;
}

Plan build_plan(PlanStrategy strategy, const std::vector<Goal>& goals, const WorldState& world,
                PlannerBackend& backend, const PlannerContext* ctx) {
  switch (strategy) {
    case PlanStrategy::per_goal: return plan_per_goal(goals, world, backend, ctx);
    case PlanStrategy::big_dag: return plan_big_dag(goals, world, backend, ctx);
    case PlanStrategy::monolithic: return plan_monolithic(goals, world, backend, ctx);
    case PlanStrategy::manual: break;
  }
  throw FleetError("bad_enum", "cannot build a plan with the 'manual' strategy");
}

}  // namespace fleet
