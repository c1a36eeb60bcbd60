#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "fleet/allocation.hpp"
#include "fleet/model.hpp"

namespace fleet {

struct RecipeSubtask {
  std::string id;  // local id, unique within the rule
  std::string description;
  std::vector<std::string> depends_on;  // local ids within the same rule
  std::vector<std::string> capabilities;
};

struct RecipeRule {
  std::string goal_pattern;   // case-insensitive substring of the goal text
  std::string world_pattern;  // optional: must match some world statement
  std::vector<RecipeSubtask> subtasks;
};

struct RecipeRuleset {
  std::vector<RecipeRule> rules;

  static RecipeRuleset from_json(const Json& j);
  static RecipeRuleset load_file(const std::string& path);
  void validate() const;  // internal depends_on references, unique local ids

  // First rule whose goal_pattern matches the goal text and whose
  // world_pattern (when present) matches some world statement.
  const RecipeRule* match(const std::string& goal_text,
                          const std::vector<std::string>& world) const;
};

struct PlannerInput {
  std::vector<Goal> goals;
  std::vector<std::string> world;
  std::vector<std::string> progress;  // replan context, rendered as statements
  std::vector<std::string> fleet_capabilities;
  // Normalized descriptions that must not reappear (tasks that exhausted
  // their retries before the current replan).
  std::set<std::string> blocked_descriptions;
};

struct RawPlanResponse {
  PlanStrategy strategy = PlanStrategy::manual;
  std::string payload;  // JSON text: {"tasks":[{id, description, depends_on, ...}]}
};

class PlannerBackend {
 public:
  virtual ~PlannerBackend() = default;
  virtual RawPlanResponse complete(PlanStrategy strategy, const PlannerInput& input) = 0;
  virtual RawPlanResponse repair(PlanStrategy strategy, const PlannerInput& input,
                                 const std::string& previous_payload,
                                 const std::string& diagnostics);
  virtual int max_repair_retries() const { return 0; }
};

// Deterministic planner: expands the first matching recipe rule per goal.
// Strategy combination semantics live here so the same ruleset exercises all
// three pipelines.
class RecipeBackend : public PlannerBackend {
 public:
  explicit RecipeBackend(RecipeRuleset ruleset, CapabilityLexicon lexicon =
                                                    CapabilityLexicon::builtin_default());
  RawPlanResponse complete(PlanStrategy strategy, const PlannerInput& input) override;

  const RecipeRuleset& ruleset() const { return ruleset_; }

 private:
  RecipeRuleset ruleset_;
  CapabilityLexicon lexicon_;
};

// Validates a backend payload into a Plan: schema check, id normalization,
// dependency resolution, capability extraction for tasks that omit them, and
// DAG validation. Throws FleetError "plan_parse" with diagnostics.
Plan parse_plan_response(const RawPlanResponse& raw,
                         const CapabilityLexicon& lexicon = CapabilityLexicon::builtin_default());

// complete + parse with up to backend.max_repair_retries() repair reprompts.
Plan request_plan(PlannerBackend& backend, PlanStrategy strategy, const PlannerInput& input,
                  const CapabilityLexicon& lexicon = CapabilityLexicon::builtin_default());

// Replan-time extras threaded through to the backend.
struct PlannerContext {
  std::vector<std::string> progress;
  std::set<std::string> blocked_descriptions;
  std::vector<std::string> fleet_capabilities;
};

// One backend invocation per goal, combined with merge_plans (all-or-nothing).
Plan plan_per_goal(const std::vector<Goal>& goals, const WorldState& world,
                   PlannerBackend& backend, const PlannerContext* ctx = nullptr);

// One invocation covering every goal; duplicate descriptions across goals
// collapse onto one node unless that would create a cycle.
Plan plan_big_dag(const std::vector<Goal>& goals, const WorldState& world,
                  PlannerBackend& backend, const PlannerContext* ctx = nullptr);

// One invocation; the deterministic backend emits a single serialized chain.
Plan plan_monolithic(const std::vector<Goal>& goals, const WorldState& world,
                     PlannerBackend& backend, const PlannerContext* ctx = nullptr);

Plan build_plan(PlanStrategy strategy, const std::vector<Goal>& goals, const WorldState& world,
                PlannerBackend& backend, const PlannerContext* ctx = nullptr);

PlannerInput make_planner_input(const std::vector<Goal>& goals, const WorldState& world,
                                const PlannerContext* ctx = nullptr);

}  // namespace fleet
