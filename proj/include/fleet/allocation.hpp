#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fleet/model.hpp"

namespace fleet {

// Keyword (lowercase token) -> capability string.
struct CapabilityLexicon {
  std::map<std::string, std::string> entries;

  // Parses lines of the form "keyword -> capability". '#' starts a comment.
  static CapabilityLexicon parse(const std::string& text);
  static CapabilityLexicon load_file(const std::string& path);
  static CapabilityLexicon builtin_default();
};

// Whole-word, case-insensitive keyword match over the description after
// stripping punctuation. Empty result means the task is unconstrained.
std::set<std::string> extract_capabilities(const std::string& description,
                                           const CapabilityLexicon& lexicon);

// Row-one-hot boolean assignment minimizing the maximum column (robot) load.
struct AssignmentMatrix {
  std::vector<std::vector<bool>> x;  // n rows (tasks) x m cols (robots)
  int max_load = 0;                  // achieved M
};

struct InfeasibleError {
  std::vector<int> task_rows;  // rows with no compatible robot
};

// Exact optimum: binary search on the load bound M over [ceil(n/m), n];
// each probe is a unit-capacity task->robot flow with robot capacity M,
// feasible iff all n tasks route. Deterministic (lowest-index augmenting).
// Throws FleetError "infeasible" (details.tasks = row indices) when some row
// has no compatible robot. m must be >= 1.
AssignmentMatrix solve_minmax(const std::vector<std::vector<bool>>& compatibility);

bool task_compatible(const Task& task, const RobotSpec& robot);

// Eq.-style min-max-load allocation under capability constraints. Tasks are
// considered in the order given (callers pass topological order); robots in
// registry order. Throws FleetError "infeasible" with details.tasks listing
// the task ids no robot can serve.
Allocation allocate_milp(const std::vector<Task>& tasks, const std::vector<RobotSpec>& robots);

// Cyclic assignment ignoring capabilities; feasible flag is set false.
Allocation allocate_round_robin(const std::vector<Task>& tasks,
                                const std::vector<RobotSpec>& robots);

// Single-prompt text completion; the network client and all test stubs
// implement this.
class TextCompleter {
 public:
  virtual ~TextCompleter() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

struct LlmAllocatorOptions {
  std::string prompt_template;  // placeholders {tasks}, {robots}, {world}
  int max_repair_retries = 2;
};

std::string default_allocation_prompt();

// Prompts for a JSON map {task id: robot name}; missing or unknown names are
// re-prompted with the diagnostics up to max_repair_retries times, then
// rejected with "allocation_parse". Capability violations become warnings.
Allocation allocate_llm(const std::vector<Task>& tasks, const std::vector<RobotSpec>& robots,
                        const WorldState& world, TextCompleter& backend,
                        const LlmAllocatorOptions& options = {default_allocation_prompt(), 2});

// milp with round-robin fallback on infeasibility (feasible=false + warning).
Allocation allocate_with_fallback(const std::vector<Task>& tasks,
                                  const std::vector<RobotSpec>& robots, AllocMethod method,
                                  const WorldState& world, TextCompleter* llm);

}  // namespace fleet
