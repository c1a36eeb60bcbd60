#include "fleet/allocation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace fleet {

CapabilityLexicon CapabilityLexicon::parse(const std::string& text) {
  CapabilityLexicon lex;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && is_space(s.front())) s.erase(s.begin());
    while (!s.empty() && is_space(s.back())) s.pop_back();
    return s;
  };
  while (std::getline(in, line)) {
    lineno++;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto arrow = line.find("->");
    if (arrow == std::string::npos) {
      throw FleetError("lexicon_parse",
                       "line " + std::to_string(lineno) + ": expected 'keyword -> capability'");
    }
    std::string keyword = trim(line.substr(0, arrow));
    std::string capability = trim(line.substr(arrow + 2));
    if (keyword.empty() || capability.empty()) {
      throw FleetError("lexicon_parse", "line " + std::to_string(lineno) + ": empty field");
    }
    for (auto& c : keyword) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lex.entries.count(keyword)) {
      throw FleetError("lexicon_parse", "duplicate keyword '" + keyword + "'");
    }
    lex.entries[keyword] = capability;
  }
  return lex;
}

CapabilityLexicon CapabilityLexicon::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FleetError("not_found", "cannot open lexicon file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

CapabilityLexicon CapabilityLexicon::builtin_default() {
  return parse(
      "navigate -> navigation\n"
      "navigation -> navigation\n"
      "go -> navigation\n"
      "bring -> navigation\n"
      "drive -> navigation\n"
      "explore -> exploration\n"
      "exploration -> exploration\n"
      "scan -> exploration\n"
      "search -> exploration\n"
      "pick -> manipulation\n"
      "place -> manipulation\n"
      "grab -> manipulation\n"
      "carry -> manipulation\n"
      "manipulate -> manipulation\n"
      "detect -> detection\n"
      "find -> detection\n"
      "locate -> detection\n"
      "identify -> detection\n");
}

std::set<std::string> extract_capabilities(const std::string& description,
                                           const CapabilityLexicon& lexicon) {
  std::set<std::string> out;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) {
      auto it = lexicon.entries.find(token);
      if (it != lexicon.entries.end()) out.insert(it->second);
      token.clear();
    }
  };
  for (char raw : description) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

namespace {

// Feasibility probe for load bound M: route every task through a compatible
// robot holding at most M tasks. Kuhn-style augmentation generalized to
// robot capacity M; tasks and robots are tried in index order.
bool feasible_at(const std::vector<std::vector<bool>>& compat, int m, int bound,
                 std::vector<int>* out_assign) {
  const int n = static_cast<int>(compat.size());
  std::vector<std::vector<int>> holders(m);  // robot -> task rows currently held
  std::vector<int> assign(n, -1);

  // Augmenting path over the capacitated bipartite graph: a robot below its
  // bound absorbs the task; a full robot may recursively re-seat one holder.
  std::vector<char> robot_seen;
  std::function<bool(int)> augment = [&](int task) -> bool {
    for (int j = 0; j < m; ++j) {
      if (!compat[task][j] || robot_seen[j]) continue;
      robot_seen[j] = 1;
      if (static_cast<int>(holders[j].size()) < bound) {
        holders[j].push_back(task);
        assign[task] = j;
        return true;
      }
      for (int& held : holders[j]) {
        if (augment(held)) {
          int displaced = held;
          held = task;
          assign[task] = j;
          (void)displaced;
          return true;
        }
      }
    }
    return false;
  };

  for (int i = 0; i < n; ++i) {
    robot_seen.assign(m, 0);
    if (!augment(i)) return false;
  }
  if (out_assign) *out_assign = assign;
  return true;
}

}  // namespace

AssignmentMatrix solve_minmax(const std::vector<std::vector<bool>>& compatibility) {
  const int n = static_cast<int>(compatibility.size());
  const int m = n > 0 ? static_cast<int>(compatibility[0].size()) : 0;
  if (n > 0 && m < 1) throw FleetError("infeasible", "no robots available");

  std::vector<int> stranded;
  for (int i = 0; i < n; ++i) {
    if (std::none_of(compatibility[i].begin(), compatibility[i].end(), [](bool b) { return b; }))
      stranded.push_back(i);
  }
  if (!stranded.empty()) {
    throw FleetError("infeasible", "tasks with no compatible robot",
                     Json{{"tasks", stranded}});
  }

  AssignmentMatrix result;
  if (n == 0) {
    result.max_load = 0;
    return result;
  }

  int lo = (n + m - 1) / m;  // pigeonhole lower bound
  int hi = n;
  while (lo < hi) {
    int mid = lo + (hi - lo) / 2;
    if (feasible_at(compatibility, m, mid, nullptr)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  // Re-run at the optimum so the returned assignment is the deterministic
  // one for that bound, independent of the search path.
  std::vector<int> assign;
  if (!feasible_at(compatibility, m, lo, &assign)) {
    throw FleetError("internal", "min-max search converged on an infeasible bound");
  }
  result.x.assign(n, std::vector<bool>(m, false));
  std::vector<int> load(m, 0);
  for (int i = 0; i < n; ++i) {
    result.x[i][assign[i]] = true;
    load[assign[i]]++;
  }
  result.max_load = *std::max_element(load.begin(), load.end());
  return result;
}

bool task_compatible(const Task& task, const RobotSpec& robot) {
  // Unconstrained tasks (no extracted capabilities) fit any robot.
  return std::includes(robot.capabilities.begin(), robot.capabilities.end(),
                       task.required_capabilities.begin(), task.required_capabilities.end());
}

Allocation allocate_milp(const std::vector<Task>& tasks, const std::vector<RobotSpec>& robots) {
  if (robots.empty()) throw FleetError("no_robots", "cannot allocate with an empty registry");
  const int n = static_cast<int>(tasks.size());
  const int m = static_cast<int>(robots.size());
  std::vector<std::vector<bool>> compat(n, std::vector<bool>(m, false));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) compat[i][j] = task_compatible(tasks[i], robots[j]);
  }
  AssignmentMatrix x;
  try {
    x = solve_minmax(compat);
  } catch (const FleetError& e) {
    if (e.code() != "infeasible" || !e.details().contains("tasks")) throw;
    std::vector<std::string> ids;
    for (int row : e.details().at("tasks").get<std::vector<int>>()) ids.push_back(tasks[row].id);
    throw FleetError("infeasible", "no robot is compatible with some tasks",
                     Json{{"tasks", ids}});
  }
  Allocation alloc;
  alloc.method = AllocMethod::milp;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      if (x.x[i][j]) alloc.assignments[tasks[i].id] = robots[j].name;
    }
  }
  return alloc;
}

Allocation allocate_round_robin(const std::vector<Task>& tasks,
                                const std::vector<RobotSpec>& robots) {
  if (robots.empty()) throw FleetError("no_robots", "cannot allocate with an empty registry");
  Allocation alloc;
  alloc.method = AllocMethod::round_robin;
  alloc.feasible = false;
  std::size_t next = 0;
  for (const Task& t : tasks) {
    alloc.assignments[t.id] = robots[next % robots.size()].name;
    next++;
  }
  return alloc;
}

std::string default_allocation_prompt() {
  return
      "Assign every task to exactly one robot.\n"
      "Tasks:\n{tasks}\n"
      "Robots and capabilities:\n{robots}\n"
      "World state:\n{world}\n"
      "Reply with a JSON object mapping each task id to a robot name and "
      "nothing else.\n";
}

namespace {

std::string replace_placeholder(std::string text, const std::string& key,
                                const std::string& value) {
  const std::string tag = "{" + key + "}";
  for (std::size_t pos = text.find(tag); pos != std::string::npos; pos = text.find(tag, pos)) {
    text.replace(pos, tag.size(), value);
    pos += value.size();
  }
  return text;
}

std::string render_allocation_prompt(const std::string& tmpl, const std::vector<Task>& tasks,
                                     const std::vector<RobotSpec>& robots,
                                     const WorldState& world) {
  std::ostringstream ts;
  for (const Task& t : tasks) {
    ts << "- " << t.id << ": " << t.description;
    if (!t.required_capabilities.empty()) {
      ts << " (requires:";
      for (const auto& c : t.required_capabilities) ts << ' ' << c;
      ts << ')';
    }
    ts << '\n';
  }
  std::ostringstream rs;
  for (const RobotSpec& r : robots) {
    rs << "- " << r.name << ":";
    for (const auto& c : r.capabilities) rs << ' ' << c;
    rs << '\n';
  }
  std::ostringstream ws;
  for (const auto& text : world.texts()) ws << "- " << text << '\n';
  std::string out = replace_placeholder(tmpl, "tasks", ts.str());
  out = replace_placeholder(out, "robots", rs.str());
  out = replace_placeholder(out, "world", ws.str());
  return out;
}

// One validation pass; returns diagnostics instead of an allocation when the
// reply is unusable.
std::optional<std::string> parse_allocation_reply(const std::string& reply,
                                                  const std::vector<Task>& tasks,
                                                  const std::vector<RobotSpec>& robots,
                                                  Allocation* out) {
  Json j = Json::parse(reply, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return "reply is not a JSON object";
  std::map<std::string, std::string> assignments;
  for (const auto& [task_id, robot] : j.items()) {
    if (!robot.is_string()) return "value for task '" + task_id + "' is not a robot name string";
    assignments[task_id] = robot.get<std::string>();
  }
  std::ostringstream diag;
  bool bad = false;
  for (const Task& t : tasks) {
    auto it = assignments.find(t.id);
    if (it == assignments.end()) {
      diag << "missing assignment for task '" << t.id << "'; ";
      bad = true;
    }
  }
  for (const auto& [task_id, robot] : assignments) {
    bool known_task =
        std::any_of(tasks.begin(), tasks.end(), [&](const Task& t) { return t.id == task_id; });
    if (!known_task) {
      diag << "unknown task '" << task_id << "'; ";
      bad = true;
      continue;
    }
    bool known_robot = std::any_of(robots.begin(), robots.end(),
                                   [&](const RobotSpec& r) { return r.name == robot; });
    if (!known_robot) {
      diag << "unknown robot '" << robot << "'; ";
      bad = true;
    }
  }
  if (bad) return diag.str();

  out->assignments.clear();
  for (const Task& t : tasks) out->assignments[t.id] = assignments.at(t.id);
  return std::nullopt;
}

}  // namespace

Allocation allocate_llm(const std::vector<Task>& tasks, const std::vector<RobotSpec>& robots,
                        const WorldState& world, TextCompleter& backend,
                        const LlmAllocatorOptions& options) {
  if (robots.empty()) throw FleetError("no_robots", "cannot allocate with an empty registry");
  std::string prompt = render_allocation_prompt(options.prompt_template, tasks, robots, world);

  Allocation alloc;
  alloc.method = AllocMethod::llm;
  std::string diagnostics;
  for (int attempt = 0; attempt <= options.max_repair_retries; ++attempt) {
    std::string ask = prompt;
    if (attempt > 0) {
      ask += "\nThe previous reply was invalid: " + diagnostics +
             "\nReturn a corrected JSON object only.\n";
    }
    std::string reply = backend.complete(ask);
    auto issue = parse_allocation_reply(reply, tasks, robots, &alloc);
    if (!issue) {
      // Capability mismatches are surfaced, not rejected.
      for (const Task& t : tasks) {
        const std::string& robot = alloc.assignments.at(t.id);
        auto rit = std::find_if(robots.begin(), robots.end(),
                                [&](const RobotSpec& r) { return r.name == robot; });
        if (rit != robots.end() && !task_compatible(t, *rit)) {
          alloc.warnings.push_back("task '" + t.id + "' assigned to '" + robot +
                                   "' without required capabilities");
        }
      }
      return alloc;
    }
    diagnostics = *issue;
  }
  throw FleetError("allocation_parse", "allocation reply invalid after repairs: " + diagnostics);
}

Allocation allocate_with_fallback(const std::vector<Task>& tasks,
                                  const std::vector<RobotSpec>& robots, AllocMethod method,
                                  const WorldState& world, TextCompleter* llm) {
  switch (method) {
    case AllocMethod::round_robin:
      return allocate_round_robin(tasks, robots);
    case AllocMethod::llm: {
      if (!llm) throw FleetError("backend_unavailable", "no llm allocation backend configured");
      return allocate_llm(tasks, robots, world, *llm);
    }
    case AllocMethod::milp: {
      try {
        return allocate_milp(tasks, robots);
      } catch (const FleetError& e) {
        if (e.code() != "infeasible") throw;
        Allocation alloc = allocate_round_robin(tasks, robots);
        alloc.warnings.push_back("min-max allocation infeasible (" +
                                 e.details().dump() + "); fell back to round-robin");
        return alloc;
      }
    }
  }
  throw FleetError("bad_enum", "unknown allocation method");
}

}  // namespace fleet
