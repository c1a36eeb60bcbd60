#include "fleet/model.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>

#include "fleet/rational.hpp"

namespace fleet {

std::string ratio_to_string(const Ratio& r) {
  std::ostringstream os;
  os << r.numerator();
  if (r.denominator() != 1) os << '/' << r.denominator();
  return os.str();
}

Ratio ratio_from_string(const std::string& s) {
  std::size_t slash = s.find('/');
  try {
    if (slash == std::string::npos) return Ratio(std::stoll(s));
    std::int64_t num = std::stoll(s.substr(0, slash));
    std::int64_t den = std::stoll(s.substr(slash + 1));
    return Ratio(num, den);
  } catch (const std::exception&) {
    throw std::invalid_argument("not a rational: '" + s + "'");
  }
}

double ratio_to_double(const Ratio& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

std::string format_one_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

const char* to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::pending: return "pending";
    case TaskStatus::ready: return "ready";
    case TaskStatus::dispatched: return "dispatched";
    case TaskStatus::running: return "running";
    case TaskStatus::succeeded: return "succeeded";
    case TaskStatus::failed: return "failed";
    case TaskStatus::cancelled: return "cancelled";
  }
  return "pending";
}

const char* to_string(PlanStrategy s) {
  switch (s) {
    case PlanStrategy::per_goal: return "per_goal";
    case PlanStrategy::big_dag: return "big_dag";
    case PlanStrategy::monolithic: return "monolithic";
    case PlanStrategy::manual: return "manual";
  }
  return "manual";
}

const char* to_string(AllocMethod m) {
  switch (m) {
    case AllocMethod::milp: return "milp";
    case AllocMethod::llm: return "llm";
    case AllocMethod::round_robin: return "round_robin";
  }
  return "milp";
}

TaskStatus task_status_from_string(const std::string& s) {
  for (TaskStatus v : {TaskStatus::pending, TaskStatus::ready, TaskStatus::dispatched,
                       TaskStatus::running, TaskStatus::succeeded, TaskStatus::failed,
                       TaskStatus::cancelled}) {
    if (s == to_string(v)) return v;
  }
  throw FleetError("bad_enum", "unknown task status: " + s);
}

PlanStrategy plan_strategy_from_string(const std::string& s) {
  for (PlanStrategy v : {PlanStrategy::per_goal, PlanStrategy::big_dag, PlanStrategy::monolithic,
                         PlanStrategy::manual}) {
    if (s == to_string(v)) return v;
  }
  // CLI spelling with hyphens.
  if (s == "per-goal") return PlanStrategy::per_goal;
  if (s == "big-dag") return PlanStrategy::big_dag;
  throw FleetError("bad_enum", "unknown plan strategy: " + s);
}

AllocMethod alloc_method_from_string(const std::string& s) {
  for (AllocMethod v : {AllocMethod::milp, AllocMethod::llm, AllocMethod::round_robin}) {
    if (s == to_string(v)) return v;
  }
  if (s == "round-robin") return AllocMethod::round_robin;
  throw FleetError("bad_enum", "unknown allocator: " + s);
}

bool is_terminal(TaskStatus s) {
  return s == TaskStatus::succeeded || s == TaskStatus::failed || s == TaskStatus::cancelled;
}

std::string normalize_task_id(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (c == ' ') {
      out.push_back('-');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

std::string normalize_description(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  bool in_space = true;  // leading whitespace dropped
  for (char c : raw) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

const Task* Plan::find(const std::string& task_id) const {
  auto it = tasks.find(task_id);
  return it == tasks.end() ? nullptr : &it->second;
}

Task* Plan::find(const std::string& task_id) {
  auto it = tasks.find(task_id);
  return it == tasks.end() ? nullptr : &it->second;
}

std::vector<std::pair<std::string, std::string>> Plan::edges() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [id, t] : tasks) {
    for (const auto& dep : t.depends_on) out.emplace_back(dep, id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string WorldState::add(const std::string& text, WorldStatement::Source source,
                            std::int64_t now) {
  if (text.empty()) throw FleetError("bad_statement", "world statement text must be nonempty");
  WorldStatement st;
  st.id = "w" + std::to_string(next_id++);
  st.text = text;
  st.added_at = now;
  st.source = source;
  statements.push_back(std::move(st));
  return statements.back().id;
}

std::vector<std::string> WorldState::texts() const {
  std::vector<std::string> out;
  out.reserve(statements.size());
  for (const auto& st : statements) out.push_back(st.text);
  return out;
}

FleetError DagIssue::to_error() const {
  if (kind == Kind::cycle) {
    std::string msg = "dependency cycle:";
    for (const auto& id : cycle) msg += " " + id;
    return FleetError("cycle", msg, Json{{"cycle", cycle}});
  }
  return FleetError("dangling_dependency",
                    "task '" + task_id + "' depends on unknown task '" + missing_id + "'",
                    Json{{"task", task_id}, {"missing", missing_id}});
}

namespace {

// Iterative DFS over sorted ids; returns the first cycle found, in edge order.
std::optional<std::vector<std::string>> find_cycle(const Plan& plan) {
  // adjacency: dep -> dependents (forward edges)
  std::map<std::string, std::vector<std::string>> next;
  for (const auto& [id, t] : plan.tasks) {
    next[id];
    for (const auto& dep : t.depends_on) next[dep].push_back(id);
  }
  for (auto& [id, v] : next) std::sort(v.begin(), v.end());

  enum class Color { white, grey, black };
  std::map<std::string, Color> color;
  for (const auto& [id, _] : next) color[id] = Color::white;

  std::vector<std::string> stack;
  // frame: node + next-child index
  struct Frame {
    std::string node;
    std::size_t child = 0;
  };
  for (const auto& [start, _] : next) {
    if (color[start] != Color::white) continue;
    std::vector<Frame> frames{{start}};
    color[start] = Color::grey;
    stack.push_back(start);
    while (!frames.empty()) {
      Frame& f = frames.back();
      const auto& children = next[f.node];
      if (f.child < children.size()) {
        const std::string& c = children[f.child++];
        if (color[c] == Color::grey) {
          // cycle: slice stack from first occurrence of c
          auto it = std::find(stack.begin(), stack.end(), c);
          return std::vector<std::string>(it, stack.end());
        }
        if (color[c] == Color::white) {
          color[c] = Color::grey;
          stack.push_back(c);
          frames.push_back({c});
        }
      } else {
        color[f.node] = Color::black;
        stack.pop_back();
        frames.pop_back();
      }
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<DagIssue> validate_dag(const Plan& plan) {
  for (const auto& [id, t] : plan.tasks) {
    for (const auto& dep : t.depends_on) {
      if (!plan.tasks.count(dep)) {
        DagIssue issue;
        issue.kind = DagIssue::Kind::dangling;
        issue.task_id = id;
        issue.missing_id = dep;
        return issue;
      }
    }
  }
  if (auto cycle = find_cycle(plan)) {
    DagIssue issue;
    issue.kind = DagIssue::Kind::cycle;
    issue.cycle = *cycle;
    return issue;
  }
  return std::nullopt;
}

std::vector<std::string> topo_order(const Plan& plan) {
  if (auto issue = validate_dag(plan)) throw issue->to_error();

  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> next;
  for (const auto& [id, t] : plan.tasks) {
    indegree[id] += 0;
    for (const auto& dep : t.depends_on) {
      next[dep].push_back(id);
      indegree[id]++;
    }
  }
  // Kahn's algorithm; std::set gives the lexicographic tie-break.
  std::set<std::string> avail;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) avail.insert(id);
  }
  std::vector<std::string> order;
  order.reserve(plan.tasks.size());
  while (!avail.empty()) {
    std::string id = *avail.begin();
    avail.erase(avail.begin());
    order.push_back(id);
    for (const auto& n : next[id]) {
      if (--indegree[n] == 0) avail.insert(n);
    }
  }
  return order;
}

Plan merge_plans(const std::vector<Plan>& plans) {
  Plan out;
  out.strategy = PlanStrategy::per_goal;
  for (const Plan& p : plans) {
    if (auto issue = validate_dag(p)) throw issue->to_error();
    const std::string prefix = p.id.empty() ? "" : p.id + "/";
    for (const auto& [id, t] : p.tasks) {
      Task nt = t;
      nt.id = prefix + id;
      for (auto& dep : nt.depends_on) dep = prefix + dep;
      if (out.tasks.count(nt.id)) {
        throw FleetError("duplicate_task", "merged plans collide on task id '" + nt.id + "'");
      }
      out.tasks.emplace(nt.id, std::move(nt));
    }
  }
  return out;
}

PlanProgress plan_progress(const Plan& plan) {
  PlanProgress prog;
  for (const auto& [id, t] : plan.tasks) prog.counts[t.status]++;
  for (const auto& [id, t] : plan.tasks) {
    if (t.status != TaskStatus::pending) continue;
    bool ready = true;
    for (const auto& dep : t.depends_on) {
      const Task* d = plan.find(dep);
      if (!d || d->status != TaskStatus::succeeded) {
        ready = false;
        break;
      }
    }
    if (ready) prog.frontier.push_back(id);
  }
  std::sort(prog.frontier.begin(), prog.frontier.end());
  return prog;
}

// --- serialization ----------------------------------------------------------

namespace {

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<std::string> string_list(const Json& j, const std::string& key) {
  std::vector<std::string> out;
  if (!j.contains(key) || j.at(key).is_null()) return out;
  if (!j.at(key).is_array()) throw FleetError("schema", "'" + key + "' must be a list");
  for (const auto& e : j.at(key)) {
    if (!e.is_string()) throw FleetError("schema", "'" + key + "' entries must be strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace

Json task_to_json(const Task& t) {
  Json j;
  j["id"] = t.id;
  j["description"] = t.description;
  j["depends_on"] = t.depends_on;
  j["required_capabilities"] = t.required_capabilities;
  j["goal_id"] = t.goal_id;
  j["status"] = to_string(t.status);
  j["attempts"] = t.attempts;
  j["assigned_robot"] = t.assigned_robot;
  return j;
}

Task task_from_json(const Json& j) {
  Task t;
  t.id = j.at("id").get<std::string>();
  t.description = j.at("description").get<std::string>();
  t.depends_on = sorted_unique(string_list(j, "depends_on"));
  t.required_capabilities = sorted_unique(string_list(j, "required_capabilities"));
  if (j.contains("goal_id") && !j.at("goal_id").is_null())
    t.goal_id = j.at("goal_id").get<std::string>();
  if (j.contains("status")) t.status = task_status_from_string(j.at("status").get<std::string>());
  if (j.contains("attempts")) t.attempts = j.at("attempts").get<int>();
  if (j.contains("assigned_robot") && !j.at("assigned_robot").is_null())
    t.assigned_robot = j.at("assigned_robot").get<std::string>();
  return t;
}

Json plan_to_json(const Plan& p) {
  Json j;
  j["id"] = p.id;
  j["strategy"] = to_string(p.strategy);
  Json tasks = Json::array();
  for (const auto& [id, t] : p.tasks) tasks.push_back(task_to_json(t));  // map is id-sorted
  j["tasks"] = std::move(tasks);
  return j;
}

Plan plan_from_json(const Json& j) {
  Plan p;
  p.id = j.at("id").get<std::string>();
  p.strategy = plan_strategy_from_string(j.at("strategy").get<std::string>());
  for (const auto& tj : j.at("tasks")) {
    Task t = task_from_json(tj);
    if (p.tasks.count(t.id))
      throw FleetError("duplicate_task", "duplicate task id '" + t.id + "'");
    p.tasks.emplace(t.id, std::move(t));
  }
  return p;
}

Json robot_to_json(const RobotSpec& r) {
  Json j;
  j["name"] = r.name;
  j["description"] = r.description;
  j["capabilities"] = r.capabilities;
  j["endpoint"] = Json{{"host", r.host}, {"port", r.port}};
  Json dep;
  dep["mode"] = r.deploy_mode == RobotSpec::DeployMode::container ? "container" : "native";
  if (!r.image.empty()) dep["image"] = r.image;
  j["deployment"] = std::move(dep);
  return j;
}

RobotSpec robot_from_json(const Json& j) {
  RobotSpec r;
  r.name = j.at("name").get<std::string>();
  if (j.contains("description")) r.description = j.at("description").get<std::string>();
  r.capabilities = sorted_unique(string_list(j, "capabilities"));
  r.host = j.at("endpoint").at("host").get<std::string>();
  r.port = j.at("endpoint").at("port").get<int>();
  if (j.contains("deployment")) {
    const auto& dep = j.at("deployment");
    std::string mode = dep.at("mode").get<std::string>();
    r.deploy_mode =
        mode == "container" ? RobotSpec::DeployMode::container : RobotSpec::DeployMode::native;
    if (dep.contains("image")) r.image = dep.at("image").get<std::string>();
  }
  return r;
}

Json world_to_json(const WorldState& w) {
  Json j;
  j["next_id"] = w.next_id;
  Json arr = Json::array();
  for (const auto& st : w.statements) {
    arr.push_back(Json{{"id", st.id},
                       {"text", st.text},
                       {"added_at", st.added_at},
                       {"source", st.source == WorldStatement::Source::robot ? "robot" : "operator"}});
  }
  j["statements"] = std::move(arr);
  return j;
}

WorldState world_from_json(const Json& j) {
  WorldState w;
  w.next_id = j.at("next_id").get<int>();
  for (const auto& sj : j.at("statements")) {
    WorldStatement st;
    st.id = sj.at("id").get<std::string>();
    st.text = sj.at("text").get<std::string>();
    st.added_at = sj.at("added_at").get<std::int64_t>();
    st.source = sj.at("source").get<std::string>() == "robot" ? WorldStatement::Source::robot
                                                              : WorldStatement::Source::operator_side;
    w.statements.push_back(std::move(st));
  }
  return w;
}

Json allocation_to_json(const Allocation& a) {
  Json j;
  j["method"] = to_string(a.method);
  j["feasible"] = a.feasible;
  Json m = Json::object();
  for (const auto& [task, robot] : a.assignments) m[task] = robot;
  j["assignments"] = std::move(m);
  j["warnings"] = a.warnings;
  return j;
}

Allocation allocation_from_json(const Json& j) {
  Allocation a;
  a.method = alloc_method_from_string(j.at("method").get<std::string>());
  a.feasible = j.at("feasible").get<bool>();
  for (const auto& [task, robot] : j.at("assignments").items())
    a.assignments[task] = robot.get<std::string>();
  a.warnings = string_list(j, "warnings");
  return a;
}

}  // namespace fleet
