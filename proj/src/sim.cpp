#include "fleet/sim.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace fleet {

namespace {

std::string lowercase(const std::string& s) {
  std::string out = s;
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool matches(const std::string& description, const std::string& pattern) {
  return lowercase(description).find(lowercase(pattern)) != std::string::npos;
}

}  // namespace

WorkerProfile WorkerProfile::from_json(const Json& j) {
  WorkerProfile p;
  p.robot_name = j.at("robot_name").get<std::string>();
  if (j.contains("task_duration")) {
    const auto& d = j.at("task_duration");
    if (d.is_string()) {
      p.task_duration = ratio_from_string(d.get<std::string>());
    } else if (d.is_number_integer()) {
      p.task_duration = Ratio(d.get<std::int64_t>());
    } else {
      // decimal seconds -> milliseconds, kept exact
      p.task_duration = Ratio(static_cast<std::int64_t>(d.get<double>() * 1000.0 + 0.5), 1000);
    }
  }
  if (p.task_duration < Ratio(0))
    throw FleetError("schema", "task_duration must be non-negative");
  if (j.contains("failure_script")) {
    for (const auto& [pattern, count] : j.at("failure_script").items()) {
      p.failure_script.emplace_back(pattern, count.get<int>());
    }
  }
  if (j.contains("discovery_script")) {
    for (const auto& [pattern, stmts] : j.at("discovery_script").items()) {
      p.discovery_script.emplace_back(pattern, stmts.get<std::vector<std::string>>());
    }
  }
  return p;
}

WorkerProfile WorkerProfile::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FleetError("not_found", "cannot open profile file: " + path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw FleetError("schema", "profile is not valid JSON: " + path);
  return from_json(j);
}

Json WorkerProfile::to_json() const {
  Json j;
  j["robot_name"] = robot_name;
  j["task_duration"] = ratio_to_string(task_duration);
  Json fs = Json::object();
  for (const auto& [pattern, count] : failure_script) fs[pattern] = count;
  j["failure_script"] = std::move(fs);
  Json ds = Json::object();
  for (const auto& [pattern, stmts] : discovery_script) ds[pattern] = stmts;
  j["discovery_script"] = std::move(ds);
  return j;
}

int WorkerProfile::scripted_failures(const std::string& description) const {
  for (const auto& [pattern, count] : failure_script) {
    if (matches(description, pattern)) return count;
  }
  return 0;
}

const std::vector<std::string>* WorkerProfile::scripted_discovery(
    const std::string& description) const {
  for (const auto& [pattern, stmts] : discovery_script) {
    if (matches(description, pattern)) return &stmts;
  }
  return nullptr;
}

SimDispatcher::SimDispatcher(std::vector<WorkerProfile> profiles) {
  for (auto& p : profiles) {
    std::string name = p.robot_name;
    profiles_.emplace(std::move(name), std::move(p));
  }
}

SimDispatcher SimDispatcher::uniform(const std::vector<std::string>& robots, Ratio duration) {
  std::vector<WorkerProfile> profiles;
  for (const auto& name : robots) {
    WorkerProfile p;
    p.robot_name = name;
    p.task_duration = duration;
    profiles.push_back(std::move(p));
  }
  return SimDispatcher(std::move(profiles));
}

bool SimDispatcher::dispatch(const DispatchOrder& order, const std::vector<std::string>&,
                             Ratio now) {
  if (unreachable_.count(order.robot)) return false;
  auto pit = profiles_.find(order.robot);
  if (pit == profiles_.end()) return false;
  const WorkerProfile& profile = pit->second;

  Outcome oc;
  oc.task_id = order.task_id;
  oc.robot = order.robot;
  oc.time = now + profile.task_duration;

  int budget = profile.scripted_failures(order.description);
  int& seen = failures_seen_[order.task_id];
  if (budget < 0 || seen < budget) {
    seen++;
    oc.success = false;
    oc.detail = "scripted failure";
  } else {
    oc.success = true;
    if (const auto* stmts = profile.scripted_discovery(order.description)) {
      oc.request_replan = true;
      oc.statements = *stmts;
      oc.replan_reason = "discovered new information";
    }
  }

  Pending p;
  p.due = oc.time;
  p.seq = seq_++;
  p.outcome = std::move(oc);
  in_flight_[order.task_id] = queue_.size();
  queue_.push_back(std::move(p));
  return true;
}

void SimDispatcher::cancel(const std::string& task_id, const std::string&) {
  auto it = in_flight_.find(task_id);
  if (it == in_flight_.end()) return;
  queue_[it->second].cancelled = true;
  in_flight_.erase(it);
}

std::optional<Dispatcher::Outcome> SimDispatcher::next_outcome() {
  std::vector<Pending> live;
  live.reserve(queue_.size());
  for (auto& p : queue_) {
    if (!p.cancelled) live.push_back(std::move(p));
  }
  queue_ = std::move(live);
  in_flight_.clear();
  for (std::size_t i = 0; i < queue_.size(); ++i) in_flight_[queue_[i].outcome.task_id] = i;

  std::size_t best = queue_.size();
  for (std::size_t i = 0; i < queue_.size(); ++i) {
    if (best == queue_.size() || queue_[i].due < queue_[best].due ||
        (queue_[i].due == queue_[best].due && queue_[i].seq < queue_[best].seq)) {
      best = i;
    }
  }
  if (best == queue_.size()) return std::nullopt;
  Pending p = std::move(queue_[best]);
  queue_.erase(queue_.begin() + static_cast<std::ptrdiff_t>(best));
  in_flight_.erase(p.outcome.task_id);
  for (auto& [task, idx] : in_flight_) {
    if (idx > best) idx--;
  }
  now_ = p.due;
  return p.outcome;
}

void SimDispatcher::set_unreachable(const std::string& robot, bool unreachable) {
  if (unreachable) {
    unreachable_.insert(robot);
  } else {
    unreachable_.erase(robot);
  }
}

}  // namespace fleet
