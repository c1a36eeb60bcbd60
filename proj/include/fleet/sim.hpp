#pragma once

#include <map>
#include <queue>
#include <string>
#include <vector>

#include "fleet/scheduling.hpp"

namespace fleet {

// Scripted behavior of one simulated robot. Patterns are case-insensitive
// substrings of task descriptions.
struct WorkerProfile {
  std::string robot_name;
  Ratio task_duration = Ratio(1);
  // pattern -> failures before success; negative means always fail
  std::vector<std::pair<std::string, int>> failure_script;
  // pattern -> statements reported (with a replan request) after success
  std::vector<std::pair<std::string, std::vector<std::string>>> discovery_script;

  static WorkerProfile from_json(const Json& j);
  static WorkerProfile load_file(const std::string& path);
  Json to_json() const;

  // failures-before-success for this description, or 0 when unscripted
  int scripted_failures(const std::string& description) const;
  const std::vector<std::string>* scripted_discovery(const std::string& description) const;
};

// Virtual-clock dispatcher: dispatch schedules the terminal outcome at
// now + duration; next_outcome pops the earliest event and advances the
// clock. Fully deterministic.
class SimDispatcher : public Dispatcher {
 public:
  explicit SimDispatcher(std::vector<WorkerProfile> profiles);

  // Uniform fleet of always-succeeding robots with the given task duration.
  static SimDispatcher uniform(const std::vector<std::string>& robots, Ratio duration);

  bool dispatch(const DispatchOrder& order, const std::vector<std::string>& context,
                Ratio now) override;
  void cancel(const std::string& task_id, const std::string& robot) override;
  std::optional<Outcome> next_outcome() override;
  Ratio now() const override { return now_; }

  // Robots listed here refuse dispatch (connectivity-failure modeling).
  void set_unreachable(const std::string& robot, bool unreachable);

 private:
  struct Pending {
    Ratio due;
    std::uint64_t seq;  // FIFO tie-break for equal times
    Outcome outcome;
    bool cancelled = false;
  };
  std::map<std::string, WorkerProfile> profiles_;
  std::vector<Pending> queue_;
  std::map<std::string, int> failures_seen_;  // task id -> failures so far
  std::map<std::string, std::size_t> in_flight_;  // task id -> queue index
  std::set<std::string> unreachable_;
  Ratio now_{0};
  std::uint64_t seq_ = 0;
};

}  // namespace fleet
