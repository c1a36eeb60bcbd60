#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fleet/model.hpp"

namespace fleet {

// Newline-delimited UTF-8 JSON objects, one message per line; the "type"
// field discriminates. Field lists here are the protocol contract.
namespace wire {

inline constexpr std::size_t kMaxLineBytes = 1 << 20;

// manager -> worker
Json execute_task(const std::string& task_id, const std::string& description, int attempt,
                  const std::vector<std::string>& context);
Json cancel_task(const std::string& task_id);
Json ping();

// worker -> manager
Json hello(const std::string& robot);
Json task_status(const std::string& robot, const std::string& task_id, const std::string& status,
                 const std::string& detail);
Json replan_request(const std::string& robot, const std::string& reason,
                    const std::vector<std::string>& statements);
Json pong();

Json error_reply(const std::string& code, const std::string& message);
Json ok_reply();

// Serializes with a trailing newline; invalid UTF-8 in payload strings is
// replaced rather than rejected so error paths can always answer.
std::string encode(const Json& msg);

// Parses one line into a JSON object with a string "type"; nullopt on any
// malformed input (the caller answers with error_reply).
std::optional<Json> decode(const std::string& line);

// Field presence/type check for the given message type. Returns a diagnostic
// or nullopt when the message is well-formed.
std::optional<std::string> check(const Json& msg);

}  // namespace wire
}  // namespace fleet
