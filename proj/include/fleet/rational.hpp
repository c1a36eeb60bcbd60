#pragma once

#include <boost/rational.hpp>
#include <cstdint>
#include <string>

namespace fleet {

// Exact event-time / percentage arithmetic. Simulated clocks produce small
// denominators (unit tasks), wall-clock traces use milliseconds (den 1000),
// so int64 never gets close to overflow at fleet scale.
using Ratio = boost::rational<std::int64_t>;

std::string ratio_to_string(const Ratio& r);

// Accepts "7" or "7/2". Throws std::invalid_argument on anything else.
Ratio ratio_from_string(const std::string& s);

double ratio_to_double(const Ratio& r);

// "66.7" style rendering; rounding happens only here, never in the math.
std::string format_one_decimal(double v);

}  // namespace fleet
