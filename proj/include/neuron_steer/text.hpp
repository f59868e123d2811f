#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace neuron_steer {

// Shortest decimal form that parses back to the same double.
std::string format_double(double value);
// Strict parse of a whole field; throws ValidationError on garbage.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::vector<std::string_view> split(std::string_view line, char sep);

// 5799 -> "5,799"
std::string group_thousands(long long value);

} // namespace neuron_steer
