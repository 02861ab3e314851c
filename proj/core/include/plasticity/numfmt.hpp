#pragma once

#include <string>
#include <string_view>

namespace plasticity {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

/// Strict parse of a full string as a double; throws FormatError.
double parse_double(std::string_view s);

/// Strict parse of a full string as an unsigned integer; throws FormatError.
unsigned long long parse_uint(std::string_view s);

}  // namespace plasticity
