#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "fedhorizon/model.hpp"

namespace fedhorizon {

/// Text form of a ParameterVector:
///
///   fedhorizon-params v1 <count>
///   <value>            one per line, <count> lines
///
/// Values are written as C99 hex-floats (e.g. 0x1.8p+1), which round-trip
/// bit-exactly. Readers also accept decimal reals.
void write_parameters(std::ostream& out, const ParameterVector& params);
void save_parameters(const std::filesystem::path& path, const ParameterVector& params);

ParameterVector read_parameters(std::istream& in);
ParameterVector load_parameters(const std::filesystem::path& path);

/// Hex-float spelling of one value, with 0x prefix.
std::string format_hexfloat(double value);
/// Shortest decimal spelling that parses back to the same double.
std::string format_shortest(double value);
/// Parses a hex-float or decimal real; throws DataError on garbage.
double parse_real(std::string_view text);

}  // namespace fedhorizon
