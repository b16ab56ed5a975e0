#include "fedhorizon/params_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fedhorizon/error.hpp"

namespace fedhorizon {

namespace {
constexpr std::string_view kParamsMagic = "fedhorizon-params";
}

std::string format_hexfloat(double value) {
  if (!std::isfinite(value)) throw DataError("cannot serialize a non-finite value");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::hex);
  std::string digits(buf, res.ptr);
  if (!digits.empty() && digits.front() == '-') return "-0x" + digits.substr(1);
  return "0x" + digits;
}

std::string format_shortest(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_real(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (text.empty()) throw DataError("empty numeric field");
  const std::string owned(text);
  char* end = nullptr;
  const double value = std::strtod(owned.c_str(), &end);
  // ERANGE also flags subnormal results, which are valid here.
  if (end != owned.c_str() + owned.size() || !std::isfinite(value)) {
    throw DataError("invalid real number '" + owned + "'");
  }
  return value;
}

void write_parameters(std::ostream& out, const ParameterVector& params) {
  out << kParamsMagic << " v1 " << params.size() << '\n';
  for (const double v : params.values()) out << format_hexfloat(v) << '\n';
}

void save_parameters(const std::filesystem::path& path, const ParameterVector& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write parameter file " + path.string());
  write_parameters(out, params);
  if (!out) throw DataError("failed writing parameter file " + path.string());
}

ParameterVector read_parameters(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw DataError("parameter file is empty");
  std::istringstream hs(header);
  std::string magic, version;
  long long count = -1;
  hs >> magic >> version >> count;
  if (magic != kParamsMagic || version != "v1" || count < 0) {
    throw DataError("bad parameter file header '" + header + "'");
  }
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(count));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    values.push_back(parse_real(line));
  }
  if (values.size() != static_cast<std::size_t>(count)) {
    throw DataError("parameter file declares " + std::to_string(count) + " values but holds " +
                    std::to_string(values.size()));
  }
  return ParameterVector(std::move(values));
}

ParameterVector load_parameters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open parameter file " + path.string());
  return read_parameters(in);
}

}  // namespace fedhorizon
