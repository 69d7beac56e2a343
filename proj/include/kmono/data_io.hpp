#pragma once

#include <cmath>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"

namespace kmono {

//! Reads a single numeric column. The first line may be a header; blank
//! lines are skipped. Reports the offending line number on bad input and
//! lists every value outside the open interval (0,1).
inline std::vector<double>
read_unit_column(std::istream& is)
{
  std::vector<double> out;
  std::string line, bad;
  int lineno = 0, n_bad = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos)
      continue;
    auto last = line.find_last_not_of(" \t");
    std::string cell = line.substr(first, last - first + 1);
    std::size_t used = 0;
    double v = 0.0;
    bool ok = true;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      ok = false;
    }
    if (!ok || used != cell.size()) {
      if (lineno == 1 && out.empty())
        continue; // header
      throw ParameterError("line " + std::to_string(lineno) + ": not a single number: '" + cell + "'");
    }
    if (!std::isfinite(v) || v <= 0.0 || v >= 1.0) {
      if (n_bad < 20)
        bad += "\n  line " + std::to_string(lineno) + ": " + cell;
      ++n_bad;
    }
    out.push_back(v);
  }
  if (n_bad > 0)
    throw ParameterError(std::to_string(n_bad) + " value(s) outside (0,1):" + bad);
  if (out.empty())
    throw ParameterError("no data values found");
  return out;
}

inline std::string
write_unit_column(const std::vector<double>& x)
{
  std::ostringstream os;
  os.precision(17);
  os << "x\n";
  for (double v : x)
    os << v << '\n';
  return os.str();
}

} // namespace kmono
