#pragma once
// Plain-text output helpers shared by the CSV and manifest writers.

#include <cstdint>
#include <map>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "ergolab/stat_series.hpp"

namespace ergolab {

// Shortest round-trip decimal form ("%.17g"; "inf", "nan" spelled out).
std::string fmt_real(double v);
std::string fmt_real(long double v);

// 64-bit FNV-1a of a string, in hex; used as a config digest.
std::string digest_hex(const std::string& text);

// Writes "# key=value" header lines, one per entry, in key order.
void write_header(std::ostream& out, const std::map<std::string, std::string>& meta);

// n,<value_name>,stderr rows.
void write_series_csv(std::ostream& out, const StatSeries& s, const std::string& value_name,
                      const std::map<std::string, std::string>& meta);

// Creates the directory (and parents) if needed and opens path for writing.
std::ofstream open_output(const std::string& dir, const std::string& file);

}  // namespace ergolab
