#include "ergolab/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ergolab {

std::string fmt_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_real(long double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.21Lg", v);
  return buf;
}

std::string digest_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_header(std::ostream& out, const std::map<std::string, std::string>& meta) {
  for (const auto& [k, v] : meta) out << "# " << k << '=' << v << '\n';
}

void write_series_csv(std::ostream& out, const StatSeries& s, const std::string& value_name,
                      const std::map<std::string, std::string>& meta) {
  write_header(out, meta);
  out << "n," << value_name << ",stderr\n";
  for (const auto& p : s.points) out << fmt_real(p.n) << ',' << fmt_real(p.value) << ',' << fmt_real(p.error) << '\n';
}

std::ofstream open_output(const std::string& dir, const std::string& file) {
  std::filesystem::create_directories(dir);
  std::filesystem::path path = std::filesystem::path(dir) / file;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace ergolab
