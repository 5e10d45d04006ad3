#pragma once

#include <string>
#include <vector>

namespace zocert {

// RFC-style CSV: fields containing comma, quote, or newline are quoted and
// embedded quotes doubled.
std::string csv_escape(const std::string& field);
std::string csv_join(const std::vector<std::string>& fields);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Parses the whole file including the header row.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

// Shortest-round-trip double formatting for CSV payloads that must be
// re-checkable to 1e-12 from the text.
std::string fmt_double(double v);
std::string fmt_fixed(double v, int digits);

}  // namespace zocert
