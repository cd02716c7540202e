#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace goalrec {

// Shortest decimal text that round-trips to the same double.
std::string format_double(double x);
double parse_double(std::string_view text);

void write_row(std::ostream& out, std::span<const double> values);
// Reads one line of exactly `n` doubles; `what` names the section in errors.
std::vector<double> read_row(std::istream& in, std::size_t n, std::string_view what);

// Reads the next line and checks it equals `expected`.
void expect_line(std::istream& in, std::string_view expected);
std::string read_line(std::istream& in, std::string_view what);

}  // namespace goalrec
