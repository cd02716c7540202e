#include "goalrec/text_io.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "goalrec/error.hpp"

namespace goalrec {

std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) throw Error("cannot format number");
  return std::string(buf, end);
}

double parse_double(std::string_view text) {
  double x = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
  if (ec != std::errc{} || end != text.data() + text.size())
    throw Error("not a number: '" + std::string(text) + "'");
  return x;
}

void write_row(std::ostream& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ' ';
    out << format_double(values[i]);
  }
  out << '\n';
}

std::string read_line(std::istream& in, std::string_view what) {
  std::string line;
  if (!std::getline(in, line)) throw Error("unexpected end of file reading " + std::string(what));
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::vector<double> read_row(std::istream& in, std::size_t n, std::string_view what) {
  auto line = read_line(in, what);
  std::vector<double> row;
  row.reserve(n);
  std::istringstream fields(line);
  std::string tok;
  while (fields >> tok) row.push_back(parse_double(tok));
  if (row.size() != n)
    throw Error(std::string(what) + ": expected " + std::to_string(n) + " values, got " +
                std::to_string(row.size()));
  return row;
}

void expect_line(std::istream& in, std::string_view expected) {
  auto line = read_line(in, expected);
  if (line != expected) throw Error("expected '" + std::string(expected) + "', got '" + line + "'");
}

}  // namespace goalrec
