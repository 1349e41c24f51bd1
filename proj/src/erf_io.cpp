#include "rfkit/erf_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace rfkit::erf {

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("cannot format value");
  return std::string(buf, end);
}

void write_grid_csv(std::ostream& os, const Grid2& grid) {
  os << "freq";
  for (std::size_t t = 0; t < grid.time; ++t) os << ',' << t;
  os << '\n';
  for (std::size_t f = 0; f < grid.freq; ++f) {
    os << f;
    for (std::size_t t = 0; t < grid.time; ++t) os << ',' << format_double(grid.at(f, t));
    os << '\n';
  }
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw std::runtime_error("bad number in grid CSV: '" + s + "'");
  return v;
}

}  // namespace

Grid2 read_grid_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty grid CSV");
  const auto header = split_commas(line);
  if (header.empty() || header[0] != "freq") throw std::runtime_error("grid CSV header must start with 'freq'");
  Grid2 grid;
  grid.time = header.size() - 1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != grid.time + 1)
      throw std::runtime_error("grid CSV row " + std::to_string(grid.freq) + " has wrong width");
    for (std::size_t t = 1; t < cells.size(); ++t) grid.values.push_back(parse_double(cells[t]));
    ++grid.freq;
  }
  return grid;
}

void write_grid_pgm(std::ostream& os, const Grid2& grid) {
  os << "P5\n" << grid.time << ' ' << grid.freq << "\n255\n";
  std::vector<unsigned char> row(grid.time);
  for (std::size_t f = 0; f < grid.freq; ++f) {
    for (std::size_t t = 0; t < grid.time; ++t) {
      const double v = std::clamp(grid.at(f, t), 0.0, 1.0);
      row[t] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

}  // namespace rfkit::erf
