#pragma once

#include <iosfwd>
#include <string>

#include "rfkit/erf_engine.hpp"

namespace rfkit::erf {

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

/// Header `freq,0,1,...,T-1`, then one row per frequency bin led by its index.
void write_grid_csv(std::ostream& os, const Grid2& grid);
Grid2 read_grid_csv(std::istream& is);

/// Binary PGM (P5, maxval 255): time along x, frequency along y, values in
/// [0,1] mapped linearly and rounded.
void write_grid_pgm(std::ostream& os, const Grid2& grid);

}  // namespace rfkit::erf
