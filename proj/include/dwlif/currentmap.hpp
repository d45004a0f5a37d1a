#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dwlif/geometry.hpp"

namespace dwlif {

/// Steady in-plane current density in a masked thin-film track.
struct CurrentMap {
  GridSpec grid;
  double thickness = 0.0;
  double total_current = 0.0;  // A; positive flows along +x
  std::vector<double> jx;      // A/m^2, cell centred, zero outside the mask
  std::vector<double> jy;
  std::vector<std::uint8_t> included;
  int iterations = 0;
  double residual = 0.0;       // relative residual of the potential solve

  /// Same spatial distribution carrying `current` instead.
  CurrentMap scaled_to(double current) const;
};

struct CurrentSolverOptions {
  double rel_tolerance = 1e-8;
  int max_iterations = 0;  // 0 -> 50 * nx * ny
};

/// Solves div(sigma grad V) = 0 on the included cells with insulating side
/// walls and equipotential contacts on the leftmost and rightmost included
/// columns, then scales so the end-face current equals total_current.
/// Throws DisconnectedMask or ConvergenceError.
CurrentMap solve_current(const Mask& mask, const GridSpec& grid, double thickness,
                         double total_current,
                         const CurrentSolverOptions& options = {});

/// Net current through the grid column nearest to x. Throws InvalidArgument
/// if x lies outside the track columns.
double cross_section_current(const CurrentMap& map, double x);

/// "x_m,y_m,jx_A_per_m2,jy_A_per_m2" rows for included cells.
void write_current_csv(std::ostream& out, const CurrentMap& map);

}  // namespace dwlif
