#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace dwlif {

enum class ShapeKind { Trapezoid, Exponential, Constricted };

std::string_view to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(std::string_view name);

/// Planar outline of a domain-wall track. The wall moves along x; the wide
/// end sits at x = 0. All lengths in metres.
struct TrackShape {
  ShapeKind kind = ShapeKind::Trapezoid;
  double length = 1000e-9;
  double w_wide = 400e-9;
  double w_narrow = 100e-9;
  double b = 1.0;                        // Exponential only
  double w1 = 400e-9;                    // Constricted only
  double constriction_width = 50e-9;     // Constricted only
  double constriction_extent = 200e-9;   // Constricted only
  double thickness = 1.5e-9;

  double max_width() const;
  double min_width() const;
};

/// Parameters accepted by make_track_shape. Unused fields are ignored for
/// kinds that do not need them.
struct ShapeParams {
  double length = 1000e-9;
  double w_wide = 400e-9;
  double w_narrow = 100e-9;
  double b = 1.0;
  double w1 = 400e-9;
  double constriction_width = 50e-9;
  double constriction_extent = 200e-9;
  double thickness = 1.5e-9;
};

inline constexpr double kDefaultFixedMargin = 40e-9;

/// Validates params against the invariants of `kind` and returns the shape.
/// Throws InvalidArgument naming the violated constraint.
TrackShape make_track_shape(ShapeKind kind, const ShapeParams& params = {});

/// Track width at distance d from the wide end. Throws InvalidArgument if d
/// lies outside [0, length].
double width_at(const TrackShape& shape, double d);

/// Analytic outline area (exact for Trapezoid/Exponential, numeric for
/// Constricted).
double shape_area(const TrackShape& shape);

struct GridSpec {
  double cell_size = 5e-9;
  int nx = 0;
  int ny = 0;

  int cell_count() const { return nx * ny; }
  int index(int i, int j) const { return j * nx + i; }
};

/// Smallest grid at `cell_size` that contains the shape.
GridSpec fit_grid(const TrackShape& shape, double cell_size);

struct Mask {
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> included;
  std::vector<std::uint8_t> fixed;

  bool is_included(int i, int j) const { return included[j * nx + i] != 0; }
  bool is_fixed(int i, int j) const { return fixed[j * nx + i] != 0; }
  int included_count() const;
  int column_count(int i) const;
};

/// Includes every cell whose centre lies inside the outline. The track's
/// midline is placed at the grid's vertical centre; x = 0 is the left grid
/// edge. Cells within fixed_margin of either axial end are flagged fixed.
Mask rasterize(const TrackShape& shape, const GridSpec& grid,
               double fixed_margin = kDefaultFixedMargin);

/// True if the included cells form one 4-connected component.
bool is_connected(const Mask& mask);

/// One row per grid row (top row first): '.' excluded, '#' included,
/// 'F' fixed.
void write_mask_text(std::ostream& out, const Mask& mask);

}  // namespace dwlif
