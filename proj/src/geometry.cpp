#include "dwlif/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>
#include <sstream>

#include "dwlif/constants.hpp"
#include "dwlif/errors.hpp"

namespace dwlif {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidArgument(message);
}

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

// Fraction of the total width drop reached at normalized position s in
// [0, 1] for the exponential outline. Written with expm1 so that b -> 1
// approaches the linear profile smoothly.
double exponential_fraction(double b, double s) {
  if (b == 1.0) return s;
  const double lb = std::log(b);
  return std::expm1(-s * lb) / std::expm1(-lb);
}

double constricted_width(const TrackShape& shape, double d) {
  const double centre = 0.5 * shape.length;
  const double half = 0.5 * shape.constriction_extent;
  const double offset = std::abs(d - centre);
  if (offset >= half) return shape.w1;
  const double s = offset / half;
  return shape.constriction_width + (shape.w1 - shape.constriction_width) *
                                        0.5 * (1.0 - std::cos(phys::kPi * s));
}

}  // namespace

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Trapezoid: return "trapezoid";
    case ShapeKind::Exponential: return "exponential";
    case ShapeKind::Constricted: return "constricted";
  }
  return "unknown";
}

ShapeKind shape_kind_from_string(std::string_view name) {
  if (name == "trapezoid" || name == "rectangle") return ShapeKind::Trapezoid;
  if (name == "exponential" || name == "linear") return ShapeKind::Exponential;
  if (name == "constricted" || name == "squashing") return ShapeKind::Constricted;
  throw InvalidArgument("unknown shape kind '" + std::string(name) +
                        "' (expected trapezoid, exponential or constricted)");
}

double TrackShape::max_width() const {
  return kind == ShapeKind::Constricted ? w1 : w_wide;
}

double TrackShape::min_width() const {
  return kind == ShapeKind::Constricted ? constriction_width : w_narrow;
}

TrackShape make_track_shape(ShapeKind kind, const ShapeParams& p) {
  require(positive(p.length), "length must be > 0");
  require(positive(p.thickness), "thickness must be > 0");

  TrackShape shape;
  shape.kind = kind;
  shape.length = p.length;
  shape.thickness = p.thickness;

  switch (kind) {
    case ShapeKind::Exponential:
      require(std::isfinite(p.b) && p.b >= 1.0,
              "b must be >= 1 (b < 1 inverts the width profile)");
      shape.b = p.b;
      [[fallthrough]];
    case ShapeKind::Trapezoid:
      require(positive(p.w_wide), "w_wide must be > 0");
      require(positive(p.w_narrow), "w_narrow must be > 0");
      require(p.w_wide >= p.w_narrow, "w_wide must be >= w_narrow");
      shape.w_wide = p.w_wide;
      shape.w_narrow = p.w_narrow;
      break;
    case ShapeKind::Constricted:
      require(positive(p.w1), "w1 must be > 0");
      require(positive(p.constriction_width), "constriction_width must be > 0");
      require(positive(p.constriction_extent), "constriction_extent must be > 0");
      require(p.constriction_width <= p.w1, "constriction_width must be <= w1");
      require(p.constriction_extent < p.length,
              "constriction_extent must be shorter than the track");
      shape.w1 = p.w1;
      shape.w_wide = p.w1;
      shape.w_narrow = p.w1;
      shape.constriction_width = p.constriction_width;
      shape.constriction_extent = p.constriction_extent;
      break;
  }
  return shape;
}

double width_at(const TrackShape& shape, double d) {
  if (!(d >= 0.0 && d <= shape.length)) {
    std::ostringstream msg;
    msg << "width_at: d = " << d << " outside [0, " << shape.length << "]";
    throw InvalidArgument(msg.str());
  }
  const double s = d / shape.length;
  switch (shape.kind) {
    case ShapeKind::Trapezoid:
      return shape.w_wide + (shape.w_narrow - shape.w_wide) * s;
    case ShapeKind::Exponential:
      return shape.w_wide +
             (shape.w_narrow - shape.w_wide) * exponential_fraction(shape.b, s);
    case ShapeKind::Constricted:
      return constricted_width(shape, d);
  }
  return 0.0;
}

double shape_area(const TrackShape& shape) {
  const double L = shape.length;
  switch (shape.kind) {
    case ShapeKind::Trapezoid:
      return 0.5 * L * (shape.w_wide + shape.w_narrow);
    case ShapeKind::Exponential: {
      if (shape.b == 1.0) return 0.5 * L * (shape.w_wide + shape.w_narrow);
      // w = w_wide + (w_narrow - w_wide) * f(s), integral of f over [0, 1].
      const double lb = std::log(shape.b);
      const double mean_f = (-std::expm1(-lb) / lb - 1.0) / std::expm1(-lb);
      return L * (shape.w_wide + (shape.w_narrow - shape.w_wide) * mean_f);
    }
    case ShapeKind::Constricted:
      return L * shape.w1 - 0.5 * shape.constriction_extent *
                                (shape.w1 - shape.constriction_width);
  }
  return 0.0;
}

GridSpec fit_grid(const TrackShape& shape, double cell_size) {
  require(positive(cell_size), "cell_size must be > 0");
  GridSpec g;
  g.cell_size = cell_size;
  g.nx = static_cast<int>(std::ceil(shape.length / cell_size - 1e-9));
  g.ny = static_cast<int>(std::ceil(shape.max_width() / cell_size - 1e-9));
  return g;
}

int Mask::included_count() const {
  return static_cast<int>(std::count(included.begin(), included.end(), 1));
}

int Mask::column_count(int i) const {
  int n = 0;
  for (int j = 0; j < ny; ++j) n += included[j * nx + i];
  return n;
}

Mask rasterize(const TrackShape& shape, const GridSpec& grid,
               double fixed_margin) {
  const double h = grid.cell_size;
  require(positive(h) && grid.nx > 0 && grid.ny > 0, "grid must be non-empty");
  require(grid.nx * h >= shape.length * (1.0 - 1e-9),
          "grid too small: nx * cell_size < track length");
  require(grid.ny * h >= shape.max_width() * (1.0 - 1e-9),
          "grid too small: ny * cell_size < track width");
  require(fixed_margin >= 0.0 && fixed_margin < 0.25 * shape.length,
          "fixed_margin must lie in [0, length / 4)");

  Mask mask;
  mask.nx = grid.nx;
  mask.ny = grid.ny;
  mask.included.assign(grid.cell_count(), 0);
  mask.fixed.assign(grid.cell_count(), 0);

  const double y_mid = 0.5 * grid.ny * h;
  for (int i = 0; i < grid.nx; ++i) {
    const double xc = (i + 0.5) * h;
    if (xc > shape.length) continue;
    const double half_w = 0.5 * width_at(shape, xc) * (1.0 + 1e-12);
    const bool pinned =
        xc < fixed_margin || xc > shape.length - fixed_margin;
    for (int j = 0; j < grid.ny; ++j) {
      const double yc = (j + 0.5) * h;
      if (std::abs(yc - y_mid) <= half_w) {
        mask.included[grid.index(i, j)] = 1;
        mask.fixed[grid.index(i, j)] = pinned ? 1 : 0;
      }
    }
  }

  if (mask.included_count() == 0) {
    throw DisconnectedMask("rasterized track is empty");
  }
  if (!is_connected(mask)) {
    std::ostringstream msg;
    msg << "rasterized track is disconnected";
    if (shape.kind == ShapeKind::Constricted) {
      msg << ": constriction throat (" << shape.constriction_width * 1e9
          << " nm) is too narrow for cell size " << h * 1e9 << " nm";
    }
    throw DisconnectedMask(msg.str());
  }
  return mask;
}

bool is_connected(const Mask& mask) {
  const int n = mask.nx * mask.ny;
  int start = -1;
  for (int k = 0; k < n; ++k) {
    if (mask.included[k]) {
      start = k;
      break;
    }
  }
  if (start < 0) return false;

  std::vector<std::uint8_t> seen(n, 0);
  std::deque<int> queue{start};
  seen[start] = 1;
  int visited = 0;
  while (!queue.empty()) {
    const int k = queue.front();
    queue.pop_front();
    ++visited;
    const int i = k % mask.nx;
    const int j = k / mask.nx;
    const int nbr[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
    for (const auto& [ni, nj] : nbr) {
      if (ni < 0 || nj < 0 || ni >= mask.nx || nj >= mask.ny) continue;
      const int q = nj * mask.nx + ni;
      if (mask.included[q] && !seen[q]) {
        seen[q] = 1;
        queue.push_back(q);
      }
    }
  }
  return visited == mask.included_count();
}

void write_mask_text(std::ostream& out, const Mask& mask) {
  for (int j = mask.ny - 1; j >= 0; --j) {
    for (int i = 0; i < mask.nx; ++i) {
      const int k = j * mask.nx + i;
      out << (mask.fixed[k] ? 'F' : mask.included[k] ? '#' : '.');
    }
    out << '\n';
  }
}

}  // namespace dwlif
