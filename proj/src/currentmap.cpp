#include "dwlif/currentmap.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "dwlif/errors.hpp"

namespace dwlif {

namespace {

// Sparse 5-point operator over the included cells. Conductance of an
// interior face is 1 (sigma * thickness cancels after normalization), and a
// contact face sits half a cell from the node, so it counts double.
struct LaplaceSystem {
  std::vector<int> cell_of;       // unknown -> grid index
  std::vector<int> unknown_of;    // grid index -> unknown or -1
  std::vector<std::array<int, 4>> nbr;  // W, E, S, N unknowns or -1
  std::vector<double> diag;
  std::vector<double> rhs;
  std::vector<double> west_contact;  // conductance to V = 1
  std::vector<double> east_contact;  // conductance to V = 0
};

LaplaceSystem assemble(const Mask& mask) {
  LaplaceSystem sys;
  const int nx = mask.nx;
  const int ny = mask.ny;
  sys.unknown_of.assign(nx * ny, -1);
  int first_col = nx;
  int last_col = -1;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int k = j * nx + i;
      if (!mask.included[k]) continue;
      sys.unknown_of[k] = static_cast<int>(sys.cell_of.size());
      sys.cell_of.push_back(k);
      first_col = std::min(first_col, i);
      last_col = std::max(last_col, i);
    }
  }
  const std::size_t n = sys.cell_of.size();
  sys.nbr.resize(n);
  sys.diag.assign(n, 0.0);
  sys.rhs.assign(n, 0.0);
  sys.west_contact.assign(n, 0.0);
  sys.east_contact.assign(n, 0.0);

  for (std::size_t u = 0; u < n; ++u) {
    const int k = sys.cell_of[u];
    const int i = k % nx;
    const int j = k / nx;
    auto at = [&](int ii, int jj) {
      if (ii < 0 || jj < 0 || ii >= nx || jj >= ny) return -1;
      return sys.unknown_of[jj * nx + ii];
    };
    sys.nbr[u] = {at(i - 1, j), at(i + 1, j), at(i, j - 1), at(i, j + 1)};
    for (int q : sys.nbr[u]) {
      if (q >= 0) sys.diag[u] += 1.0;
    }
    if (i == first_col) {
      sys.west_contact[u] = 2.0;
      sys.diag[u] += 2.0;
      sys.rhs[u] += 2.0;  // V = 1 on the west contact
    }
    if (i == last_col) {
      sys.east_contact[u] = 2.0;
      sys.diag[u] += 2.0;
    }
  }
  return sys;
}

void apply(const LaplaceSystem& sys, const std::vector<double>& v,
           std::vector<double>& out) {
  const std::size_t n = v.size();
  for (std::size_t u = 0; u < n; ++u) {
    double acc = sys.diag[u] * v[u];
    for (int q : sys.nbr[u]) {
      if (q >= 0) acc -= v[q];
    }
    out[u] = acc;
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Jacobi-preconditioned conjugate gradient.
std::vector<double> solve_potential(const LaplaceSystem& sys, double tol,
                                    int max_iter, int& iterations,
                                    double& residual) {
  const std::size_t n = sys.rhs.size();
  std::vector<double> x(n, 0.5), r(n), z(n), p(n), ap(n);
  apply(sys, x, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = sys.rhs[i] - ap[i];
  const double bnorm = std::sqrt(dot(sys.rhs, sys.rhs));
  for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / sys.diag[i];
  p = z;
  double rz = dot(r, z);
  residual = std::sqrt(dot(r, r)) / bnorm;
  iterations = 0;
  while (residual >= tol) {
    if (iterations >= max_iter) {
      std::ostringstream msg;
      msg << "current solve did not converge in " << max_iter
          << " iterations (relative residual " << residual << ")";
      throw ConvergenceError(msg.str(), residual);
    }
    apply(sys, p, ap);
    const double alpha = rz / dot(p, ap);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / sys.diag[i];
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    residual = std::sqrt(dot(r, r)) / bnorm;
    ++iterations;
  }
  return x;
}

}  // namespace

CurrentMap CurrentMap::scaled_to(double current) const {
  CurrentMap out = *this;
  const double s = total_current != 0.0 ? current / total_current : 0.0;
  for (auto& v : out.jx) v *= s;
  for (auto& v : out.jy) v *= s;
  out.total_current = current;
  return out;
}

CurrentMap solve_current(const Mask& mask, const GridSpec& grid, double thickness,
                         double total_current,
                         const CurrentSolverOptions& options) {
  if (!std::isfinite(total_current)) {
    throw InvalidArgument("total_current must be finite");
  }
  if (!(thickness > 0.0)) throw InvalidArgument("thickness must be > 0");
  if (mask.nx != grid.nx || mask.ny != grid.ny) {
    throw InvalidArgument("mask and grid dimensions differ");
  }
  if (!is_connected(mask)) {
    throw DisconnectedMask("current solve requires a connected mask");
  }

  CurrentMap map;
  map.grid = grid;
  map.thickness = thickness;
  map.total_current = total_current;
  map.jx.assign(grid.cell_count(), 0.0);
  map.jy.assign(grid.cell_count(), 0.0);
  map.included = mask.included;
  if (total_current == 0.0) return map;

  const LaplaceSystem sys = assemble(mask);
  const int max_iter = options.max_iterations > 0 ? options.max_iterations
                                                  : 50 * grid.nx * grid.ny;
  const std::vector<double> v = solve_potential(
      sys, options.rel_tolerance, max_iter, map.iterations, map.residual);

  double injected = 0.0;
  for (std::size_t u = 0; u < v.size(); ++u) {
    injected += sys.west_contact[u] * (1.0 - v[u]);
  }
  const double scale = total_current / injected;
  const double h = grid.cell_size;
  const double area = h * thickness;

  for (std::size_t u = 0; u < v.size(); ++u) {
    const auto& nb = sys.nbr[u];
    // Face currents, positive along +x / +y.
    const double west = nb[0] >= 0 ? v[nb[0]] - v[u]
                                   : sys.west_contact[u] * (1.0 - v[u]);
    const double east = nb[1] >= 0 ? v[u] - v[nb[1]]
                                   : sys.east_contact[u] * v[u];
    const double south = nb[2] >= 0 ? v[nb[2]] - v[u] : 0.0;
    const double north = nb[3] >= 0 ? v[u] - v[nb[3]] : 0.0;
    const int k = sys.cell_of[u];
    map.jx[k] = scale * 0.5 * (west + east) / area;
    map.jy[k] = scale * 0.5 * (south + north) / area;
  }
  return map;
}

double cross_section_current(const CurrentMap& map, double x) {
  const double h = map.grid.cell_size;
  const int i = static_cast<int>(std::floor(x / h));
  bool inside = i >= 0 && i < map.grid.nx;
  if (inside) {
    inside = false;
    for (int j = 0; j < map.grid.ny; ++j) {
      if (map.included[map.grid.index(i, j)]) {
        inside = true;
        break;
      }
    }
  }
  if (!inside) {
    std::ostringstream msg;
    msg << "cross_section_current: x = " << x << " lies outside the track";
    throw InvalidArgument(msg.str());
  }
  double sum = 0.0;
  for (int j = 0; j < map.grid.ny; ++j) sum += map.jx[map.grid.index(i, j)];
  return sum * h * map.thickness;
}

void write_current_csv(std::ostream& out, const CurrentMap& map) {
  const double h = map.grid.cell_size;
  out << "# dwlif-current v1\n";
  out << "x_m,y_m,jx_A_per_m2,jy_A_per_m2\n";
  out << std::scientific << std::setprecision(9);
  for (int j = 0; j < map.grid.ny; ++j) {
    for (int i = 0; i < map.grid.nx; ++i) {
      const int k = map.grid.index(i, j);
      if (!map.included[k]) continue;
      out << (i + 0.5) * h << ',' << (j + 0.5) * h << ',' << map.jx[k] << ','
          << map.jy[k] << '\n';
    }
  }
}

}  // namespace dwlif
