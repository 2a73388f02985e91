#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace dotinv {

// Tensor-product grid on [0, Lx] x [0, Ly]. Node (i, j) sits at
// (i*hx, j*hy) with linear index j*nx + i. The top and bottom edges
// (j = ny-1 and j = 0) carry homogeneous Dirichlet conditions, the left
// and right edges carry the Robin condition eta + 2 a D deta/dxi = 0.
struct MeshConfig {
  int nx = 51;
  int ny = 51;
  double extent_x = 10.0;
  double extent_y = 10.0;
  double a = 0.25;             // diffusive boundary reflection constant
  double nu = 1.0;             // wave speed
  double diffusion_value = 0.1; // known constant diffusion coefficient

  int n() const { return nx * ny; }
  double hx() const { return extent_x / (nx - 1); }
  double hy() const { return extent_y / (ny - 1); }
  int index(int i, int j) const { return j * nx + i; }
  double x(int i) const { return i * hx(); }
  double y(int j) const { return j * hy(); }

  bool dirichlet(int /*i*/, int j) const { return j == 0 || j == ny - 1; }
  bool robin(int i, int j) const {
    return !dirichlet(i, j) && (i == 0 || i == nx - 1);
  }

  void validate() const {
    if (nx < 8 || ny < 8)
      throw std::invalid_argument("mesh must have at least 8 points per axis");
    if (extent_x <= 0 || extent_y <= 0)
      throw std::invalid_argument("domain extent must be positive");
    if (a <= 0 || nu <= 0 || diffusion_value <= 0)
      throw std::invalid_argument("a, nu and diffusion must be positive");
  }
};

// A row of point sources or detectors along the top or bottom edge,
// given as fractional positions in [0, 1] of the edge length.
struct PlacementSpec {
  enum class Edge { Top, Bottom };
  Edge edge = Edge::Top;
  std::vector<double> positions;

  static PlacementSpec evenly_spaced(Edge edge, int count) {
    PlacementSpec spec;
    spec.edge = edge;
    spec.positions.resize(count);
    for (int k = 0; k < count; ++k)
      spec.positions[k] = (k + 1.0) / (count + 1.0);
    return spec;
  }
};

} // namespace dotinv
