#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace unsat {

enum class Side { left, right, bottom, top };

inline const char* to_string(Side side) {
  switch (side) {
    case Side::left: return "left";
    case Side::right: return "right";
    case Side::bottom: return "bottom";
    case Side::top: return "top";
  }
  return "?";
}

/// Face shared by two cells. `owner < neighbor`; axis 0 is x, axis 1 is y.
struct InteriorFace {
  int owner;
  int neighbor;
  double transmissibility;
  int axis;
};

/// Face on the domain boundary; transmissibility uses the half-cell distance.
struct BoundaryFace {
  int cell;
  Side side;
  double transmissibility;
  std::array<double, 2> midpoint;
};

/// Uniform cell-centered grid on the unit square, cells in row-major order.
///
/// Geometric transmissibilities are face length over center distance, so an
/// interior x-face carries hy/hx and a boundary x-face 2*hy/hx. The vertical
/// (gravity) coordinate is y.
class StructuredGrid {
 public:
  StructuredGrid(int nx, int ny) : nx_(nx), ny_(ny) {
    if (nx < 1 || ny < 1) {
      throw std::invalid_argument("StructuredGrid: dimensions must be positive, got " +
                                  std::to_string(nx) + "x" + std::to_string(ny));
    }
    hx_ = 1.0 / nx;
    hy_ = 1.0 / ny;

    centers_.reserve(static_cast<std::size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        centers_.push_back({(i + 0.5) * hx_, (j + 0.5) * hy_});
      }
    }

    const double tx = hy_ / hx_;
    const double ty = hx_ / hy_;
    interior_.reserve(static_cast<std::size_t>((nx - 1) * ny + nx * (ny - 1)));
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const int c = index_unchecked(i, j);
        if (i + 1 < nx) interior_.push_back({c, index_unchecked(i + 1, j), tx, 0});
        if (j + 1 < ny) interior_.push_back({c, index_unchecked(i, j + 1), ty, 1});
      }
    }

    boundary_.reserve(static_cast<std::size_t>(2 * (nx + ny)));
    for (int j = 0; j < ny; ++j) {
      const double y = (j + 0.5) * hy_;
      boundary_.push_back({index_unchecked(0, j), Side::left, 2.0 * tx, {0.0, y}});
      boundary_.push_back({index_unchecked(nx - 1, j), Side::right, 2.0 * tx, {1.0, y}});
    }
    for (int i = 0; i < nx; ++i) {
      const double x = (i + 0.5) * hx_;
      boundary_.push_back({index_unchecked(i, 0), Side::bottom, 2.0 * ty, {x, 0.0}});
      boundary_.push_back({index_unchecked(i, ny - 1), Side::top, 2.0 * ty, {x, 1.0}});
    }
  }

  [[nodiscard]] int nx() const noexcept { return nx_; }
  [[nodiscard]] int ny() const noexcept { return ny_; }
  [[nodiscard]] double hx() const noexcept { return hx_; }
  [[nodiscard]] double hy() const noexcept { return hy_; }
  [[nodiscard]] int num_cells() const noexcept { return nx_ * ny_; }
  [[nodiscard]] double cell_volume() const noexcept { return hx_ * hy_; }

  [[nodiscard]] int cell_index(int i, int j) const {
    if (i < 0 || i >= nx_ || j < 0 || j >= ny_) {
      throw std::out_of_range("StructuredGrid::cell_index: (" + std::to_string(i) + "," +
                              std::to_string(j) + ") outside " + std::to_string(nx_) + "x" +
                              std::to_string(ny_));
    }
    return index_unchecked(i, j);
  }

  [[nodiscard]] const std::array<double, 2>& center(int cell) const { return centers_.at(cell); }
  [[nodiscard]] const std::vector<std::array<double, 2>>& cell_centers() const noexcept {
    return centers_;
  }
  [[nodiscard]] const std::vector<InteriorFace>& interior_faces() const noexcept {
    return interior_;
  }
  [[nodiscard]] const std::vector<BoundaryFace>& boundary_faces() const noexcept {
    return boundary_;
  }

  /// Elevation used for the gravity potential.
  [[nodiscard]] double elevation(int cell) const { return centers_[cell][1]; }

  friend bool operator==(const StructuredGrid& a, const StructuredGrid& b) {
    if (a.nx_ != b.nx_ || a.ny_ != b.ny_) return false;
    if (a.interior_.size() != b.interior_.size() || a.boundary_.size() != b.boundary_.size())
      return false;
    for (std::size_t k = 0; k < a.interior_.size(); ++k) {
      const auto& f = a.interior_[k];
      const auto& g = b.interior_[k];
      if (f.owner != g.owner || f.neighbor != g.neighbor || f.axis != g.axis ||
          f.transmissibility != g.transmissibility)
        return false;
    }
    for (std::size_t k = 0; k < a.boundary_.size(); ++k) {
      const auto& f = a.boundary_[k];
      const auto& g = b.boundary_[k];
      if (f.cell != g.cell || f.side != g.side || f.transmissibility != g.transmissibility ||
          f.midpoint != g.midpoint)
        return false;
    }
    return a.centers_ == b.centers_;
  }

 private:
  [[nodiscard]] int index_unchecked(int i, int j) const noexcept { return j * nx_ + i; }

  int nx_;
  int ny_;
  double hx_{};
  double hy_{};
  std::vector<std::array<double, 2>> centers_;
  std::vector<InteriorFace> interior_;
  std::vector<BoundaryFace> boundary_;
};

inline StructuredGrid build_grid(int nx, int ny) { return StructuredGrid(nx, ny); }

}  // namespace unsat
