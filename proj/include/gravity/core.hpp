#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

/// Shared grid / scene / observation types and unit conventions.
///
/// Conventions used throughout:
///  - strict SI internally (m, kg, s); mGal only at the CLI boundary,
///  - gz is reported downward-positive: a buried positive-density anomaly
///    observed from above produces gz > 0. Equivalently, all kernels use the
///    (target - source) form, whose z component is positive when the source
///    lies below the target.
namespace gravity {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm2() const { return dot(*this); }
  double norm() const;
};

struct PhysicalConstants {
  /// Gravitational constant (m^3 kg^-1 s^-2). The default is the value the
  /// reference norms of this code base were computed with (CODATA 2006).
  double G = 6.67428e-11;
};

constexpr double kDefaultG = 6.67428e-11;

/// Axis-aligned brick domain split into Mx x My x Mz hexahedral cells.
/// Linear indices run z-fastest: cell (i,j,k) -> (i*My + j)*Mz + k, and the
/// same for nodes with (Mx+1)(My+1)(Mz+1) entries.
class StructuredGrid {
 public:
  StructuredGrid() = default;
  StructuredGrid(const Vec3& origin, const Vec3& lengths,
                 const std::array<int, 3>& cells);

  const Vec3& origin() const { return origin_; }
  const Vec3& lengths() const { return lengths_; }
  const std::array<int, 3>& cells() const { return cells_; }
  Vec3 spacing() const { return spacing_; }

  std::int64_t cell_count() const;
  std::int64_t node_count() const;

  std::int64_t cell_index(int i, int j, int k) const;
  std::array<int, 3> cell_coords(std::int64_t index) const;
  std::int64_t node_index(int i, int j, int k) const;
  std::array<int, 3> node_coords(std::int64_t index) const;

  Vec3 cell_center(int i, int j, int k) const;
  Vec3 cell_min_corner(int i, int j, int k) const;
  Vec3 node_position(int i, int j, int k) const;
  double cell_volume() const { return spacing_.x * spacing_.y * spacing_.z; }

  bool operator==(const StructuredGrid& o) const;

 private:
  Vec3 origin_{};
  Vec3 lengths_{};
  std::array<int, 3> cells_{0, 0, 0};
  Vec3 spacing_{};
};

/// Grid plus one constant density per cell (kg/m^3).
struct DensityScene {
  StructuredGrid grid;
  std::vector<double> density;  // cell_count() entries, all finite

  double cell_mass(std::int64_t cell) const {
    return density[static_cast<std::size_t>(cell)] * grid.cell_volume();
  }
  /// Total mass (sum of rho * cell volume).
  double total_mass() const;
  /// Mass-weighted centroid; the domain center when the scene is empty.
  Vec3 mass_centroid() const;
};

/// Ordered list of observation points. Order is preserved by every solver so
/// outputs align index-wise.
struct EvaluationSet {
  std::vector<Vec3> points;
};

/// Per-point gravity samples (m/s^2). Solvers that only produce gz leave the
/// x/y components zero and clear the corresponding mask bits.
struct GravityResult {
  std::vector<Vec3> values;
  bool has_xy = true;  // false on the z-only fast paths
  bool has_z = true;
};

StructuredGrid build_grid(const Vec3& origin, const Vec3& lengths,
                          const std::array<int, 3>& counts);

/// The synthetic benchmark: domain [0,600]x[0,600]x[-450,150] m with a
/// centered 100 m cube of rho = 2000 kg/m^3, mbar cells per axis. mbar must be
/// divisible by 6 so the cube is resolved by whole cells.
DensityScene build_synthetic_scene(int mbar);

/// Generalized variant for the domain-size sweeps: [0,L]x[0,L]x[-3L/4,L/4]
/// with the same centered 100 m, 2000 kg/m^3 cube.
DensityScene build_anomaly_scene(double domain_length, int mbar);

/// Bounds of the dense cube that build_synthetic_scene(mbar) produces. For
/// mbar divisible by 12 this is exactly [250,350]^2 x [-200,-100]; otherwise
/// the block is snapped to the nearest cell faces below center.
struct AnomalyBounds {
  Vec3 lo, hi;
  double rho = 2000.0;
};
AnomalyBounds synthetic_anomaly(int mbar);
AnomalyBounds anomaly_for_domain(double domain_length, int mbar);

/// nx x ny points spanning [0,600]^2 (edges included) at the given elevation,
/// row-major (iy fastest). Defaults to the top of the synthetic domain.
EvaluationSet surface_observation_grid(int nx, int ny, double elevation = 150.0);

/// Same, over an arbitrary grid's x/y extent; nx == 1 or ny == 1 degenerates
/// to the domain-center coordinate. include_edges=false insets the points by
/// half a step instead.
EvaluationSet surface_observation_grid(const StructuredGrid& grid, int nx,
                                       int ny, double elevation,
                                       bool include_edges = true);

/// Observation set at every cell center, cell-index order.
EvaluationSet cell_center_observations(const StructuredGrid& grid);

inline double si_to_mgal(double acceleration) { return acceleration * 1e5; }
inline double mgal_to_si(double mgal) { return mgal * 1e-5; }

}  // namespace gravity
