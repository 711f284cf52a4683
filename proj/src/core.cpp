#include "gravity/core.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gravity {

double Vec3::norm() const { return std::sqrt(norm2()); }

StructuredGrid::StructuredGrid(const Vec3& origin, const Vec3& lengths,
                               const std::array<int, 3>& cells)
    : origin_(origin), lengths_(lengths), cells_(cells) {
  if (!(lengths.x > 0.0) || !(lengths.y > 0.0) || !(lengths.z > 0.0))
    throw std::invalid_argument("StructuredGrid: extents must be positive");
  if (cells[0] < 1 || cells[1] < 1 || cells[2] < 1)
    throw std::invalid_argument("StructuredGrid: cell counts must be >= 1");
  spacing_ = {lengths.x / cells[0], lengths.y / cells[1], lengths.z / cells[2]};
}

std::int64_t StructuredGrid::cell_count() const {
  return std::int64_t{cells_[0]} * cells_[1] * cells_[2];
}

std::int64_t StructuredGrid::node_count() const {
  return std::int64_t{cells_[0] + 1} * (cells_[1] + 1) * (cells_[2] + 1);
}

std::int64_t StructuredGrid::cell_index(int i, int j, int k) const {
  return (std::int64_t{i} * cells_[1] + j) * cells_[2] + k;
}

std::array<int, 3> StructuredGrid::cell_coords(std::int64_t index) const {
  const int k = static_cast<int>(index % cells_[2]);
  const std::int64_t ij = index / cells_[2];
  return {static_cast<int>(ij / cells_[1]), static_cast<int>(ij % cells_[1]), k};
}

std::int64_t StructuredGrid::node_index(int i, int j, int k) const {
  return (std::int64_t{i} * (cells_[1] + 1) + j) * (cells_[2] + 1) + k;
}

std::array<int, 3> StructuredGrid::node_coords(std::int64_t index) const {
  const int nz = cells_[2] + 1;
  const int ny = cells_[1] + 1;
  const int k = static_cast<int>(index % nz);
  const std::int64_t ij = index / nz;
  return {static_cast<int>(ij / ny), static_cast<int>(ij % ny), k};
}

Vec3 StructuredGrid::cell_center(int i, int j, int k) const {
  return {origin_.x + (i + 0.5) * spacing_.x, origin_.y + (j + 0.5) * spacing_.y,
          origin_.z + (k + 0.5) * spacing_.z};
}

Vec3 StructuredGrid::cell_min_corner(int i, int j, int k) const {
  return {origin_.x + i * spacing_.x, origin_.y + j * spacing_.y,
          origin_.z + k * spacing_.z};
}

Vec3 StructuredGrid::node_position(int i, int j, int k) const {
  return cell_min_corner(i, j, k);
}

bool StructuredGrid::operator==(const StructuredGrid& o) const {
  return origin_.x == o.origin_.x && origin_.y == o.origin_.y &&
         origin_.z == o.origin_.z && lengths_.x == o.lengths_.x &&
         lengths_.y == o.lengths_.y && lengths_.z == o.lengths_.z &&
         cells_ == o.cells_;
}

double DensityScene::total_mass() const {
  double sum = 0.0;
  const double v = grid.cell_volume();
  for (double rho : density) sum += rho * v;
  return sum;
}

Vec3 DensityScene::mass_centroid() const {
  double m = 0.0;
  Vec3 acc{};
  const double v = grid.cell_volume();
  const auto& mc = grid.cells();
  for (int i = 0; i < mc[0]; ++i)
    for (int j = 0; j < mc[1]; ++j)
      for (int k = 0; k < mc[2]; ++k) {
        const double mi = density[static_cast<std::size_t>(grid.cell_index(i, j, k))] * v;
        if (mi == 0.0) continue;
        acc = acc + grid.cell_center(i, j, k) * mi;
        m += mi;
      }
  if (m == 0.0)
    return grid.origin() + grid.lengths() * 0.5;
  return acc * (1.0 / m);
}

StructuredGrid build_grid(const Vec3& origin, const Vec3& lengths,
                          const std::array<int, 3>& counts) {
  return StructuredGrid(origin, lengths, counts);
}

namespace {

// Start index of the dense block along one axis: q anomaly cells out of mbar.
// Exact centering needs (mbar - q) even; otherwise snap down half a cell.
int anomaly_start(int mbar, int q) { return (mbar - q) / 2; }

DensityScene make_cube_scene(const Vec3& origin, double length, int mbar) {
  if (mbar < 6 || mbar % 6 != 0)
    throw std::invalid_argument(
        "synthetic scene: cell count " + std::to_string(mbar) +
        " per axis does not resolve the 100 m anomaly exactly (must be a "
        "positive multiple of 6)");
  StructuredGrid grid(origin, {length, length, length}, {mbar, mbar, mbar});
  // q cells of size h span the 100 m cube only if q*h == 100, i.e. mbar
  // divisible by 6 when length/H == 6; for the sweep domains length is a
  // multiple of 600/H anyway.
  const double h = length / mbar;
  const double q_real = 100.0 / h;
  const int q = static_cast<int>(std::llround(q_real));
  if (std::abs(q * h - 100.0) > 1e-9 * 100.0)
    throw std::invalid_argument("synthetic scene: anomaly not exactly resolved");
  const int i0 = anomaly_start(mbar, q);
  std::vector<double> rho(static_cast<std::size_t>(grid.cell_count()), 0.0);
  for (int i = i0; i < i0 + q; ++i)
    for (int j = i0; j < i0 + q; ++j)
      for (int k = i0; k < i0 + q; ++k)
        rho[static_cast<std::size_t>(grid.cell_index(i, j, k))] = 2000.0;
  return DensityScene{std::move(grid), std::move(rho)};
}

AnomalyBounds cube_anomaly(const Vec3& origin, double length, int mbar) {
  const double h = length / mbar;
  const int q = static_cast<int>(std::llround(100.0 / h));
  const int i0 = anomaly_start(mbar, q);
  AnomalyBounds b;
  b.lo = {origin.x + i0 * h, origin.y + i0 * h, origin.z + i0 * h};
  b.hi = {b.lo.x + q * h, b.lo.y + q * h, b.lo.z + q * h};
  return b;
}

}  // namespace

DensityScene build_synthetic_scene(int mbar) {
  return make_cube_scene({0.0, 0.0, -450.0}, 600.0, mbar);
}

DensityScene build_anomaly_scene(double domain_length, int mbar) {
  return make_cube_scene({0.0, 0.0, -0.75 * domain_length}, domain_length, mbar);
}

AnomalyBounds synthetic_anomaly(int mbar) {
  return cube_anomaly({0.0, 0.0, -450.0}, 600.0, mbar);
}

AnomalyBounds anomaly_for_domain(double domain_length, int mbar) {
  return cube_anomaly({0.0, 0.0, -0.75 * domain_length}, domain_length, mbar);
}

EvaluationSet surface_observation_grid(int nx, int ny, double elevation) {
  StructuredGrid domain({0.0, 0.0, -450.0}, {600.0, 600.0, 600.0}, {1, 1, 1});
  return surface_observation_grid(domain, nx, ny, elevation, true);
}

EvaluationSet surface_observation_grid(const StructuredGrid& grid, int nx,
                                       int ny, double elevation,
                                       bool include_edges) {
  if (nx < 1 || ny < 1)
    throw std::invalid_argument("surface_observation_grid: counts must be >= 1");
  const Vec3 o = grid.origin();
  const Vec3 l = grid.lengths();
  EvaluationSet set;
  set.points.reserve(static_cast<std::size_t>(nx) * ny);
  auto coord = [&](double lo, double len, int n, int idx) {
    if (n == 1) return lo + 0.5 * len;
    if (include_edges) return lo + len * idx / (n - 1);
    return lo + len * (idx + 0.5) / n;
  };
  for (int ix = 0; ix < nx; ++ix)
    for (int iy = 0; iy < ny; ++iy)
      set.points.push_back(
          {coord(o.x, l.x, nx, ix), coord(o.y, l.y, ny, iy), elevation});
  return set;
}

EvaluationSet cell_center_observations(const StructuredGrid& grid) {
  EvaluationSet set;
  set.points.reserve(static_cast<std::size_t>(grid.cell_count()));
  const auto& mc = grid.cells();
  for (int i = 0; i < mc[0]; ++i)
    for (int j = 0; j < mc[1]; ++j)
      for (int k = 0; k < mc[2]; ++k) set.points.push_back(grid.cell_center(i, j, k));
  return set;
}

}  // namespace gravity
