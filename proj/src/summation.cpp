#include "gravity/summation.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gravity::summation {

struct SingularConfiguration : std::runtime_error {
  using std::runtime_error::runtime_error;
};

QuadratureRule QuadratureRule::gauss(int order) {
  if (order != 1 && order != 2)
    throw std::invalid_argument("QuadratureRule: order must be 1 or 2");
  QuadratureRule r;
  r.order = order;
  if (order == 1) {
    r.point_count = 1;
    r.points[0] = {0.0, 0.0, 0.0};
    r.weights[0] = 8.0;
    return r;
  }
  r.point_count = 8;
  const double g = 1.0 / std::sqrt(3.0);
  int q = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c, ++q) {
        r.points[q] = {a ? g : -g, b ? g : -g, c ? g : -g};
        r.weights[q] = 1.0;
      }
  return r;
}

namespace {

// One corner term of the classical 8-corner prism expression. Terms whose
// prefactor vanishes are dropped (the analytic limit); a vanishing log
// argument with nonzero prefactor marks a genuinely singular configuration.
inline double prism_corner_term(double u, double v, double w) {
  const double r = std::sqrt(u * u + v * v + w * w);
  double t = 0.0;
  if (v + r > 0.0) {
    t += u * std::log(v + r);
  } else if (u != 0.0) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (u + r > 0.0) {
    t += v * std::log(u + r);
  } else if (v != 0.0) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (w != 0.0) t -= w * std::atan(u * v / (w * r));
  return t;
}

inline double prism_gz_raw(const Prism& p, const Vec3& pt, double G) {
  // Corner offsets relative to the observation point; the sign pattern puts
  // +1 on the all-upper corner.
  const double xs[2] = {p.x1 - pt.x, p.x2 - pt.x};
  const double ys[2] = {p.y1 - pt.y, p.y2 - pt.y};
  const double zs[2] = {p.z1 - pt.z, p.z2 - pt.z};
  double sum = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        const double s = ((i + j + k) & 1) ? 1.0 : -1.0;
        sum += s * prism_corner_term(xs[i], ys[j], zs[k]);
      }
  return G * p.rho * sum;
}

}  // namespace

double prism_gz(const Prism& prism, const Vec3& point, double G,
                PrismDiagnostics* diag) {
  if (!(prism.x1 < prism.x2) || !(prism.y1 < prism.y2) || !(prism.z1 < prism.z2))
    throw std::invalid_argument("prism_gz: degenerate prism bounds");
  if (prism.rho == 0.0) return 0.0;
  double gz = prism_gz_raw(prism, point, G);
  if (std::isfinite(gz)) return gz;
  // The point sits on (the extension of) a prism edge. Nudge it off the
  // singular set and retry once.
  const double h = std::min({prism.x2 - prism.x1, prism.y2 - prism.y1,
                             prism.z2 - prism.z1});
  const double eps = 1e-9 * h;
  gz = prism_gz_raw(prism, {point.x + eps, point.y + eps, point.z + eps}, G);
  if (!std::isfinite(gz))
    throw SingularConfiguration("prism_gz: singular configuration at point (" +
                                std::to_string(point.x) + ", " +
                                std::to_string(point.y) + ", " +
                                std::to_string(point.z) + ")");
  if (diag) ++diag->nudged_points;
  return gz;
}

GravityResult sum_analytic(const DensityScene& scene, const EvaluationSet& evals,
                           double G, PrismDiagnostics* diag) {
  const auto& grid = scene.grid;
  const auto& mc = grid.cells();
  // Occupied cells collected once; skipping empty cells changes nothing.
  std::vector<Prism> prisms;
  for (int i = 0; i < mc[0]; ++i)
    for (int j = 0; j < mc[1]; ++j)
      for (int k = 0; k < mc[2]; ++k) {
        const double rho =
            scene.density[static_cast<std::size_t>(grid.cell_index(i, j, k))];
        if (rho == 0.0) continue;
        const Vec3 lo = grid.cell_min_corner(i, j, k);
        const Vec3 hi = grid.cell_min_corner(i + 1, j + 1, k + 1);
        prisms.push_back({lo.x, hi.x, lo.y, hi.y, lo.z, hi.z, rho});
      }

  GravityResult out;
  out.has_xy = false;
  out.values.assign(evals.points.size(), Vec3{});
  std::atomic<std::int64_t> nudges{0};
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < static_cast<std::int64_t>(evals.points.size()); ++n) {
    PrismDiagnostics local;
    double gz = 0.0;
    for (const Prism& p : prisms) gz += prism_gz(p, evals.points[n], G, &local);
    out.values[static_cast<std::size_t>(n)].z = gz;
    if (local.nudged_points) nudges += local.nudged_points;
  }
  if (diag) diag->nudged_points += nudges.load();
  return out;
}

CellGeometry CellGeometry::axis_aligned(const Vec3& lo, const Vec3& hi) {
  CellGeometry g;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        g.corners[a * 4 + b * 2 + c] = {a ? hi.x : lo.x, b ? hi.y : lo.y,
                                        c ? hi.z : lo.z};
  return g;
}

namespace {

// Trilinear reference map on [-1,1]^3 and its Jacobian determinant.
inline void map_point(const CellGeometry& cell, const Vec3& xi, Vec3& x,
                      double& detJ) {
  double J[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  x = {0, 0, 0};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const double sa = a ? 1.0 : -1.0, sb = b ? 1.0 : -1.0, sc = c ? 1.0 : -1.0;
        const double fa = 0.5 * (1.0 + sa * xi.x);
        const double fb = 0.5 * (1.0 + sb * xi.y);
        const double fc = 0.5 * (1.0 + sc * xi.z);
        const Vec3& X = cell.corners[a * 4 + b * 2 + c];
        x = x + X * (fa * fb * fc);
        const double da = 0.5 * sa * fb * fc;
        const double db = fa * 0.5 * sb * fc;
        const double dc = fa * fb * 0.5 * sc;
        J[0][0] += X.x * da; J[0][1] += X.x * db; J[0][2] += X.x * dc;
        J[1][0] += X.y * da; J[1][1] += X.y * db; J[1][2] += X.y * dc;
        J[2][0] += X.z * da; J[2][1] += X.z * db; J[2][2] += X.z * dc;
      }
  detJ = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
         J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
         J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
}

}  // namespace

Vec3 cell_g_quadrature(const CellGeometry& cell, double rho, const Vec3& point,
                       const QuadratureRule& rule, double G) {
  Vec3 g{};
  for (int q = 0; q < rule.point_count; ++q) {
    Vec3 xq;
    double detJ;
    map_point(cell, rule.points[q], xq, detJ);
    const Vec3 d = point - xq;
    const double r2 = d.norm2();
    if (r2 == 0.0) continue;  // exact self-term is zero
    const double inv = 1.0 / (r2 * std::sqrt(r2));
    g = g + d * (rule.weights[q] * std::abs(detJ) * inv);
  }
  return g * (G * rho);
}

GravityResult sum_quadrature(const DensityScene& scene, const EvaluationSet& evals,
                             const QuadratureRule& rule, bool z_only, double G) {
  const auto& grid = scene.grid;
  const auto& mc = grid.cells();
  const Vec3 h = grid.spacing();

  GravityResult out;
  out.values.assign(evals.points.size(), Vec3{});
  out.has_xy = !z_only;

  if (z_only) {
    // Axis-aligned fast path: physical quadrature nodes with constant w|J|.
    struct Node {
      Vec3 x;
      double wj;
    };
    std::vector<Node> nodes;
    const double jac = grid.cell_volume() / 8.0;
    for (int i = 0; i < mc[0]; ++i)
      for (int j = 0; j < mc[1]; ++j)
        for (int k = 0; k < mc[2]; ++k) {
          const double rho =
              scene.density[static_cast<std::size_t>(grid.cell_index(i, j, k))];
          if (rho == 0.0) continue;
          const Vec3 c = grid.cell_center(i, j, k);
          for (int q = 0; q < rule.point_count; ++q) {
            const Vec3& xi = rule.points[q];
            nodes.push_back({{c.x + 0.5 * h.x * xi.x, c.y + 0.5 * h.y * xi.y,
                              c.z + 0.5 * h.z * xi.z},
                             rule.weights[q] * jac * rho});
          }
        }
#pragma omp parallel for schedule(static)
    for (std::int64_t n = 0; n < static_cast<std::int64_t>(evals.points.size()); ++n) {
      const Vec3 p = evals.points[static_cast<std::size_t>(n)];
      double gz = 0.0;
      for (const Node& s : nodes) {
        const double dx = p.x - s.x.x, dy = p.y - s.x.y, dz = p.z - s.x.z;
        const double r2 = dx * dx + dy * dy + dz * dz;
        if (r2 == 0.0) continue;
        gz += s.wj * dz / (r2 * std::sqrt(r2));
      }
      out.values[static_cast<std::size_t>(n)].z = G * gz;
    }
    return out;
  }

  // General path through the reference map; supports deformed cells, here fed
  // with the grid's axis-aligned geometry.
  std::vector<std::pair<CellGeometry, double>> cells;
  for (int i = 0; i < mc[0]; ++i)
    for (int j = 0; j < mc[1]; ++j)
      for (int k = 0; k < mc[2]; ++k) {
        const double rho =
            scene.density[static_cast<std::size_t>(grid.cell_index(i, j, k))];
        if (rho == 0.0) continue;
        cells.emplace_back(CellGeometry::axis_aligned(
                               grid.cell_min_corner(i, j, k),
                               grid.cell_min_corner(i + 1, j + 1, k + 1)),
                           rho);
      }
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < static_cast<std::int64_t>(evals.points.size()); ++n) {
    Vec3 g{};
    for (const auto& [cell, rho] : cells)
      g = g + cell_g_quadrature(cell, rho, evals.points[static_cast<std::size_t>(n)],
                                rule, 1.0);
    out.values[static_cast<std::size_t>(n)] = g * G;
  }
  return out;
}

}  // namespace gravity::summation
