#pragma once

#include <array>
#include <cstdint>

#include "gravity/core.hpp"

/// Direct summation forward models: the closed-form prism field (sum-an) and
/// Gauss-quadrature evaluation of the gravity integral (sum-g1 / sum-g2),
/// including the axis-aligned z-only fast path and the general deformed-
/// hexahedron path.
///
/// Parallelism is over evaluation points only; each point's cell reduction
/// runs sequentially in cell-index order, so results are bit-identical for
/// any thread count.
namespace gravity::summation {

/// Axis-aligned uniform prism, bounds in m, density in kg/m^3.
struct Prism {
  double x1, x2, y1, y2, z1, z2;
  double rho = 0.0;
};

inline Prism prism_from_bounds(const AnomalyBounds& b) {
  return {b.lo.x, b.hi.x, b.lo.y, b.hi.y, b.lo.z, b.hi.z, b.rho};
}

/// Tensor Gauss rule on the reference hexahedron [-1,1]^3; order 1 or 2
/// points per axis. Weights sum to 8 (the reference volume).
struct QuadratureRule {
  int order = 1;
  int point_count = 1;
  std::array<Vec3, 8> points{};
  std::array<double, 8> weights{};

  static QuadratureRule gauss(int order);
};

/// Counters for the edge-singularity nudges applied by prism_gz. Reported in
/// run diagnostics; zero in all of the paper's experiments (stations never
/// sit on prism edges).
struct PrismDiagnostics {
  std::int64_t nudged_points = 0;
};

/// Vertical attraction (m/s^2, downward-positive) of a uniform prism.
/// Observation points landing exactly on a prism edge (where a log/atan
/// argument vanishes) are nudged by 1e-9 of the smallest prism extent; a
/// configuration that stays non-finite after the nudge throws
/// SingularConfiguration.
double prism_gz(const Prism& prism, const Vec3& point,
                double G = kDefaultG, PrismDiagnostics* diag = nullptr);

struct SingularConfiguration;  // see summation.cpp (derives std::runtime_error)

/// sum-an: gz at each point as the sum of per-cell prism fields. Cells with
/// rho == 0 are skipped (identical result).
GravityResult sum_analytic(const DensityScene& scene, const EvaluationSet& evals,
                           double G = kDefaultG, PrismDiagnostics* diag = nullptr);

/// One arbitrarily deformed hexahedral cell, corners in the trilinear
/// reference order: local (a,b,c) in {0,1}^3 -> corner[a*4 + b*2 + c].
struct CellGeometry {
  std::array<Vec3, 8> corners;

  static CellGeometry axis_aligned(const Vec3& lo, const Vec3& hi);
};

/// Gravity 3-vector of one cell of constant density at an exterior point,
/// via the given rule mapped through the trilinear reference map (Jacobian
/// included). Quadrature nodes exactly coincident with the evaluation point
/// contribute zero (their exact self-term).
Vec3 cell_g_quadrature(const CellGeometry& cell, double rho, const Vec3& point,
                       const QuadratureRule& rule, double G = kDefaultG);

/// sum-g1 / sum-g2 over all cells with rho != 0. z_only selects the
/// axis-aligned fast path (gz only, no Jacobian machinery); it agrees with
/// the general path to ~1e-14 relative on axis-aligned grids.
GravityResult sum_quadrature(const DensityScene& scene, const EvaluationSet& evals,
                             const QuadratureRule& rule, bool z_only = false,
                             double G = kDefaultG);

}  // namespace gravity::summation
