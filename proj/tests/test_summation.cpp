#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "gravity/core.hpp"
#include "gravity/summation.hpp"

using namespace gravity;
using namespace gravity::summation;

namespace {

// Independent oracle: tensor Gauss-Legendre quadrature of the gravity
// integral's z component over the prism (no shared code with prism_gz).
void legendre_rule(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double p1 = 0.0, dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      p1 = t;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (t * p1 - p0) / (t * t - 1.0);
      const double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    x[static_cast<std::size_t>(i)] = t;
    w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - t * t) * dp * dp);
  }
}

double quad_gz_oracle(const Prism& p, const Vec3& obs, int n = 48) {
  std::vector<double> x, w;
  legendre_rule(n, x, w);
  auto map = [](double t, double a, double b) {
    return 0.5 * (a + b) + 0.5 * (b - a) * t;
  };
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const double sx = map(x[i], p.x1, p.x2);
        const double sy = map(x[j], p.y1, p.y2);
        const double sz = map(x[k], p.z1, p.z2);
        const double dx = obs.x - sx, dy = obs.y - sy, dz = obs.z - sz;
        const double r2 = dx * dx + dy * dy + dz * dz;
        acc += w[i] * w[j] * w[k] * dz / (r2 * std::sqrt(r2));
      }
  const double jac = 0.125 * (p.x2 - p.x1) * (p.y2 - p.y1) * (p.z2 - p.z1);
  return kDefaultG * p.rho * jac * acc;
}

const Prism kAnomaly{250, 350, 250, 350, -200, -100, 2000.0};

}  // namespace

TEST_CASE("prism_gz matches the quadrature oracle") {
  const std::array<Vec3, 5> pts = {{{300, 300, 150},
                                    {0, 0, 150},
                                    {300, 300, -450},
                                    {10, 520, 30},
                                    {471.3, 88.2, 149.0}}};
  for (const Vec3& p : pts) {
    const double want = quad_gz_oracle(kAnomaly, p);
    const double got = prism_gz(kAnomaly, p);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("prism_gz sign convention: positive above, negative below") {
  CHECK(prism_gz(kAnomaly, {300, 300, 150}) > 0.0);
  CHECK(prism_gz(kAnomaly, {300, 300, -450}) < 0.0);
}

TEST_CASE("prism far field approaches the point mass") {
  const double H = 100.0, d = 100.0 * H;
  const double M = 2000.0 * H * H * H;
  const double got = prism_gz(kAnomaly, {300, 300, -150 + d});
  const double want = kDefaultG * M / (d * d);
  CHECK(std::abs(got - want) / want < 1e-3);
}

TEST_CASE("prism symmetry and zero density") {
  const double a = prism_gz(kAnomaly, {300 - 87.0, 300 + 13.0, 120});
  const double b = prism_gz(kAnomaly, {300 + 87.0, 300 - 13.0, 120});
  CHECK(a == doctest::Approx(b).epsilon(1e-13));

  Prism empty = kAnomaly;
  empty.rho = 0.0;
  CHECK(prism_gz(empty, {1, 2, 3}) == 0.0);
}

TEST_CASE("prism_gz stays finite on edges and corners") {
  PrismDiagnostics diag;
  const Prism p{0, 1, 0, 1, 0, 1, 1000.0};
  const std::array<Vec3, 4> pts = {{{0, 0, 0},        // corner
                                    {0, 0.5, 0},      // edge interior
                                    {0, -2.0, 0},     // on an edge line, outside
                                    {0.5, 0.5, 1}}};  // face center
  for (const Vec3& q : pts) {
    const double g = prism_gz(p, q, kDefaultG, &diag);
    CHECK(std::isfinite(g));
    const double g2 = prism_gz(p, {q.x + 1e-7, q.y + 1e-7, q.z + 1e-7});
    CHECK(std::abs(g - g2) < 1e-6 * (std::abs(g) + 1e-30) + 1e-12);
  }
}

TEST_CASE("sum_analytic equals the single prism by superposition") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> ux(0.0, 600.0), uz(150.0, 400.0);
  EvaluationSet evals;
  for (int i = 0; i < 200; ++i) evals.points.push_back({ux(rng), ux(rng), uz(rng)});

  for (int mbar : {12, 24}) {
    DensityScene scene = build_synthetic_scene(mbar);
    GravityResult got = sum_analytic(scene, evals);
    for (std::size_t i = 0; i < evals.points.size(); ++i) {
      const double want = prism_gz(kAnomaly, evals.points[i]);
      CHECK(std::abs(got.values[i].z - want) <= 1e-12 * std::abs(want));
    }
  }
}

TEST_CASE("sum_analytic on an empty scene is zero") {
  DensityScene scene = build_synthetic_scene(12);
  std::fill(scene.density.begin(), scene.density.end(), 0.0);
  EvaluationSet evals = surface_observation_grid(3, 3);
  GravityResult r = sum_analytic(scene, evals);
  for (const Vec3& v : r.values) CHECK(v.z == 0.0);
}

TEST_CASE("order-1 quadrature collapses to the centroid point mass") {
  const Vec3 lo{10, 20, 30}, hi{12, 25, 31};
  const CellGeometry cell = CellGeometry::axis_aligned(lo, hi);
  const double rho = 1700.0;
  const Vec3 obs{50, 60, 70};
  const Vec3 got = cell_g_quadrature(cell, rho, obs, QuadratureRule::gauss(1));
  const Vec3 c = (lo + hi) * 0.5;
  const double V = (hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z);
  const Vec3 d = obs - c;
  const double r2 = d.norm2();
  const Vec3 want = d * (kDefaultG * rho * V / (r2 * std::sqrt(r2)));
  CHECK(got.x == doctest::Approx(want.x).epsilon(1e-14));
  CHECK(got.y == doctest::Approx(want.y).epsilon(1e-14));
  CHECK(got.z == doctest::Approx(want.z).epsilon(1e-14));
}

TEST_CASE("order-2 quadrature approaches the closed form on the axis") {
  const double s = 40.0;
  const Prism p{0, s, 0, s, 0, s, 2600.0};
  const CellGeometry cell = CellGeometry::axis_aligned({0, 0, 0}, {s, s, s});
  // Frozen from an independent quadrature study: 4.847e-6 relative at 10
  // cell sizes, 3.036e-7 at 20.
  {
    const Vec3 obs{s / 2, s / 2, s / 2 + 10.0 * s};
    const Vec3 got = cell_g_quadrature(cell, p.rho, obs, QuadratureRule::gauss(2));
    const double rel = std::abs(got.z - prism_gz(p, obs)) / std::abs(prism_gz(p, obs));
    CHECK(rel == doctest::Approx(4.8473e-06).epsilon(0.05));
  }
  {
    const Vec3 obs{s / 2, s / 2, s / 2 + 20.0 * s};
    const Vec3 got = cell_g_quadrature(cell, p.rho, obs, QuadratureRule::gauss(2));
    const double rel = std::abs(got.z - prism_gz(p, obs)) / std::abs(prism_gz(p, obs));
    CHECK(rel < 1e-6);
    CHECK(rel == doctest::Approx(3.0360e-07).epsilon(0.05));
  }
}

TEST_CASE("affine cells integrate exactly (one-point rule)") {
  // Sheared parallelepiped x = A xi + t: |J| is constant, so the one-point
  // rule must equal the point mass at the centroid with the exact volume.
  const double A[3][3] = {{2.0, 0.4, 0.0}, {0.0, 1.5, 0.3}, {0.1, 0.0, 1.0}};
  const Vec3 t{5, 6, 7};
  CellGeometry cell;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const double xi[3] = {double(a), double(b), double(c)};
        cell.corners[a * 4 + b * 2 + c] = {
            A[0][0] * xi[0] + A[0][1] * xi[1] + A[0][2] * xi[2] + t.x,
            A[1][0] * xi[0] + A[1][1] * xi[1] + A[1][2] * xi[2] + t.y,
            A[2][0] * xi[0] + A[2][1] * xi[1] + A[2][2] * xi[2] + t.z};
      }
  const double detA = A[0][0] * (A[1][1] * A[2][2] - A[1][2] * A[2][1]) -
                      A[0][1] * (A[1][0] * A[2][2] - A[1][2] * A[2][0]) +
                      A[0][2] * (A[1][0] * A[2][1] - A[1][1] * A[2][0]);
  Vec3 centroid{};
  for (const Vec3& c : cell.corners) centroid = centroid + c * 0.125;
  const double rho = 3000.0;
  const Vec3 obs{40, -20, 33};
  const Vec3 got = cell_g_quadrature(cell, rho, obs, QuadratureRule::gauss(1));
  const Vec3 d = obs - centroid;
  const double r2 = d.norm2();
  const Vec3 want = d * (kDefaultG * rho * std::abs(detA) / (r2 * std::sqrt(r2)));
  CHECK(got.x == doctest::Approx(want.x).epsilon(1e-14));
  CHECK(got.y == doctest::Approx(want.y).epsilon(1e-14));
  CHECK(got.z == doctest::Approx(want.z).epsilon(1e-14));
}

TEST_CASE("quadrature weights sum to the reference volume") {
  for (int order : {1, 2}) {
    const QuadratureRule r = QuadratureRule::gauss(order);
    double s = 0.0;
    for (int q = 0; q < r.point_count; ++q) s += r.weights[q];
    CHECK(s == doctest::Approx(8.0).epsilon(1e-15));
  }
  CHECK_THROWS_AS(QuadratureRule::gauss(3), std::invalid_argument);
}

TEST_CASE("z-only fast path agrees with the general path") {
  DensityScene scene = build_synthetic_scene(12);
  EvaluationSet evals = surface_observation_grid(7, 7);
  for (int order : {1, 2}) {
    const QuadratureRule rule = QuadratureRule::gauss(order);
    GravityResult fast = sum_quadrature(scene, evals, rule, true);
    GravityResult full = sum_quadrature(scene, evals, rule, false);
    CHECK_FALSE(fast.has_xy);
    CHECK(full.has_xy);
    for (std::size_t i = 0; i < evals.points.size(); ++i)
      CHECK(std::abs(fast.values[i].z - full.values[i].z) <=
            1e-13 * std::abs(full.values[i].z));
  }
}

TEST_CASE("summation is linear in density") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ur(0.0, 3000.0);
  StructuredGrid grid = build_grid({0, 0, 0}, {40, 40, 40}, {4, 4, 4});
  DensityScene a{grid, {}}, b{grid, {}}, ab{grid, {}};
  for (int i = 0; i < 64; ++i) {
    a.density.push_back(ur(rng));
    b.density.push_back(ur(rng));
    ab.density.push_back(a.density.back() + b.density.back());
  }
  EvaluationSet evals;
  evals.points = {{50, 50, 50}, {-10, 3, 90}, {20, 20, 300}};
  const QuadratureRule rule = QuadratureRule::gauss(2);
  GravityResult ra = sum_quadrature(a, evals, rule);
  GravityResult rb = sum_quadrature(b, evals, rule);
  GravityResult rab = sum_quadrature(ab, evals, rule);
  GravityResult aa = sum_analytic(a, evals);
  GravityResult bb = sum_analytic(b, evals);
  GravityResult aabb = sum_analytic(ab, evals);
  for (std::size_t i = 0; i < evals.points.size(); ++i) {
    CHECK(rab.values[i].z ==
          doctest::Approx(ra.values[i].z + rb.values[i].z).epsilon(1e-12));
    CHECK(aabb.values[i].z ==
          doctest::Approx(aa.values[i].z + bb.values[i].z).epsilon(1e-12));
  }
}

TEST_CASE("translation equivariance") {
  DensityScene scene = build_synthetic_scene(12);
  const Vec3 t{123.0, -77.0, 41.5};
  DensityScene moved{build_grid(scene.grid.origin() + t, scene.grid.lengths(),
                                scene.grid.cells()),
                     scene.density};
  EvaluationSet evals = surface_observation_grid(5, 5);
  EvaluationSet moved_evals;
  for (const Vec3& p : evals.points) moved_evals.points.push_back(p + t);

  GravityResult r0 = sum_analytic(scene, evals);
  GravityResult r1 = sum_analytic(moved, moved_evals);
  GravityResult q0 = sum_quadrature(scene, evals, QuadratureRule::gauss(1), true);
  GravityResult q1 = sum_quadrature(moved, moved_evals, QuadratureRule::gauss(1), true);
  for (std::size_t i = 0; i < evals.points.size(); ++i) {
    CHECK(r0.values[i].z == doctest::Approx(r1.values[i].z).epsilon(1e-12));
    CHECK(q0.values[i].z == doctest::Approx(q1.values[i].z).epsilon(1e-12));
  }
}

TEST_CASE("observation order is preserved under permutation") {
  DensityScene scene = build_synthetic_scene(12);
  EvaluationSet evals = surface_observation_grid(4, 4);
  EvaluationSet reversed;
  reversed.points.assign(evals.points.rbegin(), evals.points.rend());
  GravityResult f = sum_analytic(scene, evals);
  GravityResult r = sum_analytic(scene, reversed);
  const std::size_t n = evals.points.size();
  for (std::size_t i = 0; i < n; ++i)
    CHECK(f.values[i].z == r.values[n - 1 - i].z);
}

TEST_CASE("grid refinement leaves the analytic field unchanged") {
  EvaluationSet evals = surface_observation_grid(6, 6);
  DensityScene s12 = build_synthetic_scene(12);
  DensityScene s24 = build_synthetic_scene(24);
  GravityResult r12 = sum_analytic(s12, evals);
  GravityResult r24 = sum_analytic(s24, evals);
  for (std::size_t i = 0; i < evals.points.size(); ++i)
    CHECK(std::abs(r12.values[i].z - r24.values[i].z) <=
          2e-12 * std::abs(r12.values[i].z));
}
