#include "gravity/fem.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <string>

namespace gravity::fem {

namespace {

constexpr double kGauss2 = 0.5773502691896257645091488;  // 1/sqrt(3)

// 2-point Gauss on [0,1].
constexpr double kQ[2] = {0.5 * (1.0 - kGauss2), 0.5 * (1.0 + kGauss2)};
constexpr double kW[2] = {0.5, 0.5};

inline double shape1(int a, double t) { return a ? t : 1.0 - t; }
inline double dshape1(int a) { return a ? 1.0 : -1.0; }

// Node strides for gather/scatter; local corner order (a,b,c) -> a*4+b*2+c.
struct NodeLayout {
  std::int64_t sx, sy;
  std::array<std::int64_t, 8> corner;
  explicit NodeLayout(const StructuredGrid& g) {
    sy = g.cells()[2] + 1;
    sx = sy * (g.cells()[1] + 1);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c)
          corner[static_cast<std::size_t>(a * 4 + b * 2 + c)] = a * sx + b * sy + c;
  }
};

}  // namespace

Level::Level(StructuredGrid grid, const BoundaryCondition& bc)
    : grid_(std::move(grid)), bc_(bc) {
  const Vec3 h = grid_.spacing();

  // Element stiffness int grad(Na).grad(Nb) dV on the h-brick, 2^3 Gauss
  // (exact for Q1 on axis-aligned cells).
  for (int q0 = 0; q0 < 2; ++q0)
    for (int q1 = 0; q1 < 2; ++q1)
      for (int q2 = 0; q2 < 2; ++q2) {
        const double xi = kQ[q0], eta = kQ[q1], zeta = kQ[q2];
        const double w = kW[q0] * kW[q1] * kW[q2] * h.x * h.y * h.z;
        double gradN[8][3];
        double N[8];
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
              const int l = a * 4 + b * 2 + c;
              N[l] = shape1(a, xi) * shape1(b, eta) * shape1(c, zeta);
              gradN[l][0] = dshape1(a) / h.x * shape1(b, eta) * shape1(c, zeta);
              gradN[l][1] = shape1(a, xi) * dshape1(b) / h.y * shape1(c, zeta);
              gradN[l][2] = shape1(a, xi) * shape1(b, eta) * dshape1(c) / h.z;
            }
        for (int l = 0; l < 8; ++l) {
          load_w_[static_cast<std::size_t>(l)] += w * N[l];
          for (int m = 0; m < 8; ++m)
            ke_[static_cast<std::size_t>(l)][static_cast<std::size_t>(m)] +=
                w * (gradN[l][0] * gradN[m][0] + gradN[l][1] * gradN[m][1] +
                     gradN[l][2] * gradN[m][2]);
        }
      }

  const auto& mc = grid_.cells();
  boundary_.assign(static_cast<std::size_t>(grid_.node_count()), 0);
  for (int i = 0; i <= mc[0]; ++i)
    for (int j = 0; j <= mc[1]; ++j)
      for (int k = 0; k <= mc[2]; ++k)
        if (i == 0 || i == mc[0] || j == 0 || j == mc[1] || k == 0 || k == mc[2])
          boundary_[static_cast<std::size_t>(grid_.node_index(i, j, k))] = 1;

  if (bc_.is_robin()) build_robin_faces_();
  diag_ = operator_diagonal(*this);
}

/// Robin surface term: oint Na Nb / |r_s| dS over each boundary face,
/// 2x2 Gauss per face.
void Level::build_robin_faces_() {
  const auto& mc = grid_.cells();
  const Vec3 h = grid_.spacing();
  const Vec3 r0 = bc_.r0;

  // axis: face normal direction; side: 0 = lower face, 1 = upper face.
  auto add_faces = [&](int axis, int side) {
    const int u_axis = (axis + 1) % 3, v_axis = (axis + 2) % 3;
    const int nu = mc[u_axis], nv = mc[v_axis];
    const double hu = h[u_axis], hv = h[v_axis];
    const double area = hu * hv;
    const double npos =
        grid_.origin()[axis] + (side ? grid_.lengths()[axis] : 0.0);
    for (int iu = 0; iu < nu; ++iu)
      for (int iv = 0; iv < nv; ++iv) {
        RobinFace f{};
        int idx[3];
        idx[axis] = side ? mc[axis] : 0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            idx[u_axis] = iu + a;
            idx[v_axis] = iv + b;
            f.nodes[static_cast<std::size_t>(a * 2 + b)] =
                grid_.node_index(idx[0], idx[1], idx[2]);
          }
        const double u0 = grid_.origin()[u_axis] + iu * hu;
        const double v0 = grid_.origin()[v_axis] + iv * hv;
        for (int q0 = 0; q0 < 2; ++q0)
          for (int q1 = 0; q1 < 2; ++q1) {
            double x[3];
            x[axis] = npos;
            x[u_axis] = u0 + kQ[q0] * hu;
            x[v_axis] = v0 + kQ[q1] * hv;
            const Vec3 rs{x[0] - r0.x, x[1] - r0.y, x[2] - r0.z};
            const double c = 1.0 / rs.norm();
            const double w = kW[q0] * kW[q1] * area * c;
            double Nf[4];
            for (int a = 0; a < 2; ++a)
              for (int b = 0; b < 2; ++b)
                Nf[a * 2 + b] = shape1(a, kQ[q0]) * shape1(b, kQ[q1]);
            for (int l = 0; l < 4; ++l)
              for (int m = 0; m < 4; ++m)
                f.mat[static_cast<std::size_t>(l)][static_cast<std::size_t>(m)] +=
                    w * Nf[l] * Nf[m];
          }
        robin_faces_.push_back(f);
      }
  };
  for (int axis = 0; axis < 3; ++axis) {
    add_faces(axis, 0);
    add_faces(axis, 1);
  }
}

void apply_operator(const Level& level, std::span<const double> y,
                    std::span<double> out) {
  const auto& g = level.grid();
  if (y.size() != static_cast<std::size_t>(g.node_count()) || y.size() != out.size())
    throw std::invalid_argument("apply_operator: size mismatch");
  const auto& mc = g.cells();
  const NodeLayout nl(g);
  const auto& ke = level.element_stiffness();
  const bool dirichlet = !level.bc().is_robin();

  std::fill(out.begin(), out.end(), 0.0);

  // 8-color element sweep: elements of one color share no nodes, so each
  // color pass is race-free and the accumulation order is fixed. Dirichlet
  // rows act as the identity; columns are kept (the lift is zero in every
  // solve, so iterates never excite them).
  for (int color = 0; color < 8; ++color) {
    const int ci = color & 1, cj = (color >> 1) & 1, ck = (color >> 2) & 1;
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = ci; i < mc[0]; i += 2)
      for (int j = cj; j < mc[1]; j += 2)
        for (int k = ck; k < mc[2]; k += 2) {
          const std::int64_t base = g.node_index(i, j, k);
          double v[8];
          for (int l = 0; l < 8; ++l)
            v[l] = y[static_cast<std::size_t>(base + nl.corner[static_cast<std::size_t>(l)])];
          for (int l = 0; l < 8; ++l) {
            const std::int64_t n = base + nl.corner[static_cast<std::size_t>(l)];
            if (dirichlet && level.node_on_boundary(n)) continue;
            const auto& row = ke[static_cast<std::size_t>(l)];
            double acc = 0.0;
            for (int m = 0; m < 8; ++m) acc += row[static_cast<std::size_t>(m)] * v[m];
            out[static_cast<std::size_t>(n)] += acc;
          }
        }
  }

  if (dirichlet) {
    const std::int64_t nn = g.node_count();
#pragma omp parallel for schedule(static)
    for (std::int64_t n = 0; n < nn; ++n)
      if (level.node_on_boundary(n))
        out[static_cast<std::size_t>(n)] = y[static_cast<std::size_t>(n)];
  } else {
    // Adjacent faces share nodes; keep this loop serial (it is tiny).
    for (const auto& f : level.robin_faces())
      for (int l = 0; l < 4; ++l) {
        double acc = 0.0;
        for (int m = 0; m < 4; ++m)
          acc += f.mat[static_cast<std::size_t>(l)][static_cast<std::size_t>(m)] *
                 y[static_cast<std::size_t>(f.nodes[static_cast<std::size_t>(m)])];
        out[static_cast<std::size_t>(f.nodes[static_cast<std::size_t>(l)])] += acc;
      }
  }
}

std::vector<double> operator_diagonal(const Level& level) {
  const auto& g = level.grid();
  const auto& mc = g.cells();
  const NodeLayout nl(g);
  const auto& ke = level.element_stiffness();
  const bool dirichlet = !level.bc().is_robin();

  std::vector<double> diag(static_cast<std::size_t>(g.node_count()), 0.0);
  for (int i = 0; i < mc[0]; ++i)
    for (int j = 0; j < mc[1]; ++j)
      for (int k = 0; k < mc[2]; ++k) {
        const std::int64_t base = g.node_index(i, j, k);
        for (int l = 0; l < 8; ++l)
          diag[static_cast<std::size_t>(base + nl.corner[static_cast<std::size_t>(l)])] +=
              ke[static_cast<std::size_t>(l)][static_cast<std::size_t>(l)];
      }
  if (dirichlet) {
    for (std::int64_t n = 0; n < g.node_count(); ++n)
      if (level.node_on_boundary(n)) diag[static_cast<std::size_t>(n)] = 1.0;
  } else {
    for (const auto& f : level.robin_faces())
      for (int l = 0; l < 4; ++l)
        diag[static_cast<std::size_t>(f.nodes[static_cast<std::size_t>(l)])] +=
            f.mat[static_cast<std::size_t>(l)][static_cast<std::size_t>(l)];
  }
  return diag;
}

void prolong_nodal(const StructuredGrid& coarse, const StructuredGrid& fine,
                   std::span<const double> coarse_vals,
                   std::span<double> fine_vals) {
  const auto& fc = fine.cells();
  const auto& cc = coarse.cells();
  for (int d = 0; d < 3; ++d)
    if (fc[static_cast<std::size_t>(d)] != 2 * cc[static_cast<std::size_t>(d)])
      throw std::invalid_argument("prolong_nodal: grids are not a 2x pair");
  if (coarse_vals.size() != static_cast<std::size_t>(coarse.node_count()) ||
      fine_vals.size() != static_cast<std::size_t>(fine.node_count()))
    throw std::invalid_argument("prolong_nodal: size mismatch");

  const std::int64_t nn = fine.node_count();
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < nn; ++n) {
    const auto [fi, fj, fk] = fine.node_coords(n);
    const int ci = fi / 2, cj = fj / 2, ck = fk / 2;
    const int ri = fi & 1, rj = fj & 1, rk = fk & 1;
    double acc = 0.0;
    for (int a = 0; a <= ri; ++a)
      for (int b = 0; b <= rj; ++b)
        for (int c = 0; c <= rk; ++c) {
          const double w = (ri ? 0.5 : 1.0) * (rj ? 0.5 : 1.0) * (rk ? 0.5 : 1.0);
          acc += w * coarse_vals[static_cast<std::size_t>(
                         coarse.node_index(ci + a, cj + b, ck + c))];
        }
    fine_vals[static_cast<std::size_t>(n)] = acc;
  }
}

void restrict_nodal(const StructuredGrid& fine, const StructuredGrid& coarse,
                    std::span<const double> fine_vals,
                    std::span<double> coarse_vals) {
  const auto& fc = fine.cells();
  const auto& cc = coarse.cells();
  for (int d = 0; d < 3; ++d)
    if (fc[static_cast<std::size_t>(d)] != 2 * cc[static_cast<std::size_t>(d)])
      throw std::invalid_argument("restrict_nodal: grids are not a 2x pair");
  if (fine_vals.size() != static_cast<std::size_t>(fine.node_count()) ||
      coarse_vals.size() != static_cast<std::size_t>(coarse.node_count()))
    throw std::invalid_argument("restrict_nodal: size mismatch");

  const std::int64_t nn = coarse.node_count();
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < nn; ++n) {
    const auto [ci, cj, ck] = coarse.node_coords(n);
    const int fi = 2 * ci, fj = 2 * cj, fk = 2 * ck;
    double acc = 0.0;
    for (int a = -1; a <= 1; ++a) {
      if (fi + a < 0 || fi + a > fc[0]) continue;
      for (int b = -1; b <= 1; ++b) {
        if (fj + b < 0 || fj + b > fc[1]) continue;
        for (int c = -1; c <= 1; ++c) {
          if (fk + c < 0 || fk + c > fc[2]) continue;
          const double w = (a ? 0.5 : 1.0) * (b ? 0.5 : 1.0) * (c ? 0.5 : 1.0);
          acc += w * fine_vals[static_cast<std::size_t>(
                         fine.node_index(fi + a, fj + b, fk + c))];
        }
      }
    }
    coarse_vals[static_cast<std::size_t>(n)] = acc;
  }
}

void smooth(const Level& level, std::span<const double> b, std::span<double> y,
            int sweeps) {
  if (sweeps < 1) throw std::invalid_argument("smooth: sweeps must be >= 1");
  const std::int64_t nn = level.grid().node_count();
  const auto& diag = level.diagonal();
  std::vector<double> r(static_cast<std::size_t>(nn));
  for (int s = 0; s < sweeps; ++s) {
    apply_operator(level, y, r);
#pragma omp parallel for schedule(static)
    for (std::int64_t n = 0; n < nn; ++n) {
      const auto u = static_cast<std::size_t>(n);
      y[u] += (b[u] - r[u]) / diag[u];
    }
  }
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;

SpMat assemble_sparse(const Level& level) {
  const auto& g = level.grid();
  const auto& mc = g.cells();
  const NodeLayout nl(g);
  const auto& ke = level.element_stiffness();
  const bool dirichlet = !level.bc().is_robin();
  const auto nn = g.node_count();

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(g.cell_count()) * 64 + 64);
  auto skip = [&](std::int64_t n) { return dirichlet && level.node_on_boundary(n); };
  for (int i = 0; i < mc[0]; ++i)
    for (int j = 0; j < mc[1]; ++j)
      for (int k = 0; k < mc[2]; ++k) {
        const std::int64_t base = g.node_index(i, j, k);
        for (int l = 0; l < 8; ++l) {
          const std::int64_t nr = base + nl.corner[static_cast<std::size_t>(l)];
          if (skip(nr)) continue;
          for (int m = 0; m < 8; ++m) {
            const std::int64_t ncol = base + nl.corner[static_cast<std::size_t>(m)];
            trip.emplace_back(static_cast<int>(nr), static_cast<int>(ncol),
                              ke[static_cast<std::size_t>(l)][static_cast<std::size_t>(m)]);
          }
        }
      }
  for (const auto& f : level.robin_faces())
    for (int l = 0; l < 4; ++l)
      for (int m = 0; m < 4; ++m)
        trip.emplace_back(static_cast<int>(f.nodes[static_cast<std::size_t>(l)]),
                          static_cast<int>(f.nodes[static_cast<std::size_t>(m)]),
                          f.mat[static_cast<std::size_t>(l)][static_cast<std::size_t>(m)]);
  if (dirichlet)
    for (std::int64_t n = 0; n < nn; ++n)
      if (level.node_on_boundary(n))
        trip.emplace_back(static_cast<int>(n), static_cast<int>(n), 1.0);

  SpMat A(static_cast<int>(nn), static_cast<int>(nn));
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

}  // namespace

struct GridHierarchy::CoarseFactorization {
  Eigen::SparseLU<SpMat> lu;
};

std::vector<double> coarse_solve(const Level& level, std::span<const double> b) {
  const auto nn = level.grid().node_count();
  if (b.size() != static_cast<std::size_t>(nn))
    throw std::invalid_argument("coarse_solve: size mismatch");
  SpMat A = assemble_sparse(level);
  Eigen::SparseLU<SpMat> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error("coarse_solve: singular coarse operator");
  Eigen::VectorXd rhs(nn);
  for (std::int64_t n = 0; n < nn; ++n) rhs[n] = b[static_cast<std::size_t>(n)];
  Eigen::VectorXd x = lu.solve(rhs);
  return std::vector<double>(x.data(), x.data() + nn);
}

GridHierarchy::GridHierarchy(const StructuredGrid& finest,
                             const BoundaryCondition& bc, int n_levels,
                             int smooth_sweeps)
    : smooth_sweeps_(smooth_sweeps) {
  if (n_levels < 1) throw std::invalid_argument("GridHierarchy: need >= 1 level");
  const int div = 1 << (n_levels - 1);
  std::array<int, 3> counts = finest.cells();
  for (int d = 0; d < 3; ++d) {
    if (counts[static_cast<std::size_t>(d)] % div != 0)
      throw std::invalid_argument(
          "GridHierarchy: cell counts must be divisible by 2^(levels-1)");
    if (counts[static_cast<std::size_t>(d)] / div < 2)
      throw std::invalid_argument("GridHierarchy: coarsest grid too small");
  }
  levels_.reserve(static_cast<std::size_t>(n_levels));
  for (int l = 0; l < n_levels; ++l) {
    const int f = 1 << (n_levels - 1 - l);
    std::array<int, 3> c = {counts[0] / f, counts[1] / f, counts[2] / f};
    levels_.emplace_back(StructuredGrid(finest.origin(), finest.lengths(), c), bc);
  }
  coarse_ = std::make_unique<CoarseFactorization>();
  SpMat A = assemble_sparse(levels_.front());
  coarse_->lu.compute(A);
  if (coarse_->lu.info() != Eigen::Success)
    throw std::runtime_error("GridHierarchy: coarse factorization failed");
}

GridHierarchy::~GridHierarchy() = default;
GridHierarchy::GridHierarchy(GridHierarchy&&) noexcept = default;
GridHierarchy& GridHierarchy::operator=(GridHierarchy&&) noexcept = default;

void GridHierarchy::v_cycle_level(int l, std::span<const double> b,
                                  std::span<double> y) const {
  const Level& lev = levels_[static_cast<std::size_t>(l)];
  const std::int64_t nn = lev.grid().node_count();
  if (l == 0) {
    Eigen::VectorXd rhs(nn);
    for (std::int64_t n = 0; n < nn; ++n) rhs[n] = b[static_cast<std::size_t>(n)];
    Eigen::VectorXd x = coarse_->lu.solve(rhs);
    for (std::int64_t n = 0; n < nn; ++n) y[static_cast<std::size_t>(n)] = x[n];
    return;
  }

  smooth(lev, b, y, smooth_sweeps_);

  std::vector<double> r(static_cast<std::size_t>(nn));
  apply_operator(lev, y, r);
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < nn; ++n)
    r[static_cast<std::size_t>(n)] =
        b[static_cast<std::size_t>(n)] - r[static_cast<std::size_t>(n)];

  const Level& clev = levels_[static_cast<std::size_t>(l - 1)];
  const std::int64_t cn = clev.grid().node_count();
  std::vector<double> rc(static_cast<std::size_t>(cn));
  restrict_nodal(lev.grid(), clev.grid(), r, rc);
  if (!lev.bc().is_robin()) {
    // The coarse correction must vanish on the Dirichlet boundary.
    for (std::int64_t n = 0; n < cn; ++n)
      if (clev.node_on_boundary(n)) rc[static_cast<std::size_t>(n)] = 0.0;
  }

  std::vector<double> ec(static_cast<std::size_t>(cn), 0.0);
  v_cycle_level(l - 1, rc, ec);

  std::vector<double> ef(static_cast<std::size_t>(nn));
  prolong_nodal(clev.grid(), lev.grid(), ec, ef);
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < nn; ++n)
    y[static_cast<std::size_t>(n)] += ef[static_cast<std::size_t>(n)];

  smooth(lev, b, y, smooth_sweeps_);
}

void GridHierarchy::v_cycle(std::span<const double> b, std::span<double> y) const {
  if (b.size() != static_cast<std::size_t>(finest().grid().node_count()) ||
      b.size() != y.size())
    throw std::invalid_argument("v_cycle: size mismatch");
  v_cycle_level(n_levels() - 1, b, y);
}

std::vector<double> assemble_rhs(const Level& level, const DensityScene& scene,
                                 double G) {
  const auto& g = level.grid();
  if (!(scene.grid == g))
    throw std::invalid_argument("assemble_rhs: scene grid does not match level");
  const auto& mc = g.cells();
  const NodeLayout nl(g);
  const auto& lw = level.load_weights();
  const double four_pi_g = 4.0 * std::numbers::pi * G;
  std::vector<double> b(static_cast<std::size_t>(g.node_count()), 0.0);
  for (int i = 0; i < mc[0]; ++i)
    for (int j = 0; j < mc[1]; ++j)
      for (int k = 0; k < mc[2]; ++k) {
        const double rho =
            scene.density[static_cast<std::size_t>(g.cell_index(i, j, k))];
        if (rho == 0.0) continue;
        const std::int64_t base = g.node_index(i, j, k);
        for (int l = 0; l < 8; ++l)
          b[static_cast<std::size_t>(base + nl.corner[static_cast<std::size_t>(l)])] +=
              four_pi_g * rho * lw[static_cast<std::size_t>(l)];
      }
  if (!level.bc().is_robin()) {
    for (std::int64_t n = 0; n < g.node_count(); ++n)
      if (level.node_on_boundary(n)) b[static_cast<std::size_t>(n)] = 0.0;
  }
  return b;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace

std::pair<PotentialField, SolveStats> solve_potential(
    const DensityScene& scene, const BoundaryCondition& bc, int n_levels,
    const SolveOptions& options, double G) {
  using clock = std::chrono::steady_clock;
  SolveStats stats;

  const auto t0 = clock::now();
  GridHierarchy hierarchy(scene.grid, bc, n_levels, options.smooth_sweeps);
  const Level& fine = hierarchy.finest();
  const std::size_t n = static_cast<std::size_t>(fine.grid().node_count());
  std::vector<double> b = assemble_rhs(fine, scene, G);
  stats.setup_seconds = std::chrono::duration<double>(clock::now() - t0).count();

  const auto t1 = clock::now();
  std::vector<double> x(n, 0.0);
  const double beta0 = norm2(b);
  stats.residual_history.push_back(beta0);
  const double target = options.rtol * beta0;

  if (beta0 == 0.0) {
    stats.converged = true;
    stats.solve_seconds = std::chrono::duration<double>(clock::now() - t1).count();
    return {PotentialField{fine.grid(), std::move(x)}, stats};
  }

  // FGMRES(restart), right-preconditioned by one V-cycle per iterate.
  const int restart = options.restart;
  std::vector<double> r = b;
  double beta = beta0;
  bool done = false;
  while (!done && stats.iterations < options.max_iterations) {
    std::vector<std::vector<double>> V;
    std::vector<std::vector<double>> Z;
    V.reserve(static_cast<std::size_t>(restart) + 1);
    Z.reserve(static_cast<std::size_t>(restart));
    {
      std::vector<double> v0(r);
      for (double& e : v0) e /= beta;
      V.push_back(std::move(v0));
    }
    std::vector<double> H(static_cast<std::size_t>(restart + 1) * restart, 0.0);
    auto Hat = [&](int i, int j) -> double& {
      return H[static_cast<std::size_t>(i) * restart + static_cast<std::size_t>(j)];
    };
    std::vector<double> cs(static_cast<std::size_t>(restart)),
        sn(static_cast<std::size_t>(restart)),
        gvec(static_cast<std::size_t>(restart) + 1, 0.0);
    gvec[0] = beta;

    int j = 0;
    for (; j < restart && stats.iterations < options.max_iterations; ++j) {
      std::vector<double> z(n, 0.0);
      hierarchy.v_cycle(V[static_cast<std::size_t>(j)], z);
      std::vector<double> w(n);
      apply_operator(fine, z, w);
      Z.push_back(std::move(z));

      for (int i = 0; i <= j; ++i) {
        const double hij = dot(w, V[static_cast<std::size_t>(i)]);
        Hat(i, j) = hij;
        const auto& vi = V[static_cast<std::size_t>(i)];
        for (std::size_t u = 0; u < n; ++u) w[u] -= hij * vi[u];
      }
      const double hj1 = norm2(w);
      Hat(j + 1, j) = hj1;
      if (hj1 > 0.0) {
        std::vector<double> vnext(w);
        for (double& e : vnext) e /= hj1;
        V.push_back(std::move(vnext));
      }

      for (int i = 0; i < j; ++i) {
        const double t = cs[static_cast<std::size_t>(i)] * Hat(i, j) +
                         sn[static_cast<std::size_t>(i)] * Hat(i + 1, j);
        Hat(i + 1, j) = -sn[static_cast<std::size_t>(i)] * Hat(i, j) +
                        cs[static_cast<std::size_t>(i)] * Hat(i + 1, j);
        Hat(i, j) = t;
      }
      const double denom = std::hypot(Hat(j, j), Hat(j + 1, j));
      cs[static_cast<std::size_t>(j)] = Hat(j, j) / denom;
      sn[static_cast<std::size_t>(j)] = Hat(j + 1, j) / denom;
      Hat(j, j) = denom;
      Hat(j + 1, j) = 0.0;
      gvec[static_cast<std::size_t>(j + 1)] = -sn[static_cast<std::size_t>(j)] *
                                              gvec[static_cast<std::size_t>(j)];
      gvec[static_cast<std::size_t>(j)] *= cs[static_cast<std::size_t>(j)];

      ++stats.iterations;
      const double res_est = std::abs(gvec[static_cast<std::size_t>(j + 1)]);
      stats.residual_history.push_back(res_est);
      if (res_est < target || Hat(j + 1, j) == 0.0) {
        ++j;
        break;
      }
    }

    // x += Z * y with H y = g solved by back substitution.
    std::vector<double> ysmall(static_cast<std::size_t>(j), 0.0);
    for (int i = j - 1; i >= 0; --i) {
      double s = gvec[static_cast<std::size_t>(i)];
      for (int l = i + 1; l < j; ++l) s -= Hat(i, l) * ysmall[static_cast<std::size_t>(l)];
      ysmall[static_cast<std::size_t>(i)] = s / Hat(i, i);
    }
    for (int i = 0; i < j; ++i) {
      const auto& zi = Z[static_cast<std::size_t>(i)];
      const double yi = ysmall[static_cast<std::size_t>(i)];
      for (std::size_t u = 0; u < n; ++u) x[u] += yi * zi[u];
    }

    apply_operator(fine, x, r);
    for (std::size_t u = 0; u < n; ++u) r[u] = b[u] - r[u];
    beta = norm2(r);
    if (beta < target) done = true;
  }

  stats.converged = beta < target || beta == 0.0;
  stats.residual_history.back() = beta;
  stats.solve_seconds = std::chrono::duration<double>(clock::now() - t1).count();
  if (!stats.converged)
    throw SolverFailure(
        "solve_potential: FGMRES did not reach rtol within " +
            std::to_string(options.max_iterations) + " iterations (residual " +
            std::to_string(beta / beta0) + " relative)",
        stats);
  return {PotentialField{fine.grid(), std::move(x)}, stats};
}

int default_levels(int mbar, int min_coarse_cells) {
  int levels = 1;
  int m = mbar;
  while (m % 2 == 0 && m / 2 >= min_coarse_cells) {
    m /= 2;
    ++levels;
  }
  return levels;
}

ElementGravityField element_gravity(const PotentialField& potential) {
  const auto& g = potential.grid;
  const auto& mc = g.cells();
  const Vec3 h = g.spacing();
  const NodeLayout nl(g);
  ElementGravityField out{g, {}};
  out.g.assign(static_cast<std::size_t>(g.cell_count()), Vec3{});
  const auto& phi = potential.phi;
#pragma omp parallel for collapse(2) schedule(static)
  for (int i = 0; i < mc[0]; ++i)
    for (int j = 0; j < mc[1]; ++j)
      for (int k = 0; k < mc[2]; ++k) {
        const std::int64_t base = g.node_index(i, j, k);
        double v[8];
        for (int l = 0; l < 8; ++l)
          v[l] = phi[static_cast<std::size_t>(base + nl.corner[static_cast<std::size_t>(l)])];
        // Gradient of the trilinear interpolant at the centroid.
        const double dx = ((v[4] + v[5] + v[6] + v[7]) - (v[0] + v[1] + v[2] + v[3])) /
                          (4.0 * h.x);
        const double dy = ((v[2] + v[3] + v[6] + v[7]) - (v[0] + v[1] + v[4] + v[5])) /
                          (4.0 * h.y);
        const double dz = ((v[1] + v[3] + v[5] + v[7]) - (v[0] + v[2] + v[4] + v[6])) /
                          (4.0 * h.z);
        out.g[static_cast<std::size_t>(g.cell_index(i, j, k))] = {-dx, -dy, -dz};
      }
  return out;
}

metrics::BilinearGzPerCell gravity_gz_bilinear(const PotentialField& potential) {
  const auto& g = potential.grid;
  const auto& mc = g.cells();
  const Vec3 h = g.spacing();
  const NodeLayout nl(g);
  metrics::BilinearGzPerCell out;
  out.coeff.assign(static_cast<std::size_t>(g.cell_count()), {});
  const auto& phi = potential.phi;
#pragma omp parallel for collapse(2) schedule(static)
  for (int i = 0; i < mc[0]; ++i)
    for (int j = 0; j < mc[1]; ++j)
      for (int k = 0; k < mc[2]; ++k) {
        const std::int64_t base = g.node_index(i, j, k);
        auto pv = [&](int l) {
          return phi[static_cast<std::size_t>(base + nl.corner[static_cast<std::size_t>(l)])];
        };
        // gz at the (u,v) cell corner: -d(phi)/dz along the corner's z edge.
        const double g00 = -(pv(1) - pv(0)) / h.z;
        const double g01 = -(pv(3) - pv(2)) / h.z;
        const double g10 = -(pv(5) - pv(4)) / h.z;
        const double g11 = -(pv(7) - pv(6)) / h.z;
        out.coeff[static_cast<std::size_t>(g.cell_index(i, j, k))] = {
            g00, g10 - g00, g01 - g00, g11 - g10 - g01 + g00};
      }
  return out;
}

}  // namespace gravity::fem
