#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gravity/core.hpp"
#include "gravity/metrics.hpp"

/// Q1 finite-element Poisson solver for the gravitational potential on the
/// truncated domain: matrix-free operator, geometric multigrid V-cycle
/// preconditioning of FGMRES, Dirichlet (fem-d) or far-field Robin (fem-gt)
/// boundary conditions, and element-wise gravity recovery.
///
/// Weak form solved (rho constant per cell):
///   int grad(v).grad(phi) dV + oint v phi / |r_s| dS = 4 pi G int v rho dV,
/// with r_s = x - r0 measured from the anomaly centroid. The surface term is
/// the first-order radiating condition d(phi)/dn + phi/|r_s| = 0, exact for
/// the monopole far field phi ~ GM/|r_s| on spheres about r0; the strong form
/// is laplace(phi) = -4 pi G rho. The Dirichlet variant drops the surface
/// term and pins phi = 0 on the boundary (rows act as the identity).
/// Reported gravity is g = -grad(phi), whose z component already carries the
/// downward-positive convention.
namespace gravity::fem {

struct BoundaryCondition {
  enum class Kind { dirichlet0, robin_far_field };
  Kind kind = Kind::dirichlet0;
  Vec3 r0{};  // center of mass of the anomaly; must lie inside the domain

  static BoundaryCondition dirichlet0() { return {}; }
  static BoundaryCondition robin_far_field(const Vec3& r0) {
    return {Kind::robin_far_field, r0};
  }
  bool is_robin() const { return kind == Kind::robin_far_field; }
};

struct PotentialField {
  StructuredGrid grid;
  std::vector<double> phi;  // one value per node (m^2/s^2)
};

struct SolveStats {
  int iterations = 0;
  std::vector<double> residual_history;  // 2-norms, [0] is the initial residual
  bool converged = false;
  double setup_seconds = 0.0;
  double solve_seconds = 0.0;
};

struct ElementGravityField {
  StructuredGrid grid;
  std::vector<Vec3> g;  // cell-centroid samples of -grad(phi_h)
};

struct SolverFailure : std::runtime_error {
  SolverFailure(const std::string& what, SolveStats s)
      : std::runtime_error(what), stats(std::move(s)) {}
  SolveStats stats;
};

/// One grid level with its precomputed operator data (element stiffness,
/// Robin face matrices, operator diagonal).
class Level {
 public:
  Level(StructuredGrid grid, const BoundaryCondition& bc);

  const StructuredGrid& grid() const { return grid_; }
  const BoundaryCondition& bc() const { return bc_; }
  const std::vector<double>& diagonal() const { return diag_; }
  bool node_on_boundary(std::int64_t node) const {
    return boundary_[static_cast<std::size_t>(node)] != 0;
  }
  /// Per-corner weight of the load integral, int N_a dV (element-uniform).
  const std::array<double, 8>& load_weights() const { return load_w_; }

  struct RobinFace {
    std::array<std::int64_t, 4> nodes;
    std::array<std::array<double, 4>, 4> mat;
  };
  const std::vector<RobinFace>& robin_faces() const { return robin_faces_; }
  const std::array<std::array<double, 8>, 8>& element_stiffness() const {
    return ke_;
  }

 private:
  void build_robin_faces_();

  StructuredGrid grid_;
  BoundaryCondition bc_;
  std::array<std::array<double, 8>, 8> ke_{};
  std::array<double, 8> load_w_{};
  std::vector<RobinFace> robin_faces_;
  std::vector<double> diag_;
  std::vector<std::uint8_t> boundary_;
};

/// out = (L + F) y, assembled element by element without storing the matrix.
/// Under Dirichlet the boundary acts as identity rows/columns.
void apply_operator(const Level& level, std::span<const double> y,
                    std::span<double> out);

/// Freshly computed diagonal of the operator (equals level.diagonal()).
std::vector<double> operator_diagonal(const Level& level);

/// Trilinear interpolation from the coarse grid to the 2x-refined fine grid.
void prolong_nodal(const StructuredGrid& coarse, const StructuredGrid& fine,
                   std::span<const double> coarse_vals,
                   std::span<double> fine_vals);

/// Exact transpose of prolong_nodal: <restrict(u), v> == <u, prolong(v)>.
/// On constants it scales interior nodes by 8 (2^3).
void restrict_nodal(const StructuredGrid& fine, const StructuredGrid& coarse,
                    std::span<const double> fine_vals,
                    std::span<double> coarse_vals);

/// Jacobi-preconditioned Richardson sweeps: y <- y + diag(A)^-1 (b - A y).
void smooth(const Level& level, std::span<const double> b, std::span<double> y,
            int sweeps);

/// Direct (assembled, sparse LU) solve on a small grid. Residual <= 1e-12
/// relative; intended for the coarsest level only.
std::vector<double> coarse_solve(const Level& level, std::span<const double> b);

/// Nested level stack (refinement factor 2 per axis) plus the cached coarse
/// factorization. Levels are rediscretized, which coincides with the Galerkin
/// coarse operator for nested Q1 spaces.
class GridHierarchy {
 public:
  GridHierarchy(const StructuredGrid& finest, const BoundaryCondition& bc,
                int n_levels, int smooth_sweeps = 2);
  ~GridHierarchy();
  GridHierarchy(GridHierarchy&&) noexcept;
  GridHierarchy& operator=(GridHierarchy&&) noexcept;

  int n_levels() const { return static_cast<int>(levels_.size()); }
  /// level(0) is the coarsest, level(n_levels()-1) the finest.
  const Level& level(int l) const { return levels_[static_cast<std::size_t>(l)]; }
  const Level& finest() const { return levels_.back(); }

  /// One V(Nk,Nk) cycle on the finest level: y (in/out, any initial guess).
  /// With a single level this degenerates to the direct coarse solve.
  void v_cycle(std::span<const double> b, std::span<double> y) const;

 private:
  struct CoarseFactorization;
  void v_cycle_level(int l, std::span<const double> b, std::span<double> y) const;

  std::vector<Level> levels_;
  std::unique_ptr<CoarseFactorization> coarse_;
  int smooth_sweeps_ = 2;
};

struct SolveOptions {
  double rtol = 1e-10;
  int max_iterations = 200;
  int restart = 30;
  int smooth_sweeps = 2;
};

/// Load vector b_i = 4 pi G int N_i rho dV on the level's grid.
std::vector<double> assemble_rhs(const Level& level, const DensityScene& scene,
                                 double G = kDefaultG);

/// FGMRES preconditioned with one V-cycle. The scene grid must coarsen
/// n_levels-1 times (counts divisible by 2^(n_levels-1)). Throws
/// SolverFailure if the residual has not dropped below rtol * ||r0|| within
/// max_iterations.
std::pair<PotentialField, SolveStats> solve_potential(
    const DensityScene& scene, const BoundaryCondition& bc, int n_levels,
    const SolveOptions& options = {}, double G = kDefaultG);

/// Largest level count such that the coarsest grid keeps at least
/// min_coarse_cells per axis (default matches the 6^3 coarse grid).
int default_levels(int mbar, int min_coarse_cells = 6);

ElementGravityField element_gravity(const PotentialField& potential);

/// gz of the Q1 potential as the per-cell bilinear view used by the error
/// norms (exactly -d(phi_h)/dz restricted to the cell).
metrics::BilinearGzPerCell gravity_gz_bilinear(const PotentialField& potential);

}  // namespace gravity::fem
