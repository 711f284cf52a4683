#pragma once

#include <complex>
#include <span>
#include <vector>

#include "gravity/core.hpp"

/// Fast multipole evaluation of the gravity of point masses (one per occupied
/// cell, at centroids, mass rho*V) on a uniform octree: p-term multipole and
/// local solid-harmonic expansions (orders 0..p-1 retained), the five
/// translation operators, near-field direct summation.
namespace gravity::fmm {

struct PointSource {
  Vec3 pos;
  double mass = 0.0;  // kg
};

/// One point source per cell with rho != 0, at the cell centroid.
std::vector<PointSource> sources_from_scene(const DensityScene& scene);

/// Ratio of near-field work between a 2k and a k division per axis, from the
/// exact neighbor counts (8 corner boxes with 7 neighbors, 12(k-2) edge boxes
/// with 11, 6(k-2)^2 face boxes with 17, (k-2)^3 interior with 26). Tends to
/// 8 from above as k grows.
double work_ratio(int k);

/// O(M N) pairwise kernel sum g = G sum_i m_i (x' - x_i)/|x' - x_i|^3; the
/// oracle for all FMM accuracy checks. Exactly coincident pairs are skipped
/// (a particle does not act on itself).
GravityResult direct_sum(std::span<const PointSource> sources,
                         const EvaluationSet& evals, double G = kDefaultG);

/// Complex solid harmonics with factorial normalization,
///   R_n^m = r^n P_n^m(cos th) e^{im phi} / (n+m)!,
///   S_n^m = (n-m)! P_n^m(cos th) e^{im phi} / r^{n+1},
/// for which 1/|x-y| = sum R_n^m(x) conj(S_n^m(y)) (|x|<|y|) and the three
/// translation theorems are coefficient-free. Exposed for the operator-level
/// tests; coefficient layout is idx(n,m) = n^2 + n + m, degrees 0..p.
namespace sh {

using Coeffs = std::vector<std::complex<double>>;

inline std::size_t size(int p) {
  return static_cast<std::size_t>(p + 1) * static_cast<std::size_t>(p + 1);
}
inline std::size_t idx(int n, int m) {
  return static_cast<std::size_t>(n) * n + static_cast<std::size_t>(n + m);
}

Coeffs regular(int p, const Vec3& r);
Coeffs singular(int p, const Vec3& r);

/// M_n^m += mass * R_n^m(rel), rel = source - expansion center.
void p2m_accumulate(int p, const Vec3& rel, double mass, Coeffs& me);

/// Parent ME from a child ME, t = child center - parent center (exact).
void m2m_accumulate(int p, const Coeffs& child, const Vec3& t, Coeffs& parent);

/// LE contribution of an ME, t = source center - target center.
void m2l_accumulate(int p, const Coeffs& me, const Vec3& t, Coeffs& le);

/// Child LE from the parent LE, u = child center - parent center (exact).
void l2l_accumulate(int p, const Coeffs& parent, const Vec3& u, Coeffs& child);

/// Potential of an ME at rel = point - expansion center (|rel| outside the
/// source cluster); mass units, no G.
double evaluate_multipole(int p, const Coeffs& me, const Vec3& rel);

/// Potential of an LE at rel = point - expansion center.
double evaluate_local(int p, const Coeffs& le, const Vec3& rel);

/// -grad of the LE potential at rel (the far-field gravity direction, no G).
Vec3 evaluate_local_gradient(int p, const Coeffs& le, const Vec3& rel);

}  // namespace sh

/// Uniform full 8-ary subdivision of the scene's bounding cube to the given
/// depth. Box (i,j,k) at level l has linear index (i*n + j)*n + k, n = 2^l.
class Octree {
 public:
  Octree(std::vector<PointSource> sources, const Vec3& root_lo,
         double root_width, int levels);

  int levels() const { return levels_; }
  const Vec3& root_lo() const { return root_lo_; }
  double root_width() const { return root_width_; }
  /// Retained series terms p (harmonic degrees 0..p-1); -1 before sweeping.
  int expansion_order() const { return p_; }
  std::span<const PointSource> sources() const { return sources_; }

  int boxes_per_axis(int level) const { return 1 << level; }
  Vec3 box_center(int level, int i, int j, int k) const;
  double box_width(int level) const { return root_width_ / (1 << level); }

  /// Indices into sources() for one leaf.
  std::span<const int> leaf_source_indices(int i, int j, int k) const;
  bool box_occupied(int level, int i, int j, int k) const;

  /// Same-level boxes adjacent to (i,j,k) including itself (<= 27).
  std::vector<std::array<int, 3>> near_list(int level, int i, int j, int k) const;
  /// Children of the parent's neighbors that are not own neighbors (<= 189).
  std::vector<std::array<int, 3>> interaction_list(int level, int i, int j,
                                                   int k) const;

  /// Builds MEs with p terms (degrees 0..p-1); p >= 1.
  void upward_sweep(int p);
  void downward_sweep();

  /// Near-field direct sum plus the gradient of the containing leaf's LE.
  /// Points outside the root cube fall back to plain direct summation.
  GravityResult evaluate(const EvaluationSet& evals, double G = kDefaultG) const;

  const sh::Coeffs& local_expansion(int level, int i, int j, int k) const;
  const sh::Coeffs& multipole_expansion(int level, int i, int j, int k) const;

 private:
  std::int64_t box_index(int level, int i, int j, int k) const;
  void locate_leaf(const Vec3& pos, int& i, int& j, int& k) const;

  std::vector<PointSource> sources_;
  Vec3 root_lo_{};
  double root_width_ = 0.0;
  int levels_ = 0;
  int p_ = -1;
  bool has_les_ = false;

  // Leaf occupancy as CSR over the leaf grid.
  std::vector<std::int64_t> leaf_offset_;
  std::vector<int> leaf_sources_;

  // Per level: flat box arrays (level 0 = root).
  std::vector<std::vector<sh::Coeffs>> me_;
  std::vector<std::vector<sh::Coeffs>> le_;
  std::vector<std::vector<std::uint8_t>> occupied_;
};

/// Spec-shaped entry points.
Octree build_tree(const DensityScene& scene, int levels);
void upward_sweep(Octree& tree, int p);
void downward_sweep(Octree& tree, int p);
GravityResult evaluate(const Octree& tree, const EvaluationSet& evals, int p,
                       double G = kDefaultG);

/// The paper's level schedule: leaves hold ~3 cells per axis (12 -> 2,
/// 24 -> 3, 48 -> 4, 96 -> 5), never below 2 levels.
int default_tree_levels(int mbar);

}  // namespace gravity::fmm
