#include "gravity/fmm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gravity::fmm {

std::vector<PointSource> sources_from_scene(const DensityScene& scene) {
  const auto& grid = scene.grid;
  const auto& mc = grid.cells();
  const double v = grid.cell_volume();
  std::vector<PointSource> out;
  for (int i = 0; i < mc[0]; ++i)
    for (int j = 0; j < mc[1]; ++j)
      for (int k = 0; k < mc[2]; ++k) {
        const double rho =
            scene.density[static_cast<std::size_t>(grid.cell_index(i, j, k))];
        if (rho == 0.0) continue;
        out.push_back({grid.cell_center(i, j, k), rho * v});
      }
  return out;
}

double work_ratio(int k) {
  if (k < 2) throw std::invalid_argument("work_ratio: k must be >= 2");
  auto work = [](double kk) {
    const double e = kk - 2.0;
    // (N_B + 1/2) per box class, B^2 factored out.
    return e * e * e * 26.5 + 6.0 * e * e * 17.5 + 12.0 * e * 11.5 + 8.0 * 7.5;
  };
  return work(2.0 * k) / work(static_cast<double>(k));
}

GravityResult direct_sum(std::span<const PointSource> sources,
                         const EvaluationSet& evals, double G) {
  GravityResult out;
  out.values.assign(evals.points.size(), Vec3{});
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < static_cast<std::int64_t>(evals.points.size()); ++n) {
    const Vec3 p = evals.points[static_cast<std::size_t>(n)];
    Vec3 g{};
    for (const PointSource& s : sources) {
      const Vec3 d = p - s.pos;
      const double r2 = d.norm2();
      if (r2 == 0.0) continue;
      g = g + d * (s.mass / (r2 * std::sqrt(r2)));
    }
    out.values[static_cast<std::size_t>(n)] = g * G;
  }
  return out;
}

namespace sh {

namespace {
using cplx = std::complex<double>;
}

Coeffs regular(int p, const Vec3& r) {
  Coeffs R(size(p));
  const cplx xy(r.x, r.y);
  const double r2 = r.norm2();
  R[idx(0, 0)] = 1.0;
  for (int m = 1; m <= p; ++m)
    R[idx(m, m)] = -xy / (2.0 * m) * R[idx(m - 1, m - 1)];
  for (int m = 0; m < p; ++m) R[idx(m + 1, m)] = r.z * R[idx(m, m)];
  for (int m = 0; m <= p; ++m)
    for (int n = m + 2; n <= p; ++n)
      R[idx(n, m)] = ((2.0 * n - 1.0) * r.z * R[idx(n - 1, m)] -
                      r2 * R[idx(n - 2, m)]) /
                     (static_cast<double>(n + m) * (n - m));
  for (int n = 1; n <= p; ++n)
    for (int m = 1; m <= n; ++m)
      R[idx(n, -m)] = (m & 1 ? -1.0 : 1.0) * std::conj(R[idx(n, m)]);
  return R;
}

Coeffs singular(int p, const Vec3& r) {
  Coeffs S(size(p));
  const cplx xy(r.x, r.y);
  const double r2 = r.norm2();
  if (r2 == 0.0) throw std::invalid_argument("sh::singular: zero radius");
  S[idx(0, 0)] = 1.0 / std::sqrt(r2);
  for (int m = 1; m <= p; ++m)
    S[idx(m, m)] = (2.0 * m - 1.0) * (-xy / r2) * S[idx(m - 1, m - 1)];
  for (int m = 0; m < p; ++m)
    S[idx(m + 1, m)] = (2.0 * m + 1.0) * r.z / r2 * S[idx(m, m)];
  for (int m = 0; m <= p; ++m)
    for (int n = m + 2; n <= p; ++n)
      S[idx(n, m)] = ((2.0 * n - 1.0) * r.z * S[idx(n - 1, m)] -
                      static_cast<double>((n - 1) * (n - 1) - m * m) *
                          S[idx(n - 2, m)]) /
                     r2;
  for (int n = 1; n <= p; ++n)
    for (int m = 1; m <= n; ++m)
      S[idx(n, -m)] = (m & 1 ? -1.0 : 1.0) * std::conj(S[idx(n, m)]);
  return S;
}

void p2m_accumulate(int p, const Vec3& rel, double mass, Coeffs& me) {
  const Coeffs R = regular(p, rel);
  for (std::size_t i = 0; i < me.size(); ++i) me[i] += mass * R[i];
}

void m2m_accumulate(int p, const Coeffs& child, const Vec3& t, Coeffs& parent) {
  const Coeffs R = regular(p, t);
  for (int n = 0; n <= p; ++n)
    for (int m = -n; m <= n; ++m) {
      cplx acc = 0.0;
      for (int j = 0; j <= n; ++j) {
        const int klo = std::max(-j, m - (n - j));
        const int khi = std::min(j, m + (n - j));
        for (int k = klo; k <= khi; ++k)
          acc += R[idx(j, k)] * child[idx(n - j, m - k)];
      }
      parent[idx(n, m)] += acc;
    }
}

void m2l_accumulate(int p, const Coeffs& me, const Vec3& t, Coeffs& le) {
  // |m + k| <= n + j holds unconditionally, so the inner loops are dense.
  const Coeffs S = singular(2 * p, t);
  for (int j = 0; j <= p; ++j)
    for (int k = -j; k <= j; ++k) {
      cplx acc = 0.0;
      for (int n = 0; n <= p; ++n) {
        const double sign = (n & 1) ? -1.0 : 1.0;
        for (int m = -n; m <= n; ++m)
          acc += sign * me[idx(n, m)] * std::conj(S[idx(n + j, m + k)]);
      }
      le[idx(j, k)] += acc;
    }
}

void l2l_accumulate(int p, const Coeffs& parent, const Vec3& u, Coeffs& child) {
  const Coeffs R = regular(p, u);
  for (int j = 0; j <= p; ++j)
    for (int k = -j; k <= j; ++k) {
      cplx acc = 0.0;
      for (int n = j; n <= p; ++n) {
        const int mlo = std::max(-n, k - (n - j));
        const int mhi = std::min(n, k + (n - j));
        for (int m = mlo; m <= mhi; ++m)
          acc += parent[idx(n, m)] * R[idx(n - j, m - k)];
      }
      child[idx(j, k)] += acc;
    }
}

double evaluate_multipole(int p, const Coeffs& me, const Vec3& rel) {
  const Coeffs S = singular(p, rel);
  cplx acc = 0.0;
  for (std::size_t i = 0; i < me.size(); ++i) acc += me[i] * std::conj(S[i]);
  return acc.real();
}

double evaluate_local(int p, const Coeffs& le, const Vec3& rel) {
  const Coeffs R = regular(p, rel);
  cplx acc = 0.0;
  for (std::size_t i = 0; i < le.size(); ++i) acc += le[i] * R[i];
  return acc.real();
}

Vec3 evaluate_local_gradient(int p, const Coeffs& le, const Vec3& rel) {
  // grad via d/dz R_n^m = R_{n-1}^m, (dx+i dy) R_n^m = R_{n-1}^{m+1},
  // (dx-i dy) R_n^m = -R_{n-1}^{m-1}; out-of-range harmonics are zero.
  const Coeffs R = regular(p, rel);
  cplx gx = 0.0, gy = 0.0, gz = 0.0;
  for (int n = 1; n <= p; ++n)
    for (int m = -n; m <= n; ++m) {
      const cplx L = le[idx(n, m)];
      const cplx rp = (std::abs(m + 1) <= n - 1) ? R[idx(n - 1, m + 1)] : cplx(0.0);
      const cplx rm = (std::abs(m - 1) <= n - 1) ? R[idx(n - 1, m - 1)] : cplx(0.0);
      const cplx rz = (std::abs(m) <= n - 1) ? R[idx(n - 1, m)] : cplx(0.0);
      gx += L * (rp - rm) * 0.5;
      gy += L * (rp + rm) * cplx(0.0, -0.5);
      gz += L * rz;
    }
  // g = -grad(phi)
  return {-gx.real(), -gy.real(), -gz.real()};
}

}  // namespace sh

Octree::Octree(std::vector<PointSource> sources, const Vec3& root_lo,
               double root_width, int levels)
    : sources_(std::move(sources)),
      root_lo_(root_lo),
      root_width_(root_width),
      levels_(levels) {
  if (levels_ < 2) throw std::invalid_argument("Octree: need at least 2 levels");
  if (!(root_width_ > 0.0))
    throw std::invalid_argument("Octree: root width must be positive");

  const int n = boxes_per_axis(levels_);
  const std::int64_t nleaves = static_cast<std::int64_t>(n) * n * n;

  std::vector<int> leaf_of(sources_.size());
  std::vector<std::int64_t> count(static_cast<std::size_t>(nleaves) + 1, 0);
  for (std::size_t s = 0; s < sources_.size(); ++s) {
    int i, j, k;
    locate_leaf(sources_[s].pos, i, j, k);
    const Vec3 rel = sources_[s].pos - root_lo_;
    if (rel.x < -1e-9 * root_width_ || rel.x > root_width_ * (1.0 + 1e-9) ||
        rel.y < -1e-9 * root_width_ || rel.y > root_width_ * (1.0 + 1e-9) ||
        rel.z < -1e-9 * root_width_ || rel.z > root_width_ * (1.0 + 1e-9))
      throw std::invalid_argument("Octree: source outside the root box");
    leaf_of[s] = static_cast<int>(box_index(levels_, i, j, k));
    ++count[static_cast<std::size_t>(leaf_of[s]) + 1];
  }
  leaf_offset_.assign(static_cast<std::size_t>(nleaves) + 1, 0);
  for (std::int64_t b = 0; b < nleaves; ++b)
    leaf_offset_[static_cast<std::size_t>(b) + 1] =
        leaf_offset_[static_cast<std::size_t>(b)] + count[static_cast<std::size_t>(b) + 1];
  leaf_sources_.resize(sources_.size());
  std::vector<std::int64_t> cursor(leaf_offset_.begin(), leaf_offset_.end() - 1);
  for (std::size_t s = 0; s < sources_.size(); ++s)
    leaf_sources_[static_cast<std::size_t>(cursor[static_cast<std::size_t>(leaf_of[s])]++)] =
        static_cast<int>(s);

  // Occupancy per level, propagated up from the leaves.
  occupied_.resize(static_cast<std::size_t>(levels_) + 1);
  for (int l = levels_; l >= 0; --l) {
    const int nl = boxes_per_axis(l);
    occupied_[static_cast<std::size_t>(l)].assign(
        static_cast<std::size_t>(nl) * nl * nl, 0);
  }
  for (std::int64_t b = 0; b < nleaves; ++b)
    if (leaf_offset_[static_cast<std::size_t>(b) + 1] >
        leaf_offset_[static_cast<std::size_t>(b)])
      occupied_[static_cast<std::size_t>(levels_)][static_cast<std::size_t>(b)] = 1;
  for (int l = levels_ - 1; l >= 0; --l) {
    const int nl = boxes_per_axis(l);
    for (int i = 0; i < nl; ++i)
      for (int j = 0; j < nl; ++j)
        for (int k = 0; k < nl; ++k) {
          std::uint8_t occ = 0;
          for (int a = 0; a < 2 && !occ; ++a)
            for (int b2 = 0; b2 < 2 && !occ; ++b2)
              for (int c = 0; c < 2 && !occ; ++c)
                occ = occupied_[static_cast<std::size_t>(l + 1)][static_cast<std::size_t>(
                    box_index(l + 1, 2 * i + a, 2 * j + b2, 2 * k + c))];
          occupied_[static_cast<std::size_t>(l)][static_cast<std::size_t>(
              box_index(l, i, j, k))] = occ;
        }
  }
}

std::int64_t Octree::box_index(int level, int i, int j, int k) const {
  const std::int64_t n = boxes_per_axis(level);
  return (static_cast<std::int64_t>(i) * n + j) * n + k;
}

Vec3 Octree::box_center(int level, int i, int j, int k) const {
  const double w = box_width(level);
  return {root_lo_.x + (i + 0.5) * w, root_lo_.y + (j + 0.5) * w,
          root_lo_.z + (k + 0.5) * w};
}

void Octree::locate_leaf(const Vec3& pos, int& i, int& j, int& k) const {
  const int n = boxes_per_axis(levels_);
  const double inv = n / root_width_;
  auto clampi = [n](double t) {
    const int v = static_cast<int>(std::floor(t));
    return std::clamp(v, 0, n - 1);
  };
  i = clampi((pos.x - root_lo_.x) * inv);
  j = clampi((pos.y - root_lo_.y) * inv);
  k = clampi((pos.z - root_lo_.z) * inv);
}

std::span<const int> Octree::leaf_source_indices(int i, int j, int k) const {
  const auto b = static_cast<std::size_t>(box_index(levels_, i, j, k));
  return {leaf_sources_.data() + leaf_offset_[b],
          static_cast<std::size_t>(leaf_offset_[b + 1] - leaf_offset_[b])};
}

bool Octree::box_occupied(int level, int i, int j, int k) const {
  return occupied_[static_cast<std::size_t>(level)][static_cast<std::size_t>(
             box_index(level, i, j, k))] != 0;
}

std::vector<std::array<int, 3>> Octree::near_list(int level, int i, int j,
                                                  int k) const {
  const int n = boxes_per_axis(level);
  std::vector<std::array<int, 3>> out;
  for (int a = std::max(0, i - 1); a <= std::min(n - 1, i + 1); ++a)
    for (int b = std::max(0, j - 1); b <= std::min(n - 1, j + 1); ++b)
      for (int c = std::max(0, k - 1); c <= std::min(n - 1, k + 1); ++c)
        out.push_back({a, b, c});
  return out;
}

std::vector<std::array<int, 3>> Octree::interaction_list(int level, int i,
                                                         int j, int k) const {
  std::vector<std::array<int, 3>> out;
  if (level < 2) return out;
  const int n = boxes_per_axis(level);
  const int pi = i / 2, pj = j / 2, pk = k / 2;
  const int np = boxes_per_axis(level - 1);
  for (int a = std::max(0, pi - 1); a <= std::min(np - 1, pi + 1); ++a)
    for (int b = std::max(0, pj - 1); b <= std::min(np - 1, pj + 1); ++b)
      for (int c = std::max(0, pk - 1); c <= std::min(np - 1, pk + 1); ++c)
        for (int ca = 0; ca < 2; ++ca)
          for (int cb = 0; cb < 2; ++cb)
            for (int cc = 0; cc < 2; ++cc) {
              const int bi = 2 * a + ca, bj = 2 * b + cb, bk = 2 * c + cc;
              if (bi >= n || bj >= n || bk >= n) continue;
              if (std::abs(bi - i) <= 1 && std::abs(bj - j) <= 1 &&
                  std::abs(bk - k) <= 1)
                continue;  // own neighbor -> near field
              out.push_back({bi, bj, bk});
            }
  return out;
}

void Octree::upward_sweep(int p) {
  if (p < 1) throw std::invalid_argument("upward_sweep: p must be >= 1");
  p_ = p;
  const int deg = p - 1;
  has_les_ = false;
  me_.assign(static_cast<std::size_t>(levels_) + 1, {});
  // P2M over occupied leaves.
  {
    const int n = boxes_per_axis(levels_);
    auto& mel = me_[static_cast<std::size_t>(levels_)];
    mel.assign(static_cast<std::size_t>(n) * n * n, sh::Coeffs{});
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          const auto list = leaf_source_indices(i, j, k);
          if (list.empty()) continue;
          sh::Coeffs me(sh::size(deg), 0.0);
          const Vec3 c = box_center(levels_, i, j, k);
          for (int s : list)
            sh::p2m_accumulate(deg, sources_[static_cast<std::size_t>(s)].pos - c,
                               sources_[static_cast<std::size_t>(s)].mass, me);
          mel[static_cast<std::size_t>(box_index(levels_, i, j, k))] = std::move(me);
        }
  }
  // M2M up to level 2 (coarser MEs are never consumed).
  for (int l = levels_ - 1; l >= 2; --l) {
    const int n = boxes_per_axis(l);
    auto& mel = me_[static_cast<std::size_t>(l)];
    mel.assign(static_cast<std::size_t>(n) * n * n, sh::Coeffs{});
    const auto& child = me_[static_cast<std::size_t>(l + 1)];
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          if (!box_occupied(l, i, j, k)) continue;
          sh::Coeffs me(sh::size(deg), 0.0);
          const Vec3 c = box_center(l, i, j, k);
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              for (int cc = 0; cc < 2; ++cc) {
                const auto& cme = child[static_cast<std::size_t>(
                    box_index(l + 1, 2 * i + a, 2 * j + b, 2 * k + cc))];
                if (cme.empty()) continue;
                sh::m2m_accumulate(
                    deg, cme, box_center(l + 1, 2 * i + a, 2 * j + b, 2 * k + cc) - c,
                    me);
              }
          mel[static_cast<std::size_t>(box_index(l, i, j, k))] = std::move(me);
        }
  }
}

void Octree::downward_sweep() {
  if (p_ < 1)
    throw std::logic_error("downward_sweep: upward sweep must run first");
  const int deg = p_ - 1;
  le_.assign(static_cast<std::size_t>(levels_) + 1, {});
  for (int l = 2; l <= levels_; ++l) {
    const int n = boxes_per_axis(l);
    auto& lel = le_[static_cast<std::size_t>(l)];
    lel.assign(static_cast<std::size_t>(n) * n * n, sh::Coeffs{});
    const auto& mel = me_[static_cast<std::size_t>(l)];
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          sh::Coeffs le(sh::size(deg), 0.0);
          const Vec3 c = box_center(l, i, j, k);
          // Inherit the parent's far field.
          if (l > 2) {
            const auto& ple = le_[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(
                box_index(l - 1, i / 2, j / 2, k / 2))];
            if (!ple.empty())
              sh::l2l_accumulate(deg, ple, c - box_center(l - 1, i / 2, j / 2, k / 2),
                                 le);
          }
          // Interaction-list MEs of occupied boxes.
          for (const auto& s : interaction_list(l, i, j, k)) {
            const auto& me = mel[static_cast<std::size_t>(box_index(l, s[0], s[1], s[2]))];
            if (me.empty()) continue;
            sh::m2l_accumulate(deg, me, box_center(l, s[0], s[1], s[2]) - c, le);
          }
          lel[static_cast<std::size_t>(box_index(l, i, j, k))] = std::move(le);
        }
  }
  has_les_ = true;
}

GravityResult Octree::evaluate(const EvaluationSet& evals, double G) const {
  if (!has_les_)
    throw std::logic_error("evaluate: sweeps must run before evaluation");
  GravityResult out;
  out.values.assign(evals.points.size(), Vec3{});
  const double tol = 1e-9 * root_width_;
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(evals.points.size()); ++t) {
    const Vec3 pt = evals.points[static_cast<std::size_t>(t)];
    const Vec3 rel = pt - root_lo_;
    Vec3 g{};
    if (rel.x < -tol || rel.y < -tol || rel.z < -tol ||
        rel.x > root_width_ + tol || rel.y > root_width_ + tol ||
        rel.z > root_width_ + tol) {
      // Outside the tree; the near/far split does not apply.
      for (const PointSource& s : sources_) {
        const Vec3 d = pt - s.pos;
        const double r2 = d.norm2();
        if (r2 == 0.0) continue;
        g = g + d * (s.mass / (r2 * std::sqrt(r2)));
      }
      out.values[static_cast<std::size_t>(t)] = g * G;
      continue;
    }
    int i, j, k;
    locate_leaf(pt, i, j, k);
    const int n = boxes_per_axis(levels_);
    for (int a = std::max(0, i - 1); a <= std::min(n - 1, i + 1); ++a)
      for (int b = std::max(0, j - 1); b <= std::min(n - 1, j + 1); ++b)
        for (int c = std::max(0, k - 1); c <= std::min(n - 1, k + 1); ++c)
          for (int s : leaf_source_indices(a, b, c)) {
            const PointSource& src = sources_[static_cast<std::size_t>(s)];
            const Vec3 d = pt - src.pos;
            const double r2 = d.norm2();
            if (r2 == 0.0) continue;
            g = g + d * (src.mass / (r2 * std::sqrt(r2)));
          }
    const auto& le = le_[static_cast<std::size_t>(levels_)][static_cast<std::size_t>(
        box_index(levels_, i, j, k))];
    if (!le.empty())
      g = g + sh::evaluate_local_gradient(p_ - 1, le,
                                          pt - box_center(levels_, i, j, k));
    out.values[static_cast<std::size_t>(t)] = g * G;
  }
  return out;
}

const sh::Coeffs& Octree::local_expansion(int level, int i, int j, int k) const {
  return le_[static_cast<std::size_t>(level)][static_cast<std::size_t>(
      box_index(level, i, j, k))];
}

const sh::Coeffs& Octree::multipole_expansion(int level, int i, int j, int k) const {
  return me_[static_cast<std::size_t>(level)][static_cast<std::size_t>(
      box_index(level, i, j, k))];
}

Octree build_tree(const DensityScene& scene, int levels) {
  const auto& g = scene.grid;
  const Vec3 l = g.lengths();
  const double width = std::max({l.x, l.y, l.z});
  return Octree(sources_from_scene(scene), g.origin(), width, levels);
}

void upward_sweep(Octree& tree, int p) { tree.upward_sweep(p); }

void downward_sweep(Octree& tree, int p) {
  if (tree.expansion_order() != p)
    throw std::invalid_argument(
        "downward_sweep: p does not match the upward sweep");
  tree.downward_sweep();
}

GravityResult evaluate(const Octree& tree, const EvaluationSet& evals, int p,
                       double G) {
  if (tree.expansion_order() != p)
    throw std::invalid_argument("evaluate: p does not match the sweeps");
  return tree.evaluate(evals, G);
}

int default_tree_levels(int mbar) {
  int levels = 2;
  while ((mbar >> (levels + 1)) >= 3 && (1 << (levels + 1)) <= mbar) ++levels;
  return levels;
}

}  // namespace gravity::fmm
