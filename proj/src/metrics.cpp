#include "gravity/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace gravity::metrics {

namespace {

struct Gauss1d {
  std::vector<double> x;  // on [-1, 1]
  std::vector<double> w;
};

Gauss1d gauss_legendre(int n) {
  Gauss1d g;
  switch (n) {
    case 1:
      g.x = {0.0};
      g.w = {2.0};
      break;
    case 4: {
      const double a = std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
      const double b = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
      const double wa = (18.0 + std::sqrt(30.0)) / 36.0;
      const double wb = (18.0 - std::sqrt(30.0)) / 36.0;
      g.x = {-b, -a, a, b};
      g.w = {wb, wa, wa, wb};
      break;
    }
    default:
      throw std::invalid_argument("gauss_legendre: unsupported point count");
  }
  return g;
}

inline double eval_view(const DiscreteFieldView& view, std::int64_t cell,
                        double u, double v) {
  if (const auto* pc = std::get_if<PiecewiseConstantGz>(&view))
    return pc->gz[static_cast<std::size_t>(cell)];
  const auto& a = std::get<BilinearGzPerCell>(view).coeff[static_cast<std::size_t>(cell)];
  return a[0] + a[1] * u + a[2] * v + a[3] * u * v;
}

}  // namespace

SamplingRule SamplingRule::subdivided_gauss4(int m) {
  if (m < 1) throw std::invalid_argument("SamplingRule: m must be >= 1");
  return SamplingRule{m, 4};
}

NormReport error_norms(const DiscreteFieldView& field, const StructuredGrid& grid,
                       const ReferenceField& analytic, const SamplingRule& rule) {
  const DiscreteFieldView* views[1] = {&field};
  return error_norms_multi(views, grid, analytic, rule)[0];
}

std::vector<NormReport> error_norms_multi(
    std::span<const DiscreteFieldView* const> fields, const StructuredGrid& grid,
    const ReferenceField& analytic, const SamplingRule& rule) {
  const int m = rule.subdivisions;
  const Gauss1d g1 = gauss_legendre(rule.gauss_points);
  const int nq = m * rule.gauss_points;  // points per cell per axis
  const Vec3 h = grid.spacing();

  // Per-axis offsets within a cell and 1D weights (already scaled by the
  // sub-box half-width).
  std::vector<double> off_x(nq), off_y(nq), off_z(nq), w_x(nq), w_y(nq), w_z(nq);
  for (int s = 0; s < m; ++s)
    for (int q = 0; q < rule.gauss_points; ++q) {
      const int idx = s * rule.gauss_points + q;
      const double frac = (s + 0.5 + 0.5 * g1.x[q]) / m;  // in (0,1)
      off_x[idx] = frac * h.x;
      off_y[idx] = frac * h.y;
      off_z[idx] = frac * h.z;
      w_x[idx] = g1.w[q] * 0.5 * h.x / m;
      w_y[idx] = g1.w[q] * 0.5 * h.y / m;
      w_z[idx] = g1.w[q] * 0.5 * h.z / m;
    }

  const auto& mc = grid.cells();
  const std::int64_t ncells = grid.cell_count();
  const std::size_t nf = fields.size();

  // Per-cell partials, reduced in cell order afterwards so the result does
  // not depend on the thread count.
  std::vector<std::vector<double>> p1(nf, std::vector<double>(static_cast<std::size_t>(ncells)));
  std::vector<std::vector<double>> p2(nf, std::vector<double>(static_cast<std::size_t>(ncells)));
  std::vector<std::vector<double>> pinf(nf, std::vector<double>(static_cast<std::size_t>(ncells)));

  constexpr std::size_t kMaxViews = 8;
  if (nf > kMaxViews)
    throw std::invalid_argument("error_norms_multi: too many views");

#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < ncells; ++c) {
    const auto [i, j, k] = grid.cell_coords(c);
    const Vec3 lo = grid.cell_min_corner(i, j, k);
    std::array<double, kMaxViews> acc1{}, acc2{}, accinf{};
    for (int a = 0; a < nq; ++a) {
      const double x = lo.x + off_x[a];
      const double u = off_x[a] / h.x;
      for (int b = 0; b < nq; ++b) {
        const double y = lo.y + off_y[b];
        const double v = off_y[b] / h.y;
        const double wab = w_x[a] * w_y[b];
        for (int d = 0; d < nq; ++d) {
          const double ga = analytic({x, y, lo.z + off_z[d]});
          const double w = wab * w_z[d];
          for (std::size_t f = 0; f < nf; ++f) {
            const double diff = std::abs(ga - eval_view(*fields[f], c, u, v));
            acc1[f] += w * diff;
            acc2[f] += w * diff * diff;
            if (diff > accinf[f]) accinf[f] = diff;
          }
        }
      }
    }
    for (std::size_t f = 0; f < nf; ++f) {
      p1[f][static_cast<std::size_t>(c)] = acc1[f];
      p2[f][static_cast<std::size_t>(c)] = acc2[f];
      pinf[f][static_cast<std::size_t>(c)] = accinf[f];
    }
  }

  std::vector<NormReport> out(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    double e1 = 0.0, e2 = 0.0, ei = 0.0;
    for (std::int64_t c = 0; c < ncells; ++c) {
      e1 += p1[f][static_cast<std::size_t>(c)];
      e2 += p2[f][static_cast<std::size_t>(c)];
      if (pinf[f][static_cast<std::size_t>(c)] > ei) ei = pinf[f][static_cast<std::size_t>(c)];
    }
    out[f] = NormReport{e1, std::sqrt(e2), ei, rule, mc[0]};
  }
  return out;
}

int choose_m_for_spacing(double h) {
  if (!(h > 0.0)) throw std::invalid_argument("choose_m_for_spacing: h must be positive");
  const long m = std::lround(h / 6.25);
  return m < 1 ? 1 : static_cast<int>(m);
}

int choose_m(int mbar) {
  if (mbar < 1) throw std::invalid_argument("choose_m: mbar must be >= 1");
  return choose_m_for_spacing(600.0 / mbar);
}

RateFit fit_convergence_rate(std::span<const double> spacings,
                             std::span<const double> errors) {
  if (spacings.size() != errors.size())
    throw std::invalid_argument("fit_convergence_rate: size mismatch");
  RateFit fit;
  std::vector<double> lh, le;
  for (std::size_t i = 0; i < spacings.size(); ++i) {
    if (!(errors[i] > 0.0) || !std::isfinite(errors[i])) {
      ++fit.n_excluded;
      std::fprintf(stderr,
                   "fit_convergence_rate: dropping nonpositive error %.3e at h=%.6g\n",
                   errors[i], spacings[i]);
      continue;
    }
    lh.push_back(std::log(spacings[i]));
    le.push_back(std::log(errors[i]));
  }
  if (lh.size() < 3)
    throw std::invalid_argument(
        "fit_convergence_rate: need at least 3 positive (h, error) pairs");
  fit.n_used = static_cast<int>(lh.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lh.size(); ++i) {
    sx += lh[i];
    sy += le[i];
    sxx += lh[i] * lh[i];
    sxy += lh[i] * le[i];
  }
  const double n = static_cast<double>(lh.size());
  const double denom = n * sxx - sx * sx;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < lh.size(); ++i) {
    const double r = le[i] - (fit.intercept + fit.slope * lh[i]);
    ss += r * r;
  }
  fit.rms_residual = std::sqrt(ss / n);
  return fit;
}

}  // namespace gravity::metrics
