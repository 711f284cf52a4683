#pragma once

#include <array>
#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "gravity/core.hpp"

/// E1 / E2 / Einf error norms of a discrete gz field against an analytic
/// reference, and log-log convergence-rate fits.
///
/// Quadrature runs parallel over cells with per-cell partials reduced in
/// cell-index order, so the sums are bit-identical for any thread count.
namespace gravity::metrics {

/// Where the field difference is sampled within each cell: an m x m x m
/// sub-box split with a tensor Gauss rule per sub-box. Two rules are used in
/// practice: subdivided_gauss4 (the high-order rule the FEM errors and the
/// reference-field norms are computed with) and centroid (one point per cell,
/// the rule the summation/FMM errors are defined with).
struct SamplingRule {
  int subdivisions = 1;    // m
  int gauss_points = 1;    // per axis per sub-box (1 or 4)

  static SamplingRule subdivided_gauss4(int m);
  static SamplingRule centroid() { return SamplingRule{1, 1}; }

  int points_per_cell_axis() const { return subdivisions * gauss_points; }
};

/// One gz value per cell, constant over the cell.
struct PiecewiseConstantGz {
  std::vector<double> gz;
};

/// Per-cell gz(u,v) = a[0] + a[1]*u + a[2]*v + a[3]*u*v with (u,v) the
/// x/y cell-local coordinates in [0,1]^2 (constant in z, as the z-derivative
/// of a trilinear potential is).
struct BilinearGzPerCell {
  std::vector<std::array<double, 4>> coeff;
};

using DiscreteFieldView = std::variant<PiecewiseConstantGz, BilinearGzPerCell>;

struct NormReport {
  double e1 = 0.0;
  double e2 = 0.0;
  double einf = 0.0;
  SamplingRule rule;
  int mbar = 0;  // cells per axis of the grid the norms were taken on
};

/// Reference gz as a function of position (typically the closed-form prism
/// field; a zero view against it yields the norms of the reference itself).
using ReferenceField = std::function<double(const Vec3&)>;

NormReport error_norms(const DiscreteFieldView& field, const StructuredGrid& grid,
                       const ReferenceField& analytic, const SamplingRule& rule);

/// Same quadrature pass shared across several views (the analytic field is
/// by far the dominant cost, so comparing fem-d and fem-gt in one sweep
/// halves the bill).
std::vector<NormReport> error_norms_multi(
    std::span<const DiscreteFieldView* const> fields, const StructuredGrid& grid,
    const ReferenceField& analytic, const SamplingRule& rule);

/// Subdivision count keeping the sub-box size at or below 6.25 m:
/// m = 8, 4, 2, 1 for h = 50, 25, 12.5, 6.25 and 1 for finer grids.
int choose_m_for_spacing(double h);
/// choose_m keyed by cells-per-axis of the 600 m domain (12 -> 8, ..., 96 -> 1).
int choose_m(int mbar);

struct RateFit {
  double slope = 0.0;       // of log(error) vs log(h); positive = convergence
  double intercept = 0.0;
  double rms_residual = 0.0;
  int n_used = 0;
  int n_excluded = 0;  // nonpositive/non-finite errors dropped with a warning
};

RateFit fit_convergence_rate(std::span<const double> spacings,
                             std::span<const double> errors);

}  // namespace gravity::metrics
