#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gravity/core.hpp"
#include "gravity/metrics.hpp"

/// Experiment front end shared by the CLI and the test suites: method
/// dispatch, the convergence / bench / crossover recipes, and CSV/JSON report
/// emission.
namespace gravity::harness {

enum class Method { sum_an, sum_g1, sum_g1z, sum_g2, fem_d, fem_gt, fmm };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
bool is_fem(Method m);
bool is_summation(Method m);

struct RunConfig {
  Method method = Method::sum_an;
  int mbar = 12;
  double domain_length = 600.0;  // synthetic scene domain edge (m)
  int fem_levels = 0;            // 0 = deepest hierarchy with a >= 6^3 coarse grid
  double rtol = 1e-10;
  int fmm_levels = 0;            // 0 = paper schedule (~3 cells per leaf axis)
  int fmm_p = 8;
  int stations_nx = 150;
  int stations_ny = 150;
  std::optional<double> elevation;  // default: top of the domain
  bool stations_include_edges = true;
  std::string scene_path;  // optional user scene JSON (overrides mbar)
  std::string out_dir = ".";
  int threads = 1;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  void validate() const;
};

/// Applies config.threads to the kernel thread pool (no-op without OpenMP).
void apply_thread_count(int threads);

struct ForwardOutput {
  GravityResult result;
  EvaluationSet stations;
  nlohmann::json manifest;
  std::string csv_path;
  std::string manifest_path;
};

/// Runs one forward model and writes <out>/gz.csv (x,y,gz_mgal) plus
/// <out>/manifest.json. Identical configs produce bit-identical CSV.
ForwardOutput run_forward(const RunConfig& config);

struct ConvergenceRow {
  int mbar = 0;
  double h = 0.0;
  int m = 0;  // norm-quadrature subdivisions (0 for the centroid rule)
  metrics::NormReport norms;
};

struct ConvergenceReport {
  Method method;
  std::vector<ConvergenceRow> rows;
  metrics::RateFit rate_e1, rate_e2, rate_einf;
  std::string csv_path;
  std::string json_path;
};

/// Convergence experiment over the given grid sequence (>= 3 grids). Norms
/// follow the method family: centroid sampling for summation/FMM fields,
/// the subdivided 4-point rule for FEM.
ConvergenceReport run_convergence(const RunConfig& config,
                                  const std::vector<int>& grids);

struct BenchRecord {
  Method method;
  int mbar = 0;
  double wall_seconds = 0.0;
  double per_station_seconds = 0.0;  // summation methods
  double solve_seconds = 0.0;        // fem: linear solve; fmm: sweeps
  int iterations = 0;                // fem
  double peak_memory_mb = 0.0;       // VmHWM, cumulative high-water mark
};

std::vector<BenchRecord> run_bench(const std::vector<Method>& methods,
                                   const std::vector<int>& grids,
                                   const RunConfig& config);

struct CrossoverRow {
  int mbar = 0;
  double t_sum_g1z = 0.0;  // per station
  double t_sum_an = 0.0;   // per station
  double femgt_vs_sumg1z = 0.0;
  double femgt_vs_suman = 0.0;
  double fmm_vs_sumg1z = 0.0;
  double fmm_vs_suman = 0.0;
};

/// Stations-to-crossover table: t_pde / t_summation_per_station.
std::vector<CrossoverRow> run_crossover(const std::vector<int>& grids,
                                        const RunConfig& config);

void write_bench_csv(const std::vector<BenchRecord>& records,
                     const std::string& path);
void write_crossover_csv(const std::vector<CrossoverRow>& rows,
                         const std::string& path);

/// Scientific notation with 12 significant digits, '.' decimal separator.
std::string format_value(double v);

}  // namespace gravity::harness
