#include "gravity/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gravity/fem.hpp"
#include "gravity/fmm.hpp"
#include "gravity/scene_io.hpp"
#include "gravity/summation.hpp"

namespace gravity::harness {

namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;
using nlohmann::json;

namespace {

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

double peak_memory_mb() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      double kb = 0.0;
      std::sscanf(line.c_str(), "VmHWM: %lf", &kb);
      return kb / 1024.0;
    }
  }
  return 0.0;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::sum_an: return "sum-an";
    case Method::sum_g1: return "sum-g1";
    case Method::sum_g1z: return "sum-g1z";
    case Method::sum_g2: return "sum-g2";
    case Method::fem_d: return "fem-d";
    case Method::fem_gt: return "fem-gt";
    case Method::fmm: return "fmm";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "sum-an") return Method::sum_an;
  if (s == "sum-g1") return Method::sum_g1;
  if (s == "sum-g1z") return Method::sum_g1z;
  if (s == "sum-g2") return Method::sum_g2;
  if (s == "fem-d") return Method::fem_d;
  if (s == "fem-gt") return Method::fem_gt;
  if (s == "fmm") return Method::fmm;
  throw std::invalid_argument("unknown method '" + s + "'");
}

bool is_fem(Method m) { return m == Method::fem_d || m == Method::fem_gt; }

bool is_summation(Method m) {
  return m == Method::sum_an || m == Method::sum_g1 || m == Method::sum_g1z ||
         m == Method::sum_g2;
}

json RunConfig::to_json() const {
  json j;
  j["method"] = harness::to_string(method);
  j["mbar"] = mbar;
  j["domain_length"] = domain_length;
  j["fem_levels"] = fem_levels;
  j["rtol"] = rtol;
  j["fmm_levels"] = fmm_levels;
  j["fmm_p"] = fmm_p;
  j["stations"] = {stations_nx, stations_ny};
  if (elevation) j["elevation"] = *elevation;
  j["stations_include_edges"] = stations_include_edges;
  if (!scene_path.empty()) j["scene"] = scene_path;
  j["out_dir"] = out_dir;
  j["threads"] = threads;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  c.method = method_from_string(j.at("method").get<std::string>());
  c.mbar = j.value("mbar", 12);
  c.domain_length = j.value("domain_length", 600.0);
  c.fem_levels = j.value("fem_levels", 0);
  c.rtol = j.value("rtol", 1e-10);
  c.fmm_levels = j.value("fmm_levels", 0);
  c.fmm_p = j.value("fmm_p", 8);
  if (j.contains("stations")) {
    c.stations_nx = j["stations"][0].get<int>();
    c.stations_ny = j["stations"][1].get<int>();
  }
  if (j.contains("elevation")) c.elevation = j["elevation"].get<double>();
  c.stations_include_edges = j.value("stations_include_edges", true);
  c.scene_path = j.value("scene", std::string{});
  c.out_dir = j.value("out_dir", std::string{"."});
  c.threads = j.value("threads", 1);
  return c;
}

void RunConfig::validate() const {
  if (scene_path.empty() && (mbar < 6 || mbar % 6 != 0))
    throw std::invalid_argument("synthetic scene requires --cells divisible by 6");
  if (stations_nx < 1 || stations_ny < 1)
    throw std::invalid_argument("station counts must be >= 1");
  if (fmm_p < 0) throw std::invalid_argument("--order-p must be >= 0");
  if (!(rtol > 0.0)) throw std::invalid_argument("--rtol must be positive");
  if (threads < 1) throw std::invalid_argument("--threads must be >= 1");
}

void apply_thread_count(int threads) {
#ifdef _OPENMP
  omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

namespace {

struct Model {
  DensityScene scene;
  bool synthetic = false;
  AnomalyBounds anomaly{};  // valid when synthetic
};

Model make_model(const RunConfig& c) {
  Model m;
  if (!c.scene_path.empty()) {
    m.scene = io::load_scene(c.scene_path);
    m.synthetic = false;
    return m;
  }
  m.scene = c.domain_length == 600.0
                ? build_synthetic_scene(c.mbar)
                : build_anomaly_scene(c.domain_length, c.mbar);
  m.anomaly = anomaly_for_domain(c.domain_length, c.mbar);
  m.synthetic = true;
  return m;
}

int fem_levels_for(const RunConfig& c, int mbar) {
  return c.fem_levels > 0 ? c.fem_levels : fem::default_levels(mbar);
}

int fmm_levels_for(const RunConfig& c, int mbar) {
  return c.fmm_levels > 0 ? c.fmm_levels : fmm::default_tree_levels(mbar);
}

fem::BoundaryCondition fem_bc(Method m, const DensityScene& scene) {
  if (m == Method::fem_d) return fem::BoundaryCondition::dirichlet0();
  return fem::BoundaryCondition::robin_far_field(scene.mass_centroid());
}

/// Piecewise-bilinear gz of a FEM solution evaluated at an arbitrary point
/// (clamped into the grid; points on upper faces use the last cell).
double fem_gz_at(const StructuredGrid& g, const metrics::BilinearGzPerCell& view,
                 const Vec3& p) {
  const auto& mc = g.cells();
  const Vec3 o = g.origin();
  const Vec3 h = g.spacing();
  auto locate = [](double t, int n) {
    int i = static_cast<int>(std::floor(t));
    return std::clamp(i, 0, n - 1);
  };
  const int i = locate((p.x - o.x) / h.x, mc[0]);
  const int j = locate((p.y - o.y) / h.y, mc[1]);
  const int k = locate((p.z - o.z) / h.z, mc[2]);
  const double u = std::clamp((p.x - o.x) / h.x - i, 0.0, 1.0);
  const double v = std::clamp((p.y - o.y) / h.y - j, 0.0, 1.0);
  const auto& a = view.coeff[static_cast<std::size_t>(g.cell_index(i, j, k))];
  return a[0] + a[1] * u + a[2] * v + a[3] * u * v;
}

}  // namespace

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.11e", v);
  return buf;
}

ForwardOutput run_forward(const RunConfig& config) {
  config.validate();
  apply_thread_count(config.threads);
  fs::create_directories(config.out_dir);

  const auto t_setup = clock_type::now();
  Model model = make_model(config);
  const StructuredGrid& grid = model.scene.grid;
  const double top = grid.origin().z + grid.lengths().z;
  const double elev = config.elevation.value_or(top);

  ForwardOutput out;
  out.stations = surface_observation_grid(grid, config.stations_nx,
                                          config.stations_ny, elev,
                                          config.stations_include_edges);
  json stats;
  const double setup_s = seconds_since(t_setup);

  double solve_s = 0.0;
  const auto t_run = clock_type::now();
  switch (config.method) {
    case Method::sum_an: {
      summation::PrismDiagnostics diag;
      out.result = summation::sum_analytic(model.scene, out.stations, kDefaultG, &diag);
      stats["nudged_points"] = diag.nudged_points;
      break;
    }
    case Method::sum_g1:
    case Method::sum_g1z:
    case Method::sum_g2: {
      const int order = config.method == Method::sum_g2 ? 2 : 1;
      const bool z_only = config.method == Method::sum_g1z;
      out.result = summation::sum_quadrature(
          model.scene, out.stations, summation::QuadratureRule::gauss(order), z_only);
      break;
    }
    case Method::fem_d:
    case Method::fem_gt: {
      const int levels = fem_levels_for(config, grid.cells()[0]);
      fem::SolveOptions opts;
      opts.rtol = config.rtol;
      auto [potential, solve_stats] = fem::solve_potential(
          model.scene, fem_bc(config.method, model.scene), levels, opts);
      solve_s = solve_stats.solve_seconds;
      const auto view = fem::gravity_gz_bilinear(potential);
      out.result.values.assign(out.stations.points.size(), Vec3{});
      out.result.has_xy = false;
      for (std::size_t n = 0; n < out.stations.points.size(); ++n)
        out.result.values[n].z = fem_gz_at(grid, view, out.stations.points[n]);
      stats["iterations"] = solve_stats.iterations;
      stats["converged"] = solve_stats.converged;
      stats["residual_history"] = solve_stats.residual_history;
      stats["levels"] = levels;
      break;
    }
    case Method::fmm: {
      const int levels = fmm_levels_for(config, grid.cells()[0]);
      fmm::Octree tree = fmm::build_tree(model.scene, levels);
      const auto t_sweeps = clock_type::now();
      tree.upward_sweep(config.fmm_p);
      tree.downward_sweep();
      solve_s = seconds_since(t_sweeps);
      out.result = tree.evaluate(out.stations);
      stats["tree_levels"] = levels;
      stats["order_p"] = config.fmm_p;
      stats["sources"] = tree.sources().size();
      break;
    }
  }
  const double run_s = seconds_since(t_run);

  // CSV: x,y,gz in mGal, station order.
  out.csv_path = (fs::path(config.out_dir) / "gz.csv").string();
  {
    std::ofstream csv(out.csv_path, std::ios::binary);
    csv << "x,y,gz_mgal\n";
    for (std::size_t n = 0; n < out.stations.points.size(); ++n) {
      const Vec3& p = out.stations.points[n];
      csv << format_value(p.x) << ',' << format_value(p.y) << ','
          << format_value(si_to_mgal(out.result.values[n].z)) << '\n';
    }
  }

  out.manifest["config"] = config.to_json();
  out.manifest["timings"] = {{"setup_s", setup_s},
                             {"run_s", run_s},
                             {"solve_s", solve_s}};
  out.manifest["stats"] = stats;
  out.manifest["stations"] = out.stations.points.size();
  out.manifest["outputs"] = {{"csv", "gz.csv"}};
  out.manifest["peak_memory_mb"] = peak_memory_mb();
  out.manifest_path = (fs::path(config.out_dir) / "manifest.json").string();
  {
    std::ofstream mf(out.manifest_path);
    mf << out.manifest.dump(2) << '\n';
  }
  return out;
}

namespace {

/// gz field at all cell centroids as the view the error norms want, plus the
/// sampling rule the method family is measured with.
struct FieldForNorms {
  metrics::DiscreteFieldView view;
  metrics::SamplingRule rule;
  int m_used = 0;
  int iterations = 0;
};

FieldForNorms field_for_norms(Method method, const RunConfig& config,
                              const DensityScene& scene) {
  FieldForNorms out;
  const StructuredGrid& grid = scene.grid;
  const int mbar = grid.cells()[0];
  if (is_summation(method)) {
    const int order = method == Method::sum_g2 ? 2 : 1;
    EvaluationSet centers = cell_center_observations(grid);
    GravityResult r =
        method == Method::sum_an
            ? summation::sum_analytic(scene, centers)
            : summation::sum_quadrature(scene, centers,
                                        summation::QuadratureRule::gauss(order),
                                        /*z_only=*/true);
    metrics::PiecewiseConstantGz pc;
    pc.gz.resize(r.values.size());
    for (std::size_t i = 0; i < r.values.size(); ++i) pc.gz[i] = r.values[i].z;
    out.view = std::move(pc);
    out.rule = metrics::SamplingRule::centroid();
    return out;
  }
  if (method == Method::fmm) {
    const int levels = fmm_levels_for(config, mbar);
    fmm::Octree tree = fmm::build_tree(scene, levels);
    tree.upward_sweep(config.fmm_p);
    tree.downward_sweep();
    GravityResult r = tree.evaluate(cell_center_observations(grid));
    metrics::PiecewiseConstantGz pc;
    pc.gz.resize(r.values.size());
    for (std::size_t i = 0; i < r.values.size(); ++i) pc.gz[i] = r.values[i].z;
    out.view = std::move(pc);
    out.rule = metrics::SamplingRule::centroid();
    return out;
  }
  // FEM: bilinear view measured with the subdivided 4-point rule.
  const int levels = fem_levels_for(config, mbar);
  fem::SolveOptions opts;
  opts.rtol = config.rtol;
  auto [potential, stats] =
      fem::solve_potential(scene, fem_bc(method, scene), levels, opts);
  out.view = fem::gravity_gz_bilinear(potential);
  out.m_used = metrics::choose_m_for_spacing(grid.spacing().x);
  out.rule = metrics::SamplingRule::subdivided_gauss4(out.m_used);
  out.iterations = stats.iterations;
  return out;
}

}  // namespace

ConvergenceReport run_convergence(const RunConfig& config,
                                  const std::vector<int>& grids) {
  if (grids.size() < 3)
    throw std::invalid_argument("run_convergence: need at least 3 grids");
  if (!config.scene_path.empty())
    throw std::invalid_argument(
        "run_convergence: only the synthetic scene has an analytic reference");
  apply_thread_count(config.threads);
  fs::create_directories(config.out_dir);

  ConvergenceReport report;
  report.method = config.method;

  std::vector<double> hs, e1s, e2s, eis;
  for (int mbar : grids) {
    RunConfig c = config;
    c.mbar = mbar;
    c.validate();
    Model model = make_model(c);
    const summation::Prism oracle = summation::prism_from_bounds(model.anomaly);
    const auto analytic = [&](const Vec3& p) {
      return summation::prism_gz(oracle, p);
    };
    FieldForNorms f = field_for_norms(config.method, c, model.scene);
    metrics::NormReport norms =
        metrics::error_norms(f.view, model.scene.grid, analytic, f.rule);
    ConvergenceRow row{mbar, model.scene.grid.spacing().x, f.m_used, norms};
    report.rows.push_back(row);
    hs.push_back(row.h);
    e1s.push_back(norms.e1);
    e2s.push_back(norms.e2);
    eis.push_back(norms.einf);
  }
  report.rate_e1 = metrics::fit_convergence_rate(hs, e1s);
  report.rate_e2 = metrics::fit_convergence_rate(hs, e2s);
  report.rate_einf = metrics::fit_convergence_rate(hs, eis);

  const std::string tag = to_string(config.method);
  report.csv_path =
      (fs::path(config.out_dir) / ("convergence_" + tag + ".csv")).string();
  {
    std::ofstream csv(report.csv_path, std::ios::binary);
    csv << "method,mbar,h,rule,m,e1,e2,einf\n";
    for (const auto& r : report.rows) {
      csv << tag << ',' << r.mbar << ',' << format_value(r.h) << ','
          << (r.norms.rule.gauss_points == 1 ? "centroid" : "gauss4") << ','
          << r.norms.rule.subdivisions << ',' << format_value(r.norms.e1) << ','
          << format_value(r.norms.e2) << ',' << format_value(r.norms.einf)
          << '\n';
    }
    csv << "# rates," << format_value(report.rate_e1.slope) << ','
        << format_value(report.rate_e2.slope) << ','
        << format_value(report.rate_einf.slope) << '\n';
  }

  report.json_path =
      (fs::path(config.out_dir) / ("rates_" + tag + ".json")).string();
  {
    json j;
    j["method"] = tag;
    j["grids"] = grids;
    auto rate_json = [](const metrics::RateFit& f) {
      return json{{"slope", f.slope},
                  {"intercept", f.intercept},
                  {"rms_residual", f.rms_residual},
                  {"n_used", f.n_used},
                  {"n_excluded", f.n_excluded}};
    };
    j["rates"] = {{"e1", rate_json(report.rate_e1)},
                  {"e2", rate_json(report.rate_e2)},
                  {"einf", rate_json(report.rate_einf)}};
    json rows = json::array();
    for (const auto& r : report.rows)
      rows.push_back({{"mbar", r.mbar},
                      {"h", r.h},
                      {"m", r.norms.rule.subdivisions},
                      {"e1", r.norms.e1},
                      {"e2", r.norms.e2},
                      {"einf", r.norms.einf}});
    j["rows"] = std::move(rows);
    std::ofstream jf(report.json_path);
    jf << j.dump(2) << '\n';
  }
  return report;
}

std::vector<BenchRecord> run_bench(const std::vector<Method>& methods,
                                   const std::vector<int>& grids,
                                   const RunConfig& config) {
  apply_thread_count(config.threads);
  std::vector<BenchRecord> records;
  for (int mbar : grids) {
    RunConfig c = config;
    c.mbar = mbar;
    c.validate();
    Model model = make_model(c);
    const StructuredGrid& grid = model.scene.grid;
    const double top = grid.origin().z + grid.lengths().z;
    EvaluationSet stations = surface_observation_grid(
        grid, c.stations_nx, c.stations_ny, c.elevation.value_or(top),
        c.stations_include_edges);

    for (Method method : methods) {
      BenchRecord rec;
      rec.method = method;
      rec.mbar = mbar;
      const auto t0 = clock_type::now();
      if (is_summation(method)) {
        if (method == Method::sum_an) {
          summation::sum_analytic(model.scene, stations);
        } else {
          summation::sum_quadrature(
              model.scene, stations,
              summation::QuadratureRule::gauss(method == Method::sum_g2 ? 2 : 1),
              method == Method::sum_g1z);
        }
        rec.wall_seconds = seconds_since(t0);
        rec.per_station_seconds =
            rec.wall_seconds / static_cast<double>(stations.points.size());
      } else if (is_fem(method)) {
        fem::SolveOptions opts;
        opts.rtol = c.rtol;
        auto [potential, stats] = fem::solve_potential(
            model.scene, fem_bc(method, model.scene), fem_levels_for(c, mbar), opts);
        rec.wall_seconds = seconds_since(t0);
        rec.solve_seconds = stats.solve_seconds;
        rec.iterations = stats.iterations;
      } else {
        fmm::Octree tree = fmm::build_tree(model.scene, fmm_levels_for(c, mbar));
        const auto t_sweeps = clock_type::now();
        tree.upward_sweep(c.fmm_p);
        tree.downward_sweep();
        rec.solve_seconds = seconds_since(t_sweeps);
        tree.evaluate(cell_center_observations(grid));
        rec.wall_seconds = seconds_since(t0);
      }
      rec.peak_memory_mb = peak_memory_mb();
      records.push_back(rec);
    }
  }
  return records;
}

std::vector<CrossoverRow> run_crossover(const std::vector<int>& grids,
                                        const RunConfig& config) {
  std::vector<CrossoverRow> rows;
  for (int mbar : grids) {
    std::vector<BenchRecord> recs =
        run_bench({Method::sum_g1z, Method::sum_an, Method::fem_gt, Method::fmm},
                  {mbar}, config);
    CrossoverRow row;
    row.mbar = mbar;
    double t_femgt = 0.0, t_fmm = 0.0;
    for (const auto& r : recs) {
      switch (r.method) {
        case Method::sum_g1z: row.t_sum_g1z = r.per_station_seconds; break;
        case Method::sum_an: row.t_sum_an = r.per_station_seconds; break;
        case Method::fem_gt: t_femgt = r.solve_seconds; break;
        case Method::fmm: t_fmm = r.solve_seconds; break;
        default: break;
      }
    }
    row.femgt_vs_sumg1z = t_femgt / row.t_sum_g1z;
    row.femgt_vs_suman = t_femgt / row.t_sum_an;
    row.fmm_vs_sumg1z = t_fmm / row.t_sum_g1z;
    row.fmm_vs_suman = t_fmm / row.t_sum_an;
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(const std::vector<BenchRecord>& records,
                     const std::string& path) {
  std::ofstream csv(path, std::ios::binary);
  csv << "method,mbar,wall_s,per_station_s,solve_s,iterations,peak_memory_mb\n";
  for (const auto& r : records)
    csv << to_string(r.method) << ',' << r.mbar << ','
        << format_value(r.wall_seconds) << ','
        << format_value(r.per_station_seconds) << ','
        << format_value(r.solve_seconds) << ',' << r.iterations << ','
        << format_value(r.peak_memory_mb) << '\n';
}

void write_crossover_csv(const std::vector<CrossoverRow>& rows,
                         const std::string& path) {
  std::ofstream csv(path, std::ios::binary);
  csv << "mbar,t_sumg1z_per_station,t_suman_per_station,femgt_vs_sumg1z,"
         "femgt_vs_suman,fmm_vs_sumg1z,fmm_vs_suman\n";
  for (const auto& r : rows)
    csv << r.mbar << ',' << format_value(r.t_sum_g1z) << ','
        << format_value(r.t_sum_an) << ',' << format_value(r.femgt_vs_sumg1z)
        << ',' << format_value(r.femgt_vs_suman) << ','
        << format_value(r.fmm_vs_sumg1z) << ',' << format_value(r.fmm_vs_suman)
        << '\n';
}

}  // namespace gravity::harness
