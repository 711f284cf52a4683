#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gravity/fem.hpp"
#include "gravity/harness.hpp"

namespace {

using gravity::harness::Method;
using gravity::harness::RunConfig;

std::vector<int> parse_grid_list(const std::string& s) {
  std::vector<int> grids;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) grids.push_back(std::stoi(item));
  if (grids.empty()) throw std::invalid_argument("empty grid list");
  return grids;
}

std::vector<Method> parse_method_list(const std::string& s) {
  std::vector<Method> methods;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    methods.push_back(gravity::harness::method_from_string(item));
  return methods;
}

void parse_stations(const std::string& s, RunConfig& cfg) {
  const auto x = s.find('x');
  if (x == std::string::npos)
    throw std::invalid_argument("--stations expects NXxNY, e.g. 150x150");
  cfg.stations_nx = std::stoi(s.substr(0, x));
  cfg.stations_ny = std::stoi(s.substr(x + 1));
}

struct CommonFlags {
  std::string method;
  std::string config_path;
  std::string scene;
  std::string stations;
  std::string out_dir;
  int cells = 0;
  int levels = 0;
  int order_p = 0;
  int threads = 0;
  double rtol = 0.0;
  double elevation = 0.0;
  double domain_length = 0.0;
  bool inset_stations = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_method = true) {
  if (with_method)
    cmd->add_option("--method", f.method,
                    "sum-an | sum-g1 | sum-g1z | sum-g2 | fem-d | fem-gt | fmm");
  cmd->add_option("--config", f.config_path, "RunConfig JSON (flags override)");
  cmd->add_option("--cells", f.cells, "cells per axis of the synthetic scene");
  cmd->add_option("--levels", f.levels,
                  "multigrid levels (FEM) or octree depth (FMM)");
  cmd->add_option("--order-p", f.order_p, "FMM expansion truncation degree");
  cmd->add_option("--rtol", f.rtol, "FEM relative residual tolerance");
  cmd->add_option("--stations", f.stations, "observation grid, NXxNY");
  cmd->add_option("--elevation", f.elevation, "observation plane z (m)");
  cmd->add_flag("--inset-stations", f.inset_stations,
                "place stations half a step inside the domain edges");
  cmd->add_option("--threads", f.threads, "kernel threads (default 1)");
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_option("--scene", f.scene, "scene JSON instead of the synthetic one");
  cmd->add_option("--domain-length", f.domain_length,
                  "synthetic domain edge length (m, default 600)");
}

RunConfig build_config(const CLI::App* cmd, const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw std::invalid_argument("cannot open " + f.config_path);
    nlohmann::json j;
    in >> j;
    cfg = RunConfig::from_json(j);
  }
  if (cmd->get_option_no_throw("--method") && cmd->count("--method"))
    cfg.method = gravity::harness::method_from_string(f.method);
  if (cmd->count("--cells")) cfg.mbar = f.cells;
  if (cmd->count("--levels")) {
    if (cfg.method == Method::fmm)
      cfg.fmm_levels = f.levels;
    else
      cfg.fem_levels = f.levels;
  }
  if (cmd->count("--order-p")) cfg.fmm_p = f.order_p;
  if (cmd->count("--rtol")) cfg.rtol = f.rtol;
  if (cmd->count("--stations")) parse_stations(f.stations, cfg);
  if (cmd->count("--elevation")) cfg.elevation = f.elevation;
  if (cmd->count("--inset-stations")) cfg.stations_include_edges = false;
  if (cmd->count("--threads")) cfg.threads = f.threads;
  if (cmd->count("--out")) cfg.out_dir = f.out_dir;
  if (cmd->count("--scene")) cfg.scene_path = f.scene;
  if (cmd->count("--domain-length")) cfg.domain_length = f.domain_length;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forward gravity modeling: direct summation, FEM Poisson with "
               "geometric multigrid, and FMM"};
  app.require_subcommand(1);

  CommonFlags fwd_flags, conv_flags, bench_flags, cross_flags;
  std::string conv_grids = "12,24,48,96";
  std::string bench_grids = "12,24,48";
  std::string bench_methods = "sum-g1z,sum-g1,sum-g2,sum-an,fem-d,fem-gt,fmm";
  std::string cross_grids = "12,24,48";

  CLI::App* fwd = app.add_subcommand("forward", "run one forward model");
  add_common(fwd, fwd_flags);

  CLI::App* conv = app.add_subcommand(
      "convergence", "error norms and fitted rates over a grid sequence");
  add_common(conv, conv_flags);
  conv->add_option("--grids", conv_grids, "comma-separated cell counts");

  CLI::App* bench = app.add_subcommand("bench", "wall-clock timings");
  add_common(bench, bench_flags, false);
  bench->add_option("--methods", bench_methods, "comma-separated methods");
  bench->add_option("--grids", bench_grids, "comma-separated cell counts");

  CLI::App* cross = app.add_subcommand(
      "crossover", "stations-to-crossover table (PDE/FMM vs summation)");
  add_common(cross, cross_flags, false);
  cross->add_option("--grids", cross_grids, "comma-separated cell counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (fwd->parsed()) {
      RunConfig cfg = build_config(fwd, fwd_flags);
      auto out = gravity::harness::run_forward(cfg);
      std::cout << "wrote " << out.csv_path << " (" << out.stations.points.size()
                << " stations) and " << out.manifest_path << "\n";
    } else if (conv->parsed()) {
      RunConfig cfg = build_config(conv, conv_flags);
      auto report =
          gravity::harness::run_convergence(cfg, parse_grid_list(conv_grids));
      std::printf("%s rates: E1 %.3f  E2 %.3f  Einf %.3f\n",
                  gravity::harness::to_string(report.method).c_str(),
                  report.rate_e1.slope, report.rate_e2.slope,
                  report.rate_einf.slope);
      std::cout << "wrote " << report.csv_path << " and " << report.json_path
                << "\n";
    } else if (bench->parsed()) {
      RunConfig cfg = build_config(bench, bench_flags);
      auto records = gravity::harness::run_bench(
          parse_method_list(bench_methods), parse_grid_list(bench_grids), cfg);
      const std::string path = cfg.out_dir + "/bench.csv";
      gravity::harness::write_bench_csv(records, path);
      for (const auto& r : records)
        std::printf("%-8s mbar=%-4d wall %.3es  per-station %.3es  iters %d\n",
                    gravity::harness::to_string(r.method).c_str(), r.mbar,
                    r.wall_seconds, r.per_station_seconds, r.iterations);
      std::cout << "wrote " << path << "\n";
    } else if (cross->parsed()) {
      RunConfig cfg = build_config(cross, cross_flags);
      auto rows =
          gravity::harness::run_crossover(parse_grid_list(cross_grids), cfg);
      const std::string path = cfg.out_dir + "/crossover.csv";
      gravity::harness::write_crossover_csv(rows, path);
      for (const auto& r : rows)
        std::printf("mbar=%-4d fem-gt/sum-g1z %.3e  fem-gt/sum-an %.3e\n",
                    r.mbar, r.femgt_vs_sumg1z, r.femgt_vs_suman);
      std::cout << "wrote " << path << "\n";
    }
  } catch (const gravity::fem::SolverFailure& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    const auto& hist = e.stats.residual_history;
    for (std::size_t i = 0; i < hist.size(); ++i) {
      if (i >= 8 && i + 3 < hist.size()) {
        if (i == 8) std::cerr << "  ...\n";
        continue;
      }
      std::cerr << "  r[" << i << "] = " << hist[i] << "\n";
    }
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
