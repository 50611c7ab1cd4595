#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <thread>
#include <vector>

#include "kunita/bridges.hpp"
#include "kunita/io.hpp"
#include "kunita/kernels.hpp"
#include "kunita/noise.hpp"
#include "kunita/phylo.hpp"
#include "kunita/processes.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kunita;

namespace {

constexpr const char* kVersion = "0.1.0";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config JSON: ") + e.what());
  }
  // accept a manifest from a previous run as a config
  if (j.contains("config") && j["config"].is_object()) {
    json inner = j["config"];
    if (!inner.contains("seed") && j.contains("seed")) inner["seed"] = j["seed"];
    return inner;
  }
  return j;
}

KernelParams parse_kernel(const json& j) {
  if (!j.is_object()) throw ConfigError("missing kernel object");
  KernelParams p;
  const std::string family = j.value("family", "se");
  if (family == "se" || family == "squared_exponential")
    p.family = KernelFamily::SquaredExponential;
  else if (family == "matern")
    p.family = KernelFamily::Matern;
  else
    throw ConfigError("unknown kernel family: " + family);
  p.alpha = j.value("alpha", 1.0);
  p.sigma = j.value("sigma", 1.0);
  p.c = j.value("c", 0.0);
  p.dim = j.value("d", 2);
  try {
    p.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

LandmarkConfig load_landmarks(const json& cfg, const std::string& key) {
  if (!cfg.contains(key)) throw ConfigError("config is missing '" + key + "'");
  const std::string path = cfg[key].get<std::string>();
  if (!fs::exists(path)) throw ConfigError("input file does not exist: " + path);
  return read_landmarks_file(path);
}

void write_manifest(const fs::path& out_dir, const std::string& command, const json& cfg,
                    std::uint64_t seed, json extra = {}) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["seed"] = seed;
  m["config"] = cfg;
  for (auto& [k, v] : extra.items()) m[k] = v;
  std::ofstream os(out_dir / "manifest.json");
  os << m.dump(2) << "\n";
}

json kernel_json(const KernelParams& p) {
  json j;
  j["family"] = p.family == KernelFamily::Matern ? "matern" : "se";
  j["alpha"] = p.alpha;
  j["sigma"] = p.sigma;
  if (p.family == KernelFamily::Matern) j["c"] = p.c;
  j["d"] = p.dim;
  return j;
}

void for_each_stream(int n, int threads, const std::function<void(int)>& body) {
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    });
  for (auto& th : pool) th.join();
}

int cmd_simulate(const json& cfg, std::uint64_t seed, const fs::path& out, int threads) {
  const KernelParams params = parse_kernel(cfg.value("kernel", json::object()));
  const LandmarkConfig x0 = load_landmarks(cfg, "x0");
  const double T = cfg.value("T", 1.0);
  const int steps = cfg.value("steps", 100);
  const int n_paths = cfg.value("n_paths", 1);
  const std::string process = cfg.value("process", "kunita");
  const std::string backend_name = cfg.value("backend", "exact");
  const std::string convention = cfg.value("convention", "ito");

  std::optional<Momentum> p0;
  if (cfg.contains("p0")) p0 = load_landmarks(cfg, "p0").coords;

  ProcessSpec spec = KunitaLandmark{params};
  bool needs_grid = backend_name == "grid";
  if (process == "kunita") {
    spec = KunitaLandmark{params, convention == "stratonovich" ? SdeConvention::Stratonovich
                                                               : SdeConvention::Ito};
  } else if (process == "riemannian_bm") {
    spec = RiemannianBM{params};
  } else if (process == "epdiff") {
    needs_grid = true;
    spec = StochasticEPDiff{params, NoiseGrid{}};
  } else if (process == "inner_momentum") {
    spec = InnerMomentumNoise{params, cfg.value("noise_scale", 1.0)};
  } else if (process == "langevin") {
    spec = Langevin{params, cfg.value("lambda", 0.0), cfg.value("sigma_noise", 0.0)};
  } else {
    throw ConfigError("unknown process: " + process);
  }

  NoiseBackend backend = ExactCovariance{params, x0.n, seed, 0};
  if (needs_grid) {
    const json g = cfg.value("grid", json::object());
    NoiseGrid grid = make_noise_grid(params, x0, seed, 0, g.value("h_over_sigma", 0.5),
                                     g.value("pad_sigmas", 5.0));
    if (auto* ep = std::get_if<StochasticEPDiff>(&spec)) ep->grid = grid;
    backend = grid;
  }

  fs::create_directories(out);
  write_manifest(out, "simulate", cfg, seed,
                 {{"var_Q", variance(params)}, {"kernel", kernel_json(params)}});

  std::atomic<bool> failed{false};
  for_each_stream(n_paths, threads, [&](int i) {
    try {
      PathSample path = simulate(spec, x0, p0, T, steps, backend,
                                 static_cast<std::uint64_t>(i));
      std::ofstream csv(out / ("path_" + std::to_string(i) + ".csv"));
      write_path_csv(csv, path, x0.n, x0.d);
      std::ofstream js(out / ("path_" + std::to_string(i) + ".json"));
      write_path_json(js, path, x0.n, x0.d);
    } catch (const std::exception& e) {
      std::cerr << "path " << i << ": " << e.what() << "\n";
      failed = true;
    }
  });
  return failed ? 3 : 0;
}

int cmd_warp(const json& cfg, std::uint64_t seed, const fs::path& out) {
  const KernelParams params = parse_kernel(cfg.value("kernel", json::object()));
  const LandmarkConfig poly = load_landmarks(cfg, "polyline");
  const double T = cfg.value("T", 1.0);
  const int steps = cfg.value("steps", 100);
  const int frames = cfg.value("frames", 10);
  const json g = cfg.value("grid", json::object());
  const NoiseGrid grid = make_noise_grid(params, poly, seed, 0, g.value("h_over_sigma", 0.5),
                                         g.value("pad_sigmas", 5.0));

  const PathSample path = warp_points(params, poly, T, steps, grid);
  fs::create_directories(out);
  write_manifest(out, "warp", cfg, seed, {{"var_Q", variance(params)}});
  {
    std::ofstream rec(out / "noise.bin", std::ios::binary);
    write_noise_record(rec, grid, T / steps, steps);
  }
  for (int f = 0; f <= frames; ++f) {
    const std::size_t idx = static_cast<std::size_t>(
        std::llround(static_cast<double>(f) / frames * steps));
    LandmarkConfig frame(poly.n, poly.d, path.positions[idx]);
    std::ofstream os(out / ("frame_" + std::to_string(f) + ".csv"));
    write_landmarks_csv(os, frame);
  }
  return 0;
}

int cmd_bridge(const json& cfg, std::uint64_t seed, const fs::path& out, int threads) {
  const KernelParams params = parse_kernel(cfg.value("kernel", json::object()));
  const LandmarkConfig x0 = load_landmarks(cfg, "x0");
  const LandmarkConfig y = load_landmarks(cfg, "y");
  BridgeSpec spec;
  spec.target = y;
  spec.horizon = cfg.value("T", 1.0);
  spec.steps = cfg.value("steps", 100);
  spec.clamp_endpoint = cfg.value("clamp", false);
  spec.obs_noise = cfg.value("obs_noise", 0.0);
  const std::string method = cfg.value("method", "guided");
  if (method == "guided")
    spec.method = BridgeMethod::Guided;
  else if (method == "delyon_hu")
    spec.method = BridgeMethod::DelyonHu;
  else
    throw ConfigError("unknown bridge method: " + method);

  BridgeDynamics dyn = KunitaDiffusion{params};
  std::string aux_source = "kernel_matrix_g_at_target";
  if (cfg.value("constant_diffusion", false)) {
    dyn = ConstantDiffusion{aux_from_observation(params, y).a_tilde};
    aux_source = "constant_equal_to_auxiliary";
  }

  const int n_paths = cfg.value("n_paths", 1);
  fs::create_directories(out);
  write_manifest(out, "bridge", cfg, seed,
                 {{"method", method}, {"aux_source", aux_source}});

  std::atomic<bool> failed{false};
  for_each_stream(n_paths, threads, [&](int i) {
    try {
      WeightedPath wp = simulate_bridge(spec, dyn, x0, seed, static_cast<std::uint64_t>(i));
      std::ofstream csv(out / ("bridge_" + std::to_string(i) + ".csv"));
      write_path_csv(csv, wp.path, x0.n, x0.d);
      json meta;
      meta["log_weight"] = wp.log_weight;
      meta["method"] = method;
      meta["aux_source"] = aux_source;
      meta["seed"] = seed;
      meta["stream"] = i;
      std::ofstream js(out / ("bridge_" + std::to_string(i) + ".json"));
      js << meta.dump(2) << "\n";
    } catch (const std::exception& e) {
      std::cerr << "bridge " << i << ": " << e.what() << "\n";
      failed = true;
    }
  });
  return failed ? 3 : 0;
}

int cmd_infer(const json& cfg, std::uint64_t seed, const fs::path& out) {
  KernelParams kernel = parse_kernel(cfg.value("kernel", json::object()));
  if (!cfg.contains("newick")) throw ConfigError("config is missing 'newick'");
  const std::string newick_path = cfg["newick"].get<std::string>();
  std::ifstream nw(newick_path);
  if (!nw) throw ConfigError("cannot open Newick file: " + newick_path);
  std::string newick((std::istreambuf_iterator<char>(nw)), std::istreambuf_iterator<char>());

  PhyloTree tree = parse_newick(newick);
  tree.root_state = load_landmarks(cfg, "root");
  tree.obs_noise = cfg.value("obs_noise", 0.0);

  if (!cfg.contains("observations")) throw ConfigError("config is missing 'observations'");
  const std::string obs_path = cfg["observations"].get<std::string>();
  std::ifstream obs_is(obs_path);
  if (!obs_is) throw ConfigError("cannot open observation map: " + obs_path);
  json obs_map;
  obs_is >> obs_map;
  std::map<std::string, LandmarkConfig> obs;
  for (auto& [name, file] : obs_map.items()) {
    const std::string p = file.get<std::string>();
    if (!fs::exists(p)) throw ConfigError("observation file does not exist: " + p);
    obs.emplace(name, read_landmarks_file(p));
  }
  bind_observations(tree, obs);

  McmcConfig mc;
  mc.iterations = cfg.value("iterations", 5000);
  mc.rw_scale = cfg.value("rw_scale", 0.1);
  mc.pcn_rho = cfg.value("pcn_rho", 0.95);
  mc.steps_per_edge = cfg.value("steps_per_edge", 20);
  mc.seed = seed;
  mc.kernel = kernel;
  mc.init_alpha = cfg.value("init_alpha", 1.0);
  mc.init_sigma = cfg.value("init_sigma", 1.0);
  Priors priors;
  priors.mu_log_alpha = cfg.value("prior_mu_log_alpha", 0.0);
  priors.sd_log_alpha = cfg.value("prior_sd_log_alpha", 1.0);
  priors.mu_log_sigma = cfg.value("prior_mu_log_sigma", 0.0);
  priors.sd_log_sigma = cfg.value("prior_sd_log_sigma", 1.0);

  const auto chain = mcmc_infer(tree, priors, mc);

  fs::create_directories(out);
  write_manifest(out, "infer", cfg, seed);
  {
    std::ofstream csv(out / "chain.csv");
    csv << "iteration,alpha,sigma,log_posterior,accept_innovations,accept_params\n";
    for (const auto& s : chain)
      csv << s.iteration << "," << format_double(s.alpha) << "," << format_double(s.sigma)
          << "," << format_double(s.log_posterior) << "," << (s.accepted_innovations ? 1 : 0)
          << "," << (s.accepted_params ? 1 : 0) << "\n";
  }

  const double burn_frac = cfg.value("burn_in_frac", 0.2);
  const std::size_t burn = static_cast<std::size_t>(burn_frac * chain.size());
  double ma = 0, ms = 0, va = 0, vs = 0, acc_i = 0, acc_p = 0;
  const std::size_t kept = chain.size() > burn ? chain.size() - burn : 0;
  for (std::size_t i = burn; i < chain.size(); ++i) {
    ma += chain[i].alpha;
    ms += chain[i].sigma;
  }
  if (kept) {
    ma /= kept;
    ms /= kept;
    for (std::size_t i = burn; i < chain.size(); ++i) {
      va += (chain[i].alpha - ma) * (chain[i].alpha - ma);
      vs += (chain[i].sigma - ms) * (chain[i].sigma - ms);
    }
    va = std::sqrt(va / kept);
    vs = std::sqrt(vs / kept);
  }
  for (const auto& s : chain) {
    acc_i += s.accepted_innovations;
    acc_p += s.accepted_params;
  }
  json summary;
  summary["iterations"] = chain.size();
  summary["burn_in"] = burn;
  summary["posterior_mean_alpha"] = ma;
  summary["posterior_mean_sigma"] = ms;
  summary["posterior_sd_alpha"] = va;
  summary["posterior_sd_sigma"] = vs;
  summary["accept_rate_innovations"] = chain.empty() ? 0.0 : acc_i / chain.size();
  summary["accept_rate_params"] = chain.empty() ? 0.0 : acc_p / chain.size();
  if (cfg.contains("true_alpha")) summary["true_alpha"] = cfg["true_alpha"].get<double>();
  if (cfg.contains("true_sigma")) summary["true_sigma"] = cfg["true_sigma"].get<double>();
  std::ofstream js(out / "summary.json");
  js << summary.dump(2) << "\n";
  return 0;
}

int cmd_variance(const json& cfg, std::uint64_t seed, const fs::path& out) {
  const KernelParams params = parse_kernel(cfg.value("kernel", json::object()));
  const double v = variance(params);
  std::cout << format_double(v) << "\n";
  if (!out.empty()) {
    fs::create_directories(out);
    write_manifest(out, "variance", cfg, seed,
                   {{"var_Q", v}, {"kernel", kernel_json(params)}});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic shape processes from Kunita flows: simulation, warping, bridge sampling and kernel-parameter inference"};
  app.require_subcommand(1);
  app.fallthrough();  // allow the common flags after the subcommand name

  std::string config_path, out_dir = "out";
  std::uint64_t seed = 0;
  int threads = 1;
  app.add_option("--config", config_path, "JSON config file (flags override file values)");
  app.add_option("--seed", seed, "RNG seed recorded in every output");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "worker threads for multi-path commands");

  auto* sim = app.add_subcommand("simulate", "simulate a shape SDE");
  auto* warp = app.add_subcommand("warp", "advect a dense polyline by one Kunita flow");
  auto* bridge = app.add_subcommand("bridge", "conditioned (bridge) simulation");
  auto* infer = app.add_subcommand("infer", "MCMC inference of kernel parameters on a tree");
  auto* var = app.add_subcommand("variance", "report var(Q) for a kernel");

  CLI11_PARSE(app, argc, argv);

  try {
    json cfg = config_path.empty() ? json::object() : load_config(config_path);
    if (cfg.contains("seed") && app.count("--seed") == 0)
      seed = cfg["seed"].get<std::uint64_t>();
    cfg["seed"] = seed;
    if (sim->parsed()) return cmd_simulate(cfg, seed, out_dir, threads);
    if (warp->parsed()) return cmd_warp(cfg, seed, out_dir);
    if (bridge->parsed()) return cmd_bridge(cfg, seed, out_dir, threads);
    if (infer->parsed()) return cmd_infer(cfg, seed, out_dir);
    if (var->parsed()) return cmd_variance(cfg, seed, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
