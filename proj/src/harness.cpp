#include "lsbo/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <utility>

#include "lsbo/common.hpp"

namespace lsbo {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty())
      throw std::invalid_argument("config: empty list item in '" + v + "'");
    out.push_back(item);
  }
  return out;
}

long long parse_ll(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (...) {
    throw std::invalid_argument("config: bad integer '" + v + "' for " + key);
  }
  if (pos != v.size())
    throw std::invalid_argument("config: bad integer '" + v + "' for " + key);
  return out;
}

int parse_int(const std::string& v, const std::string& key) {
  return static_cast<int>(parse_ll(v, key));
}

double parse_double(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (...) {
    throw std::invalid_argument("config: bad number '" + v + "' for " + key);
  }
  if (pos != v.size())
    throw std::invalid_argument("config: bad number '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "' for " + key);
}

template <typename T>
void check_no_duplicates(const std::vector<T>& xs, const char* what) {
  std::set<T> seen(xs.begin(), xs.end());
  if (seen.size() != xs.size())
    throw std::invalid_argument(std::string("config: duplicate entries in ") +
                                what);
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.dataset != "shape" && cfg.dataset != "synthetic")
    throw std::invalid_argument("config: unknown dataset '" + cfg.dataset +
                                "'");
  if (cfg.latent_dims.empty() || cfg.bounds.empty() ||
      cfg.acquisitions.empty() || cfg.seeds.empty())
    throw std::invalid_argument("config: sweep axes must be non-empty");
  check_no_duplicates(cfg.latent_dims, "latent_dims");
  check_no_duplicates(cfg.bounds, "bounds");
  check_no_duplicates(cfg.acquisitions, "acquisitions");
  check_no_duplicates(cfg.seeds, "seeds");
  for (int d : cfg.latent_dims)
    if (d < 1) throw std::invalid_argument("config: latent dims must be >= 1");
  if (cfg.budget < 0) throw std::invalid_argument("config: budget must be >= 0");
  if (cfg.n_init < 1) throw std::invalid_argument("config: n_init must be >= 1");
  if (cfg.num_inducing < 1)
    throw std::invalid_argument("config: num_inducing must be >= 1");
  if (!(cfg.gp_noise_init > 0.0))
    throw std::invalid_argument("config: gp_noise_init must be positive");
  if (!(cfg.noise_sigma >= 0.0))
    throw std::invalid_argument("config: noise_sigma must be >= 0");
  if (cfg.pool_size < 1)
    throw std::invalid_argument("config: pool_size must be >= 1");
  if (cfg.ambient_dim < 1 || cfg.intrinsic_dim < 1 ||
      cfg.ambient_dim < cfg.intrinsic_dim)
    throw std::invalid_argument("config: need ambient_dim >= intrinsic_dim >= 1");
  if (!(cfg.lcb_beta > 0.0))
    throw std::invalid_argument("config: lcb_beta must be positive");
  if (cfg.ts_candidates < 1)
    throw std::invalid_argument("config: ts_candidates must be >= 1");
  if (!(cfg.xi >= 0.0)) throw std::invalid_argument("config: xi must be >= 0");
  if (cfg.grid_n < 2) throw std::invalid_argument("config: grid_n must be >= 2");
  if (cfg.grid_axis_a < 0 || cfg.grid_axis_b < 0 ||
      cfg.grid_axis_a == cfg.grid_axis_b)
    throw std::invalid_argument("config: grid axes must be distinct and >= 0");
  if (!(cfg.grid_span > 0.0))
    throw std::invalid_argument("config: grid_span must be positive");

  TrainConfig tc;
  tc.vae_lr = cfg.vae_lr;
  tc.gp_lr = cfg.gp_lr;
  tc.vae_epochs = cfg.vae_epochs;
  tc.gp_steps = cfg.gp_steps;
  tc.joint_steps = cfg.joint_steps;
  tc.batch_size = cfg.batch_size;
  tc.retrain_period = cfg.retrain_period;
  validate(tc);
}

TrainConfig make_train_config(const ExperimentConfig& cfg, int seed) {
  TrainConfig tc;
  tc.regime = cfg.regime;
  tc.vae_lr = cfg.vae_lr;
  tc.gp_lr = cfg.gp_lr;
  tc.vae_epochs = cfg.vae_epochs;
  tc.gp_steps = cfg.gp_steps;
  tc.joint_steps = cfg.joint_steps;
  tc.batch_size = cfg.batch_size;
  tc.retrain_period = cfg.retrain_period;
  tc.seed = static_cast<std::uint64_t>(seed);
  return tc;
}

std::string join_ints(const std::vector<int>& xs, char sep) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) os << sep;
    os << xs[i];
  }
  return os.str();
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  " is not 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config: empty key on line " +
                                  std::to_string(line_no));
    if (!seen.insert(key).second)
      throw std::invalid_argument("config: repeated key '" + key + "'");

    if (key == "dataset") {
      cfg.dataset = value;
    } else if (key == "regime") {
      cfg.regime = train_regime_from_string(value);
    } else if (key == "latent_dims") {
      cfg.latent_dims.clear();
      for (const auto& s : split_list(value))
        cfg.latent_dims.push_back(parse_int(s, key));
    } else if (key == "bounds") {
      cfg.bounds.clear();
      for (const auto& s : split_list(value))
        cfg.bounds.push_back(bounds_kind_from_string(s));
    } else if (key == "acquisitions") {
      cfg.acquisitions.clear();
      for (const auto& s : split_list(value))
        cfg.acquisitions.push_back(acquisition_kind_from_string(s));
    } else if (key == "seeds") {
      cfg.seeds.clear();
      for (const auto& s : split_list(value))
        cfg.seeds.push_back(parse_int(s, key));
    } else if (key == "budget") {
      cfg.budget = parse_ll(value, key);
    } else if (key == "n_init") {
      cfg.n_init = parse_int(value, key);
    } else if (key == "num_inducing") {
      cfg.num_inducing = parse_int(value, key);
    } else if (key == "gp_noise_init") {
      cfg.gp_noise_init = parse_double(value, key);
    } else if (key == "noise_sigma") {
      cfg.noise_sigma = parse_double(value, key);
    } else if (key == "stop_threshold") {
      cfg.stop_threshold = parse_double(value, key);
    } else if (key == "pool_size") {
      cfg.pool_size = parse_int(value, key);
    } else if (key == "data_seed") {
      cfg.data_seed = static_cast<std::uint64_t>(parse_ll(value, key));
    } else if (key == "shape_threshold") {
      cfg.shape_threshold = parse_bool(value, key);
    } else if (key == "ambient_dim") {
      cfg.ambient_dim = parse_int(value, key);
    } else if (key == "intrinsic_dim") {
      cfg.intrinsic_dim = parse_int(value, key);
    } else if (key == "vae_lr") {
      cfg.vae_lr = parse_double(value, key);
    } else if (key == "gp_lr") {
      cfg.gp_lr = parse_double(value, key);
    } else if (key == "vae_epochs") {
      cfg.vae_epochs = parse_int(value, key);
    } else if (key == "gp_steps") {
      cfg.gp_steps = parse_int(value, key);
    } else if (key == "joint_steps") {
      cfg.joint_steps = parse_int(value, key);
    } else if (key == "batch_size") {
      cfg.batch_size = parse_int(value, key);
    } else if (key == "retrain_period") {
      cfg.retrain_period = parse_int(value, key);
    } else if (key == "lcb_beta") {
      cfg.lcb_beta = parse_double(value, key);
    } else if (key == "ts_candidates") {
      cfg.ts_candidates = parse_int(value, key);
    } else if (key == "xi") {
      cfg.xi = parse_double(value, key);
    } else if (key == "grid_n") {
      cfg.grid_n = parse_int(value, key);
    } else if (key == "grid_axis_a") {
      cfg.grid_axis_a = parse_int(value, key);
    } else if (key == "grid_axis_b") {
      cfg.grid_axis_b = parse_int(value, key);
    } else if (key == "grid_span") {
      cfg.grid_span = parse_double(value, key);
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string canonical_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "dataset = " << cfg.dataset << '\n';
  os << "regime = " << to_string(cfg.regime) << '\n';
  os << "latent_dims = " << join_ints(cfg.latent_dims, ',') << '\n';
  os << "bounds = ";
  for (std::size_t i = 0; i < cfg.bounds.size(); ++i)
    os << (i ? "," : "") << to_string(cfg.bounds[i]);
  os << '\n';
  os << "acquisitions = ";
  for (std::size_t i = 0; i < cfg.acquisitions.size(); ++i)
    os << (i ? "," : "") << to_string(cfg.acquisitions[i]);
  os << '\n';
  os << "seeds = " << join_ints(cfg.seeds, ',') << '\n';
  os << "budget = " << cfg.budget << '\n';
  os << "n_init = " << cfg.n_init << '\n';
  os << "num_inducing = " << cfg.num_inducing << '\n';
  os << "gp_noise_init = " << g17(cfg.gp_noise_init) << '\n';
  os << "noise_sigma = " << g17(cfg.noise_sigma) << '\n';
  os << "stop_threshold = " << g17(cfg.stop_threshold) << '\n';
  os << "pool_size = " << cfg.pool_size << '\n';
  os << "data_seed = " << cfg.data_seed << '\n';
  os << "shape_threshold = " << (cfg.shape_threshold ? "true" : "false")
     << '\n';
  os << "ambient_dim = " << cfg.ambient_dim << '\n';
  os << "intrinsic_dim = " << cfg.intrinsic_dim << '\n';
  os << "vae_lr = " << g17(cfg.vae_lr) << '\n';
  os << "gp_lr = " << g17(cfg.gp_lr) << '\n';
  os << "vae_epochs = " << cfg.vae_epochs << '\n';
  os << "gp_steps = " << cfg.gp_steps << '\n';
  os << "joint_steps = " << cfg.joint_steps << '\n';
  os << "batch_size = " << cfg.batch_size << '\n';
  os << "retrain_period = " << cfg.retrain_period << '\n';
  os << "lcb_beta = " << g17(cfg.lcb_beta) << '\n';
  os << "ts_candidates = " << cfg.ts_candidates << '\n';
  os << "xi = " << g17(cfg.xi) << '\n';
  os << "grid_n = " << cfg.grid_n << '\n';
  os << "grid_axis_a = " << cfg.grid_axis_a << '\n';
  os << "grid_axis_b = " << cfg.grid_axis_b << '\n';
  os << "grid_span = " << g17(cfg.grid_span) << '\n';
  return os.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_config(cfg))));
  return std::string(buf);
}

Vec normalize(const Vec& y_raw, const Vec& train_values) {
  if (train_values.size() < 2)
    throw std::invalid_argument("normalize: need at least two training values");
  const double lo = train_values.minCoeff();
  const double mean = train_values.mean();
  const double sd =
      std::sqrt((train_values.array() - mean).square().mean());
  if (!(sd > 0.0))
    throw std::invalid_argument("normalize: training values are degenerate");
  return (y_raw.array() - lo) / sd;
}

ProblemSetup make_problem(const ExperimentConfig& cfg) {
  validate_config(cfg);
  ProblemSetup p;
  if (cfg.dataset == "shape") {
    Rng rng(cfg.data_seed);
    p.pool = shape_pixel_matrix(shape_generate(cfg.pool_size, rng));
    const bool threshold = cfg.shape_threshold;
    p.black_box.eval = [threshold](const Vec& x) {
      if (threshold)
        return -static_cast<double>((x.array() > 0.5).count());
      return -x.sum();
    };
    p.likelihood = Likelihood::kBernoulli;
  } else {
    const SyntheticBenchmark bench = make_synthetic(
        cfg.ambient_dim, cfg.intrinsic_dim, cfg.data_seed);
    Rng pool_rng = Rng(cfg.data_seed).fork("pool");
    p.pool = synthetic_sample_inputs(bench, cfg.pool_size, pool_rng);
    p.black_box.eval = [bench](const Vec& x) {
      return synthetic_eval(bench, x);
    };
    p.likelihood = Likelihood::kGaussian;
  }
  p.black_box.noise_sigma = cfg.noise_sigma;
  p.train_values.resize(p.pool.rows());
  for (Eigen::Index i = 0; i < p.pool.rows(); ++i)
    p.train_values(i) = p.black_box.eval(p.pool.row(i).transpose());
  return p;
}

VaeModel pretrain_vae(const ExperimentConfig& cfg, const ProblemSetup& problem,
                      int latent_dim, int seed) {
  Rng root(static_cast<std::uint64_t>(seed));
  Rng vae_rng = root.fork("vae-init");
  VaeModel vae = make_vae(static_cast<int>(problem.pool.cols()), latent_dim,
                          problem.likelihood, vae_rng);
  Trainer trainer(make_train_config(cfg, seed));
  trainer.fit_vae(vae, problem.pool);
  return vae;
}

BoRunConfig cell_run_config(const ExperimentConfig& cfg, int latent_dim,
                            BoundsKind bounds, AcquisitionKind acquisition,
                            int seed, Likelihood likelihood) {
  BoRunConfig rc;
  rc.latent_dim = latent_dim;
  rc.likelihood = likelihood;
  rc.n_init = cfg.n_init;
  rc.budget = cfg.budget;
  rc.num_inducing = cfg.num_inducing;
  rc.gp_noise_init = cfg.gp_noise_init;
  rc.stop_threshold = cfg.stop_threshold;
  rc.bounds.kind = bounds;
  rc.acquisition.kind = acquisition;
  rc.acquisition.lcb_beta = cfg.lcb_beta;
  rc.acquisition.ts_candidates = cfg.ts_candidates;
  rc.acquisition.xi = cfg.xi;
  rc.train = make_train_config(cfg, seed);
  rc.seed = static_cast<std::uint64_t>(seed);
  return rc;
}

namespace {

struct CellSpec {
  int latent_dim;
  BoundsKind bounds;
  AcquisitionKind acquisition;
};

SweepCell run_cell(const ExperimentConfig& cfg, const ProblemSetup& problem,
                   const std::map<std::pair<int, int>, VaeModel>& encoders,
                   const CellSpec& spec) {
  SweepCell cell;
  cell.latent_dim = spec.latent_dim;
  cell.bounds = spec.bounds;
  cell.acquisition = spec.acquisition;

  std::vector<Vec> traces;
  for (int seed : cfg.seeds) {
    try {
      const BoRunConfig rc =
          cell_run_config(cfg, spec.latent_dim, spec.bounds, spec.acquisition,
                          seed, problem.likelihood);
      const VaeModel& warm = encoders.at({spec.latent_dim, seed});
      const BoRunResult run =
          run_bo(problem.pool, problem.black_box, rc, &warm);
      Vec trace(run.state.best_trace.size());
      for (Eigen::Index t = 0; t < trace.size(); ++t)
        trace(t) = run.state.best_trace[static_cast<std::size_t>(t)];
      traces.push_back(normalize(trace, problem.train_values));
      cell.seeds_ok.push_back(seed);
    } catch (const std::exception& e) {
      cell.seeds_failed.emplace_back(seed, sanitize(e.what()));
    }
  }

  const Eigen::Index horizon = cfg.budget;
  const Eigen::Index n_ok = static_cast<Eigen::Index>(traces.size());
  cell.raw.resize(horizon, n_ok);
  for (Eigen::Index c = 0; c < n_ok; ++c) {
    const Vec& trace = traces[static_cast<std::size_t>(c)];
    for (Eigen::Index t = 0; t < horizon; ++t)
      // An early-stopped run holds its final best for the rest of the
      // horizon, which is what continuing without new evaluations would do.
      cell.raw(t, c) = t < trace.size() ? trace(t) : trace(trace.size() - 1);
  }
  if (n_ok > 0 && horizon > 0) {
    cell.mean = cell.raw.rowwise().mean();
    cell.sem = Vec::Zero(horizon);
    if (n_ok > 1) {
      for (Eigen::Index t = 0; t < horizon; ++t) {
        const double m = cell.mean(t);
        const double var =
            (cell.raw.row(t).array() - m).square().sum() / double(n_ok - 1);
        cell.sem(t) = std::sqrt(var / double(n_ok));
      }
    }
  }
  return cell;
}

void write_cell_csv(const std::string& path, const SweepCell& cell,
                    const std::string& hash) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# config_hash=" << hash << '\n';
  if (!cell.seeds_failed.empty()) {
    out << "# incomplete_failed_seeds=";
    for (std::size_t i = 0; i < cell.seeds_failed.size(); ++i)
      out << (i ? ";" : "") << cell.seeds_failed[i].first;
    out << '\n';
  }
  out << "iteration,mean,sem";
  for (int seed : cell.seeds_ok) out << ",raw_" << seed;
  out << '\n';
  for (Eigen::Index t = 0; t < cell.raw.rows(); ++t) {
    out << t << ',' << g17(cell.mean(t)) << ',' << g17(cell.sem(t));
    for (Eigen::Index c = 0; c < cell.raw.cols(); ++c)
      out << ',' << g17(cell.raw(t, c));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& out_dir,
                      int workers) {
  validate_config(cfg);
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  std::filesystem::create_directories(out_dir);

  SweepResult result;
  result.hash = config_hash(cfg);
  const ProblemSetup problem = make_problem(cfg);

  // One encoder per (latent dim, seed), trained up front so worker threads
  // only read shared state.
  std::map<std::pair<int, int>, VaeModel> encoders;
  for (int d : cfg.latent_dims)
    for (int seed : cfg.seeds)
      encoders.emplace(std::make_pair(d, seed),
                       pretrain_vae(cfg, problem, d, seed));

  std::vector<CellSpec> specs;
  for (int d : cfg.latent_dims)
    for (BoundsKind b : cfg.bounds)
      for (AcquisitionKind a : cfg.acquisitions) specs.push_back({d, b, a});

  result.cells.resize(specs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= specs.size()) return;
      result.cells[i] = run_cell(cfg, problem, encoders, specs[i]);
    }
  };
  const int n_workers =
      std::max(1, std::min<int>(workers, static_cast<int>(specs.size())));
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }

  // All output is written from this thread, in spec order.
  for (SweepCell& cell : result.cells) {
    if (cell.seeds_ok.empty()) continue;
    std::ostringstream name;
    name << "curve_" << cfg.dataset << '_' << to_string(cfg.regime) << "_d"
         << cell.latent_dim << '_' << to_string(cell.bounds) << '_'
         << to_string(cell.acquisition) << ".csv";
    cell.file = (std::filesystem::path(out_dir) / name.str()).string();
    write_cell_csv(cell.file, cell, result.hash);
  }

  const std::string summary_path =
      (std::filesystem::path(out_dir) / "summary.csv").string();
  std::ofstream summary(summary_path);
  if (!summary) throw std::runtime_error("cannot write " + summary_path);
  summary << "# config_hash=" << result.hash << '\n';
  summary << "latent_dim,bounds,acquisition,status,seeds_ok,seeds_failed,file,"
             "first_error\n";
  for (const SweepCell& cell : result.cells) {
    std::string status = "complete";
    if (cell.seeds_ok.empty())
      status = "failed";
    else if (!cell.seeds_failed.empty())
      status = "incomplete";
    std::vector<int> failed;
    for (const auto& f : cell.seeds_failed) failed.push_back(f.first);
    summary << cell.latent_dim << ',' << to_string(cell.bounds) << ','
            << to_string(cell.acquisition) << ',' << status << ','
            << join_ints(cell.seeds_ok, ';') << ',' << join_ints(failed, ';')
            << ','
            << std::filesystem::path(cell.file).filename().string() << ','
            << (cell.seeds_failed.empty() ? ""
                                          : cell.seeds_failed.front().second)
            << '\n';
  }
  if (!summary) throw std::runtime_error("write failed for " + summary_path);
  return result;
}

DiagnosticsMap diagnostics_map(const VaeModel& vae, const Mat& train_inputs,
                               int axis_a, int axis_b, int grid_n, double lo_a,
                               double hi_a, double lo_b, double hi_b) {
  const int d = vae.latent_dim;
  if (axis_a < 0 || axis_b < 0 || axis_a >= d || axis_b >= d ||
      axis_a == axis_b)
    throw std::invalid_argument("diagnostics_map: bad axis pair");
  if (grid_n < 2) throw std::invalid_argument("diagnostics_map: grid_n < 2");
  if (!(lo_a < hi_a) || !(lo_b < hi_b))
    throw std::invalid_argument("diagnostics_map: empty grid range");
  if (train_inputs.rows() < 2 || train_inputs.cols() != vae.input_dim)
    throw std::invalid_argument("diagnostics_map: bad training inputs");

  const Mat enc = encode_mean_raw(vae, train_inputs);
  const Vec mu = enc.colwise().mean();
  const Mat centered = enc.rowwise() - mu.transpose();
  Mat cov = (centered.adjoint() * centered) / double(enc.rows());
  cov += 1e-12 * Mat::Identity(d, d);
  const Eigen::LDLT<Mat> ldlt(cov);

  std::vector<double> radii(static_cast<std::size_t>(enc.rows()));
  for (Eigen::Index i = 0; i < enc.rows(); ++i) {
    const Vec v = centered.row(i).transpose();
    radii[static_cast<std::size_t>(i)] = std::sqrt(v.dot(ldlt.solve(v)));
  }

  DiagnosticsMap map;
  map.axis_a = axis_a;
  map.axis_b = axis_b;
  map.radius99 = nearest_rank_percentile(radii, 99.0);
  map.grid_a = Vec::LinSpaced(grid_n, lo_a, hi_a);
  map.grid_b = Vec::LinSpaced(grid_n, lo_b, hi_b);
  map.distance.resize(grid_n, grid_n);
  map.mahalanobis.resize(grid_n, grid_n);
  for (int j = 0; j < grid_n; ++j) {
    for (int i = 0; i < grid_n; ++i) {
      Vec z = Vec::Zero(d);
      z(axis_a) = map.grid_a(i);
      z(axis_b) = map.grid_b(j);
      map.distance(j, i) = (z - roundtrip_mean(vae, z)).norm();
      const Vec v = z - mu;
      map.mahalanobis(j, i) = std::sqrt(v.dot(ldlt.solve(v)));
    }
  }
  return map;
}

void write_diagnostics_csv(const std::string& path, const DiagnosticsMap& map,
                           const std::string& hash) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# config_hash=" << hash << '\n';
  out << "# axes=" << map.axis_a << ';' << map.axis_b
      << " radius99=" << g17(map.radius99) << '\n';
  out << "za,zb,roundtrip_distance,mahalanobis,inside\n";
  for (Eigen::Index j = 0; j < map.grid_b.size(); ++j)
    for (Eigen::Index i = 0; i < map.grid_a.size(); ++i)
      out << g17(map.grid_a(i)) << ',' << g17(map.grid_b(j)) << ','
          << g17(map.distance(j, i)) << ',' << g17(map.mahalanobis(j, i))
          << ',' << (map.mahalanobis(j, i) <= map.radius99 ? 1 : 0) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace lsbo
