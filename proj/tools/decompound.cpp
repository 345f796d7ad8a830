// decompound: simulate | fit | metrics | rate-study

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "decompound/io.hpp"
#include "decompound/likelihood.hpp"
#include "decompound/metrics.hpp"
#include "decompound/posterior.hpp"
#include "decompound/prior.hpp"
#include "decompound/simulate.hpp"
#include "decompound/study.hpp"

namespace fs = std::filesystem;
using namespace decompound;
using nlohmann::json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct Global {
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::string out_dir = ".";
};

fs::path out_path(const Global& g, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : fs::path(g.out_dir) / p;
}

json input_record(const std::string& path) {
  return {{"path", path}, {"sha1", io::blob_sha1(io::read_file(path))}};
}

// Writes a data file plus <file>.json holding the config and the content hashes.
void write_with_sidecar(const fs::path& path, const std::string& content, json meta) {
  io::write_file(path, content);
  meta["output"] = {{"file", path.filename().string()}, {"sha1", io::blob_sha1(content)}};
  auto side = path;
  side += ".json";
  io::write_file(side, io::dump_json(meta));
}

// gauss:mu,var gives N(mu 1, var I) in `dim` dimensions; mix:file.json reads a mixture.
NormalMixture parse_jumps(const std::string& spec, std::size_t dim, json& inputs) {
  if (spec.rfind("gauss:", 0) == 0) {
    const std::string body = spec.substr(6);
    const auto comma = body.find(',');
    if (comma == std::string::npos) throw InputError("gauss shorthand needs gauss:mean,variance");
    double mu = 0.0, var = 0.0;
    try {
      std::size_t used = 0;
      mu = std::stod(body.substr(0, comma), &used);
      if (used != comma) throw InputError("bad mean");
      const std::string v = body.substr(comma + 1);
      var = std::stod(v, &used);
      if (used != v.size()) throw InputError("bad variance");
    } catch (const std::exception&) {
      throw InputError("cannot parse jump shorthand '" + spec + "'");
    }
    if (!(var > 0.0)) throw InputError("jump variance must be positive");
    if (dim < 1) throw InputError("dimension must be at least 1");
    return NormalMixture::gaussian(Vector::Constant(static_cast<Eigen::Index>(dim), mu),
                                   var * Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)));
  }
  if (spec.rfind("mix:", 0) == 0) {
    const std::string file = spec.substr(4);
    inputs.push_back(input_record(file));
    json j;
    try {
      j = json::parse(io::read_file(file));
    } catch (const json::exception& e) {
      throw InputError("cannot parse " + file + ": " + e.what());
    }
    auto m = mixture_from_json(j);
    if (m.dim() != dim) throw InputError("mixture dimension does not match --dim");
    return m;
  }
  throw InputError("jump density must be gauss:mean,variance or mix:file.json");
}

json parse_json_file(const std::string& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw InputError("cannot parse " + path + ": " + e.what());
  }
}

// ---- simulate ------------------------------------------------------------

struct SimulateArgs {
  double lambda = 1.0;
  std::string jumps = "gauss:0,1";
  std::size_t dim = 1;
  std::size_t n = 100;
  double mesh = 1.0;
  std::string model;
  std::string out = "data.csv";
};

int cmd_simulate(const Global& g, const SimulateArgs& a) {
  json inputs = json::array();
  std::optional<CppModel> model;
  if (!a.model.empty()) {
    inputs.push_back(input_record(a.model));
    model.emplace(model_from_json(parse_json_file(a.model)));
  } else {
    if (!(a.lambda > 0.0)) throw InputError("--lambda must be positive");
    model.emplace(a.lambda, parse_jumps(a.jumps, a.dim, inputs));
  }
  if (a.n < 1) throw InputError("--n must be at least 1");
  Rng rng(g.seed, 0);
  const auto sample = simulate_increments(*model, a.n, a.mesh, rng);
  json meta = {{"command", "simulate"},
               {"config",
                {{"model", model_to_json(*model)}, {"n", a.n}, {"mesh", a.mesh}, {"seed", g.seed}}},
               {"inputs", inputs},
               {"mesh", a.mesh},
               {"dim", model->dim()},
               {"zero_count", sample.zero_count()}};
  write_with_sidecar(out_path(g, a.out), io::format_increments_csv(sample), meta);
  return 0;
}

// ---- fit -----------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string prior;
  std::string chain;
  std::string init;
  std::optional<double> mesh;
  double zero_tol = 0.0;
  std::optional<std::size_t> iterations, burn_in, thin;
  std::vector<double> grid;  // lo, hi, points
  std::string prefix = "fit";
  bool timing = false;
};

int cmd_fit(const Global& g, const FitArgs& a) {
  json inputs = json::array();
  inputs.push_back(input_record(a.data));
  double mesh = 1.0;
  const fs::path side = a.data + ".json";
  if (fs::exists(side)) {
    const auto meta = parse_json_file(side.string());
    if (meta.contains("mesh")) mesh = meta.at("mesh").get<double>();
    inputs.push_back(input_record(side.string()));
  }
  if (a.mesh) mesh = *a.mesh;
  auto sample = io::parse_increments_csv(io::read_file(a.data), mesh);
  sample = snap_zeros(std::move(sample), a.zero_tol);
  const std::size_t dim = sample.dim;

  PriorConfig prior = default_prior_config(dim);
  if (!a.prior.empty()) {
    inputs.push_back(input_record(a.prior));
    prior = prior_config_from_json(parse_json_file(a.prior), dim);
  }
  ChainConfig chain;
  chain.seed = g.seed;
  if (!a.chain.empty()) {
    inputs.push_back(input_record(a.chain));
    json j = parse_json_file(a.chain);
    if (!j.contains("seed")) j["seed"] = g.seed;
    chain = chain_config_from_json(j);
  }
  if (a.iterations) chain.iterations = *a.iterations;
  if (a.burn_in) chain.burn_in = *a.burn_in;
  if (a.thin) chain.thin = *a.thin;
  if (!a.init.empty()) {
    inputs.push_back(input_record(a.init));
    const auto j = parse_json_file(a.init);
    if (!j.contains("lambda") || !j.at("lambda").is_number()) throw InputError("warm-start file needs a numeric lambda");
    chain.initial_lambda = j.at("lambda").get<double>();
  }
  chain.validate();

  std::optional<Grid> grid;
  if (dim <= 2) {
    double lo = -8.0, hi = 8.0;
    std::size_t points = dim == 1 ? 801 : 101;
    if (!a.grid.empty()) {
      if (a.grid.size() != 3 || !(a.grid[1] > a.grid[0]) || a.grid[2] < 2) throw InputError("--grid needs lo,hi,points");
      lo = a.grid[0];
      hi = a.grid[1];
      points = static_cast<std::size_t>(a.grid[2]);
    }
    grid = dim == 1 ? Grid::line(lo, hi, points) : Grid::square(lo, hi, points);
  }

  const auto assumptions = validate_assumptions(prior.dpm, prior.lambda);
  json config = {{"data", {{"path", a.data}, {"n", sample.size()}, {"dim", dim}, {"mesh", mesh}, {"zero_tol", a.zero_tol},
                           {"zero_count", sample.zero_count()}}},
                 {"prior", prior_config_to_json(prior)},
                 {"chain", chain_config_to_json(chain)},
                 {"prior_reproduction", sample.size() == 0}};
  if (grid) config["grid"] = {{"lo", grid->lo[0]}, {"hi", grid->hi[0]}, {"points_per_axis", grid->points_per_axis}};
  json meta = {{"command", "fit"}, {"config", config}, {"inputs", inputs}};

  const Posterior post(std::move(sample), prior.lambda, prior.dpm);
  const auto chain_path = out_path(g, a.prefix + ".chain.jsonl");
  const auto diag_path = out_path(g, a.prefix + ".diagnostics.json");
  try {
    const auto output = run_chain(post, chain);
    write_with_sidecar(chain_path, io::format_chain_jsonl(output), meta);
    json diag = meta;
    diag["diagnostics"] = output.diagnostics(a.timing);
    diag["assumptions"] = assumptions.to_json();
    diag["posterior_mean_lambda"] = posterior_mean_lambda(output);
    if (grid) {
      const auto band = posterior_mean_density(output, *grid);
      write_with_sidecar(out_path(g, a.prefix + ".density.csv"), io::format_density_csv(band), meta);
    }
    io::write_file(diag_path, io::dump_json(diag));
  } catch (const ChainAbort& e) {
    json diag = meta;
    diag["abort"] = {{"message", e.what()}, {"state", e.dump()}};
    if (const auto* partial = e.partial()) {
      diag["diagnostics"] = partial->diagnostics(a.timing);
      auto p = chain_path;
      p += ".partial";
      io::write_file(p, io::format_chain_jsonl(*partial));
    }
    auto p = diag_path;
    p += ".partial";
    io::write_file(p, io::dump_json(diag));
    throw;
  }
  return 0;
}

// ---- metrics -------------------------------------------------------------

struct MetricsArgs {
  std::vector<std::string> pair;
  std::optional<std::size_t> sweep;
  std::size_t dim = 1;
  std::string method = "auto";
  std::size_t mc_draws = 1'000'000;
  std::size_t points = 0;
  std::vector<double> range{0.5, 2.0};
  std::string prefix = "metrics";
};

int cmd_metrics(const Global& g, const MetricsArgs& a) {
  if (a.pair.empty() == !a.sweep) throw InputError("metrics needs exactly one of --pair or --sweep");
  if (a.range.size() != 2 || !(a.range[0] > 0.0) || !(a.range[1] >= a.range[0]))
    throw InputError("--range needs lo,hi with 0 < lo <= hi");
  MetricOptions options;
  options.method = a.method == "quadrature" ? Method::quadrature
                   : a.method == "mc"       ? Method::monte_carlo
                                            : Method::automatic;
  options.mc_draws = a.mc_draws;
  options.points_per_axis = a.points;
  options.mc_seed = g.seed;
  const LambdaRange range{a.range[0], a.range[1]};
  json inputs = json::array();
  std::vector<SweepPair> pairs;
  json config = {{"options", metric_options_to_json(options)}, {"range", a.range}};
  if (!a.pair.empty()) {
    if (a.pair.size() != 2) throw InputError("--pair needs two model files");
    inputs.push_back(input_record(a.pair[0]));
    inputs.push_back(input_record(a.pair[1]));
    const auto m0 = model_from_json(parse_json_file(a.pair[0]));
    const auto m = model_from_json(parse_json_file(a.pair[1]));
    if (m0.dim() != m.dim()) throw InputError("models have different dimensions");
    pairs.push_back({m0, m, check_lemma1(m0, m, options, range), check_data_processing(m0, m, options)});
    config["pair"] = a.pair;
  } else {
    if (*a.sweep < 1) throw InputError("--sweep needs a positive count");
    pairs = certification_sweep(*a.sweep, a.dim, g.seed, options, range, g.threads);
    config["sweep"] = {{"count", *a.sweep}, {"dim", a.dim}, {"seed", g.seed}};
  }
  std::string csv = certification_csv_header();
  json reports = json::array();
  bool all_pass = true;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    csv += certification_csv_rows(i, p.lemma.records);
    all_pass = all_pass && p.lemma.all_pass() && p.data_processing.all_pass();
    reports.push_back({{"pair_id", i},
                       {"model0", model_to_json(p.model0)},
                       {"model", model_to_json(p.model)},
                       {"lemma1", p.lemma.to_json()},
                       {"data_processing", p.data_processing.to_json()}});
  }
  json meta = {{"command", "metrics"}, {"config", config}, {"inputs", inputs}};
  write_with_sidecar(out_path(g, a.prefix + ".certification.csv"), csv, meta);
  json report = meta;
  report["all_pass"] = all_pass;
  report["pairs"] = reports;
  io::write_file(out_path(g, a.prefix + ".report.json"), io::dump_json(report));
  return 0;
}

// ---- rate-study ----------------------------------------------------------

struct RateArgs {
  double lambda0 = 1.0;
  std::string jumps = "gauss:0,1";
  std::size_t dim = 1;
  double mesh = 1.0;
  std::vector<std::size_t> sizes{50, 200, 800};
  std::size_t replicates = 5;
  std::optional<std::size_t> iterations, burn_in, thin;
  std::string prior;
  std::size_t grid_points = 0;
  std::string prefix = "rate_study";
};

int cmd_rate_study(const Global& g, const RateArgs& a) {
  json inputs = json::array();
  if (!(a.lambda0 > 0.0)) throw InputError("--lambda0 must be positive");
  RateStudyConfig config;
  config.truth = CppModel(a.lambda0, parse_jumps(a.jumps, a.dim, inputs));
  config.mesh = a.mesh;
  config.sizes = a.sizes;
  config.replicates = a.replicates;
  config.seed = g.seed;
  config.grid_points = a.grid_points;
  if (a.iterations) config.chain.iterations = *a.iterations;
  if (a.burn_in) config.chain.burn_in = *a.burn_in;
  if (a.thin) config.chain.thin = *a.thin;
  if (!a.prior.empty()) {
    inputs.push_back(input_record(a.prior));
    config.prior = prior_config_from_json(parse_json_file(a.prior), a.dim);
  }
  const auto result = run_rate_study(config, g.threads);
  std::string csv = "n,replicate,hellinger,lambda_mean,lambda_error,ess_lambda\n";
  char buf[256];
  for (const auto& r : result.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g\n", r.n, r.replicate, r.hellinger, r.lambda_mean,
                  r.lambda_error, r.ess_lambda);
    csv += buf;
  }
  json meta = {{"command", "rate-study"}, {"config", config.to_json()}, {"inputs", inputs}};
  write_with_sidecar(out_path(g, a.prefix + ".csv"), csv, meta);
  json summary = result.summary(config);
  summary["inputs"] = inputs;
  io::write_file(out_path(g, a.prefix + ".summary.json"), io::dump_json(summary));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian decompounding of compound Poisson processes"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--seed", g.seed, "Random seed (all randomness derives from it)");
  app.add_option("--threads", g.threads, "Worker threads for sweeps and rate studies")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Directory for output files");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate increments of a compound Poisson process");
  simulate->add_option("--lambda", sim.lambda, "Jump intensity");
  simulate->add_option("--jumps", sim.jumps, "Jump density: gauss:mean,variance or mix:file.json");
  simulate->add_option("--dim", sim.dim, "Dimension for the gauss shorthand");
  simulate->add_option("--n", sim.n, "Number of increments");
  simulate->add_option("--mesh", sim.mesh, "Observation spacing");
  simulate->add_option("--model", sim.model, "Model JSON {lambda, jumps}; overrides --lambda/--jumps");
  simulate->add_option("--out", sim.out, "Output CSV");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Sample the posterior of (lambda, r) given increments");
  fit_cmd->add_option("--data", fit.data, "Increment CSV (header z1,...,zd)")->required();
  fit_cmd->add_option("--prior", fit.prior, "Prior JSON");
  fit_cmd->add_option("--chain", fit.chain, "Chain config JSON");
  fit_cmd->add_option("--init", fit.init, "Warm-start JSON {lambda}");
  fit_cmd->add_option("--mesh", fit.mesh, "Observation spacing (default: data sidecar, else 1)");
  fit_cmd->add_option("--zero-tol", fit.zero_tol, "Snap increments with max-norm <= tol to exact zero");
  fit_cmd->add_option("--iterations", fit.iterations);
  fit_cmd->add_option("--burn-in", fit.burn_in);
  fit_cmd->add_option("--thin", fit.thin);
  fit_cmd->add_option("--grid", fit.grid, "Density grid lo,hi,points")->delimiter(',');
  fit_cmd->add_option("--prefix", fit.prefix, "Output file prefix");
  fit_cmd->add_flag("--timing", fit.timing, "Record runtime in diagnostics (output no longer reproducible)");

  MetricsArgs met;
  auto* metrics = app.add_subcommand("metrics", "Certify the divergence inequalities");
  metrics->add_option("--pair", met.pair, "Two model JSON files")->expected(2);
  metrics->add_option("--sweep", met.sweep, "Number of random model pairs");
  metrics->add_option("--dim", met.dim, "Dimension of random pairs")->check(CLI::Range(1, 2));
  metrics->add_option("--method", met.method, "auto, quadrature or mc")
      ->check(CLI::IsMember({"auto", "quadrature", "mc"}));
  metrics->add_option("--mc-draws", met.mc_draws);
  metrics->add_option("--points", met.points, "Quadrature nodes per axis (0 = default)");
  metrics->add_option("--range", met.range, "Intensity range lo,hi for C-bar")->delimiter(',');
  metrics->add_option("--prefix", met.prefix, "Output file prefix");

  RateArgs rate;
  auto* rate_cmd = app.add_subcommand("rate-study", "Desk-scale contraction experiment");
  rate_cmd->add_option("--lambda0", rate.lambda0, "True intensity");
  rate_cmd->add_option("--jumps", rate.jumps, "True jump density");
  rate_cmd->add_option("--dim", rate.dim);
  rate_cmd->add_option("--mesh", rate.mesh);
  rate_cmd->add_option("--sizes", rate.sizes, "Sample sizes")->delimiter(',');
  rate_cmd->add_option("--replicates", rate.replicates);
  rate_cmd->add_option("--iterations", rate.iterations);
  rate_cmd->add_option("--burn-in", rate.burn_in);
  rate_cmd->add_option("--thin", rate.thin);
  rate_cmd->add_option("--prior", rate.prior, "Prior JSON");
  rate_cmd->add_option("--grid-points", rate.grid_points);
  rate_cmd->add_option("--prefix", rate.prefix);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*simulate) return cmd_simulate(g, sim);
    if (*fit_cmd) return cmd_fit(g, fit);
    if (*metrics) return cmd_metrics(g, met);
    if (*rate_cmd) return cmd_rate_study(g, rate);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const InputError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const UnsupportedError& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "file error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
