// Batch front-end: ingest -> classify -> fit -> project -> validate, with a
// reproducible run manifest per invocation.
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tfr/chain_io.hpp"
#include "tfr/data.hpp"
#include "tfr/mcmc.hpp"
#include "tfr/projection.hpp"
#include "tfr/validation.hpp"
#include "tfr/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitComputational = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
  std::string input;
  std::string out_dir = "out";
  std::string mode = "five-year";
  std::uint64_t seed = 1;
  int jobs = 1;
  // pool
  std::string pool = "all";
  double low_threshold = 1.5;
  int reference_year = 0;  // 0: the last observed period
  double phase3_threshold = 2.1;
  // sampler
  int chains = 3;
  int iterations = 20000;
  int burnin = 10000;
  int thin = 10;
  bool fixed_variance = false;
  // projection
  int horizon_end_year = 2050;
  std::size_t trajectories = 4000;
  bool force = false;
  std::vector<std::string> countries;
  bool write_trajectories = false;
  // validation
  int window_start = 1950;
  int window_end = 0;  // 0: full range
  int cutoff = 0;      // 0: no holdout run
};

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

json config_echo(const CommonOptions& opt) {
  return json{{"input", opt.input},
              {"out_dir", opt.out_dir},
              {"mode", opt.mode},
              {"seed", opt.seed},
              {"jobs", opt.jobs},
              {"pool", opt.pool},
              {"low_threshold", opt.low_threshold},
              {"reference_year", opt.reference_year},
              {"phase3_threshold", opt.phase3_threshold},
              {"chains", opt.chains},
              {"iter", opt.iterations},
              {"burnin", opt.burnin},
              {"thin", opt.thin},
              {"fixed_variance", opt.fixed_variance},
              {"horizon_end_year", opt.horizon_end_year},
              {"trajectories", opt.trajectories},
              {"force", opt.force},
              {"countries", opt.countries},
              {"window_start", opt.window_start},
              {"window_end", opt.window_end},
              {"cutoff", opt.cutoff}};
}

struct RunManifest {
  json j;
  fs::path path;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  RunManifest(const std::string& command, const CommonOptions& opt) {
    j["tool_version"] = tfr::kVersion;
    j["command"] = command;
    j["config"] = config_echo(opt);
    j["seed"] = opt.seed;
    j["started_at"] = iso_timestamp();
    j["inputs"] = json::array();
    j["outputs"] = json::array();
    path = fs::path(opt.out_dir) / "manifest.json";
  }

  void add_input(const fs::path& file) {
    j["inputs"].push_back({{"path", file.string()}, {"digest", tfr::file_digest(file)}});
  }
  void add_output(const fs::path& file) { j["outputs"].push_back(file.string()); }

  void finish(int exit_code, const std::string& error_type = {},
              const std::string& message = {}) {
    const auto elapsed = std::chrono::steady_clock::now() - started;
    j["wall_clock_seconds"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() / 1000.0;
    j["status"] = exit_code == 0 ? "ok" : "error";
    if (exit_code != 0) j["error"] = {{"type", error_type}, {"message", message}};
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path);
    if (out) out << j.dump(2) << "\n";
  }
};

void write_text(const fs::path& file, const std::string& text) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << text;
}

tfr::PoolCriterion pool_criterion(const CommonOptions& opt) {
  if (opt.pool == "all") return tfr::PoolCriterion::all();
  if (opt.pool == "low")
    return tfr::PoolCriterion::low_fertility(
        opt.low_threshold,
        opt.reference_year ? std::optional<int>(opt.reference_year) : std::nullopt);
  throw std::invalid_argument("unknown pool criterion: " + opt.pool);
}

tfr::McmcConfig mcmc_config(const CommonOptions& opt, const tfr::CountrySet& pool) {
  tfr::McmcConfig config;
  config.iterations = opt.iterations;
  config.burn_in = opt.burnin;
  config.thin = opt.thin;
  config.chain_count = opt.chains;
  config.seed = opt.seed;
  config.pool = pool;
  config.mode = tfr::series_mode_from_string(opt.mode);
  config.phase3_threshold = opt.phase3_threshold;
  config.estimate_variance = !opt.fixed_variance;
  config.jobs = opt.jobs;
  return config;
}

json rhat_report(const tfr::ChainSet& chains) {
  json out = json::object();
  const auto rhats = tfr::gelman_rubin(
      chains, [](const std::string& name) { return tfr::is_pool_level_coordinate(name); });
  for (const auto& [name, value] : rhats) {
    if (value)
      out[name] = *value;
    else
      out[name] = nullptr;  // degenerate coordinate
  }
  return out;
}

int cmd_fit(const CommonOptions& opt, RunManifest& manifest) {
  const auto mode = tfr::series_mode_from_string(opt.mode);
  manifest.add_input(opt.input);
  tfr::DataStore store = tfr::load_tfr_csv(opt.input, mode);
  const std::string data_digest = tfr::file_digest(opt.input);

  // The pool is resolved on the full store, then the estimation window is
  // applied, so a window/cutoff never changes pool membership.
  const tfr::CountrySet pool = tfr::select_pool(store, pool_criterion(opt));
  if (opt.window_end > 0) store = tfr::truncate_store(store, opt.window_end);
  const auto segs = tfr::classify_all(store, opt.phase3_threshold);
  const tfr::McmcConfig config = mcmc_config(opt, pool);

  const tfr::ChainSet phase2 = tfr::run_phase2_mcmc(store, segs, config);
  const tfr::ChainSet phase3 = tfr::run_phase3_mcmc(store, segs, config);

  const fs::path chains_dir = fs::path(opt.out_dir) / "chains";
  fs::create_directories(chains_dir);
  const tfr::ChainDataInfo data_info{opt.input, data_digest, store.metadata.vintage_year};
  tfr::save_chain_set(phase2, chains_dir / "phase2.csv", data_info);
  tfr::save_chain_set(phase3, chains_dir / "phase3.csv", data_info);
  for (const char* name : {"phase2.csv", "phase2.manifest.json", "phase3.csv",
                           "phase3.manifest.json"})
    manifest.add_output(chains_dir / name);

  json convergence;
  convergence["phase2"] = rhat_report(phase2);
  convergence["phase3"] = rhat_report(phase3);
  const fs::path report_path = fs::path(opt.out_dir) / "reports" / "convergence.json";
  write_text(report_path, convergence.dump(2) + "\n");
  manifest.add_output(report_path);

  manifest.j["pool"] = {{"criterion", opt.pool},
                        {"threshold", opt.low_threshold},
                        {"count", pool.ids.size()},
                        {"ids", pool.ids}};
  manifest.j["phase3_pool"] = phase3.pool_ids;
  std::cout << "fit: pool of " << pool.ids.size() << " countries, "
            << phase2.total_draws() << " phase2 draws, " << phase3.total_draws()
            << " phase3 draws\n";
  return kExitOk;
}

int cmd_project(const CommonOptions& opt, RunManifest& manifest) {
  const auto mode = tfr::series_mode_from_string(opt.mode);
  manifest.add_input(opt.input);
  const tfr::DataStore store = tfr::load_tfr_csv(opt.input, mode);

  const fs::path chains_dir = fs::path(opt.out_dir) / "chains";
  const fs::path p2_csv = chains_dir / "phase2.csv";
  const fs::path p3_csv = chains_dir / "phase3.csv";
  for (const fs::path& p : {p2_csv, p3_csv})
    if (!fs::exists(p)) throw tfr::ParseError("missing chain file: " + p.string());
  manifest.add_input(p2_csv);
  manifest.add_input(p3_csv);
  const tfr::ChainSet phase2 = tfr::load_chain_set(p2_csv, chains_dir / "phase2.manifest.json");
  const tfr::ChainSet phase3 = tfr::load_chain_set(p3_csv, chains_dir / "phase3.manifest.json");

  const auto segs = tfr::classify_all(store, opt.phase3_threshold);

  int last_start = 0;
  for (const std::string& id : phase2.pool_ids) {
    const auto it = store.series.find(id);
    if (it != store.series.end())
      last_start = std::max(last_start, it->second.last_period_start());
  }
  const int len = tfr::period_length_of(mode);
  const int horizon = (opt.horizon_end_year - last_start) / len - 1;

  tfr::ProjectionConfig config;
  config.horizon_periods = horizon;
  config.trajectory_count = opt.trajectories;
  config.seed = opt.seed;
  config.simulation.phase3_threshold = opt.phase3_threshold;
  config.force = opt.force;
  config.countries = opt.countries;
  config.jobs = opt.jobs;
  config.keep_trajectories = opt.write_trajectories;

  const auto results = tfr::project(store, segs, phase2, phase3, config);

  const fs::path proj_dir = fs::path(opt.out_dir) / "projections";
  fs::create_directories(proj_dir);
  for (const auto& [id, result] : results) {
    std::string csv = "period_start,q025,q10,q50,q90,q975\n";
    for (std::size_t t = 0; t < result.fan.period_starts.size(); ++t) {
      csv += std::to_string(result.fan.period_starts[t]);
      for (double q : result.fan.rows[t]) {
        char buf[32];
        std::snprintf(buf, sizeof buf, ",%.6f", q);
        csv += buf;
      }
      csv += "\n";
    }
    const fs::path out_path = proj_dir / (id + ".csv");
    write_text(out_path, csv);
    manifest.add_output(out_path);
    if (opt.write_trajectories) {
      std::string tcsv = "trajectory,period_start,tfr,phase\n";
      for (std::size_t k = 0; k < result.trajectories.size(); ++k) {
        const tfr::Trajectory& traj = result.trajectories[k];
        for (std::size_t t = 0; t < traj.values.size(); ++t) {
          char buf[96];
          std::snprintf(buf, sizeof buf, "%zu,%d,%.6f,%s\n", k, traj.period_starts[t],
                        traj.values[t],
                        traj.phase_at[t] == tfr::Phase::TransitionII ? "II" : "III");
          tcsv += buf;
        }
      }
      const fs::path traj_path = proj_dir / (id + "_trajectories.csv");
      write_text(traj_path, tcsv);
      manifest.add_output(traj_path);
    }
  }
  std::cout << "project: wrote quantile fans for " << results.size() << " countries (horizon "
            << horizon << " periods)\n";
  return kExitOk;
}

int cmd_validate(const CommonOptions& opt, RunManifest& manifest) {
  const auto mode = tfr::series_mode_from_string(opt.mode);
  manifest.add_input(opt.input);
  const tfr::DataStore store = tfr::load_tfr_csv(opt.input, mode);
  const tfr::CountrySet pool = tfr::select_pool(store, pool_criterion(opt));

  const fs::path reports_dir = fs::path(opt.out_dir) / "reports";
  fs::create_directories(reports_dir);

  // windowed goodness-of-fit run
  {
    tfr::DataStore window_store =
        opt.window_end > 0 ? tfr::truncate_store(store, opt.window_end) : store;
    const auto segs = tfr::classify_all(window_store, opt.phase3_threshold);
    const tfr::McmcConfig config = mcmc_config(opt, pool);
    const tfr::ChainSet phase2 = tfr::run_phase2_mcmc(window_store, segs, config);
    int window_end = opt.window_end;
    if (window_end == 0) {
      for (const auto& [id, series] : window_store.series)
        window_end = std::max(window_end, series.observations.back().period_start +
                                              series.observations.back().period_length);
    }
    const tfr::FitReport report =
        tfr::fit_diagnostics(window_store, segs, phase2, opt.window_start, window_end);
    write_text(reports_dir / "fit_report.txt", tfr::fit_report_text(report));
    write_text(reports_dir / "fit_report.json", tfr::fit_report_json(report));
    manifest.add_output(reports_dir / "fit_report.txt");
    manifest.add_output(reports_dir / "fit_report.json");
    std::cout << "validate: window " << report.window_label << " total coverage "
              << report.total_coverage << ", rmse " << report.total_rmse << ", mae "
              << report.total_mae << "\n";
  }

  if (opt.cutoff > 0) {
    tfr::PipelineConfig pipeline;
    pipeline.mcmc = mcmc_config(opt, pool);
    pipeline.projection.trajectory_count = opt.trajectories;
    pipeline.projection.seed = opt.seed;
    pipeline.projection.force = opt.force;
    pipeline.projection.jobs = opt.jobs;
    pipeline.phase3_threshold = opt.phase3_threshold;
    const tfr::HoldoutReport holdout = tfr::cross_validate(store, opt.cutoff, pipeline);
    write_text(reports_dir / "holdout.txt", tfr::holdout_report_text(holdout));
    write_text(reports_dir / "holdout.json", tfr::holdout_report_json(holdout));
    manifest.add_output(reports_dir / "holdout.txt");
    manifest.add_output(reports_dir / "holdout.json");
    std::cout << "validate: holdout from " << opt.cutoff << " coverage "
              << holdout.summary_coverage << "\n";
  }
  return kExitOk;
}

void add_common_flags(CLI::App* cmd, CommonOptions& opt, bool sampler, bool projection) {
  cmd->add_option("--input", opt.input, "TFR panel CSV")->required();
  cmd->add_option("--out-dir", opt.out_dir, "output directory");
  cmd->add_option("--mode", opt.mode, "annual|five-year")
      ->check(CLI::IsMember({"annual", "five-year"}));
  cmd->add_option("--seed", opt.seed, "root RNG seed");
  cmd->add_option("--jobs", opt.jobs, "parallelism degree");
  cmd->add_option("--pool", opt.pool, "all|low")->check(CLI::IsMember({"all", "low"}));
  cmd->add_option("--low-threshold", opt.low_threshold, "low-fertility pool threshold");
  cmd->add_option("--reference-year", opt.reference_year,
                  "period start year used by the low-fertility criterion");
  cmd->add_option("--phase3-threshold", opt.phase3_threshold, "phase III entry threshold");
  if (sampler) {
    cmd->add_option("--chains", opt.chains, "chain count");
    cmd->add_option("--iter", opt.iterations, "iterations per chain");
    cmd->add_option("--burnin", opt.burnin, "burn-in iterations");
    cmd->add_option("--thin", opt.thin, "thinning stride");
    cmd->add_flag("--fixed-variance", opt.fixed_variance,
                  "keep the error-scale parameters at their defaults");
    cmd->add_option("--window-end", opt.window_end,
                    "estimate on data up to this year only");
  }
  if (projection) {
    cmd->add_option("--horizon-end-year", opt.horizon_end_year,
                    "project until the period ending at this year");
    cmd->add_option("--trajectories", opt.trajectories, "posterior-predictive sample paths");
    cmd->add_flag("--force", opt.force, "skip the convergence gate");
    cmd->add_option("--countries", opt.countries, "restrict output to these country ids")
        ->delimiter(',');
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic TFR estimation and projection"};
  app.set_version_flag("--version", tfr::kVersion);
  app.require_subcommand(1);

  CommonOptions fit_opt, project_opt, validate_opt;
  CLI::App* fit = app.add_subcommand("fit", "estimate the phase models on a country pool");
  add_common_flags(fit, fit_opt, true, false);
  CLI::App* project = app.add_subcommand("project", "posterior-predictive projection");
  add_common_flags(project, project_opt, false, true);
  project->add_flag("--write-trajectories", project_opt.write_trajectories,
                    "also write full trajectory CSVs");
  CLI::App* validate =
      app.add_subcommand("validate", "goodness of fit and cross-validation reports");
  add_common_flags(validate, validate_opt, true, true);
  validate->add_option("--window-start", validate_opt.window_start,
                       "first year of the diagnostics window");
  validate->add_option("--cutoff", validate_opt.cutoff,
                       "hold out observations after this year and score them");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (app.exit(e) == 0) return kExitOk;
    json err{{"error", {{"type", "usage"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return kExitUsage;
  }

  const std::string command = fit->parsed() ? "fit" : project->parsed() ? "project" : "validate";
  CommonOptions& opt = fit->parsed() ? fit_opt : project->parsed() ? project_opt : validate_opt;

  RunManifest manifest(command, opt);
  try {
    int rc = kExitOk;
    if (fit->parsed())
      rc = cmd_fit(opt, manifest);
    else if (project->parsed())
      rc = cmd_project(opt, manifest);
    else
      rc = cmd_validate(opt, manifest);
    manifest.finish(rc);
    return rc;
  } catch (const tfr::ParseError& e) {
    manifest.finish(kExitUsage, "input", e.what());
    std::cerr << json{{"error", {{"type", "input"}, {"message", e.what()}}}}.dump() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    manifest.finish(kExitUsage, "usage", e.what());
    std::cerr << json{{"error", {{"type", "usage"}, {"message", e.what()}}}}.dump() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    manifest.finish(kExitComputational, "computational", e.what());
    std::cerr << json{{"error", {{"type", "computational"}, {"message", e.what()}}}}.dump()
              << "\n";
    return kExitComputational;
  }
}
