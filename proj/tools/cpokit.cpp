// cpokit: train constrained policies and run the verification suites.
//
// Exit codes: 0 success, 1 verification failure, 2 configuration error,
// 3 runtime failure.

#include "cpokit/log.hpp"
#include "cpokit/trainer.hpp"
#include "cpokit/verify.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <regex>
#include <thread>

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  static const std::regex range(R"(^(\d+)\.\.(\d+)$)");
  static const std::regex single(R"(^\d+$)");
  std::smatch m;
  if (std::regex_match(text, m, range)) {
    const auto lo = std::stoull(m[1]);
    const auto hi = std::stoull(m[2]);
    if (hi < lo) throw ConfigError("seed range " + text + " is empty");
    std::vector<std::uint64_t> out;
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  if (std::regex_match(text, single)) return {std::stoull(text)};
  throw ConfigError("--seed expects N or A..B, got '" + text + "'");
}

cpokit::RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  try {
    return cpokit::run_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

// Last `jc` column value of a run.csv.
double last_jc(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#' && line.rfind("iter,", 0) != 0) last = line;
  if (last.empty()) throw std::runtime_error("no rows in " + csv.string());
  std::stringstream ss(last);
  std::string field;
  std::getline(ss, field, ',');
  std::getline(ss, field, ',');
  std::getline(ss, field, ',');
  return std::stod(field);
}

void run_one(const cpokit::RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream csv(dir / "run.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write '" + (dir / "run.csv").string() + "'");
  const cpokit::TrainResult res = cpokit::train(cfg, &csv);
  csv.close();
  if (!csv) throw std::runtime_error("write failed for run.csv in " + dir.string());
  write_file(dir / "run.json", cpokit::run_summary_json(cfg, res).dump(2) + "\n");
}

int cmd_train(const std::string& config_path, const std::string& out_dir, const std::string& seed_text,
              const std::string& algo, std::size_t jobs, bool timing) {
  cpokit::RunConfig base = load_config(config_path);
  if (!algo.empty()) {
    try {
      base.algorithm = cpokit::algorithm_from_string(algo);
      base.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (timing) base.timing = true;
  const std::vector<std::uint64_t> seeds = seed_text.empty() ? std::vector<std::uint64_t>{base.seed}
                                                             : parse_seeds(seed_text);
  const fs::path out(out_dir);
  try {
    fs::create_directories(out);
  } catch (const fs::filesystem_error& e) {
    throw std::runtime_error(std::string("cannot create output directory: ") + e.what());
  }

  if (seeds.size() == 1 && (seed_text.empty() || seed_text.find("..") == std::string::npos)) {
    base.seed = seeds.front();
    run_one(base, out);
    return kOk;
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::string first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        cpokit::RunConfig cfg = base;
        cfg.seed = seeds[i];
        run_one(cfg, out / ("seed_" + std::to_string(seeds[i])));
      } catch (const std::exception& e) {
        std::lock_guard lock(err_mu);
        if (first_error.empty()) first_error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::max<std::size_t>(1, std::min(jobs, seeds.size())); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (!first_error.empty()) throw std::runtime_error(first_error);

  std::vector<double> finals;
  for (auto s : seeds) finals.push_back(last_jc(out / ("seed_" + std::to_string(s)) / "run.csv"));
  double mean = 0.0;
  for (double v : finals) mean += v;
  mean /= static_cast<double>(finals.size());
  double var = 0.0;
  for (double v : finals) var += (v - mean) * (v - mean);
  var /= static_cast<double>(finals.size());
  nlohmann::json agg;
  agg["seeds"] = seeds;
  agg["final_jc"] = {{"values", finals}, {"mean", mean}, {"std", std::sqrt(var)}};
  agg["algorithm"] = cpokit::to_string(base.algorithm);
  write_file(out / "aggregate.json", agg.dump(2) + "\n");
  return kOk;
}

int cmd_verify(const std::string& suite, const std::string& out_dir, std::size_t jobs) {
  std::vector<std::string> names;
  if (suite == "all") {
    for (const auto& n : cpokit::verify::suite_names())
      if (n != "behavior") names.push_back(n);
  } else {
    const auto& known = cpokit::verify::suite_names();
    if (std::find(known.begin(), known.end(), suite) == known.end()) throw ConfigError("unknown suite '" + suite + "'");
    names.push_back(suite);
  }
  if (!out_dir.empty()) fs::create_directories(out_dir);
  bool ok = true;
  for (const auto& n : names) {
    const auto report = cpokit::verify::run_suite(n, out_dir, jobs);
    cpokit::verify::print_report(std::cout, report);
    ok = ok && report.passed();
  }
  std::cout << (ok ? "ALL PASSED" : "FAILURES PRESENT") << "\n";
  return ok ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained policy optimization lab"};
  app.require_subcommand(1);

  std::string config, out = ".", seed_text, algo;
  std::size_t jobs = 1;
  bool timing = false;
  auto* train = app.add_subcommand("train", "Train one run or a seed sweep");
  train->add_option("--config", config, "Run configuration JSON")->required();
  train->add_option("--out", out, "Output directory");
  train->add_option("--seed", seed_text, "Seed N, or sweep A..B (one subdirectory per seed)");
  train->add_option("--algo", algo, "pcpo-kl|pcpo-l2|cpo|pdo|fpo|trpo (overrides the config)");
  train->add_option("--jobs", jobs, "Worker threads for seed sweeps")->check(CLI::PositiveNumber);
  train->add_flag("--timing", timing, "Record wall-clock milliseconds per iteration");

  std::string suite = "all", verify_out;
  auto* verify = app.add_subcommand("verify", "Run verification suites");
  verify->add_option("--suite", suite, "kkt|lemmas|bounds|toy2d|objective|numerics|identity|cg|behavior|all");
  verify->add_option("--out", verify_out, "Directory for CSV artifacts");
  verify->add_option("--jobs", jobs, "Worker threads for the behavior suite")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(config, out, seed_text, algo, jobs, timing);
    return cmd_verify(suite, verify_out, jobs);
  } catch (const ConfigError& e) {
    cpokit::logger()->error("{}", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    cpokit::logger()->error("{}", e.what());
    return kRuntimeError;
  }
}
