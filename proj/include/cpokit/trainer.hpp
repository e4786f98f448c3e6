#pragma once

// Outer training loop: collect a fresh on-policy batch (or compute exact
// inputs in oracle mode), build g, a, b, H, apply one update rule, log.

#include "cpokit/analysis.hpp"
#include "cpokit/baselines.hpp"
#include "cpokit/estimation.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cpokit {

enum class Algorithm { PcpoKl, PcpoL2, Cpo, Pdo, Fpo, Trpo };

const char* to_string(Algorithm a);
/// Accepts pcpo-kl, pcpo-l2, cpo, pdo, fpo, trpo.
Algorithm algorithm_from_string(const std::string& s);

struct RunConfig {
  Algorithm algorithm = Algorithm::PcpoKl;
  CmdpSpec spec = chain_cmdp();
  std::string spec_name = "chain";  ///< preset name, or "custom" for an inline spec
  double delta = 1e-4;
  std::size_t batch_steps = 2000;
  std::size_t iterations = 100;
  std::uint64_t seed = 0;
  int cg_iters = 10;
  GaeConfig gae{};
  /// PDO: initial multiplier and dual step (required). FPO: lambda is the fixed multiplier.
  std::optional<DualState> dual;
  LineSearchConfig line_search{};
  bool oracle_mode = false;
  std::vector<std::size_t> hidden{8};
  double damping = 1e-8;
  double init_scale = 0.1;
  bool standardize_reward = true;
  bool record_bounds = false;
  /// Steps of the final evaluation rollout for sampled J estimates (continuous specs).
  std::size_t eval_steps = 20000;
  /// Fisher-vector products average over at most this many subsampled batch states.
  std::size_t fisher_max_states = 512;
  bool timing = false;

  /// Throws std::invalid_argument on any inconsistency.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Strict parse: unknown fields are errors; "spec" is a preset name or an inline CMDP object.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Preset specs: "chain" and "point_circle".
CmdpSpec preset_spec(const std::string& name);

struct IterationRecord {
  std::size_t iter = 0;
  double jr_hat = 0.0;
  double jc_hat = 0.0;  ///< discounted; exact in oracle mode
  double jc_undiscounted = 0.0;
  double jr_exact = std::numeric_limits<double>::quiet_NaN();
  double jc_exact = std::numeric_limits<double>::quiet_NaN();
  double kl_to_prev = 0.0;
  bool projection_active = false;
  bool skipped = false;
  double dual_lambda = 0.0;
  std::int64_t wall_ms = 0;
  std::uint64_t theta_hash = 0;  ///< hash of the parameters that generated this iteration's data
  std::optional<BoundReport> bound_report;

  /// Discounted cost used for violation accounting: exact when available.
  double jc() const { return std::isnan(jc_exact) ? jc_hat : jc_exact; }
};

struct TrainResult {
  std::vector<IterationRecord> records;
  PolicyParams final_policy;
  double final_jr = 0.0;
  double final_jc = 0.0;  ///< exact for tabular, rollout estimate otherwise
};

std::uint64_t theta_hash(const Vec& theta);

/// When `csv` is given, the header and each record are streamed to it, flushed every 10 iterations.
TrainResult train(const RunConfig& cfg, std::ostream* csv = nullptr);

/// Fixed header: iter,jr,jc,jc_undisc,kl,proj_active,wall_ms,skipped,jr_exact,jc_exact,dual_lambda,theta_hash
void write_run_csv(std::ostream& os, const std::vector<IterationRecord>& records);
void write_run_csv_header(std::ostream& os);
void write_run_csv_row(std::ostream& os, const IterationRecord& r);
nlohmann::json run_summary_json(const RunConfig& cfg, const TrainResult& res);

}  // namespace cpokit
