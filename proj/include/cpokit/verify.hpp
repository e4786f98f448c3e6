#pragma once

// Oracle and property suites shared by `cpokit verify` and the acceptance
// binary. Each suite returns named checks with pass/fail and a detail line.

#include "cpokit/trainer.hpp"

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace cpokit::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  bool passed() const;
  void add(std::string name, bool ok, std::string detail);
};

/// Closed-form update vs the two-stage oracle, 100 random instances per metric.
SuiteReport kkt_suite();
/// Non-expansiveness and variational-inequality certificates (200 instances per
/// metric) plus the alternating-projection intersection checks.
SuiteReport lemma_suite();
/// Worst-case bounds over oracle-mode PCPO-KL updates on the chain task.
/// Writes bounds.csv into `out_dir` when it is non-empty.
SuiteReport bounds_suite(const std::string& out_dir = "");
/// Toy 2-D problem: stationary points, KL path, L2 escape, metric search.
/// Writes toy2d_path.csv and toy2d_field.csv into `out_dir` when non-empty.
SuiteReport toy2d_suite(const std::string& out_dir = "");
/// Objective-change inequalities on the synthetic smooth harness.
SuiteReport objective_change_suite();
/// Score-function gradients, Fisher products and the KL quadratic expansion.
SuiteReport numerics_suite();
/// Performance-difference identity on 100 random tabular policy pairs.
SuiteReport identity_suite();
/// CG exactness and spectrum estimates against dense oracles.
SuiteReport cg_suite();
/// Multi-seed training comparison on the chain and point-circle tasks.
/// Writes per-run CSVs under `out_dir` when non-empty.
SuiteReport behavior_suite(std::size_t jobs = 1, const std::string& out_dir = "");

/// Run configuration used by the behavior suite for one environment, algorithm and seed.
RunConfig behavior_config(const std::string& env, Algorithm algo, std::uint64_t seed);

/// Suite names accepted by run_suite: kkt lemmas bounds toy2d objective numerics identity cg behavior.
const std::vector<std::string>& suite_names();
SuiteReport run_suite(const std::string& name, const std::string& out_dir = "", std::size_t jobs = 1);

void print_report(std::ostream& os, const SuiteReport& report);

}  // namespace cpokit::verify
