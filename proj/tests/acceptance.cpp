// Acceptance criteria 1 to 9. Prints one PASS/FAIL line per criterion and
// exits nonzero when any requested criterion fails.

#include "cpokit/verify.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <thread>

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int criterion = 0;
  std::string out_dir;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  bool verbose = false;
  app.add_option("--criterion", criterion, "1..9, or 0 for all")->check(CLI::Range(0, 9));
  app.add_option("--out", out_dir, "Directory for CSV artifacts");
  app.add_option("--jobs", jobs, "Worker threads for the behavior criterion")->check(CLI::PositiveNumber);
  app.add_flag("--verbose", verbose, "Print every check");
  CLI11_PARSE(app, argc, argv);

  // Time limits per criterion, in seconds.
  const std::map<int, std::pair<std::string, double>> criteria{
      {1, {"kkt", 10.0}},      {2, {"lemmas", 5.0}},   {3, {"toy2d", 5.0}},
      {4, {"bounds", 60.0}},   {5, {"objective", 5.0}}, {6, {"numerics", 30.0}},
      {7, {"identity", 10.0}}, {8, {"behavior", 900.0}}, {9, {"cg", 5.0}}};

  bool all_ok = true;
  for (const auto& [id, entry] : criteria) {
    if (criterion != 0 && criterion != id) continue;
    const auto& [suite, limit] = entry;
    const auto report = cpokit::verify::run_suite(suite, out_dir, jobs);
    const bool in_time = report.seconds <= limit;
    const bool ok = report.passed() && in_time;
    std::size_t failed = 0;
    for (const auto& c : report.checks) failed += !c.passed;
    std::cout << "criterion " << id << " (" << suite << "): " << (ok ? "PASS" : "FAIL") << "  checks "
              << report.checks.size() - failed << "/" << report.checks.size() << "  time " << report.seconds
              << " s (limit " << limit << " s)\n";
    if (verbose || !ok)
      for (const auto& c : report.checks)
        std::cout << "  " << (c.passed ? "ok  " : "FAIL") << " " << c.name << ": " << c.detail << "\n";
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 1;
}
