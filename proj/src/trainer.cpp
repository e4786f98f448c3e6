#include "cpokit/trainer.hpp"

#include "cpokit/log.hpp"

#include <chrono>
#include <cstring>
#include <ostream>
#include <set>

namespace cpokit {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t iteration_seed(std::uint64_t seed, std::uint64_t k) { return splitmix64(splitmix64(seed) + k); }

// Inputs for one update plus the evaluators the CPO line search and KL logging need.
struct IterationInputs {
  Vec g, a;
  double b = 0.0;
  SpdOperator fisher = SpdOperator::identity(1);
  std::function<double(const Vec&)> kl_eval;
  std::function<double(const Vec&)> cost_eval;
};

void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw std::invalid_argument("unknown field '" + key + "' in " + where);
}

}  // namespace

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::PcpoKl: return "pcpo-kl";
    case Algorithm::PcpoL2: return "pcpo-l2";
    case Algorithm::Cpo: return "cpo";
    case Algorithm::Pdo: return "pdo";
    case Algorithm::Fpo: return "fpo";
    case Algorithm::Trpo: return "trpo";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
  for (auto a : {Algorithm::PcpoKl, Algorithm::PcpoL2, Algorithm::Cpo, Algorithm::Pdo, Algorithm::Fpo, Algorithm::Trpo})
    if (s == to_string(a)) return a;
  throw std::invalid_argument("unknown algorithm '" + s + "'");
}

CmdpSpec preset_spec(const std::string& name) {
  if (name == "chain") return chain_cmdp();
  if (name == "point_circle") return PointCircleCmdp{};
  throw std::invalid_argument("unknown spec preset '" + name + "'");
}

void RunConfig::validate() const {
  cpokit::validate(spec);
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (batch_steps < 1) throw std::invalid_argument("batch_steps must be >= 1");
  if (cg_iters < 1) throw std::invalid_argument("cg_iters must be >= 1");
  if (!(damping >= 0.0) || !(init_scale >= 0.0)) throw std::invalid_argument("damping and init_scale must be >= 0");
  GaeConfig g = gae;
  g.gamma = discount(spec);
  g.validate();
  if (line_search.enabled) line_search.validate();
  const bool tabular = std::holds_alternative<TabularCmdp>(spec);
  if (oracle_mode && !tabular) throw std::invalid_argument("oracle_mode needs a tabular spec");
  if (record_bounds && !tabular) throw std::invalid_argument("record_bounds needs a tabular spec");
  if (algorithm == Algorithm::Pdo) {
    if (!dual) throw std::invalid_argument("pdo needs a 'dual' block with lambda and beta");
    if (!(dual->beta > 0.0)) throw std::invalid_argument("pdo needs a positive dual beta");
  }
  if (algorithm == Algorithm::Fpo && !dual) throw std::invalid_argument("fpo needs a 'dual' block with a fixed lambda");
  if (dual && !(dual->lambda >= 0.0)) throw std::invalid_argument("dual lambda must be >= 0");
  if (fisher_max_states < 1) throw std::invalid_argument("fisher_max_states must be >= 1");
  if (!tabular && eval_steps < 1) throw std::invalid_argument("eval_steps must be >= 1");
  for (auto w : hidden)
    if (w == 0) throw std::invalid_argument("hidden layer widths must be positive");
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["algorithm"] = to_string(cfg.algorithm);
  if (cfg.spec_name == "custom")
    j["spec"] = to_json(cfg.spec);
  else
    j["spec"] = cfg.spec_name;
  j["delta"] = cfg.delta;
  j["batch_steps"] = cfg.batch_steps;
  j["iterations"] = cfg.iterations;
  j["seed"] = cfg.seed;
  j["cg_iters"] = cfg.cg_iters;
  j["gae"] = {{"lambda_r", cfg.gae.lambda_r}, {"lambda_c", cfg.gae.lambda_c}};
  j["dual"] = cfg.dual ? nlohmann::json{{"lambda", cfg.dual->lambda}, {"beta", cfg.dual->beta}} : nlohmann::json();
  j["line_search"] = {{"enabled", cfg.line_search.enabled},
                      {"backtrack_ratio", cfg.line_search.backtrack_ratio},
                      {"max_backtracks", cfg.line_search.max_backtracks}};
  j["oracle_mode"] = cfg.oracle_mode;
  j["hidden"] = cfg.hidden;
  j["damping"] = cfg.damping;
  j["init_scale"] = cfg.init_scale;
  j["standardize_reward"] = cfg.standardize_reward;
  j["record_bounds"] = cfg.record_bounds;
  j["eval_steps"] = cfg.eval_steps;
  j["fisher_max_states"] = cfg.fisher_max_states;
  j["timing"] = cfg.timing;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  require_keys(j,
               {"algorithm", "spec", "delta", "batch_steps", "iterations", "seed", "cg_iters", "gae", "dual",
                "line_search", "oracle_mode", "hidden", "damping", "init_scale", "standardize_reward",
                "record_bounds", "eval_steps", "fisher_max_states", "timing"},
               "run config");
  RunConfig cfg;
  if (j.contains("algorithm")) cfg.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
  if (j.contains("spec")) {
    const auto& s = j.at("spec");
    if (s.is_string()) {
      cfg.spec_name = s.get<std::string>();
      cfg.spec = preset_spec(cfg.spec_name);
    } else {
      cfg.spec_name = "custom";
      cfg.spec = cmdp_from_json(s);
    }
  }
  if (j.contains("delta")) cfg.delta = j.at("delta").get<double>();
  if (j.contains("batch_steps")) cfg.batch_steps = j.at("batch_steps").get<std::size_t>();
  if (j.contains("iterations")) cfg.iterations = j.at("iterations").get<std::size_t>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("cg_iters")) cfg.cg_iters = j.at("cg_iters").get<int>();
  if (j.contains("gae")) {
    const auto& g = j.at("gae");
    require_keys(g, {"lambda_r", "lambda_c"}, "gae");
    if (g.contains("lambda_r")) cfg.gae.lambda_r = g.at("lambda_r").get<double>();
    if (g.contains("lambda_c")) cfg.gae.lambda_c = g.at("lambda_c").get<double>();
  }
  if (j.contains("dual") && !j.at("dual").is_null()) {
    const auto& d = j.at("dual");
    require_keys(d, {"lambda", "beta"}, "dual");
    DualState ds;
    if (d.contains("lambda")) ds.lambda = d.at("lambda").get<double>();
    if (d.contains("beta")) ds.beta = d.at("beta").get<double>();
    cfg.dual = ds;
  }
  if (j.contains("line_search")) {
    const auto& l = j.at("line_search");
    require_keys(l, {"enabled", "backtrack_ratio", "max_backtracks"}, "line_search");
    if (l.contains("enabled")) cfg.line_search.enabled = l.at("enabled").get<bool>();
    if (l.contains("backtrack_ratio")) cfg.line_search.backtrack_ratio = l.at("backtrack_ratio").get<double>();
    if (l.contains("max_backtracks")) cfg.line_search.max_backtracks = l.at("max_backtracks").get<int>();
  }
  if (j.contains("oracle_mode")) cfg.oracle_mode = j.at("oracle_mode").get<bool>();
  if (j.contains("hidden")) cfg.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  if (j.contains("damping")) cfg.damping = j.at("damping").get<double>();
  if (j.contains("init_scale")) cfg.init_scale = j.at("init_scale").get<double>();
  if (j.contains("standardize_reward")) cfg.standardize_reward = j.at("standardize_reward").get<bool>();
  if (j.contains("record_bounds")) cfg.record_bounds = j.at("record_bounds").get<bool>();
  if (j.contains("eval_steps")) cfg.eval_steps = j.at("eval_steps").get<std::size_t>();
  if (j.contains("fisher_max_states")) cfg.fisher_max_states = j.at("fisher_max_states").get<std::size_t>();
  if (j.contains("timing")) cfg.timing = j.at("timing").get<bool>();
  cfg.validate();
  return cfg;
}

std::uint64_t theta_hash(const Vec& theta) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &theta[i], sizeof bits);
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void write_run_csv_header(std::ostream& os) {
  os << "# schema=1\n";
  os << "iter,jr,jc,jc_undisc,kl,proj_active,wall_ms,skipped,jr_exact,jc_exact,dual_lambda,theta_hash\n";
}

void write_run_csv_row(std::ostream& os, const IterationRecord& r) {
  const auto old_precision = os.precision(17);
  os << r.iter << ',' << r.jr_hat << ',' << r.jc_hat << ',' << r.jc_undiscounted << ',' << r.kl_to_prev << ','
     << (r.projection_active ? 1 : 0) << ',' << r.wall_ms << ',' << (r.skipped ? 1 : 0) << ',' << r.jr_exact << ','
     << r.jc_exact << ',' << r.dual_lambda << ',' << r.theta_hash << '\n';
  os.precision(old_precision);
}

void write_run_csv(std::ostream& os, const std::vector<IterationRecord>& records) {
  write_run_csv_header(os);
  for (const auto& r : records) write_run_csv_row(os, r);
}

TrainResult train(const RunConfig& cfg, std::ostream* csv) {
  cfg.validate();
  const CmdpSpec& spec = cfg.spec;
  const auto* tab = std::get_if<TabularCmdp>(&spec);
  const double gamma = discount(spec);
  const double h = threshold(spec);
  GaeConfig gae = cfg.gae;
  gae.gamma = gamma;
  EstimationOptions est_opts;
  est_opts.standardize_reward = cfg.standardize_reward;
  est_opts.damping = cfg.damping;
  est_opts.fisher_max_states = cfg.fisher_max_states;
  const CgOptions cg{cfg.cg_iters, 1e-10};

  PolicyParams p = init_policy(default_family(spec, cfg.hidden), cfg.seed, cfg.init_scale);
  DualState dual = cfg.dual.value_or(DualState{});
  LinearBaseline base_r(spec), base_c(spec);

  TrainResult out;
  if (csv) write_run_csv_header(*csv);

  std::size_t skips = 0;
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.iter = k;
    rec.theta_hash = theta_hash(p.theta);

    IterationInputs in;
    if (cfg.oracle_mode) {
      const TabularEvaluation ev = evaluate_exact(*tab, p);
      in.g = exact_gradient(*tab, p, ev.adv_r, ev.d_pi);
      in.a = exact_gradient(*tab, p, ev.adv_c, ev.d_pi);
      in.b = ev.j_c - h;
      in.fisher = SpdOperator::from_matrix(tabular_fisher(p, ev.d_pi), cfg.damping);
      in.kl_eval = [p, d = ev.d_pi](const Vec& th) { return weighted_mean_kl(PolicyParams{th, p.family}, p, d); };
      in.cost_eval = [p, tab, h](const Vec& th) { return evaluate_exact(*tab, PolicyParams{th, p.family}).j_c - h; };
      rec.jr_hat = ev.j_r;
      rec.jc_hat = ev.j_c;
      rec.jr_exact = ev.j_r;
      rec.jc_exact = ev.j_c;
      rec.jc_undiscounted = expected_undiscounted_cost(*tab, p);
    } else {
      auto batch = std::make_shared<TrajectoryBatch>(collect(spec, p, cfg.batch_steps, iteration_seed(cfg.seed, k)));
      ValueFn vr, vc;
      if (tab) {
        vr = exact_tabular_baseline(*tab, p, Channel::Reward);
        vc = exact_tabular_baseline(*tab, p, Channel::Cost);
      } else {
        base_r.fit(*batch, Channel::Reward);
        base_c.fit(*batch, Channel::Cost);
        vr = base_r.as_function();
        vc = base_c.as_function();
      }
      auto emp = std::make_shared<EmpiricalInputs>(build_update_inputs(*batch, p, gae, spec, vr, vc, est_opts));
      in.g = emp->g;
      in.a = emp->a;
      in.b = emp->b;
      in.fisher = emp->fisher.op;
      in.kl_eval = [p, emp](const Vec& th) { return mean_kl(PolicyParams{th, p.family}, p, emp->fisher_states); };
      in.cost_eval = [p, emp, batch, gamma](const Vec& th) {
        return surrogate_cost(*batch, p, PolicyParams{th, p.family}, emp->adv_c, gamma, emp->b);
      };
      rec.jr_hat = emp->jr_hat;
      rec.jc_hat = emp->jc_hat;
      rec.jc_undiscounted = emp->jc_undisc;
      if (tab) {
        const TabularEvaluation ev = evaluate_exact(*tab, p);
        rec.jr_exact = ev.j_r;
        rec.jc_exact = ev.j_c;
      }
    }

    const UpdateInputs inp{p.theta, in.g, in.a, in.b, in.fisher, cfg.delta, cg};
    if (theta_hash(inp.theta) != rec.theta_hash) throw std::logic_error("update input is not the collecting policy");
    Vec next = p.theta;
    // Converged policies skip every iteration; warn once, then log at debug level.
    auto skip = [&](std::size_t iter, const char* why) {
      rec.skipped = true;
      logger()->log(skips++ == 0 ? spdlog::level::warn : spdlog::level::debug, "iteration {} skipped: {}", iter, why);
    };
    try {
      switch (cfg.algorithm) {
        case Algorithm::PcpoKl:
        case Algorithm::PcpoL2: {
          const auto metric = cfg.algorithm == Algorithm::PcpoKl ? ProjectionMetric::KL : ProjectionMetric::L2;
          const UpdateResult r = pcpo_update(inp, metric);
          next = r.theta_next;
          rec.projection_active = r.projection_active;
          break;
        }
        case Algorithm::Trpo:
          next = trpo_update(inp);
          break;
        case Algorithm::Cpo: {
          const CpoResult r = cpo_step(inp, cfg.line_search, in.kl_eval, in.cost_eval);
          next = r.theta_next;
          rec.projection_active = r.kind != CpoCase::Unconstrained;
          break;
        }
        case Algorithm::Pdo: {
          const PdoResult r = pdo_update(inp, dual, rec.jc_hat, h);
          next = r.step.theta_next;
          rec.skipped = r.step.skipped;
          dual = r.dual;
          break;
        }
        case Algorithm::Fpo: {
          const PenaltyStep r = fpo_step(inp, dual.lambda);
          next = r.theta_next;
          rec.skipped = r.skipped;
          break;
        }
      }
    } catch (const UpdateError& e) {
      skip(k, e.what());
      next = p.theta;
    } catch (const NumericalBreakdown& e) {
      skip(k, e.what());
      next = p.theta;
    }
    if (!all_finite(next)) {
      skip(k, "non-finite update");
      next = p.theta;
    }

    PolicyParams p_next{next, p.family};
    rec.kl_to_prev = rec.skipped ? 0.0 : in.kl_eval(next);
    if (cfg.record_bounds) rec.bound_report = bound_report(*tab, p, p_next, cfg.delta, in.a, in.fisher);
    rec.dual_lambda = dual.lambda;
    p = std::move(p_next);
    if (cfg.timing)
      rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    logger()->debug("iter {} jr {:.5f} jc {:.5f} kl {:.3e} proj {}", k, rec.jr_hat, rec.jc(), rec.kl_to_prev,
                    rec.projection_active);
    if (csv) {
      write_run_csv_row(*csv, rec);
      if ((k + 1) % 10 == 0) csv->flush();
    }
    out.records.push_back(std::move(rec));
  }
  if (csv) csv->flush();

  out.final_policy = p;
  if (tab) {
    const TabularEvaluation ev = evaluate_exact(*tab, p);
    out.final_jr = ev.j_r;
    out.final_jc = ev.j_c;
  } else {
    const TrajectoryBatch eval = collect(spec, p, cfg.eval_steps, iteration_seed(cfg.seed, cfg.iterations + 1000003));
    double jr = 0.0, jc = 0.0;
    for (const auto& ep : eval.episodes) {
      double disc = 1.0;
      for (std::size_t t = 0; t < ep.size(); ++t) {
        jr += disc * ep.rewards[t];
        jc += disc * ep.costs[t];
        disc *= gamma;
      }
    }
    out.final_jr = jr / static_cast<double>(eval.episodes.size());
    out.final_jc = jc / static_cast<double>(eval.episodes.size());
  }
  return out;
}

nlohmann::json run_summary_json(const RunConfig& cfg, const TrainResult& res) {
  nlohmann::json j;
  j["config"] = to_json(cfg);
  j["seed"] = cfg.seed;
  j["iterations"] = res.records.size();
  j["final_theta_checksum"] = theta_hash(res.final_policy.theta);
  j["final_jr"] = res.final_jr;
  j["final_jc"] = res.final_jc;
  j["h"] = threshold(cfg.spec);
  return j;
}

}  // namespace cpokit
