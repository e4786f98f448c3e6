#include "cpokit/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cpokit {

void GaeConfig::validate() const {
  if (!(lambda_r >= 0.0 && lambda_r <= 1.0) || !(lambda_c >= 0.0 && lambda_c <= 1.0))
    throw std::invalid_argument("GAE lambdas must lie in [0, 1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("GAE gamma must lie in (0, 1)");
}

TrajectoryBatch collect(const CmdpSpec& spec, const PolicyParams& p, std::size_t batch_steps, std::uint64_t seed) {
  if (batch_steps == 0) throw std::invalid_argument("collect: batch_steps must be >= 1");
  std::mt19937_64 rng(seed);
  TrajectoryBatch batch;
  batch.seed = seed;
  while (batch.total_steps < batch_steps) {
    Episode ep;
    EnvState st = reset(spec, rng);
    for (bool done = false; !done;) {
      Action a = sample(p, st.obs, rng);
      StepResult r = step(spec, st, a, rng);
      ep.states.push_back(st.obs);
      ep.actions.push_back(std::move(a));
      ep.rewards.push_back(r.reward);
      ep.costs.push_back(r.cost);
      ep.dones.push_back(r.done ? 1 : 0);
      done = r.done;
      st = std::move(r.next);
    }
    batch.total_steps += ep.size();
    batch.episodes.push_back(std::move(ep));
  }
  return batch;
}

std::vector<Vec> gae_advantages(const TrajectoryBatch& batch, const ValueFn& values, const GaeConfig& cfg,
                                Channel channel) {
  cfg.validate();
  const double lam = channel == Channel::Reward ? cfg.lambda_r : cfg.lambda_c;
  std::vector<Vec> out;
  out.reserve(batch.episodes.size());
  for (const auto& ep : batch.episodes) {
    const auto& x = channel == Channel::Reward ? ep.rewards : ep.costs;
    const std::size_t n = ep.size();
    Vec v(static_cast<Eigen::Index>(n));
    for (std::size_t t = 0; t < n; ++t) v[static_cast<Eigen::Index>(t)] = values(ep.states[t], t);
    if (!v.allFinite()) throw std::invalid_argument("gae_advantages: non-finite baseline values");
    Vec adv(static_cast<Eigen::Index>(n));
    double next_adv = 0.0;
    for (std::size_t t = n; t-- > 0;) {
      const auto i = static_cast<Eigen::Index>(t);
      const bool terminal = ep.dones[t] != 0 || t + 1 == n;
      const double next_v = terminal ? 0.0 : v[i + 1];
      const double td = x[t] + cfg.gamma * next_v - v[i];
      next_adv = td + (terminal ? 0.0 : cfg.gamma * lam * next_adv);
      adv[i] = next_adv;
    }
    out.push_back(std::move(adv));
  }
  return out;
}

std::vector<Vec> discounted_to_go(const TrajectoryBatch& batch, double gamma, Channel channel) {
  std::vector<Vec> out;
  out.reserve(batch.episodes.size());
  for (const auto& ep : batch.episodes) {
    const auto& x = channel == Channel::Reward ? ep.rewards : ep.costs;
    Vec ret(static_cast<Eigen::Index>(ep.size()));
    double acc = 0.0;
    for (std::size_t t = ep.size(); t-- > 0;) {
      acc = x[t] + gamma * acc;
      ret[static_cast<Eigen::Index>(t)] = acc;
    }
    out.push_back(std::move(ret));
  }
  return out;
}

LinearBaseline::LinearBaseline(const CmdpSpec& spec, double ridge) : spec_(spec), ridge_(ridge) {
  const auto* t = std::get_if<TabularCmdp>(&spec_);
  weights_ = Vec::Zero(t ? static_cast<Eigen::Index>(t->n_states) + 3 : 10);
}

Vec LinearBaseline::features(const State& s, std::size_t t) const {
  const double tau = static_cast<double>(t) / static_cast<double>(horizon(spec_));
  if (const auto* t_spec = std::get_if<TabularCmdp>(&spec_)) {
    const auto n = static_cast<Eigen::Index>(t_spec->n_states);
    Vec f = Vec::Zero(n + 3);
    f[static_cast<Eigen::Index>(std::get<std::size_t>(s))] = 1.0;
    f[n] = tau;
    f[n + 1] = tau * tau;
    f[n + 2] = tau * tau * tau;
    return f;
  }
  const Vec& pos = std::get<Vec>(s);
  const double x = pos[0], y = pos[1];
  Vec f(10);
  f << 1.0, x, y, x * x, y * y, x * y, pos.norm(), tau, tau * tau, tau * tau * tau;
  return f;
}

void LinearBaseline::fit(const TrajectoryBatch& batch, Channel channel) {
  const auto returns = discounted_to_go(batch, discount(spec_), channel);
  const auto k = weights_.size();
  Mat xtx = Mat::Zero(k, k);
  Vec xty = Vec::Zero(k);
  for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
    const auto& ep = batch.episodes[e];
    for (std::size_t t = 0; t < ep.size(); ++t) {
      const Vec f = features(ep.states[t], t);
      xtx.noalias() += f * f.transpose();
      xty.noalias() += returns[e][static_cast<Eigen::Index>(t)] * f;
    }
  }
  const double scale = std::max(1.0, xtx.diagonal().mean());
  xtx.diagonal().array() += ridge_ * scale;
  weights_ = xtx.ldlt().solve(xty);
}

double LinearBaseline::operator()(const State& s, std::size_t t) const { return features(s, t).dot(weights_); }

ValueFn LinearBaseline::as_function() const {
  return [self = *this](const State& s, std::size_t t) { return self(s, t); };
}

ValueFn exact_tabular_baseline(const TabularCmdp& spec, const PolicyParams& p, Channel channel) {
  const TabularEvaluation ev = evaluate_exact(spec, p);
  Vec v = channel == Channel::Reward ? ev.v_r : ev.v_c;
  return [v = std::move(v)](const State& s, std::size_t) { return v[static_cast<Eigen::Index>(std::get<std::size_t>(s))]; };
}

EmpiricalInputs build_update_inputs(const TrajectoryBatch& batch, const PolicyParams& p, const GaeConfig& cfg,
                                    const CmdpSpec& spec, const ValueFn& baseline_r, const ValueFn& baseline_c,
                                    const EstimationOptions& opts) {
  if (batch.episodes.empty() || batch.total_steps == 0) throw std::invalid_argument("build_update_inputs: empty batch");
  cfg.validate();
  const double gamma = cfg.gamma;
  auto adv_r = gae_advantages(batch, baseline_r, cfg, Channel::Reward);
  auto adv_c = gae_advantages(batch, baseline_c, cfg, Channel::Cost);

  if (opts.standardize_reward) {
    double sum = 0.0, sq = 0.0;
    for (const auto& a : adv_r) {
      sum += a.sum();
      sq += a.squaredNorm();
    }
    const double n = static_cast<double>(batch.total_steps);
    const double mean = sum / n;
    const double sd = std::sqrt(std::max(sq / n - mean * mean, 0.0));
    for (auto& a : adv_r) a = (a.array() - mean) / (sd + 1e-8);
  }

  const auto n_params = p.theta.size();
  EmpiricalInputs out;
  out.g = Vec::Zero(n_params);
  out.a = Vec::Zero(n_params);
  std::vector<State> all_states;
  all_states.reserve(batch.total_steps);
  for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
    const auto& ep = batch.episodes[e];
    double disc = 1.0, jr = 0.0, jc = 0.0, jc_u = 0.0;
    for (std::size_t t = 0; t < ep.size(); ++t) {
      const auto i = static_cast<Eigen::Index>(t);
      const Vec score = grad_log_prob(p, ep.states[t], ep.actions[t]);
      out.g.noalias() += (disc * adv_r[e][i]) * score;
      out.a.noalias() += (disc * adv_c[e][i]) * score;
      jr += disc * ep.rewards[t];
      jc += disc * ep.costs[t];
      jc_u += ep.costs[t];
      disc *= gamma;
      all_states.push_back(ep.states[t]);
    }
    out.jr_hat += jr;
    out.jc_hat += jc;
    out.jc_undisc += jc_u;
  }
  const double n_ep = static_cast<double>(batch.episodes.size());
  out.g /= n_ep;
  out.a /= n_ep;
  out.jr_hat /= n_ep;
  out.jc_hat /= n_ep;
  out.jc_undisc /= n_ep;
  out.b = out.jc_hat - threshold(spec);

  if (all_states.size() > opts.fisher_max_states) {
    std::vector<std::size_t> idx(all_states.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(batch.seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(opts.fisher_max_states);
    std::sort(idx.begin(), idx.end());
    for (std::size_t k = 0; k < idx.size(); ++k) out.fisher_states.push_back(all_states[idx[k]]);
  } else {
    out.fisher_states = std::move(all_states);
  }
  out.fisher = estimate_fisher(p, out.fisher_states, opts.damping);
  out.adv_c = std::move(adv_c);
  if (!all_finite(out.g) || !all_finite(out.a) || !std::isfinite(out.b))
    throw NumericalBreakdown("build_update_inputs: non-finite estimate", 0);
  return out;
}

double surrogate_cost(const TrajectoryBatch& batch, const PolicyParams& p_old, const PolicyParams& p_new,
                      const std::vector<Vec>& adv_c, double gamma, double b) {
  double total = 0.0;
  for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
    const auto& ep = batch.episodes[e];
    double disc = 1.0;
    for (std::size_t t = 0; t < ep.size(); ++t) {
      const double ratio = std::exp(log_prob(p_new, ep.states[t], ep.actions[t]) -
                                    log_prob(p_old, ep.states[t], ep.actions[t]));
      total += disc * (ratio - 1.0) * adv_c[e][static_cast<Eigen::Index>(t)];
      disc *= gamma;
    }
  }
  return b + total / static_cast<double>(batch.episodes.size());
}

}  // namespace cpokit
