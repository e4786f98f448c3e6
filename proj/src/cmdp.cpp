#include "cpokit/cmdp.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <string>

namespace cpokit {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

// Policy-averaged transition matrix and per-state expected reward/cost.
Mat policy_transition(const TabularCmdp& spec, const Mat& pi) {
  Mat p = Mat::Zero(idx(spec.n_states), idx(spec.n_states));
  for (std::size_t s = 0; s < spec.n_states; ++s)
    for (std::size_t a = 0; a < spec.n_actions; ++a)
      p.row(idx(s)) += pi(idx(s), idx(a)) * spec.transition.row(idx(s * spec.n_actions + a));
  return p;
}

struct Channel {
  Vec v;
  Mat q;
  Mat adv;
};

Channel evaluate_channel(const TabularCmdp& spec, const Mat& pi, const Eigen::PartialPivLU<Mat>& lu,
                         const Mat& signal) {
  const Vec r_pi = (pi.array() * signal.array()).rowwise().sum();
  Channel c;
  c.v = lu.solve(r_pi);
  c.q.resize(idx(spec.n_states), idx(spec.n_actions));
  for (std::size_t s = 0; s < spec.n_states; ++s)
    for (std::size_t a = 0; a < spec.n_actions; ++a)
      c.q(idx(s), idx(a)) =
          signal(idx(s), idx(a)) + spec.gamma * spec.transition.row(idx(s * spec.n_actions + a)).dot(c.v);
  c.adv = c.q.colwise() - c.v;
  return c;
}

void check_tabular_policy(const TabularCmdp& spec, const PolicyParams& p) {
  const auto* t = std::get_if<TabularSoftmax>(&p.family);
  if (!t || t->n_states != spec.n_states || t->n_actions != spec.n_actions)
    throw ShapeError("policy does not match the tabular CMDP dimensions");
  p.validate();
}

void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw std::invalid_argument("CMDP spec must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw std::invalid_argument("unknown CMDP spec field '" + key + "'");
  for (const auto& key : allowed)
    if (!j.contains(key)) throw std::invalid_argument("missing CMDP spec field '" + key + "'");
}

Mat matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols, const char* name) {
  if (!j.is_array() || j.size() != rows) throw std::invalid_argument(std::string(name) + ": wrong outer length");
  Mat m(idx(rows), idx(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw std::invalid_argument(std::string(name) + ": wrong row length");
    for (std::size_t c = 0; c < cols; ++c) m(idx(r), idx(c)) = j[r][c].get<double>();
  }
  return m;
}

nlohmann::json matrix_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void TabularCmdp::validate() const {
  if (n_states == 0 || n_actions == 0) throw std::invalid_argument("tabular CMDP needs states and actions");
  if (transition.rows() != idx(n_states * n_actions) || transition.cols() != idx(n_states))
    throw std::invalid_argument("transition must be (n_states*n_actions) x n_states");
  if (reward.rows() != idx(n_states) || reward.cols() != idx(n_actions) || cost.rows() != idx(n_states) ||
      cost.cols() != idx(n_actions))
    throw std::invalid_argument("reward and cost must be n_states x n_actions");
  if ((transition.array() < 0.0).any()) throw std::invalid_argument("transition has negative entries");
  for (Eigen::Index r = 0; r < transition.rows(); ++r)
    if (std::abs(transition.row(r).sum() - 1.0) > 1e-12)
      throw std::invalid_argument("transition row " + std::to_string(r) + " does not sum to 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
  if (mu.size() != idx(n_states) || (mu.array() < 0.0).any() || std::abs(mu.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("mu must be a distribution over states");
  if (horizon == 0) throw std::invalid_argument("horizon must be positive");
  if (!reward.allFinite() || !cost.allFinite() || !std::isfinite(h))
    throw std::invalid_argument("reward, cost and h must be finite");
}

void PointCircleCmdp::validate() const {
  if (!(dt > 0.0 && radius > 0.0 && x_lim > 0.0 && u_max > 0.0))
    throw std::invalid_argument("point-circle dt, radius, x_lim, u_max must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
  if (horizon == 0) throw std::invalid_argument("horizon must be positive");
  if (!std::isfinite(h)) throw std::invalid_argument("h must be finite");
  if (!(start_spread >= 0.0 && start_spread < std::numbers::pi / 2.0)) throw std::invalid_argument("start_spread must lie in [0, pi/2)");
}

double discount(const CmdpSpec& spec) {
  return std::visit([](const auto& s) { return s.gamma; }, spec);
}
double threshold(const CmdpSpec& spec) {
  return std::visit([](const auto& s) { return s.h; }, spec);
}
std::size_t horizon(const CmdpSpec& spec) {
  return std::visit([](const auto& s) { return s.horizon; }, spec);
}
void validate(const CmdpSpec& spec) {
  std::visit([](const auto& s) { s.validate(); }, spec);
}

PolicyFamily default_family(const CmdpSpec& spec, const std::vector<std::size_t>& hidden) {
  return std::visit(overloaded{[](const TabularCmdp& t) -> PolicyFamily {
                                 return TabularSoftmax{t.n_states, t.n_actions};
                               },
                               [&](const PointCircleCmdp&) -> PolicyFamily { return GaussianMlp{hidden, 2, 2}; }},
                    spec);
}

TabularCmdp chain_cmdp(double h, double slip, double gamma, std::size_t horizon) {
  if (!(slip >= 0.0 && slip <= 1.0)) throw std::invalid_argument("slip must lie in [0, 1]");
  constexpr std::size_t n = 8;
  TabularCmdp c;
  c.n_states = n;
  c.n_actions = 2;
  c.transition = Mat::Zero(idx(2 * n), idx(n));
  c.reward = Mat::Zero(idx(n), 2);
  c.cost = Mat::Zero(idx(n), 2);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t left = s == 0 ? 0 : s - 1;
    const std::size_t right = s + 1 == n ? s : s + 1;
    c.transition(idx(2 * s), idx(left)) += 1.0 - slip;
    c.transition(idx(2 * s), idx(right)) += slip;
    c.transition(idx(2 * s + 1), idx(right)) += 1.0 - slip;
    c.transition(idx(2 * s + 1), idx(left)) += slip;
    c.reward(idx(s), 1) = 1.0;
    if (s + 2 >= n) c.cost.row(idx(s)).setOnes();
  }
  c.gamma = gamma;
  c.mu = Vec::Constant(idx(n), 1.0 / static_cast<double>(n));
  c.h = h;
  c.horizon = horizon;
  c.validate();
  return c;
}

TabularCmdp random_tabular_cmdp(std::size_t n_states, std::size_t n_actions, std::uint64_t seed, double gamma) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  TabularCmdp c;
  c.n_states = n_states;
  c.n_actions = n_actions;
  c.transition.resize(idx(n_states * n_actions), idx(n_states));
  for (Eigen::Index r = 0; r < c.transition.rows(); ++r) {
    for (Eigen::Index s = 0; s < c.transition.cols(); ++s) c.transition(r, s) = expo(rng);
    c.transition.row(r) /= c.transition.row(r).sum();
  }
  c.reward.resize(idx(n_states), idx(n_actions));
  c.cost.resize(idx(n_states), idx(n_actions));
  for (Eigen::Index s = 0; s < c.reward.rows(); ++s)
    for (Eigen::Index a = 0; a < c.reward.cols(); ++a) {
      c.reward(s, a) = unif(rng);
      c.cost(s, a) = unif(rng);
    }
  c.mu.resize(idx(n_states));
  for (Eigen::Index s = 0; s < c.mu.size(); ++s) c.mu[s] = expo(rng);
  c.mu /= c.mu.sum();
  c.gamma = gamma;
  c.h = 0.5 / (1.0 - gamma);
  c.horizon = 200;
  c.validate();
  return c;
}

nlohmann::json to_json(const CmdpSpec& spec) {
  return std::visit(
      overloaded{[](const TabularCmdp& t) {
                   nlohmann::json tr = nlohmann::json::array();
                   for (std::size_t s = 0; s < t.n_states; ++s)
                     tr.push_back(matrix_to_json(t.transition.middleRows(idx(s * t.n_actions), idx(t.n_actions))));
                   return nlohmann::json{{"kind", "tabular"},
                                         {"n_states", t.n_states},
                                         {"n_actions", t.n_actions},
                                         {"transition", tr},
                                         {"reward", matrix_to_json(t.reward)},
                                         {"cost", matrix_to_json(t.cost)},
                                         {"gamma", t.gamma},
                                         {"mu", std::vector<double>(t.mu.data(), t.mu.data() + t.mu.size())},
                                         {"h", t.h},
                                         {"horizon", t.horizon}};
                 },
                 [](const PointCircleCmdp& p) {
                   return nlohmann::json{{"kind", "point_circle"}, {"dt", p.dt},       {"horizon", p.horizon},
                                         {"radius", p.radius},     {"x_lim", p.x_lim}, {"u_max", p.u_max},
                                         {"gamma", p.gamma},       {"h", p.h},
                                         {"start_spread", p.start_spread}};
                 }},
      spec);
}

CmdpSpec cmdp_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) throw std::invalid_argument("CMDP spec needs a 'kind' field");
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "tabular") {
    require_keys(j, {"kind", "n_states", "n_actions", "transition", "reward", "cost", "gamma", "mu", "h", "horizon"});
    TabularCmdp t;
    t.n_states = j.at("n_states").get<std::size_t>();
    t.n_actions = j.at("n_actions").get<std::size_t>();
    const auto& tr = j.at("transition");
    if (!tr.is_array() || tr.size() != t.n_states) throw std::invalid_argument("transition: wrong outer length");
    t.transition.resize(idx(t.n_states * t.n_actions), idx(t.n_states));
    for (std::size_t s = 0; s < t.n_states; ++s)
      t.transition.middleRows(idx(s * t.n_actions), idx(t.n_actions)) =
          matrix_from_json(tr[s], t.n_actions, t.n_states, "transition");
    t.reward = matrix_from_json(j.at("reward"), t.n_states, t.n_actions, "reward");
    t.cost = matrix_from_json(j.at("cost"), t.n_states, t.n_actions, "cost");
    t.gamma = j.at("gamma").get<double>();
    const auto mu = j.at("mu").get<std::vector<double>>();
    t.mu = Eigen::Map<const Vec>(mu.data(), static_cast<Eigen::Index>(mu.size()));
    t.h = j.at("h").get<double>();
    t.horizon = j.at("horizon").get<std::size_t>();
    t.validate();
    return t;
  }
  if (kind == "point_circle") {
    require_keys(j, {"kind", "dt", "horizon", "radius", "x_lim", "u_max", "gamma", "h", "start_spread"});
    PointCircleCmdp p;
    p.dt = j.at("dt").get<double>();
    p.horizon = j.at("horizon").get<std::size_t>();
    p.radius = j.at("radius").get<double>();
    p.x_lim = j.at("x_lim").get<double>();
    p.u_max = j.at("u_max").get<double>();
    p.gamma = j.at("gamma").get<double>();
    p.h = j.at("h").get<double>();
    p.start_spread = j.at("start_spread").get<double>();
    p.validate();
    return p;
  }
  throw std::invalid_argument("unknown CMDP kind '" + kind + "'");
}

TabularEvaluation evaluate_exact(const TabularCmdp& spec, const PolicyParams& p) {
  check_tabular_policy(spec, p);
  const Mat pi = policy_table(p);
  const Mat p_pi = policy_transition(spec, pi);
  const Mat sys = Mat::Identity(idx(spec.n_states), idx(spec.n_states)) - spec.gamma * p_pi;
  const Eigen::PartialPivLU<Mat> lu(sys);

  const Channel r = evaluate_channel(spec, pi, lu, spec.reward);
  const Channel c = evaluate_channel(spec, pi, lu, spec.cost);
  TabularEvaluation ev;
  ev.v_r = r.v;
  ev.q_r = r.q;
  ev.adv_r = r.adv;
  ev.v_c = c.v;
  ev.q_c = c.q;
  ev.adv_c = c.adv;
  ev.d_pi = (1.0 - spec.gamma) * Eigen::PartialPivLU<Mat>(sys.transpose()).solve(spec.mu);
  ev.j_r = spec.mu.dot(ev.v_r);
  ev.j_c = spec.mu.dot(ev.v_c);
  return ev;
}

Vec exact_gradient(const TabularCmdp& spec, const PolicyParams& p, const Mat& adv, const Vec& d_pi) {
  check_tabular_policy(spec, p);
  const Mat pi = policy_table(p);
  Vec g(p.theta.size());
  for (std::size_t s = 0; s < spec.n_states; ++s)
    for (std::size_t a = 0; a < spec.n_actions; ++a)
      g[idx(s * spec.n_actions + a)] = d_pi[idx(s)] * pi(idx(s), idx(a)) * adv(idx(s), idx(a));
  return g / (1.0 - spec.gamma);
}

double expected_undiscounted_cost(const TabularCmdp& spec, const PolicyParams& p) {
  check_tabular_policy(spec, p);
  const Mat pi = policy_table(p);
  const Mat p_pi = policy_transition(spec, pi);
  const Vec c_pi = (pi.array() * spec.cost.array()).rowwise().sum();
  Vec dist = spec.mu;
  double total = 0.0;
  for (std::size_t t = 0; t < spec.horizon; ++t) {
    total += dist.dot(c_pi);
    dist = p_pi.transpose() * dist;
  }
  return total;
}

double max_expected_advantage(const PolicyParams& p_new, const Mat& adv) {
  const Mat pi = policy_table(p_new);
  return (pi.array() * adv.array()).rowwise().sum().abs().maxCoeff();
}

double performance_identity_check(const TabularCmdp& spec, const PolicyParams& p_old, const PolicyParams& p_new) {
  const TabularEvaluation old_ev = evaluate_exact(spec, p_old);
  const TabularEvaluation new_ev = evaluate_exact(spec, p_new);
  const Vec expected_adv = (policy_table(p_new).array() * old_ev.adv_r.array()).rowwise().sum();
  const double rhs = new_ev.d_pi.dot(expected_adv) / (1.0 - spec.gamma);
  return std::abs((new_ev.j_r - old_ev.j_r) - rhs);
}

double point_circle_cost(const PointCircleCmdp& spec, const Vec& pos) {
  return std::abs(pos[0]) > spec.x_lim ? 1.0 : 0.0;
}

EnvState reset(const CmdpSpec& spec, std::mt19937_64& rng) {
  return std::visit(overloaded{[&](const TabularCmdp& t) {
                                 const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                                 double acc = 0.0;
                                 std::size_t s = 0;
                                 for (; s + 1 < t.n_states; ++s) {
                                   acc += t.mu[idx(s)];
                                   if (u < acc) break;
                                 }
                                 return EnvState{State{s}, 0};
                               },
                               [&](const PointCircleCmdp& c) {
                                 std::uniform_real_distribution<double> u(-c.start_spread, c.start_spread);
                                 const double side = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
                                 const double phi = side * std::numbers::pi / 2.0 + u(rng);
                                 Vec pos(2);
                                 pos << c.radius * std::cos(phi), c.radius * std::sin(phi);
                                 return EnvState{State{pos}, 0};
                               }},
                    spec);
}

StepResult step(const CmdpSpec& spec, const EnvState& state, const Action& action, std::mt19937_64& rng) {
  return std::visit(
      overloaded{[&](const TabularCmdp& t) {
                   const auto* s = std::get_if<std::size_t>(&state.obs);
                   const auto* a = std::get_if<std::size_t>(&action);
                   if (!s || *s >= t.n_states) throw InvalidAction("tabular state out of range");
                   if (!a || *a >= t.n_actions) throw InvalidAction("tabular action out of range");
                   const auto row = t.transition.row(idx(*s * t.n_actions + *a));
                   const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                   double acc = 0.0;
                   std::size_t next = t.n_states - 1;
                   for (std::size_t k = 0; k < t.n_states; ++k) {
                     acc += row[idx(k)];
                     if (u < acc) {
                       next = k;
                       break;
                     }
                   }
                   StepResult r;
                   r.next = EnvState{State{next}, state.t + 1};
                   r.reward = t.reward(idx(*s), idx(*a));
                   r.cost = t.cost(idx(*s), idx(*a));
                   r.done = r.next.t >= t.horizon;
                   return r;
                 },
                 [&](const PointCircleCmdp& c) {
                   const auto* pos = std::get_if<Vec>(&state.obs);
                   const auto* u_raw = std::get_if<Vec>(&action);
                   if (!pos || pos->size() != 2) throw InvalidAction("point-circle state must be a 2-vector");
                   if (!u_raw || u_raw->size() != 2 || !u_raw->allFinite())
                     throw InvalidAction("point-circle action must be a finite 2-vector");
                   Vec u = *u_raw;
                   const double n = u.norm();
                   if (n > c.u_max) u *= c.u_max / n;
                   const double x = (*pos)[0];
                   const double y = (*pos)[1];
                   StepResult r;
                   r.reward = (-y * u[0] + x * u[1]) / (1.0 + std::abs(pos->norm() - c.radius));
                   r.cost = point_circle_cost(c, *pos);
                   r.next = EnvState{State{Vec(*pos + c.dt * u)}, state.t + 1};
                   r.done = r.next.t >= c.horizon;
                   return r;
                 }},
      spec);
}

}  // namespace cpokit
