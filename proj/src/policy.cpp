#include "cpokit/policy.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace cpokit {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::vector<std::size_t> layer_dims(const GaussianMlp& f) {
  std::vector<std::size_t> dims{f.state_dim};
  dims.insert(dims.end(), f.hidden.begin(), f.hidden.end());
  dims.push_back(f.action_dim);
  return dims;
}

const TabularSoftmax& tabular(const PolicyParams& p) {
  const auto* t = std::get_if<TabularSoftmax>(&p.family);
  if (!t) throw ShapeError("operation requires a tabular softmax policy");
  return *t;
}

const GaussianMlp& gaussian(const PolicyParams& p) {
  const auto* g = std::get_if<GaussianMlp>(&p.family);
  if (!g) throw ShapeError("operation requires a Gaussian MLP policy");
  return *g;
}

std::size_t discrete(const State& s, std::size_t n, const char* what) {
  const auto* i = std::get_if<std::size_t>(&s);
  if (!i) throw ShapeError(std::string(what) + " must be an index for a tabular policy");
  if (*i >= n) throw ShapeError(std::string(what) + " index " + std::to_string(*i) + " out of range");
  return *i;
}

const Vec& continuous(const State& s, std::size_t dim, const char* what) {
  const auto* v = std::get_if<Vec>(&s);
  if (!v) throw ShapeError(std::string(what) + " must be a vector for a Gaussian policy");
  if (static_cast<std::size_t>(v->size()) != dim)
    throw ShapeError(std::string(what) + " has length " + std::to_string(v->size()) + ", expected " +
                     std::to_string(dim));
  return *v;
}

Vec log_softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

Vec logits_at(const PolicyParams& p, const TabularSoftmax& t, std::size_t s) {
  return p.theta.segment(static_cast<Eigen::Index>(s * t.n_actions), static_cast<Eigen::Index>(t.n_actions));
}

// Activations of every layer; acts[0] is the input and acts.back() the mean.
std::vector<Vec> forward(const PolicyParams& p, const GaussianMlp& f, const Vec& x) {
  const auto dims = layer_dims(f);
  std::vector<Vec> acts{x};
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(dims[l]);
    const auto out = static_cast<Eigen::Index>(dims[l + 1]);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(p.theta.data() + off,
                                                                                                out, in);
    off += in * out;
    Vec z = w * acts.back() + p.theta.segment(off, out);
    off += out;
    if (l + 2 < dims.size()) z = z.array().tanh();
    acts.push_back(std::move(z));
  }
  return acts;
}

// Gradient with respect to theta of dmean' * mean(x); the log_std block stays zero.
Vec backward(const PolicyParams& p, const GaussianMlp& f, const std::vector<Vec>& acts, const Vec& dmean) {
  const auto dims = layer_dims(f);
  const std::size_t n_layers = dims.size() - 1;
  std::vector<Eigen::Index> offsets(n_layers);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    offsets[l] = off;
    off += static_cast<Eigen::Index>(dims[l] * dims[l + 1] + dims[l + 1]);
  }
  Vec grad = Vec::Zero(p.theta.size());
  Vec delta = dmean;
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto in = static_cast<Eigen::Index>(dims[l]);
    const auto out = static_cast<Eigen::Index>(dims[l + 1]);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(grad.data() + offsets[l],
                                                                                          out, in);
    gw = delta * acts[l].transpose();
    grad.segment(offsets[l] + in * out, out) = delta;
    if (l > 0) {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
          p.theta.data() + offsets[l], out, in);
      delta = (w.transpose() * delta).array() * (1.0 - acts[l].array().square());
    }
  }
  return grad;
}

Eigen::Index log_std_offset(const PolicyParams& p, const GaussianMlp& f) {
  return p.theta.size() - static_cast<Eigen::Index>(f.action_dim);
}

// Mean Jacobian d mean / d theta at x, action_dim x n.
Mat mean_jacobian(const PolicyParams& p, const GaussianMlp& f, const Vec& x) {
  const auto acts = forward(p, f, x);
  const auto m = static_cast<Eigen::Index>(f.action_dim);
  Mat j(m, p.theta.size());
  for (Eigen::Index i = 0; i < m; ++i) j.row(i) = backward(p, f, acts, Vec::Unit(m, i)).transpose();
  return j;
}

void require_same_family(const PolicyParams& a, const PolicyParams& b) {
  if (a.family.index() != b.family.index() || a.theta.size() != b.theta.size())
    throw ShapeError("policies belong to different families");
}

}  // namespace

std::size_t param_count(const PolicyFamily& family) {
  return std::visit(overloaded{[](const TabularSoftmax& t) { return t.n_states * t.n_actions; },
                               [](const GaussianMlp& g) {
                                 const auto dims = layer_dims(g);
                                 std::size_t n = 0;
                                 for (std::size_t l = 0; l + 1 < dims.size(); ++l)
                                   n += dims[l] * dims[l + 1] + dims[l + 1];
                                 return n + g.action_dim;
                               }},
                    family);
}

void PolicyParams::validate() const {
  std::visit(overloaded{[](const TabularSoftmax& t) {
                          if (t.n_states == 0 || t.n_actions == 0)
                            throw ShapeError("tabular policy needs positive state and action counts");
                        },
                        [](const GaussianMlp& g) {
                          if (g.state_dim == 0 || g.action_dim == 0)
                            throw ShapeError("Gaussian policy needs positive state and action dimensions");
                          for (auto h : g.hidden)
                            if (h == 0) throw ShapeError("hidden layer of width zero");
                        }},
             family);
  if (static_cast<std::size_t>(theta.size()) != param_count(family))
    throw ShapeError("theta has " + std::to_string(theta.size()) + " entries, family needs " +
                     std::to_string(param_count(family)));
  if (!all_finite(theta)) throw ShapeError("theta has non-finite entries");
}

PolicyParams init_policy(const PolicyFamily& family, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  PolicyParams p{Vec(static_cast<Eigen::Index>(param_count(family))), family};
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta[i] = u(rng);
  p.validate();
  return p;
}

double log_prob(const PolicyParams& p, const State& s, const Action& a) {
  if (const auto* t = std::get_if<TabularSoftmax>(&p.family)) {
    const std::size_t si = discrete(s, t->n_states, "state");
    const std::size_t ai = discrete(a, t->n_actions, "action");
    return log_softmax(logits_at(p, *t, si))[static_cast<Eigen::Index>(ai)];
  }
  const auto& f = gaussian(p);
  const Vec& x = continuous(s, f.state_dim, "state");
  const Vec& u = continuous(a, f.action_dim, "action");
  const Vec mean = forward(p, f, x).back();
  const Vec log_std = p.theta.tail(static_cast<Eigen::Index>(f.action_dim));
  const Vec z = (u - mean).array() / log_std.array().exp();
  return -0.5 * z.squaredNorm() - log_std.sum() -
         0.5 * static_cast<double>(f.action_dim) * std::log(2.0 * std::numbers::pi);
}

Vec grad_log_prob(const PolicyParams& p, const State& s, const Action& a) {
  if (const auto* t = std::get_if<TabularSoftmax>(&p.family)) {
    const std::size_t si = discrete(s, t->n_states, "state");
    const std::size_t ai = discrete(a, t->n_actions, "action");
    Vec grad = Vec::Zero(p.theta.size());
    const Vec pi = log_softmax(logits_at(p, *t, si)).array().exp();
    auto block = grad.segment(static_cast<Eigen::Index>(si * t->n_actions), static_cast<Eigen::Index>(t->n_actions));
    block = -pi;
    block[static_cast<Eigen::Index>(ai)] += 1.0;
    return grad;
  }
  const auto& f = gaussian(p);
  const Vec& x = continuous(s, f.state_dim, "state");
  const Vec& u = continuous(a, f.action_dim, "action");
  const auto acts = forward(p, f, x);
  const Vec log_std = p.theta.tail(static_cast<Eigen::Index>(f.action_dim));
  const Vec inv_var = (-2.0 * log_std.array()).exp();
  const Vec diff = u - acts.back();
  Vec grad = backward(p, f, acts, diff.cwiseProduct(inv_var));
  grad.tail(static_cast<Eigen::Index>(f.action_dim)) = diff.array().square() * inv_var.array() - 1.0;
  return grad;
}

Action sample(const PolicyParams& p, const State& s, std::mt19937_64& rng) {
  if (const auto* t = std::get_if<TabularSoftmax>(&p.family)) {
    const Vec pi = action_probs(p, discrete(s, t->n_states, "state"));
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < pi.size(); ++i) {
      acc += pi[i];
      if (u < acc) return static_cast<std::size_t>(i);
    }
    return static_cast<std::size_t>(pi.size() - 1);
  }
  const auto& f = gaussian(p);
  const Vec mean = gaussian_mean(p, continuous(s, f.state_dim, "state"));
  const Vec sd = gaussian_log_std(p).array().exp();
  std::normal_distribution<double> n01(0.0, 1.0);
  Vec u(mean.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = mean[i] + sd[i] * n01(rng);
  return u;
}

Vec action_probs(const PolicyParams& p, std::size_t s) {
  const auto& t = tabular(p);
  if (s >= t.n_states) throw ShapeError("state index out of range");
  return log_softmax(logits_at(p, t, s)).array().exp();
}

Mat policy_table(const PolicyParams& p) {
  const auto& t = tabular(p);
  Mat pi(static_cast<Eigen::Index>(t.n_states), static_cast<Eigen::Index>(t.n_actions));
  for (std::size_t s = 0; s < t.n_states; ++s) pi.row(static_cast<Eigen::Index>(s)) = action_probs(p, s).transpose();
  return pi;
}

Vec gaussian_mean(const PolicyParams& p, const Vec& s) {
  const auto& f = gaussian(p);
  return forward(p, f, continuous(s, f.state_dim, "state")).back();
}

Vec gaussian_log_std(const PolicyParams& p) {
  const auto& f = gaussian(p);
  return p.theta.tail(static_cast<Eigen::Index>(f.action_dim));
}

namespace {

double state_kl(const PolicyParams& p_new, const PolicyParams& p_old, const State& s) {
  if (const auto* t = std::get_if<TabularSoftmax>(&p_new.family)) {
    const std::size_t si = discrete(s, t->n_states, "state");
    const Vec ln = log_softmax(logits_at(p_new, *t, si));
    const Vec lo = log_softmax(logits_at(p_old, *t, si));
    return (ln.array().exp() * (ln - lo).array()).sum();
  }
  const auto& f = gaussian(p_new);
  const Vec& x = continuous(s, f.state_dim, "state");
  const Vec mn = forward(p_new, f, x).back();
  const Vec mo = forward(p_old, f, x).back();
  const Vec ln = gaussian_log_std(p_new);
  const Vec lo = gaussian_log_std(p_old);
  const Vec var_o = (2.0 * lo.array()).exp();
  return ((lo - ln).array() + ((2.0 * ln.array()).exp() + (mn - mo).array().square()) / (2.0 * var_o.array()) - 0.5)
      .sum();
}

}  // namespace

double mean_kl(const PolicyParams& p_new, const PolicyParams& p_old, const std::vector<State>& states) {
  require_same_family(p_new, p_old);
  if (states.empty()) throw std::invalid_argument("mean_kl: no states");
  double total = 0.0;
  for (const auto& s : states) total += state_kl(p_new, p_old, s);
  return total / static_cast<double>(states.size());
}

double weighted_mean_kl(const PolicyParams& p_new, const PolicyParams& p_old, const Vec& weights) {
  require_same_family(p_new, p_old);
  const auto& t = tabular(p_new);
  if (static_cast<std::size_t>(weights.size()) != t.n_states) throw ShapeError("weights length != n_states");
  double total = 0.0;
  for (std::size_t s = 0; s < t.n_states; ++s)
    total += weights[static_cast<Eigen::Index>(s)] * state_kl(p_new, p_old, State{s});
  return total;
}

double max_kl(const PolicyParams& p_new, const PolicyParams& p_old) {
  require_same_family(p_new, p_old);
  const auto& t = tabular(p_new);
  double m = 0.0;
  for (std::size_t s = 0; s < t.n_states; ++s) m = std::max(m, state_kl(p_new, p_old, State{s}));
  return m;
}

Mat tabular_fisher(const PolicyParams& p, const Vec& weights) {
  const auto& t = tabular(p);
  if (static_cast<std::size_t>(weights.size()) != t.n_states) throw ShapeError("weights length != n_states");
  const auto na = static_cast<Eigen::Index>(t.n_actions);
  Mat h = Mat::Zero(p.theta.size(), p.theta.size());
  for (std::size_t s = 0; s < t.n_states; ++s) {
    const Vec pi = action_probs(p, s);
    const auto off = static_cast<Eigen::Index>(s) * na;
    h.block(off, off, na, na) =
        weights[static_cast<Eigen::Index>(s)] * (Mat(pi.asDiagonal()) - pi * pi.transpose());
  }
  return h;
}

Mat fisher_matrix(const PolicyParams& p, const std::vector<State>& states) {
  if (states.empty()) throw std::invalid_argument("fisher_matrix: no states");
  const double w = 1.0 / static_cast<double>(states.size());
  if (const auto* t = std::get_if<TabularSoftmax>(&p.family)) {
    Vec weights = Vec::Zero(static_cast<Eigen::Index>(t->n_states));
    for (const auto& s : states) weights[static_cast<Eigen::Index>(discrete(s, t->n_states, "state"))] += w;
    return tabular_fisher(p, weights);
  }
  const auto& f = gaussian(p);
  const Vec inv_var = (-2.0 * gaussian_log_std(p).array()).exp();
  Mat h = Mat::Zero(p.theta.size(), p.theta.size());
  for (std::size_t k = 0; k < states.size(); ++k) {
    const Mat j = mean_jacobian(p, f, continuous(states[k], f.state_dim, "state"));
    if (!j.allFinite()) throw NumericalBreakdown("non-finite mean Jacobian at state", static_cast<int>(k));
    h.noalias() += w * (j.transpose() * inv_var.asDiagonal() * j);
  }
  const auto off = log_std_offset(p, f);
  const auto m = static_cast<Eigen::Index>(f.action_dim);
  h.block(off, off, m, m) += 2.0 * Mat::Identity(m, m);
  return h;
}

Vec fisher_vector_product(const PolicyParams& p, const std::vector<State>& states, const Vec& v, double damping) {
  if (v.size() != p.theta.size()) throw ShapeError("fisher_vector_product: v has the wrong length");
  return fisher_matrix(p, states) * v + damping * v;
}

FisherEstimate estimate_fisher(const PolicyParams& p, const std::vector<State>& states, double damping) {
  return FisherEstimate{SpdOperator::from_matrix(fisher_matrix(p, states), damping), states.size(), damping};
}

}  // namespace cpokit
