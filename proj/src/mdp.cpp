#include "omdt/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <fmt/format.h>

#include "omdt/error.hpp"
#include "omdt/rng.hpp"

namespace omdt {

namespace {

constexpr double kStochasticTol = 1e-9;
constexpr double kPolicyResidualTol = 1e-10;
// Above this size the policy system is factorized as a sparse matrix.
constexpr std::size_t kDenseSolveLimit = 512;

}  // namespace

TabularMdp::TabularMdp(std::size_t states, std::size_t actions, double discount)
    : n_states(states),
      n_actions(actions),
      gamma(discount),
      rows(states * actions),
      p0(states, 0.0) {}

void TabularMdp::add_transition(std::size_t s, std::size_t a, std::size_t next, double prob,
                                double reward) {
  auto& r = row(s, a);
  for (auto& t : r) {
    if (t.next == next && t.reward == reward) {
      t.prob += prob;
      return;
    }
  }
  r.push_back({next, prob, reward});
}

void TabularMdp::make_absorbing(std::size_t s) {
  for (std::size_t a = 0; a < n_actions; ++a) row(s, a) = {{s, 1.0, 0.0}};
}

double TabularMdp::expected_reward(std::size_t s, std::size_t a) const {
  double r = 0.0;
  for (const auto& t : outcomes(s, a)) r += t.prob * t.reward;
  return r;
}

bool TabularMdp::is_absorbing(std::size_t s) const {
  for (std::size_t a = 0; a < n_actions; ++a) {
    double self = 0.0;
    for (const auto& t : outcomes(s, a)) {
      if (t.prob == 0.0) continue;
      if (t.next != s || t.reward != 0.0) return false;
      self += t.prob;
    }
    if (std::abs(self - 1.0) > kStochasticTol) return false;
  }
  return true;
}

StochasticPolicy StochasticPolicy::uniform(std::size_t n_states, std::size_t n_actions) {
  StochasticPolicy p;
  p.n_actions = n_actions;
  p.probs.assign(n_states * n_actions, 1.0 / static_cast<double>(n_actions));
  return p;
}

std::vector<std::string> validate(const TabularMdp& mdp) {
  std::vector<std::string> out;
  if (!(mdp.gamma > 0.0 && mdp.gamma < 1.0))
    out.push_back(fmt::format("gamma: {} is outside (0, 1)", mdp.gamma));
  if (mdp.n_states == 0) out.push_back("n_states: MDP has no states");
  if (mdp.n_actions == 0) out.push_back("n_actions: MDP has no actions");
  if (mdp.rows.size() != mdp.n_states * mdp.n_actions) {
    out.push_back(fmt::format("transitions: expected {} rows, found {}",
                              mdp.n_states * mdp.n_actions, mdp.rows.size()));
    return out;
  }
  if (mdp.p0.size() != mdp.n_states) {
    out.push_back(fmt::format("p0: expected {} entries, found {}", mdp.n_states, mdp.p0.size()));
  } else {
    double sum = 0.0;
    bool in_range = true;
    for (double p : mdp.p0) {
      in_range = in_range && std::isfinite(p) && p >= 0.0 && p <= 1.0;
      sum += p;
    }
    if (!in_range) out.push_back("p0: entries outside [0, 1]");
    if (std::abs(sum - 1.0) > kStochasticTol)
      out.push_back(fmt::format("p0: sums to {:.17g}", sum));
  }
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      const auto outs = mdp.outcomes(s, a);
      if (outs.empty()) {
        out.push_back(fmt::format("(s={},a={}): no outgoing transition", s, a));
        continue;
      }
      double sum = 0.0;
      for (const auto& t : outs) {
        if (t.next >= mdp.n_states)
          out.push_back(fmt::format("(s={},a={}): next state {} out of range", s, a, t.next));
        if (!(std::isfinite(t.prob) && t.prob >= 0.0 && t.prob <= 1.0))
          out.push_back(fmt::format("(s={},a={}): probability {} outside [0, 1]", s, a, t.prob));
        if (!std::isfinite(t.reward))
          out.push_back(fmt::format("(s={},a={}): non-finite reward", s, a));
        sum += t.prob;
      }
      if (std::abs(sum - 1.0) > kStochasticTol)
        out.push_back(fmt::format("(s={},a={}): probabilities sum to {:.17g}", s, a, sum));
    }
  }
  return out;
}

void require_valid(const TabularMdp& mdp) {
  const auto violations = validate(mdp);
  if (violations.empty()) return;
  std::string msg = fmt::format("invalid MDP '{}' ({} violations)", mdp.name, violations.size());
  for (std::size_t i = 0; i < std::min<std::size_t>(violations.size(), 5); ++i)
    msg += "; " + violations[i];
  throw InvalidArgument(msg);
}

PruneResult prune_unreachable(const TabularMdp& mdp, const FeatureMatrix& features) {
  if (features.n_rows != mdp.n_states)
    throw InvalidArgument(fmt::format("feature matrix has {} rows for {} states", features.n_rows,
                                      mdp.n_states));
  std::vector<char> reached(mdp.n_states, 0);
  std::deque<std::size_t> frontier;
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    if (mdp.p0[s] > 0.0) {
      reached[s] = 1;
      frontier.push_back(s);
    }
  }
  if (frontier.empty()) throw InvalidArgument("prune_unreachable: no state has p0 > 0");
  while (!frontier.empty()) {
    const std::size_t s = frontier.front();
    frontier.pop_front();
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      for (const auto& t : mdp.outcomes(s, a)) {
        if (t.prob > 0.0 && !reached[t.next]) {
          reached[t.next] = 1;
          frontier.push_back(t.next);
        }
      }
    }
  }

  PruneResult res;
  res.index_map.assign(mdp.n_states, std::nullopt);
  std::vector<std::size_t> kept;
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    if (reached[s]) {
      res.index_map[s] = kept.size();
      kept.push_back(s);
    }
  }

  TabularMdp out(kept.size(), mdp.n_actions, mdp.gamma);
  out.name = mdp.name;
  out.action_labels = mdp.action_labels;
  FeatureMatrix feats(kept.size(), features.names);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const std::size_t s = kept[i];
    out.p0[i] = mdp.p0[s];
    if (!mdp.state_labels.empty()) out.state_labels.push_back(mdp.state_labels[s]);
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      auto& r = out.row(i, a);
      for (const auto& t : mdp.outcomes(s, a)) {
        if (t.prob > 0.0) r.push_back({*res.index_map[t.next], t.prob, t.reward});
      }
    }
    for (std::size_t j = 0; j < features.n_cols; ++j) feats(i, j) = features(s, j);
  }
  res.mdp = std::move(out);
  res.features = std::move(feats);
  return res;
}

Eigen::MatrixXd q_from_values(const TabularMdp& mdp, std::span<const double> v) {
  Eigen::MatrixXd q(mdp.n_states, mdp.n_actions);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      double acc = 0.0;
      for (const auto& t : mdp.outcomes(s, a)) acc += t.prob * (t.reward + mdp.gamma * v[t.next]);
      q(s, a) = acc;
    }
  }
  return q;
}

DeterministicPolicy greedy_policy(const Eigen::MatrixXd& q) {
  DeterministicPolicy p;
  p.action_of.resize(q.rows());
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < q.cols(); ++a)
      if (q(s, a) > q(s, best)) best = a;
    p.action_of[s] = static_cast<std::size_t>(best);
  }
  return p;
}

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol, std::size_t max_iter) {
  if (!(tol > 0.0)) throw InvalidArgument("value_iteration: tol must be positive");
  require_valid(mdp);
  std::vector<double> v(mdp.n_states, 0.0), next(mdp.n_states, 0.0);
  double residual = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  for (; it < max_iter; ++it) {
    residual = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < mdp.n_actions; ++a) {
        double acc = 0.0;
        for (const auto& t : mdp.outcomes(s, a))
          acc += t.prob * (t.reward + mdp.gamma * v[t.next]);
        best = std::max(best, acc);
      }
      next[s] = best;
      residual = std::max(residual, std::abs(best - v[s]));
    }
    // residual is ‖v − T(v)‖∞ for the current v
    if (residual < tol) break;
    v.swap(next);
  }
  if (residual >= tol)
    throw ConvergenceError(
        fmt::format("value_iteration: residual {:.3e} after {} iterations", residual, max_iter),
        residual);

  ValueIterationResult res;
  res.policy = greedy_policy(q_from_values(mdp, v));
  res.values.v = std::move(v);
  res.values.residual = residual;
  res.iterations = it + 1;
  return res;
}

namespace {

// Solves (I − γ P_π) V = r_π where row s mixes actions with the weights
// supplied by `weights(s, emit)`; emit(a, w) is called per action.
template <class Weights>
std::vector<double> solve_policy_system(const TabularMdp& mdp, Weights&& weights) {
  const std::size_t n = mdp.n_states;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd x;

  auto residual_of = [&](const Eigen::VectorXd& vx) {
    // ‖V − T_π V‖∞ computed from the sparse rows, independent of the factorization
    double worst = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      double tv = 0.0;
      weights(s, [&](std::size_t a, double w) {
        for (const auto& t : mdp.outcomes(s, a))
          tv += w * t.prob * (t.reward + mdp.gamma * vx[t.next]);
      });
      worst = std::max(worst, std::abs(vx[s] - tv));
    }
    return worst;
  };

  if (n <= kDenseSolveLimit) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
    for (std::size_t s = 0; s < n; ++s) {
      weights(s, [&](std::size_t a, double w) {
        for (const auto& t : mdp.outcomes(s, a)) {
          m(s, t.next) -= mdp.gamma * w * t.prob;
          b[s] += w * t.prob * t.reward;
        }
      });
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    x = lu.solve(b);
    for (int refine = 0; refine < 4; ++refine) {
      Eigen::VectorXd r = b - m * x;
      if (r.lpNorm<Eigen::Infinity>() < 1e-13 * std::max(1.0, x.lpNorm<Eigen::Infinity>())) break;
      x += lu.solve(r);
    }
  } else {
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t s = 0; s < n; ++s) {
      trips.emplace_back(s, s, 1.0);
      weights(s, [&](std::size_t a, double w) {
        for (const auto& t : mdp.outcomes(s, a)) {
          trips.emplace_back(s, t.next, -mdp.gamma * w * t.prob);
          b[s] += w * t.prob * t.reward;
        }
      });
    }
    Eigen::SparseMatrix<double> m(n, n);
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(m);
    if (lu.info() != Eigen::Success)
      throw ConvergenceError("policy evaluation: sparse factorization failed",
                             std::numeric_limits<double>::infinity());
    x = lu.solve(b);
    for (int refine = 0; refine < 4; ++refine) {
      Eigen::VectorXd r = b - m * x;
      if (r.lpNorm<Eigen::Infinity>() < 1e-13 * std::max(1.0, x.lpNorm<Eigen::Infinity>())) break;
      x += lu.solve(r);
    }
  }

  const double res = residual_of(x);
  if (!(res < kPolicyResidualTol * std::max(1.0, x.lpNorm<Eigen::Infinity>())))
    throw ConvergenceError(fmt::format("policy evaluation: residual {:.3e}", res), res);
  return {x.data(), x.data() + n};
}

void check_policy(const TabularMdp& mdp, const DeterministicPolicy& policy) {
  if (policy.action_of.size() != mdp.n_states)
    throw InvalidArgument(fmt::format("policy covers {} states, MDP has {}",
                                      policy.action_of.size(), mdp.n_states));
  for (std::size_t a : policy.action_of)
    if (a >= mdp.n_actions) throw InvalidArgument(fmt::format("policy action {} out of range", a));
}

void check_policy(const TabularMdp& mdp, const StochasticPolicy& policy) {
  if (policy.n_actions != mdp.n_actions || policy.probs.size() != mdp.n_states * mdp.n_actions)
    throw InvalidArgument("stochastic policy dimensions do not match the MDP");
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double sum = 0.0;
    for (std::size_t a = 0; a < mdp.n_actions; ++a) sum += policy(s, a);
    if (std::abs(sum - 1.0) > kStochasticTol)
      throw InvalidArgument(fmt::format("stochastic policy row {} sums to {}", s, sum));
  }
}

double start_value(const TabularMdp& mdp, const std::vector<double>& v) {
  double j = 0.0;
  for (std::size_t s = 0; s < mdp.n_states; ++s) j += mdp.p0[s] * v[s];
  return j;
}

}  // namespace

std::vector<double> policy_values(const TabularMdp& mdp, const DeterministicPolicy& policy) {
  check_policy(mdp, policy);
  return solve_policy_system(
      mdp, [&](std::size_t s, auto&& emit) { emit(policy.action_of[s], 1.0); });
}

std::vector<double> policy_values(const TabularMdp& mdp, const StochasticPolicy& policy) {
  check_policy(mdp, policy);
  return solve_policy_system(mdp, [&](std::size_t s, auto&& emit) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a)
      if (policy(s, a) > 0.0) emit(a, policy(s, a));
  });
}

EvalReport evaluate_policy_exact(const TabularMdp& mdp, const DeterministicPolicy& policy) {
  EvalReport r;
  r.expected_return = start_value(mdp, policy_values(mdp, policy));
  return r;
}

EvalReport evaluate_policy_exact(const TabularMdp& mdp, const StochasticPolicy& policy) {
  EvalReport r;
  r.expected_return = start_value(mdp, policy_values(mdp, policy));
  return r;
}

namespace {

std::size_t sample_index(Rng& rng, std::span<const double> cumulative) {
  const double u = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<std::size_t>(it - cumulative.begin(), cumulative.size() - 1);
}

template <class ChooseAction>
SimulationResult simulate_impl(const TabularMdp& mdp, ChooseAction&& choose, std::uint64_t seed,
                               std::size_t episodes, std::size_t max_steps, bool keep_traces) {
  if (max_steps < 1) throw InvalidArgument("simulate: max_steps must be at least 1");
  require_valid(mdp);

  std::vector<double> p0_cum(mdp.n_states);
  std::partial_sum(mdp.p0.begin(), mdp.p0.end(), p0_cum.begin());
  std::vector<std::vector<double>> row_cum(mdp.rows.size());
  for (std::size_t i = 0; i < mdp.rows.size(); ++i) {
    row_cum[i].reserve(mdp.rows[i].size());
    double acc = 0.0;
    for (const auto& t : mdp.rows[i]) row_cum[i].push_back(acc += t.prob);
  }
  std::vector<char> absorbing(mdp.n_states);
  for (std::size_t s = 0; s < mdp.n_states; ++s) absorbing[s] = mdp.is_absorbing(s);

  SimulationResult res;
  res.returns.reserve(episodes);
  if (keep_traces) res.traces.reserve(episodes);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    Rng rng(derive_seed(seed, ep));
    std::size_t s = sample_index(rng, p0_cum);
    std::vector<std::size_t> trace{s};
    double ret = 0.0, discount = 1.0;
    for (std::size_t step = 0; step < max_steps && !absorbing[s]; ++step) {
      const std::size_t a = choose(s, rng);
      const std::size_t idx = s * mdp.n_actions + a;
      const auto& t = mdp.rows[idx][sample_index(rng, row_cum[idx])];
      ret += discount * t.reward;
      discount *= mdp.gamma;
      s = t.next;
      if (keep_traces) trace.push_back(s);
    }
    res.returns.push_back(ret);
    if (keep_traces) res.traces.push_back(std::move(trace));
  }

  const double n = static_cast<double>(episodes);
  const double mean = episodes ? std::accumulate(res.returns.begin(), res.returns.end(), 0.0) / n : 0.0;
  double var = 0.0;
  for (double r : res.returns) var += (r - mean) * (r - mean);
  var = episodes > 1 ? var / (n - 1.0) : 0.0;
  res.report.expected_return = mean;
  res.report.method = EvalMethod::MonteCarlo;
  res.report.episodes = episodes;
  res.report.std_error = episodes ? std::sqrt(var / n) : 0.0;
  res.report.seed = seed;
  return res;
}

}  // namespace

SimulationResult simulate(const TabularMdp& mdp, const DeterministicPolicy& policy,
                          std::uint64_t seed, std::size_t episodes, std::size_t max_steps,
                          bool keep_traces) {
  check_policy(mdp, policy);
  return simulate_impl(
      mdp, [&](std::size_t s, Rng&) { return policy.action_of[s]; }, seed, episodes, max_steps,
      keep_traces);
}

SimulationResult simulate(const TabularMdp& mdp, const StochasticPolicy& policy,
                          std::uint64_t seed, std::size_t episodes, std::size_t max_steps,
                          bool keep_traces) {
  check_policy(mdp, policy);
  std::vector<double> cum(policy.probs.size());
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double acc = 0.0;
    for (std::size_t a = 0; a < mdp.n_actions; ++a) cum[s * mdp.n_actions + a] = acc += policy(s, a);
  }
  return simulate_impl(
      mdp,
      [&](std::size_t s, Rng& rng) {
        return sample_index(rng, std::span<const double>(cum.data() + s * mdp.n_actions, mdp.n_actions));
      },
      seed, episodes, max_steps, keep_traces);
}

double normalized_return(double j, double j_rand, double j_opt) {
  const double span = j_opt - j_rand;
  if (std::abs(span) <= 1e-12 * std::max({1.0, std::abs(j_opt), std::abs(j_rand)}))
    throw InvalidArgument(
        fmt::format("degenerate normalization: j_opt ({}) equals j_rand ({})", j_opt, j_rand));
  return (j - j_rand) / span;
}

ReturnAnchors compute_anchors(const TabularMdp& mdp) {
  ReturnAnchors anchors;
  anchors.j_rand =
      evaluate_policy_exact(mdp, StochasticPolicy::uniform(mdp.n_states, mdp.n_actions))
          .expected_return;
  const auto vi = value_iteration(mdp);
  anchors.j_opt = start_value(mdp, vi.values.v);
  return anchors;
}

}  // namespace omdt
