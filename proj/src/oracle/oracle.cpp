#include "prmlab/oracle/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "prmlab/core/error.hpp"

namespace prmlab {

EnvModel::EnvModel(const TaskSpec& spec) : spec_(spec) {
  TaskSpec unbounded = spec;
  unbounded.horizon = 1 << 20;  // Horizon is applied by the DP, not the model.
  auto env = make_environment(unbounded);
  if (!env->enumerable())
    throw UnsupportedOperation("family " + to_string(spec.family) + " is not enumerable");
  starts_ = env->start_states();
  const std::size_t n = env->markov_state_space_size();
  nodes_.resize(n);
  transitions_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const MarkovToken tok{i};
    env->set_markov_state(tok, 0);
    Node& node = nodes_[i];
    node.observation = env->observe();
    node.terminal = env->done();
    if (node.terminal) continue;
    node.legal = env->legal_actions();
    for (ActionId a : node.legal) {
      auto probe = env->clone();
      const StepResult r = probe->step(a);
      transitions_[i][a] = Transition{probe->markov_state(), r.reward, r.done};
    }
  }
}

const EnvModel::Node& EnvModel::node(MarkovToken s) const {
  if (s.value >= nodes_.size()) throw CoverageError("markov token outside the model");
  return nodes_[s.value];
}

const EnvModel::Transition& EnvModel::transition(MarkovToken s, ActionId a) const {
  if (s.value >= nodes_.size()) throw CoverageError("markov token outside the model");
  const auto& row = transitions_[s.value];
  const auto it = row.find(a);
  if (it == row.end()) throw CoverageError("no transition for action " + std::to_string(a));
  return it->second;
}

double ExactQTable::at(MarkovToken s, ActionId a, int t) const {
  const auto it = entries_.find({s, a, t});
  if (it == entries_.end())
    throw CoverageError("Q table has no entry for state " + std::to_string(s.value) + ", action " +
                        std::to_string(a) + ", turn " + std::to_string(t));
  return it->second;
}

ActionId ExactQTable::argmax(MarkovToken s, int t, std::span<const ActionId> legal) const {
  if (legal.empty()) throw ContractViolation("argmax over an empty action set");
  ActionId best = legal.front();
  double best_v = -1e300;
  for (ActionId a : legal) {
    const double v = at(s, a, t);
    if (v > best_v || (v == best_v && a < best)) {
      best_v = v;
      best = a;
    }
  }
  return best;
}

void ExactQTable::write_csv(std::ostream& out) const {
  out << "state_token,action,t,value\n";
  out.precision(17);
  for (const auto& [k, v] : entries_) out << k.state.value << ',' << k.action << ',' << k.turn << ',' << v << '\n';
}

double ExactVTable::at(MarkovToken s, int t) const {
  const auto it = entries_.find({s, t});
  if (it == entries_.end())
    throw CoverageError("V table has no entry for state " + std::to_string(s.value) + ", turn " + std::to_string(t));
  return it->second;
}

void ExactVTable::write_csv(std::ostream& out) const {
  out << "state_token,t,value\n";
  out.precision(17);
  for (const auto& [k, v] : entries_) out << k.state.value << ',' << k.turn << ',' << v << '\n';
}

namespace {

void check_args(double gamma, int horizon) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
}

/// Reachable non-terminal states per turn, t = 0 .. horizon.
std::vector<std::set<MarkovToken>> reachable_layers(const EnvModel& model, int horizon) {
  std::vector<std::set<MarkovToken>> layers(static_cast<std::size_t>(horizon) + 1);
  for (auto s : model.start_states())
    if (!model.node(s).terminal) layers[0].insert(s);
  for (int t = 0; t < horizon; ++t) {
    for (auto s : layers[static_cast<std::size_t>(t)]) {
      for (ActionId a : model.node(s).legal) {
        const auto& tr = model.transition(s, a);
        if (!tr.terminal) layers[static_cast<std::size_t>(t) + 1].insert(tr.next);
      }
    }
  }
  return layers;
}

template <class Backup>
PolicyEvaluation backward_induction(const EnvModel& model, double gamma, int horizon, Backup&& backup) {
  check_args(gamma, horizon);
  PolicyEvaluation out{ExactQTable(gamma, horizon), ExactVTable(gamma, horizon)};
  const auto layers = reachable_layers(model, horizon);
  for (auto s : layers[static_cast<std::size_t>(horizon)]) out.v.set(s, horizon, 0.0);
  for (int t = horizon - 1; t >= 0; --t) {
    for (auto s : layers[static_cast<std::size_t>(t)]) {
      const auto& node = model.node(s);
      std::vector<double> qs;
      qs.reserve(node.legal.size());
      for (ActionId a : node.legal) {
        const auto& tr = model.transition(s, a);
        const double cont = tr.terminal ? 0.0 : out.v.at(tr.next, t + 1);
        const double q = tr.reward + gamma * cont;
        out.q.set(s, a, t, q);
        qs.push_back(q);
      }
      out.v.set(s, t, backup(s, node, t, qs));
    }
  }
  return out;
}

}  // namespace

PolicyEvaluation evaluate_policy(const EnvModel& model, const MarkovPolicy& policy, double gamma, int horizon) {
  return backward_induction(model, gamma, horizon,
                            [&](MarkovToken s, const EnvModel::Node& node, int t, const std::vector<double>& qs) {
                              const auto probs = policy(s, node.observation, t, node.legal);
                              if (probs.size() != qs.size())
                                throw ContractViolation("policy returned a distribution of the wrong size");
                              double v = 0.0;
                              for (std::size_t i = 0; i < qs.size(); ++i) v += probs[i] * qs[i];
                              return v;
                            });
}

ExactQTable optimal_q(const EnvModel& model, double gamma, int horizon) {
  return backward_induction(model, gamma, horizon,
                            [](MarkovToken, const EnvModel::Node&, int, const std::vector<double>& qs) {
                              return *std::max_element(qs.begin(), qs.end());
                            })
      .q;
}

MarkovPolicy greedy_policy(const ExactQTable& q) {
  return [q](MarkovToken s, const Observation&, int t, std::span<const ActionId> legal) {
    const ActionId best = q.argmax(s, t, legal);
    std::vector<double> p(legal.size(), 0.0);
    for (std::size_t i = 0; i < legal.size(); ++i)
      if (legal[i] == best) p[i] = 1.0;
    return p;
  };
}

MarkovPolicy uniform_policy() {
  return [](MarkovToken, const Observation&, int, std::span<const ActionId> legal) {
    return std::vector<double>(legal.size(), 1.0 / static_cast<double>(legal.size()));
  };
}

MarkovPolicy epsilon_greedy_policy(const ExactQTable& q, double epsilon) {
  return [q, epsilon](MarkovToken s, const Observation&, int t, std::span<const ActionId> legal) {
    const ActionId best = q.argmax(s, t, legal);
    const double base = epsilon / static_cast<double>(legal.size());
    std::vector<double> p(legal.size(), base);
    for (std::size_t i = 0; i < legal.size(); ++i)
      if (legal[i] == best) p[i] += 1.0 - epsilon;
    return p;
  };
}

double success_probability(const EnvModel& model, const MarkovPolicy& policy, int horizon) {
  // With gamma = 1 and a single terminal reward of 1 on success, V is the success probability.
  const auto eval = evaluate_policy(model, policy, 1.0, horizon);
  double total = 0.0;
  for (auto s : model.start_states()) total += model.node(s).terminal ? 0.0 : eval.v.at(s, 0);
  return total / static_cast<double>(model.start_states().size());
}

double reference_advantage(const ExactVTable& v_mu, double gamma, const RecordedTransition& tr) {
  const double next = tr.terminal ? 0.0 : v_mu.at(tr.next, tr.turn + 1);
  return tr.reward + gamma * next - v_mu.at(tr.state, tr.turn);
}

double reference_advantage(const EnvModel& model, const MarkovPolicy& mu, double gamma, int horizon,
                           const RecordedTransition& tr) {
  const auto eval = evaluate_policy(model, mu, gamma, horizon);
  return reference_advantage(eval.v, gamma, tr);
}

}  // namespace prmlab
