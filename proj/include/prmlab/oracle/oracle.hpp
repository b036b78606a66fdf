#pragma once

#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <vector>

#include "prmlab/env/environment.hpp"

namespace prmlab {

/// Action probabilities over `legal` (same order) for a Markov state at a turn.
using MarkovPolicy =
    std::function<std::vector<double>(MarkovToken state, const Observation& obs, int turn, std::span<const ActionId> legal)>;

/// Explicit transition model of an enumerable environment family.
class EnvModel {
 public:
  struct Node {
    Observation observation;
    std::vector<ActionId> legal;
    bool terminal = false;
  };
  struct Transition {
    MarkovToken next;
    double reward = 0.0;
    bool terminal = false;
  };

  /// Throws UnsupportedOperation for families without Markov tokens.
  explicit EnvModel(const TaskSpec& spec);

  const TaskSpec& spec() const { return spec_; }
  const std::vector<MarkovToken>& start_states() const { return starts_; }
  const Node& node(MarkovToken s) const;
  const Transition& transition(MarkovToken s, ActionId a) const;
  std::size_t state_space_size() const { return nodes_.size(); }

 private:
  TaskSpec spec_;
  std::vector<MarkovToken> starts_;
  std::vector<Node> nodes_;
  std::vector<std::map<ActionId, Transition>> transitions_;
};

struct QKey {
  MarkovToken state;
  ActionId action = 0;
  int turn = 0;
  auto operator<=>(const QKey&) const = default;
};

struct VKey {
  MarkovToken state;
  int turn = 0;
  auto operator<=>(const VKey&) const = default;
};

/// Time-indexed action values Q(s, a, t) over reachable (state, turn) pairs.
class ExactQTable {
 public:
  ExactQTable(double gamma, int horizon) : gamma_(gamma), horizon_(horizon) {}

  double gamma() const { return gamma_; }
  int horizon() const { return horizon_; }
  const std::map<QKey, double>& entries() const { return entries_; }

  bool contains(MarkovToken s, ActionId a, int t) const { return entries_.count({s, a, t}) != 0; }
  /// Throws CoverageError when (s, a, t) is outside the table.
  double at(MarkovToken s, ActionId a, int t) const;
  void set(MarkovToken s, ActionId a, int t, double v) { entries_[{s, a, t}] = v; }
  /// Highest-valued action among `legal`; ties go to the smallest id.
  ActionId argmax(MarkovToken s, int t, std::span<const ActionId> legal) const;

  void write_csv(std::ostream& out) const;

 private:
  double gamma_;
  int horizon_;
  std::map<QKey, double> entries_;
};

/// State values V(s, t). Rows at t = horizon are present and zero.
class ExactVTable {
 public:
  ExactVTable(double gamma, int horizon) : gamma_(gamma), horizon_(horizon) {}

  double gamma() const { return gamma_; }
  int horizon() const { return horizon_; }
  const std::map<VKey, double>& entries() const { return entries_; }

  bool contains(MarkovToken s, int t) const { return entries_.count({s, t}) != 0; }
  double at(MarkovToken s, int t) const;
  void set(MarkovToken s, int t, double v) { entries_[{s, t}] = v; }

  void write_csv(std::ostream& out) const;

 private:
  double gamma_;
  int horizon_;
  std::map<VKey, double> entries_;
};

struct PolicyEvaluation {
  ExactQTable q;
  ExactVTable v;
};

/// Backward induction of Q^pi and V^pi over all (state, turn) pairs reachable
/// from the start states within `horizon` turns.
PolicyEvaluation evaluate_policy(const EnvModel& model, const MarkovPolicy& policy, double gamma, int horizon);

/// Bellman-optimal Q* by backward induction.
ExactQTable optimal_q(const EnvModel& model, double gamma, int horizon);

/// Greedy (argmax, smallest id on ties) policy of a table.
MarkovPolicy greedy_policy(const ExactQTable& q);
MarkovPolicy uniform_policy();
/// (1 - epsilon) greedy-on-q + epsilon uniform.
MarkovPolicy epsilon_greedy_policy(const ExactQTable& q, double epsilon);

/// Probability of ending in success from each start state, averaged uniformly
/// over start states. Uses gamma = 1 evaluation of the policy.
double success_probability(const EnvModel& model, const MarkovPolicy& policy, int horizon);

struct RecordedTransition {
  MarkovToken state;
  int turn = 0;
  ActionId action = 0;
  double reward = 0.0;
  MarkovToken next;
  bool terminal = false;
};

/// A^mu(s, a) = r + gamma * V^mu(s', t+1) - V^mu(s, t), with V(terminal) = 0.
double reference_advantage(const ExactVTable& v_mu, double gamma, const RecordedTransition& tr);
/// Same, evaluating mu by dynamic programming first.
double reference_advantage(const EnvModel& model, const MarkovPolicy& mu, double gamma, int horizon,
                           const RecordedTransition& tr);

}  // namespace prmlab
