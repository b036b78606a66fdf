#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prmlab/oracle/oracle.hpp"
#include "prmlab/prm/prm.hpp"
#include "prmlab/rollout/rollout.hpp"

namespace prmlab {

enum class PolicyFamily { tabular_softmax, linear_softmax };

std::string to_string(PolicyFamily f);
PolicyFamily policy_family_from_string(std::string_view s);

/// pi(a | s) proportional to exp(logit(s, a) / temperature) over the legal actions.
struct PolicyParams {
  PolicyFamily family = PolicyFamily::tabular_softmax;
  ScoreModel model;
  double temperature = 1.0;
  int version = 0;

  static PolicyParams make(PolicyFamily family, FeatureMapId map, double temperature = 1.0,
                           std::uint32_t hashed_dim = ScoreModel::kDefaultHashedDim);

  nlohmann::json to_json() const;
  static PolicyParams from_json(const nlohmann::json& j);
};

/// Logits over `legal`; rows a tabular policy has never seen are 0.
std::vector<double> policy_logits(const PolicyParams& p, const StateRef& state, std::span<const ActionId> legal);
std::vector<double> action_distribution(const PolicyParams& p, const StateRef& state, std::span<const ActionId> legal);
double log_prob(const PolicyParams& p, const StateRef& state, std::span<const ActionId> legal, ActionId action);
/// One uniform draw.
ActionId sample_action(const PolicyParams& p, const StateRef& state, std::span<const ActionId> legal, Rng& rng);
/// Highest probability; ties go to the smallest id.
ActionId greedy_action(const PolicyParams& p, const StateRef& state, std::span<const ActionId> legal);

/// A state to train on together with its legal actions.
struct PolicyState {
  StateRecord state;
  std::vector<ActionId> legal;
};

/// pi_i(a|s) proportional to pi_ref(a|s) exp(Q_phi(s, a) / beta) at every given state;
/// other states keep the reference's logits. Tabular policies only.
PolicyParams kl_regularized_update_closed_form(const PolicyParams& reference, const PrmParams& prm, double beta,
                                               std::span<const PolicyState> states);

/// E_pi[Q] - beta KL(pi || ref) at one state, for distributions over the same legal set.
double kl_objective(std::span<const double> pi, std::span<const double> ref, std::span<const double> q, double beta);

enum class ProposalKind { none, temperature, epsilon_mix, optimistic };
std::string to_string(ProposalKind k);
ProposalKind proposal_kind_from_string(std::string_view s);

/// Visit counts over (tabular-observation row, action), for the optimistic proposal.
class VisitCounts {
 public:
  void add(const StateRef& state, ActionId action);
  std::size_t get(const StateRef& state, ActionId action) const;

 private:
  std::map<std::pair<Digest128, ActionId>, std::size_t> counts_;
};

/// Candidate-generating distribution derived from a base policy.
///  temperature  softmax at temperature x `temperature`
///  epsilon-mix  (1 - epsilon) pi + epsilon uniform
///  optimistic   epsilon-mix of softmax(logit / T + bonus / sqrt(1 + visits))
struct Proposal {
  ProposalKind kind = ProposalKind::none;
  double temperature = 2.0;
  double epsilon = 0.3;
  double bonus = 1.0;
  const VisitCounts* counts = nullptr;
};

std::vector<double> proposal_distribution(const PolicyParams& base, const Proposal& proposal, const StateRef& state,
                                          std::span<const ActionId> legal);

/// Best-of-N: n candidates drawn i.i.d. (one uniform draw each) from the policy
/// or proposal, the highest PRM score wins, ties to the smallest id.
ActionId bon_act(const PolicyParams& policy, const PrmParams& prm, std::size_t n, const StateRef& state,
                 std::span<const ActionId> legal, Rng& rng, const Proposal* proposal = nullptr);

/// Where Stage-3 training states come from.
class StateSource {
 public:
  virtual ~StateSource() = default;
  virtual std::vector<PolicyState> draw(const PolicyParams& current, std::size_t n, Rng& rng) = 0;
};

/// Uniform draws from a fixed list.
class PoolStateSource final : public StateSource {
 public:
  explicit PoolStateSource(std::vector<PolicyState> pool);
  std::vector<PolicyState> draw(const PolicyParams& current, std::size_t n, Rng& rng) override;

 private:
  std::vector<PolicyState> pool_;
};

/// States visited by fresh rollouts of the current policy, re-collected every
/// `refresh_every` draws.
class OnPolicyStateSource final : public StateSource {
 public:
  OnPolicyStateSource(RolloutPlan plan, StartSampler start, int refresh_every);
  std::vector<PolicyState> draw(const PolicyParams& current, std::size_t n, Rng& rng) override;

 private:
  RolloutPlan plan_;
  StartSampler start_;
  int refresh_every_;
  int draws_ = 0;
  std::uint64_t generation_ = 0;
  std::vector<PolicyState> pool_;
};

struct PreferenceUpdateConfig {
  double beta = 0.1;
  int steps = 400;
  std::size_t states_per_step = 8;
  std::size_t pairs_per_state = 1;
  double learning_rate = 10.0;
  Proposal proposal;
};

struct PreferenceStats {
  std::size_t pairs_used = 0;
  std::size_t ties_skipped = 0;
  std::size_t states_skipped = 0;
};

/// h = [log pi(w) - log pi_ref(w)] - [log pi(l) - log pi_ref(l)].
double preference_margin(const PolicyParams& policy, const PolicyParams& reference, const StateRef& state,
                         std::span<const ActionId> legal, ActionId winner, ActionId loser);
/// One gradient step on -log sigmoid(beta h) for a single pair.
void preference_step(PolicyParams& policy, const PolicyParams& reference, const StateRef& state,
                     std::span<const ActionId> legal, ActionId winner, ActionId loser, double beta,
                     double learning_rate);

using StepCallback = std::function<void(int step, const PolicyParams& policy)>;

/// Online DPO: at each step draw states, sample two candidates per pair from
/// the proposal (the current policy by default), rank them by prm_score, skip
/// ties, and step on the preference loss under (policy, reference) likelihoods.
/// `on_step` runs before the first step (step 0) and after every step.
PolicyParams online_preference_update(PolicyParams policy, const PolicyParams& reference, const PrmParams& prm,
                                      StateSource& source, const PreferenceUpdateConfig& cfg, Rng& rng,
                                      PreferenceStats* stats = nullptr, const StepCallback& on_step = {});

/// Evaluation / acting mode: sample, greedy or bon:N.
struct ActMode {
  enum Kind { sample, greedy, bon } kind = sample;
  std::size_t n = 16;

  static ActMode parse(std::string_view s);
  std::string str() const;
};

class PolicyActor final : public Actor {
 public:
  PolicyActor(const PolicyParams& policy, ActMode mode, const PrmParams* prm = nullptr,
              const Proposal* proposal = nullptr);
  ActionId act(const ActorContext& ctx) const override;

 private:
  const PolicyParams& policy_;
  ActMode mode_;
  const PrmParams* prm_;
  const Proposal* proposal_;
};

/// A learned policy as a Markov policy for the oracle (observation-keyed maps only).
MarkovPolicy markov_policy(const PolicyParams& p);

struct ResetPoolEntry {
  nlohmann::json checkpoint;
  HistoryState history;
};

struct ResetDistribution {
  double mix = 0.0;
  std::vector<ResetPoolEntry> pool;

  void validate() const;
};

/// With probability mix restores a pooled checkpoint, otherwise the plain reset
/// of (spec, instance). No draw is consumed when mix is 0 or 1.
std::pair<std::unique_ptr<Environment>, HistoryState> sample_start(const ResetDistribution& reset,
                                                                   const TaskSpec& spec, std::uint64_t instance,
                                                                   Rng& rng, bool* from_pool = nullptr);
StartSampler start_sampler(const ResetDistribution& reset);

/// Checkpoints every non-terminal state along expert episodes.
std::vector<ResetPoolEntry> build_expert_pool(const Actor& expert, const RolloutPlan& plan);

struct BcConfig {
  int epochs = 200;
  double learning_rate = 5.0;
};

/// Behaviour cloning: maximum likelihood of expert (state, action) pairs by
/// full-batch gradient descent from zero logits.
PolicyParams behavior_cloning(std::span<const Trajectory> demos, PolicyParams init, const BcConfig& cfg = {});

}  // namespace prmlab
