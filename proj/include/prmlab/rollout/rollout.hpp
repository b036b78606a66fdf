#pragma once

#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prmlab/env/environment.hpp"
#include "prmlab/oracle/oracle.hpp"
#include "prmlab/prm/features.hpp"

namespace prmlab {

struct ActorContext {
  const HistoryState& history;
  const Digest128& state_key;
  std::span<const ActionId> legal;
  /// The live environment; only privileged actors (the scripted expert, Markov
  /// oracle policies) may look past the observation.
  const Environment& env;
  Rng& rng;
};

/// Anything that picks an action in a running episode. act() must be safe to
/// call concurrently from several episodes.
class Actor {
 public:
  virtual ~Actor() = default;
  virtual ActionId act(const ActorContext& ctx) const = 0;
};

class UniformActor final : public Actor {
 public:
  ActionId act(const ActorContext& ctx) const override;
};

class ExpertActor final : public Actor {
 public:
  ActionId act(const ActorContext& ctx) const override;
};

/// Samples from a Markov policy using the environment's Markov token.
class MarkovActor final : public Actor {
 public:
  explicit MarkovActor(MarkovPolicy policy) : policy_(std::move(policy)) {}
  ActionId act(const ActorContext& ctx) const override;

 private:
  MarkovPolicy policy_;
};

/// A recorded state: history digest, latest observation, turn and (for
/// enumerable families) the Markov token.
struct StateRecord {
  Digest128 key;
  Observation observation;
  int turn = 0;
  std::optional<MarkovToken> token;

  StateRef ref() const { return {key, &observation, turn}; }
};

struct TrajectoryStep {
  StateRecord state;
  std::vector<ActionId> legal;
  ActionId action = 0;
  double reward = 0.0;
};

struct Trajectory {
  TaskSpec spec;
  std::uint64_t instance = 0;
  std::uint64_t repeat = 0;
  std::vector<TrajectoryStep> steps;
  StateRecord final_state;
  bool success = false;
  /// Turn index at which the episode ended (start turn + steps.size()).
  int length = 0;
};

/// Produces the starting environment and history of an episode.
using StartSampler =
    std::function<std::pair<std::unique_ptr<Environment>, HistoryState>(const TaskSpec&, std::uint64_t instance, Rng& rng)>;

/// The plain reset from the task's instance stream.
StartSampler default_start();

struct RolloutPlan {
  std::vector<TaskSpec> tasks;
  std::uint64_t episodes_per_task = 1;
  std::uint64_t repeats = 1;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct RolloutLog {
  std::vector<Trajectory> trajectories;
  /// One line per discarded episode: episode index and the fault.
  std::vector<std::string> discarded;
};

/// Runs tasks x episodes_per_task x repeats episodes with OpenMP. The result is
/// a pure function of (actor, plan without workers, start sampler).
RolloutLog collect_rollouts(const Actor& actor, const RolloutPlan& plan, const StartSampler& start = default_start());
/// Single-threaded reference of collect_rollouts.
RolloutLog collect_rollouts_serial(const Actor& actor, const RolloutPlan& plan,
                                   const StartSampler& start = default_start());

/// Runs one episode from an already constructed start.
Trajectory run_episode(const Actor& actor, std::unique_ptr<Environment> env, HistoryState history, Rng& policy_rng,
                       std::uint64_t instance = 0, std::uint64_t repeat = 0);

struct GEntry {
  StateRecord state;
  ActionId action = 0;
  std::vector<double> samples;
};

/// The rollout dictionary: 𝒢(s, a) keyed by the (history, action) digest, and
/// 𝒢(s) listing (action, return) samples per history digest.
struct RolloutDict {
  double gamma = 1.0;
  std::map<Digest128, GEntry> by_pair;
  std::map<Digest128, std::vector<std::pair<ActionId, double>>> by_state;
};

RolloutDict build_g_dict(std::span<const Trajectory> trajectories, double gamma);

enum class TargetNormalization { clip, minmax };

struct QTargetRecord {
  StateRecord state;
  ActionId action = 0;
  double q_hat = 0.0;
  std::size_t visits = 0;
};

std::vector<QTargetRecord> compute_q_targets(const RolloutDict& g,
                                             TargetNormalization norm = TargetNormalization::clip);

struct PreferenceRecord {
  StateRecord state;
  ActionId winner = 0;
  ActionId loser = 0;
  double margin = 0.0;
};

std::vector<PreferenceRecord> build_preference_pairs(const RolloutDict& g, std::span<const QTargetRecord> targets,
                                                     double delta);

struct TransitionRecord {
  StateRecord state;
  ActionId action = 0;
  StateRecord next;
  std::vector<ActionId> next_legal;
  /// The episode ended with this transition; next is absorbing with Q = 0.
  bool terminal = false;
  /// Filled by relabeling; kNullAction for terminal transitions.
  std::optional<ActionId> next_action;
  int source_iteration = 0;
};

struct TransitionDatasets {
  std::vector<TransitionRecord> positives;
  std::vector<TransitionRecord> negatives;
};

std::vector<TransitionRecord> transitions_of(std::span<const Trajectory> trajectories, int source_iteration);

/// Draws a' at a non-terminal next state.
using RelabelPolicy = std::function<ActionId(const StateRecord& state, std::span<const ActionId> legal, Rng& rng)>;

void relabel(std::vector<TransitionRecord>& records, const RelabelPolicy& policy, Rng& rng);

TransitionDatasets build_irl_datasets(std::span<const Trajectory> expert_demos,
                                      std::span<const Trajectory> learner_trajectories,
                                      std::span<const TransitionRecord> prior_negatives, int iteration,
                                      const RelabelPolicy& relabel_policy, Rng& rng);

// JSONL persistence. Every line carries a "schema" field.
nlohmann::json to_json(const StateRecord& s);
StateRecord state_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Trajectory& t);
Trajectory trajectory_from_json(const nlohmann::json& j);
nlohmann::json to_json(const QTargetRecord& r);
QTargetRecord q_target_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PreferenceRecord& r);
PreferenceRecord preference_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TransitionRecord& r);
TransitionRecord transition_from_json(const nlohmann::json& j);

template <class T>
void write_jsonl(std::ostream& out, std::span<const T> records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}
void write_g_jsonl(std::ostream& out, const RolloutDict& g);

template <class T, class Parse>
std::vector<T> read_jsonl(std::istream& in, Parse parse) {
  std::vector<T> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(parse(nlohmann::json::parse(line)));
  return out;
}

/// Mean discounted return-to-go per (latest observation, turn), fitted from
/// rollouts of a reference policy; the Monte-Carlo stand-in for an exact V table.
struct ReferenceValues {
  double gamma = 1.0;
  std::map<std::pair<Digest128, int>, double> values;

  std::optional<double> find(const Observation& obs, int turn) const;
};

ReferenceValues fit_reference_values(std::span<const Trajectory> trajectories, double gamma);
/// Exact values keyed the same way (observation digest of each Markov state).
ReferenceValues reference_values_from(const ExactVTable& v, const EnvModel& model);

}  // namespace prmlab
