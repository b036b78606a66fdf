#pragma once

#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"
#include "prmlab/core/rng.hpp"
#include "prmlab/env/types.hpp"

namespace prmlab {

/// One episode of a turn-level environment. Handles are single-owner; the
/// base class owns the turn counter, horizon and termination bookkeeping.
class Environment {
 public:
  explicit Environment(TaskSpec spec);
  virtual ~Environment() = default;
  Environment(const Environment&) = default;
  Environment& operator=(const Environment&) = delete;

  const TaskSpec& spec() const { return spec_; }
  int turn() const { return turn_; }
  bool done() const { return done_; }
  bool succeeded() const { return success_; }

  /// The family's global action table; ids are dense indices into it.
  virtual std::span<const EnvAction> action_table() const = 0;
  const EnvAction& action(ActionId id) const;

  Observation observe() const;
  /// Sorted ids. Throws ContractViolation once the episode is done.
  std::vector<ActionId> legal_actions() const;
  bool is_legal(ActionId id) const;
  /// Actions outside the legal set run as a no-op with reward 0 and are flagged.
  StepResult step(ActionId id);

  /// Samples the hidden configuration from the stream and rewinds to turn 0.
  void randomize(Rng& stream);

  virtual bool enumerable() const { return false; }
  virtual MarkovToken markov_state() const;
  /// Puts an enumerable environment into the given Markov state at `turn`.
  virtual void set_markov_state(MarkovToken token, int turn);
  /// Every start state `randomize` can produce (enumerable families).
  virtual std::vector<MarkovToken> start_states() const;
  /// Number of distinct tokens in the family's Markov state space.
  virtual std::size_t markov_state_space_size() const;

  /// Privileged scripted expert, when the family has one.
  virtual std::optional<ActionId> expert_action() const { return std::nullopt; }

  virtual std::unique_ptr<Environment> clone() const = 0;

  /// Hidden configuration and dynamic state, tagged with a layout version.
  nlohmann::json checkpoint() const;
  /// Throws RuntimeAbort when the checkpoint belongs to another family or version.
  void restore(const nlohmann::json& checkpoint);

 protected:
  struct Outcome {
    double reward = 0.0;
    bool success = false;
  };

  virtual std::string goal_id() const = 0;
  virtual std::vector<std::string> facts() const = 0;
  virtual std::vector<ActionId> legal_impl() const = 0;
  /// Applies a legal action.
  virtual Outcome apply(ActionId id) = 0;
  virtual void sample_configuration(Rng& stream) = 0;
  virtual int layout_version() const = 0;
  virtual nlohmann::json save_state() const = 0;
  virtual void load_state(const nlohmann::json& state) = 0;

  void set_turn(int turn, bool done, bool success);

 private:
  TaskSpec spec_;
  int turn_ = 0;
  bool done_ = false;
  bool success_ = false;
};

std::unique_ptr<Environment> make_environment(const TaskSpec& spec);

/// Fresh episode whose hidden configuration is a pure function of `stream`.
std::pair<std::unique_ptr<Environment>, HistoryState> reset(const TaskSpec& spec, Rng& stream);

/// Stream used for the hidden configuration of instance `instance` of a task.
inline Rng task_stream(const TaskSpec& spec, std::uint64_t instance = 0) {
  return Rng::stream(spec.seed, {0x7a5cULL, instance});
}

}  // namespace prmlab
