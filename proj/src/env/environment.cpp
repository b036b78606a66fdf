#include "prmlab/env/environment.hpp"

#include <algorithm>

#include "prmlab/core/error.hpp"
#include "prmlab/env/chain.hpp"
#include "prmlab/env/keydoor.hpp"
#include "prmlab/env/minihouse.hpp"

namespace prmlab {

Environment::Environment(TaskSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

const EnvAction& Environment::action(ActionId id) const {
  const auto table = action_table();
  if (id < 0 || static_cast<std::size_t>(id) >= table.size())
    throw ContractViolation("action id out of range: " + std::to_string(id));
  return table[static_cast<std::size_t>(id)];
}

Observation Environment::observe() const { return Observation(facts(), goal_id()); }

std::vector<ActionId> Environment::legal_actions() const {
  if (done_) throw ContractViolation("legal_actions called on a finished episode");
  auto ids = legal_impl();
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool Environment::is_legal(ActionId id) const {
  const auto ids = legal_impl();
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

StepResult Environment::step(ActionId id) {
  if (done_) throw ContractViolation("step called on a finished episode");
  StepResult result;
  if (is_legal(id)) {
    const Outcome out = apply(id);
    result.reward = out.reward;
    result.success = out.success;
  } else {
    result.illegal = true;
  }
  ++turn_;
  success_ = result.success;
  done_ = result.success || turn_ >= spec_.horizon;
  result.done = done_;
  result.observation = observe();
  return result;
}

void Environment::randomize(Rng& stream) {
  sample_configuration(stream);
  set_turn(0, false, false);
}

void Environment::set_turn(int turn, bool done, bool success) {
  turn_ = turn;
  done_ = done;
  success_ = success;
}

MarkovToken Environment::markov_state() const {
  throw UnsupportedOperation("markov_state is not available for family " + to_string(spec_.family));
}

void Environment::set_markov_state(MarkovToken, int) {
  throw UnsupportedOperation("set_markov_state is not available for family " + to_string(spec_.family));
}

std::vector<MarkovToken> Environment::start_states() const {
  throw UnsupportedOperation("start_states is not available for family " + to_string(spec_.family));
}

std::size_t Environment::markov_state_space_size() const {
  throw UnsupportedOperation("family " + to_string(spec_.family) + " has no enumerable state space");
}

nlohmann::json Environment::checkpoint() const {
  return nlohmann::json{{"family", to_string(spec_.family)},
                        {"layout_version", layout_version()},
                        {"spec", spec_},
                        {"turn", turn_},
                        {"done", done_},
                        {"success", success_},
                        {"state", save_state()}};
}

void Environment::restore(const nlohmann::json& cp) {
  if (cp.at("family").get<std::string>() != to_string(spec_.family))
    throw RuntimeAbort("checkpoint family mismatch: " + cp.at("family").get<std::string>());
  if (cp.at("layout_version").get<int>() != layout_version())
    throw RuntimeAbort("checkpoint layout version mismatch for family " + to_string(spec_.family));
  const TaskSpec saved = cp.at("spec").get<TaskSpec>();
  if (saved.size != spec_.size || saved.category != spec_.category)
    throw RuntimeAbort("checkpoint task parameters do not match the environment");
  load_state(cp.at("state"));
  set_turn(cp.at("turn").get<int>(), cp.at("done").get<bool>(), cp.at("success").get<bool>());
}

std::unique_ptr<Environment> make_environment(const TaskSpec& spec) {
  spec.validate();
  switch (spec.family) {
    case EnvFamily::keydoor: return std::make_unique<KeyDoorEnv>(spec);
    case EnvFamily::chain: return std::make_unique<ChainEnv>(spec);
    case EnvFamily::minihouse: return std::make_unique<MiniHouseEnv>(spec);
  }
  throw ConfigError("unknown environment family");
}

std::pair<std::unique_ptr<Environment>, HistoryState> reset(const TaskSpec& spec, Rng& stream) {
  auto env = make_environment(spec);
  env->randomize(stream);
  HistoryState state(env->observe());
  return {std::move(env), std::move(state)};
}

}  // namespace prmlab
