#include "prmlab/env/chain.hpp"

#include <array>

#include "prmlab/core/error.hpp"

namespace prmlab {

namespace {
const std::array<EnvAction, ChainEnv::kActionCount> kTable{{{ChainEnv::kLeft, "left"}, {ChainEnv::kRight, "right"}}};
}

ChainEnv::ChainEnv(TaskSpec spec) : Environment(std::move(spec)) {
  if (this->spec().family != EnvFamily::chain) throw ConfigError("ChainEnv requires the chain family");
}

std::span<const EnvAction> ChainEnv::action_table() const { return kTable; }

void ChainEnv::set_markov_state(MarkovToken token, int turn) {
  if (token.value >= static_cast<std::uint64_t>(length())) throw ContractViolation("chain token out of range");
  position_ = static_cast<int>(token.value);
  const bool at_goal = position_ == length() - 1;
  set_turn(turn, at_goal || turn >= spec().horizon, at_goal);
}

std::string ChainEnv::goal_id() const { return "chain-" + std::to_string(length()); }

std::vector<std::string> ChainEnv::facts() const { return {"pos:" + std::to_string(position_)}; }

Environment::Outcome ChainEnv::apply(ActionId id) {
  if (id == kLeft) {
    if (position_ > 0) --position_;
    return {0.0, false};
  }
  ++position_;
  if (position_ == length() - 1) return {1.0, true};
  return {0.0, false};
}

std::optional<ActionId> ChainEnv::expert_action() const {
  if (position_ >= length() - 1) return std::nullopt;
  return kRight;
}

std::unique_ptr<Environment> ChainEnv::clone() const { return std::make_unique<ChainEnv>(*this); }

}  // namespace prmlab
