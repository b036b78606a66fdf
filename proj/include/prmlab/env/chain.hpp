#pragma once

#include "prmlab/env/environment.hpp"

namespace prmlab {

/// Positions 0..length-1, start at 0, reward 1 on reaching the last position.
/// "left" at position 0 stays put.
class ChainEnv final : public Environment {
 public:
  enum Action : ActionId { kLeft = 0, kRight, kActionCount };

  explicit ChainEnv(TaskSpec spec);

  std::span<const EnvAction> action_table() const override;

  bool enumerable() const override { return true; }
  MarkovToken markov_state() const override { return MarkovToken{static_cast<std::uint64_t>(position_)}; }
  void set_markov_state(MarkovToken token, int turn) override;
  std::vector<MarkovToken> start_states() const override { return {MarkovToken{0}}; }
  std::size_t markov_state_space_size() const override { return static_cast<std::size_t>(length()); }

  std::optional<ActionId> expert_action() const override;
  std::unique_ptr<Environment> clone() const override;

  int length() const { return spec().size; }
  int position() const { return position_; }

 protected:
  std::string goal_id() const override;
  std::vector<std::string> facts() const override;
  std::vector<ActionId> legal_impl() const override { return {kLeft, kRight}; }
  Outcome apply(ActionId id) override;
  void sample_configuration(Rng&) override { position_ = 0; }
  int layout_version() const override { return 1; }
  nlohmann::json save_state() const override { return nlohmann::json{{"position", position_}}; }
  void load_state(const nlohmann::json& s) override { position_ = s.at("position").get<int>(); }

 private:
  int position_ = 0;
};

}  // namespace prmlab
