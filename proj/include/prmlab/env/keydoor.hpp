#pragma once

#include "prmlab/env/environment.hpp"

namespace prmlab {

/// Fully observable n x n grid. The agent picks up the key and opens the door;
/// opening the door with the key is the only rewarded, terminal event. The key
/// sits at the middle of the left column, the door at the middle of the right
/// column; the start cell is drawn uniformly from the remaining cells.
class KeyDoorEnv final : public Environment {
 public:
  enum Action : ActionId { kUp = 0, kDown, kLeft, kRight, kPickup, kOpen, kActionCount };

  explicit KeyDoorEnv(TaskSpec spec);

  std::span<const EnvAction> action_table() const override;

  bool enumerable() const override { return true; }
  MarkovToken markov_state() const override;
  void set_markov_state(MarkovToken token, int turn) override;
  std::vector<MarkovToken> start_states() const override;
  std::size_t markov_state_space_size() const override;

  std::optional<ActionId> expert_action() const override;
  std::unique_ptr<Environment> clone() const override;

  int size() const { return spec().size; }
  int key_cell() const;
  int door_cell() const;
  int agent_cell() const { return row_ * size() + col_; }
  bool has_key() const { return has_key_; }
  bool door_open() const { return door_open_; }

  static MarkovToken encode(int cell, bool has_key, bool door_open);

 protected:
  std::string goal_id() const override;
  std::vector<std::string> facts() const override;
  std::vector<ActionId> legal_impl() const override;
  Outcome apply(ActionId id) override;
  void sample_configuration(Rng& stream) override;
  int layout_version() const override { return 1; }
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;

 private:
  int row_ = 0;
  int col_ = 0;
  bool has_key_ = false;
  bool door_open_ = false;
};

}  // namespace prmlab
