#pragma once

#include <array>

#include "prmlab/env/environment.hpp"

namespace prmlab {

/// Partially observable household in the style of text-game benchmarks.
/// A house has 2-4 rooms, 4-8 receptacles and 1-3 objects; object placements
/// are hidden until the agent visits (and, for containers, opens) a receptacle.
class MiniHouseEnv final : public Environment {
 public:
  static constexpr int kReceptacles = 10;
  static constexpr int kObjects = 6;
  static constexpr int kMaxRooms = 4;
  static constexpr int kNowhere = -1;

  enum Receptacle : int {
    kCountertop = 0, kCabinet1, kCabinet2, kDrawer, kShelf, kDiningtable, kSidetable, kFridge, kMicrowave, kSinkbasin
  };

  explicit MiniHouseEnv(TaskSpec spec);

  std::span<const EnvAction> action_table() const override;
  std::optional<ActionId> expert_action() const override;
  std::unique_ptr<Environment> clone() const override;

  static std::string_view receptacle_name(int r);
  static std::string_view object_name(int o);
  static bool openable(int r);

  // Action id layout.
  static ActionId goto_receptacle(int r) { return r; }
  static ActionId goto_room(int k) { return kReceptacles + k; }
  static ActionId open_action(int r);
  static ActionId close_action(int r);
  static ActionId take_action(int o) { return 24 + o; }
  static ActionId put_action(int o) { return 30 + o; }
  static ActionId clean_action(int o) { return 36 + o; }
  static ActionId heat_action(int o) { return 42 + o; }
  static ActionId cool_action(int o) { return 48 + o; }
  static constexpr ActionId kUseDesklamp = 54;
  static constexpr ActionId kLook = 55;
  static constexpr ActionId kActionCount = 56;

  /// Hidden placement: receptacle holding each object, kNowhere if absent or held.
  const std::array<int, kObjects>& object_location() const { return object_at_; }
  /// Room of each receptacle, kNowhere if the receptacle is absent.
  const std::array<int, kReceptacles>& receptacle_room() const { return room_of_; }
  int room_count() const { return rooms_; }
  int target_receptacle() const { return target_recep_; }
  const std::vector<int>& targets() const { return targets_; }
  int lamp_host() const { return lamp_host_; }
  bool visible(int object) const;

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
  bool goal_met() const;
  bool needs_processing(int object) const;
  bool processed(int object) const;
  int appliance() const;
  bool accessible(int r) const { return !openable(r) || open_[static_cast<std::size_t>(r)]; }

  HouseCategory category_ = HouseCategory::pick;
  int rooms_ = 2;
  std::array<int, kReceptacles> room_of_{};
  std::array<bool, kReceptacles> open_{};
  std::array<int, kObjects> object_at_{};
  std::array<bool, kObjects> held_{};
  std::array<bool, kObjects> clean_{};
  std::array<bool, kObjects> hot_{};
  std::array<bool, kObjects> cold_{};
  std::vector<int> targets_;
  int target_recep_ = kCountertop;
  int lamp_host_ = kNowhere;
  int room_ = 0;
  int location_ = kNowhere;
  bool examined_ = false;
};

}  // namespace prmlab
