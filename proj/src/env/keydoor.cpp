#include "prmlab/env/keydoor.hpp"

#include <array>

#include "prmlab/core/error.hpp"

namespace prmlab {

namespace {

const std::array<EnvAction, KeyDoorEnv::kActionCount> kTable{{
    {KeyDoorEnv::kUp, "up"},
    {KeyDoorEnv::kDown, "down"},
    {KeyDoorEnv::kLeft, "left"},
    {KeyDoorEnv::kRight, "right"},
    {KeyDoorEnv::kPickup, "pickup"},
    {KeyDoorEnv::kOpen, "open"},
}};

std::string cell_name(int cell, int n) { return "r" + std::to_string(cell / n) + "c" + std::to_string(cell % n); }

}  // namespace

KeyDoorEnv::KeyDoorEnv(TaskSpec spec) : Environment(std::move(spec)) {
  if (this->spec().family != EnvFamily::keydoor) throw ConfigError("KeyDoorEnv requires the keydoor family");
}

std::span<const EnvAction> KeyDoorEnv::action_table() const { return kTable; }

int KeyDoorEnv::key_cell() const { return (size() / 2) * size(); }
int KeyDoorEnv::door_cell() const { return (size() / 2) * size() + size() - 1; }

MarkovToken KeyDoorEnv::encode(int cell, bool has_key, bool door_open) {
  return MarkovToken{static_cast<std::uint64_t>(cell) * 4 + (has_key ? 2U : 0U) + (door_open ? 1U : 0U)};
}

MarkovToken KeyDoorEnv::markov_state() const { return encode(agent_cell(), has_key_, door_open_); }

void KeyDoorEnv::set_markov_state(MarkovToken token, int turn) {
  const auto cells = static_cast<std::uint64_t>(size() * size());
  if (token.value >= cells * 4) throw ContractViolation("keydoor token out of range");
  const int cell = static_cast<int>(token.value / 4);
  row_ = cell / size();
  col_ = cell % size();
  has_key_ = (token.value & 2U) != 0;
  door_open_ = (token.value & 1U) != 0;
  set_turn(turn, door_open_ || turn >= spec().horizon, door_open_);
}

std::vector<MarkovToken> KeyDoorEnv::start_states() const {
  std::vector<MarkovToken> out;
  for (int cell = 0; cell < size() * size(); ++cell)
    if (cell != key_cell() && cell != door_cell()) out.push_back(encode(cell, false, false));
  return out;
}

std::size_t KeyDoorEnv::markov_state_space_size() const { return static_cast<std::size_t>(size() * size()) * 4; }

std::string KeyDoorEnv::goal_id() const { return "keydoor-" + std::to_string(size()); }

std::vector<std::string> KeyDoorEnv::facts() const {
  const int n = size();
  std::vector<std::string> f;
  f.push_back("agent:" + cell_name(agent_cell(), n));
  f.push_back(has_key_ ? "key:held" : "key:" + cell_name(key_cell(), n));
  f.push_back("door:" + cell_name(door_cell(), n));
  f.push_back(door_open_ ? "door:open" : "door:locked");
  return f;
}

std::vector<ActionId> KeyDoorEnv::legal_impl() const {
  std::vector<ActionId> ids;
  if (row_ > 0) ids.push_back(kUp);
  if (row_ < size() - 1) ids.push_back(kDown);
  if (col_ > 0) ids.push_back(kLeft);
  if (col_ < size() - 1) ids.push_back(kRight);
  ids.push_back(kPickup);
  ids.push_back(kOpen);
  return ids;
}

Environment::Outcome KeyDoorEnv::apply(ActionId id) {
  switch (id) {
    case kUp: --row_; break;
    case kDown: ++row_; break;
    case kLeft: --col_; break;
    case kRight: ++col_; break;
    case kPickup:
      if (agent_cell() == key_cell()) has_key_ = true;
      break;
    case kOpen:
      if (agent_cell() == door_cell() && has_key_) {
        door_open_ = true;
        return {1.0, true};
      }
      break;
    default: throw ContractViolation("keydoor action id out of range");
  }
  return {0.0, false};
}

void KeyDoorEnv::sample_configuration(Rng& stream) {
  const auto starts = start_states();
  const MarkovToken start = starts[stream.index(starts.size())];
  const int cell = static_cast<int>(start.value / 4);
  row_ = cell / size();
  col_ = cell % size();
  has_key_ = false;
  door_open_ = false;
}

std::optional<ActionId> KeyDoorEnv::expert_action() const {
  if (door_open_) return std::nullopt;
  const int target = has_key_ ? door_cell() : key_cell();
  const int tr = target / size();
  const int tc = target % size();
  if (row_ < tr) return kDown;
  if (row_ > tr) return kUp;
  if (col_ < tc) return kRight;
  if (col_ > tc) return kLeft;
  return has_key_ ? kOpen : kPickup;
}

std::unique_ptr<Environment> KeyDoorEnv::clone() const { return std::make_unique<KeyDoorEnv>(*this); }

nlohmann::json KeyDoorEnv::save_state() const {
  return nlohmann::json{{"row", row_}, {"col", col_}, {"has_key", has_key_}, {"door_open", door_open_}};
}

void KeyDoorEnv::load_state(const nlohmann::json& s) {
  row_ = s.at("row").get<int>();
  col_ = s.at("col").get<int>();
  has_key_ = s.at("has_key").get<bool>();
  door_open_ = s.at("door_open").get<bool>();
}

}  // namespace prmlab
