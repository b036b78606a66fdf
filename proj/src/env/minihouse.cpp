#include "prmlab/env/minihouse.hpp"

#include <algorithm>

#include "prmlab/core/error.hpp"

namespace prmlab {

namespace {

constexpr std::array<std::string_view, MiniHouseEnv::kReceptacles> kRecepNames{
    "countertop-1", "cabinet-1", "cabinet-2", "drawer-1", "shelf-1",
    "diningtable-1", "sidetable-1", "fridge-1", "microwave-1", "sinkbasin-1"};
constexpr std::array<std::string_view, MiniHouseEnv::kObjects> kObjectNames{"apple-1", "mug-1", "book-1",
                                                                             "plate-1", "potato-1", "cd-1"};
constexpr std::array<int, 5> kOpenables{MiniHouseEnv::kCabinet1, MiniHouseEnv::kCabinet2, MiniHouseEnv::kDrawer,
                                        MiniHouseEnv::kFridge, MiniHouseEnv::kMicrowave};
// Receptacles that can be the destination of a placement task.
constexpr std::array<int, 7> kDestinations{MiniHouseEnv::kCountertop, MiniHouseEnv::kCabinet1,
                                           MiniHouseEnv::kCabinet2,   MiniHouseEnv::kDrawer,
                                           MiniHouseEnv::kShelf,      MiniHouseEnv::kDiningtable,
                                           MiniHouseEnv::kSidetable};
constexpr std::array<int, 4> kLampHosts{MiniHouseEnv::kCountertop, MiniHouseEnv::kShelf, MiniHouseEnv::kDiningtable,
                                        MiniHouseEnv::kSidetable};

int openable_index(int r) {
  for (std::size_t i = 0; i < kOpenables.size(); ++i)
    if (kOpenables[i] == r) return static_cast<int>(i);
  return -1;
}

std::vector<EnvAction> build_table() {
  std::vector<EnvAction> t;
  auto add = [&](std::string label) { t.push_back({static_cast<ActionId>(t.size()), std::move(label)}); };
  for (auto r : kRecepNames) add("goto " + std::string(r));
  for (int k = 0; k < MiniHouseEnv::kMaxRooms; ++k) add("goto room-" + std::to_string(k));
  for (int r : kOpenables) add("open " + std::string(kRecepNames[static_cast<std::size_t>(r)]));
  for (int r : kOpenables) add("close " + std::string(kRecepNames[static_cast<std::size_t>(r)]));
  for (const char* verb : {"take", "put", "clean", "heat", "cool"})
    for (auto o : kObjectNames) add(std::string(verb) + " " + std::string(o));
  add("use desklamp-1");
  add("look");
  return t;
}

const std::vector<EnvAction>& table() {
  static const std::vector<EnvAction> t = build_table();
  return t;
}

template <std::size_t N>
int pick(Rng& rng, const std::array<int, N>& options) {
  return options[rng.index(N)];
}

}  // namespace

MiniHouseEnv::MiniHouseEnv(TaskSpec spec) : Environment(std::move(spec)) {
  if (this->spec().family != EnvFamily::minihouse) throw ConfigError("MiniHouseEnv requires the minihouse family");
  category_ = *this->spec().category;
  room_of_.fill(kNowhere);
  object_at_.fill(kNowhere);
}

std::span<const EnvAction> MiniHouseEnv::action_table() const { return table(); }

std::string_view MiniHouseEnv::receptacle_name(int r) { return kRecepNames.at(static_cast<std::size_t>(r)); }
std::string_view MiniHouseEnv::object_name(int o) { return kObjectNames.at(static_cast<std::size_t>(o)); }
bool MiniHouseEnv::openable(int r) { return openable_index(r) >= 0; }

ActionId MiniHouseEnv::open_action(int r) {
  const int i = openable_index(r);
  if (i < 0) throw ContractViolation("receptacle is not openable");
  return 14 + i;
}

ActionId MiniHouseEnv::close_action(int r) {
  const int i = openable_index(r);
  if (i < 0) throw ContractViolation("receptacle is not openable");
  return 19 + i;
}

int MiniHouseEnv::appliance() const {
  switch (category_) {
    case HouseCategory::clean: return kSinkbasin;
    case HouseCategory::heat: return kMicrowave;
    case HouseCategory::cool: return kFridge;
    default: return kNowhere;
  }
}

bool MiniHouseEnv::needs_processing(int) const { return appliance() != kNowhere; }

bool MiniHouseEnv::processed(int o) const {
  const auto i = static_cast<std::size_t>(o);
  switch (category_) {
    case HouseCategory::clean: return clean_[i];
    case HouseCategory::heat: return hot_[i];
    case HouseCategory::cool: return cold_[i];
    default: return true;
  }
}

bool MiniHouseEnv::visible(int object) const {
  const int r = object_at_[static_cast<std::size_t>(object)];
  return location_ != kNowhere && r == location_ && accessible(r);
}

void MiniHouseEnv::sample_configuration(Rng& rng) {
  room_of_.fill(kNowhere);
  open_.fill(false);
  object_at_.fill(kNowhere);
  held_.fill(false);
  clean_.fill(false);
  hot_.fill(false);
  cold_.fill(false);
  targets_.clear();
  examined_ = false;
  room_ = 0;
  location_ = kNowhere;

  rooms_ = 2 + static_cast<int>(rng.index(3));
  const int receptacle_count = 4 + static_cast<int>(rng.index(5));

  std::vector<int> chosen;
  auto require = [&](int r) {
    if (std::find(chosen.begin(), chosen.end(), r) == chosen.end()) chosen.push_back(r);
  };
  lamp_host_ = kNowhere;
  target_recep_ = kNowhere;
  if (category_ == HouseCategory::look) {
    lamp_host_ = pick(rng, kLampHosts);
    require(lamp_host_);
  } else {
    target_recep_ = pick(rng, kDestinations);
    require(target_recep_);
  }
  if (appliance() != kNowhere) require(appliance());

  std::vector<int> rest;
  for (int r = 0; r < kReceptacles; ++r)
    if (std::find(chosen.begin(), chosen.end(), r) == chosen.end()) rest.push_back(r);
  rng.shuffle(rest.begin(), rest.end());
  for (int r : rest) {
    if (static_cast<int>(chosen.size()) >= receptacle_count) break;
    chosen.push_back(r);
  }
  std::sort(chosen.begin(), chosen.end());

  // Every room gets at least one receptacle.
  std::vector<int> order = chosen;
  rng.shuffle(order.begin(), order.end());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int room = i < static_cast<std::size_t>(rooms_) ? static_cast<int>(i) : static_cast<int>(rng.index(static_cast<std::size_t>(rooms_)));
    room_of_[static_cast<std::size_t>(order[i])] = room;
  }

  std::vector<int> objects(kObjects);
  for (int o = 0; o < kObjects; ++o) objects[static_cast<std::size_t>(o)] = o;
  rng.shuffle(objects.begin(), objects.end());
  const int target_count = category_ == HouseCategory::pick2 ? 2 : 1;
  const int object_count = target_count + static_cast<int>(rng.index(static_cast<std::size_t>(4 - target_count)));
  std::vector<int> sources;
  for (int r : chosen)
    if (r != target_recep_) sources.push_back(r);
  for (int i = 0; i < object_count; ++i) {
    const int o = objects[static_cast<std::size_t>(i)];
    if (i < target_count) targets_.push_back(o);
    object_at_[static_cast<std::size_t>(o)] = sources[rng.index(sources.size())];
  }
  std::sort(targets_.begin(), targets_.end());
}

std::string MiniHouseEnv::goal_id() const {
  std::string g = to_string(category_);
  for (int o : targets_) g += " " + std::string(object_name(o));
  if (category_ == HouseCategory::look)
    g += " desklamp-1";
  else
    g += " " + std::string(receptacle_name(target_recep_));
  return g;
}

std::vector<std::string> MiniHouseEnv::facts() const {
  std::vector<std::string> f;
  f.push_back("room:" + std::to_string(room_));
  f.push_back(location_ == kNowhere ? "at:none" : "at:" + std::string(receptacle_name(location_)));
  for (int r = 0; r < kReceptacles; ++r)
    if (room_of_[static_cast<std::size_t>(r)] == room_) f.push_back("recep:" + std::string(receptacle_name(r)));
  if (location_ != kNowhere) {
    if (openable(location_))
      f.push_back((open_[static_cast<std::size_t>(location_)] ? "open:" : "closed:") +
                  std::string(receptacle_name(location_)));
    if (location_ == lamp_host_) f.push_back("desklamp:here");
  }
  for (int o = 0; o < kObjects; ++o) {
    const auto i = static_cast<std::size_t>(o);
    const std::string name(object_name(o));
    if (visible(o)) f.push_back("see:" + name);
    if (held_[i]) {
      f.push_back("holding:" + name);
      if (clean_[i]) f.push_back("clean:" + name);
      if (hot_[i]) f.push_back("hot:" + name);
      if (cold_[i]) f.push_back("cold:" + name);
    }
  }
  return f;
}

std::vector<ActionId> MiniHouseEnv::legal_impl() const {
  std::vector<ActionId> ids;
  for (int r = 0; r < kReceptacles; ++r)
    if (room_of_[static_cast<std::size_t>(r)] == room_ && r != location_) ids.push_back(goto_receptacle(r));
  for (int k = 0; k < rooms_; ++k)
    if (k != room_) ids.push_back(goto_room(k));
  if (location_ != kNowhere && openable(location_))
    ids.push_back(open_[static_cast<std::size_t>(location_)] ? close_action(location_) : open_action(location_));
  for (int o = 0; o < kObjects; ++o) {
    const auto i = static_cast<std::size_t>(o);
    if (visible(o)) ids.push_back(take_action(o));
    if (held_[i]) {
      if (location_ != kNowhere && accessible(location_)) ids.push_back(put_action(o));
      if (location_ == kSinkbasin) ids.push_back(clean_action(o));
      if (location_ == kMicrowave) ids.push_back(heat_action(o));
      if (location_ == kFridge) ids.push_back(cool_action(o));
    }
  }
  if (location_ != kNowhere && location_ == lamp_host_) ids.push_back(kUseDesklamp);
  ids.push_back(kLook);
  return ids;
}

bool MiniHouseEnv::goal_met() const {
  if (category_ == HouseCategory::look) return examined_;
  return std::all_of(targets_.begin(), targets_.end(), [&](int o) {
    return object_at_[static_cast<std::size_t>(o)] == target_recep_ && processed(o);
  });
}

Environment::Outcome MiniHouseEnv::apply(ActionId id) {
  if (id < kReceptacles) {
    location_ = id;
  } else if (id < 14) {
    room_ = id - kReceptacles;
    location_ = kNowhere;
  } else if (id < 19) {
    open_[static_cast<std::size_t>(kOpenables[static_cast<std::size_t>(id - 14)])] = true;
  } else if (id < 24) {
    open_[static_cast<std::size_t>(kOpenables[static_cast<std::size_t>(id - 19)])] = false;
  } else if (id < 30) {
    const auto o = static_cast<std::size_t>(id - 24);
    object_at_[o] = kNowhere;
    held_[o] = true;
  } else if (id < 36) {
    const auto o = static_cast<std::size_t>(id - 30);
    held_[o] = false;
    object_at_[o] = location_;
  } else if (id < 42) {
    clean_[static_cast<std::size_t>(id - 36)] = true;
  } else if (id < 48) {
    hot_[static_cast<std::size_t>(id - 42)] = true;
  } else if (id < 54) {
    cold_[static_cast<std::size_t>(id - 48)] = true;
  } else if (id == kUseDesklamp) {
    if (category_ == HouseCategory::look && held_[static_cast<std::size_t>(targets_.front())]) examined_ = true;
  }
  if (goal_met()) return {1.0, true};
  return {0.0, false};
}

std::optional<ActionId> MiniHouseEnv::expert_action() const {
  if (done()) return std::nullopt;
  auto go_to = [&](int r) -> std::optional<ActionId> {
    const int room = room_of_[static_cast<std::size_t>(r)];
    if (room != room_) return goto_room(room);
    if (location_ != r) return goto_receptacle(r);
    return std::nullopt;
  };
  auto fetch = [&](int o) -> ActionId {
    const int r = object_at_[static_cast<std::size_t>(o)];
    if (auto a = go_to(r)) return *a;
    if (!accessible(r)) return open_action(r);
    return take_action(o);
  };

  if (category_ == HouseCategory::look) {
    const int o = targets_.front();
    if (!held_[static_cast<std::size_t>(o)]) return fetch(o);
    if (auto a = go_to(lamp_host_)) return *a;
    return kUseDesklamp;
  }
  for (int o : targets_) {
    const auto i = static_cast<std::size_t>(o);
    if (object_at_[i] == target_recep_ && processed(o)) continue;
    if (!held_[i]) return fetch(o);
    if (!processed(o)) {
      if (auto a = go_to(appliance())) return *a;
      if (category_ == HouseCategory::clean) return clean_action(o);
      if (category_ == HouseCategory::heat) return heat_action(o);
      return cool_action(o);
    }
    if (auto a = go_to(target_recep_)) return *a;
    if (!accessible(target_recep_)) return open_action(target_recep_);
    return put_action(o);
  }
  return std::nullopt;
}

std::unique_ptr<Environment> MiniHouseEnv::clone() const { return std::make_unique<MiniHouseEnv>(*this); }

nlohmann::json MiniHouseEnv::save_state() const {
  return nlohmann::json{{"rooms", rooms_},         {"room_of", room_of_},   {"open", open_},
                        {"object_at", object_at_}, {"held", held_},         {"clean", clean_},
                        {"hot", hot_},             {"cold", cold_},         {"targets", targets_},
                        {"target", target_recep_}, {"lamp", lamp_host_},    {"room", room_},
                        {"location", location_},   {"examined", examined_}};
}

void MiniHouseEnv::load_state(const nlohmann::json& s) {
  rooms_ = s.at("rooms").get<int>();
  room_of_ = s.at("room_of").get<std::array<int, kReceptacles>>();
  open_ = s.at("open").get<std::array<bool, kReceptacles>>();
  object_at_ = s.at("object_at").get<std::array<int, kObjects>>();
  held_ = s.at("held").get<std::array<bool, kObjects>>();
  clean_ = s.at("clean").get<std::array<bool, kObjects>>();
  hot_ = s.at("hot").get<std::array<bool, kObjects>>();
  cold_ = s.at("cold").get<std::array<bool, kObjects>>();
  targets_ = s.at("targets").get<std::vector<int>>();
  target_recep_ = s.at("target").get<int>();
  lamp_host_ = s.at("lamp").get<int>();
  room_ = s.at("room").get<int>();
  location_ = s.at("location").get<int>();
  examined_ = s.at("examined").get<bool>();
}

}  // namespace prmlab
