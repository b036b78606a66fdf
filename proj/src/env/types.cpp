#include "prmlab/env/types.hpp"

#include <algorithm>

#include "prmlab/core/error.hpp"

namespace prmlab {

namespace {
constexpr std::string_view kSerializationTag = "prmlab.state.v1";
}

Observation::Observation(std::vector<std::string> f, std::string goal) : facts(std::move(f)), goal_id(std::move(goal)) {
  std::sort(facts.begin(), facts.end());
  facts.erase(std::unique(facts.begin(), facts.end()), facts.end());
}

bool Observation::has(std::string_view fact) const {
  return std::binary_search(facts.begin(), facts.end(), fact,
                            [](std::string_view a, std::string_view b) { return a < b; });
}

void Observation::write(CanonicalWriter& w) const {
  w.put_string(goal_id);
  w.put_u32(static_cast<std::uint32_t>(facts.size()));
  for (const auto& f : facts) w.put_string(f);
}

std::string Observation::canonical() const {
  CanonicalWriter w("prmlab.obs.v1");
  write(w);
  return w.bytes();
}

Digest128 Observation::digest() const { return digest_bytes(canonical()); }

HistoryState::HistoryState(Observation initial) { observations_.push_back(std::move(initial)); }

void HistoryState::append(ActionId action, Observation next) {
  if (observations_.empty()) throw ContractViolation("cannot append to an empty history");
  actions_.push_back(action);
  observations_.push_back(std::move(next));
}

HistoryState HistoryState::extended(ActionId action, Observation next) const {
  HistoryState copy = *this;
  copy.append(action, std::move(next));
  return copy;
}

void HistoryState::write(CanonicalWriter& w) const {
  w.put_u32(static_cast<std::uint32_t>(actions_.size()));
  for (std::size_t i = 0; i < observations_.size(); ++i) {
    observations_[i].write(w);
    if (i < actions_.size()) w.put_i64(actions_[i]);
  }
}

Digest128 HistoryState::digest() const {
  CanonicalWriter w(kSerializationTag);
  write(w);
  return w.digest();
}

Digest128 HistoryState::action_digest(ActionId action) const {
  CanonicalWriter w(kSerializationTag);
  write(w);
  w.put_string("action");
  w.put_i64(action);
  return w.digest();
}

void TaskSpec::validate() const {
  if (horizon < 1) throw ConfigError("task horizon must be at least 1");
  const bool house = family == EnvFamily::minihouse;
  if (house && !category) throw ConfigError("minihouse task requires a category");
  if (!house && category) throw ConfigError("category is only valid for the minihouse family");
  if (family == EnvFamily::keydoor && (size < 3 || size > 9)) throw ConfigError("keydoor size must be in [3, 9]");
  if (family == EnvFamily::chain && (size < 2 || size > 64)) throw ConfigError("chain length must be in [2, 64]");
}

int TaskSpec::default_horizon(EnvFamily family, int size) {
  switch (family) {
    case EnvFamily::keydoor: return kDefaultHorizonKeydoor;
    case EnvFamily::chain: return size + 2;
    case EnvFamily::minihouse: return kDefaultHorizonMinihouse;
  }
  return kDefaultHorizonKeydoor;
}

std::string to_string(EnvFamily f) {
  switch (f) {
    case EnvFamily::keydoor: return "keydoor";
    case EnvFamily::chain: return "chain";
    case EnvFamily::minihouse: return "minihouse";
  }
  return "?";
}

std::string to_string(HouseCategory c) {
  switch (c) {
    case HouseCategory::pick: return "pick";
    case HouseCategory::clean: return "clean";
    case HouseCategory::heat: return "heat";
    case HouseCategory::cool: return "cool";
    case HouseCategory::look: return "look";
    case HouseCategory::pick2: return "pick2";
  }
  return "?";
}

EnvFamily family_from_string(std::string_view s) {
  if (s == "keydoor") return EnvFamily::keydoor;
  if (s == "chain") return EnvFamily::chain;
  if (s == "minihouse") return EnvFamily::minihouse;
  throw ConfigError("unknown environment family: " + std::string(s));
}

HouseCategory category_from_string(std::string_view s) {
  for (auto c : {HouseCategory::pick, HouseCategory::clean, HouseCategory::heat, HouseCategory::cool,
                 HouseCategory::look, HouseCategory::pick2})
    if (to_string(c) == s) return c;
  throw ConfigError("unknown minihouse category: " + std::string(s));
}

void to_json(nlohmann::json& j, const Observation& o) { j = nlohmann::json{{"goal", o.goal_id}, {"facts", o.facts}}; }

void from_json(const nlohmann::json& j, Observation& o) {
  o = Observation(j.at("facts").get<std::vector<std::string>>(), j.at("goal").get<std::string>());
}

void to_json(nlohmann::json& j, const HistoryState& h) {
  j = nlohmann::json{{"observations", h.observations()}, {"actions", h.actions()}};
}

void from_json(const nlohmann::json& j, HistoryState& h) {
  const auto obs = j.at("observations").get<std::vector<Observation>>();
  const auto acts = j.at("actions").get<std::vector<ActionId>>();
  if (obs.size() != acts.size() + 1) throw ConfigError("history payload: observation/action count mismatch");
  h = HistoryState(obs.front());
  for (std::size_t i = 0; i < acts.size(); ++i) h.append(acts[i], obs[i + 1]);
}

void to_json(nlohmann::json& j, const TaskSpec& s) {
  j = nlohmann::json{{"family", to_string(s.family)}, {"seed", s.seed}, {"horizon", s.horizon}, {"size", s.size}};
  j["category"] = s.category ? nlohmann::json(to_string(*s.category)) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, TaskSpec& s) {
  s.family = family_from_string(j.at("family").get<std::string>());
  s.size = j.value("size", s.family == EnvFamily::minihouse ? 0 : 5);
  s.seed = j.value("seed", std::uint64_t{0});
  s.horizon = j.contains("horizon") ? j.at("horizon").get<int>() : TaskSpec::default_horizon(s.family, s.size);
  s.category.reset();
  if (j.contains("category") && !j.at("category").is_null())
    s.category = category_from_string(j.at("category").get<std::string>());
}

}  // namespace prmlab
