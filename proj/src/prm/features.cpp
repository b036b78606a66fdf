#include "prmlab/prm/features.hpp"

#include <unordered_map>

#include "prmlab/core/error.hpp"
#include "prmlab/core/rng.hpp"

namespace prmlab {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) h = (h ^ c) * kFnvPrime;
  return (h ^ 0xffU) * kFnvPrime;
}

std::uint64_t fnv(std::uint64_t h, std::int64_t v) {
  for (int i = 0; i < 8; ++i) h = (h ^ ((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xffU)) * kFnvPrime;
  return h;
}

std::uint32_t bucket(std::uint64_t h, std::uint32_t dim) { return static_cast<std::uint32_t>(mix64(h) % dim); }

const Observation& obs_of(const StateRef& s) {
  if (s.observation == nullptr) throw ContractViolation("state view without an observation");
  return *s.observation;
}

}  // namespace

std::string to_string(FeatureMapId id) {
  switch (id) {
    case FeatureMapId::tabular_history: return "tabular-history";
    case FeatureMapId::tabular_observation: return "tabular-observation";
    case FeatureMapId::tabular_observation_turn: return "tabular-observation-turn";
    case FeatureMapId::hashed_facts: return "hashed-facts";
    case FeatureMapId::hashed_fact_pairs: return "hashed-fact-pairs";
  }
  return "?";
}

FeatureMapId feature_map_from_string(std::string_view s) {
  for (auto id : {FeatureMapId::tabular_history, FeatureMapId::tabular_observation,
                  FeatureMapId::tabular_observation_turn, FeatureMapId::hashed_facts,
                  FeatureMapId::hashed_fact_pairs})
    if (to_string(id) == s) return id;
  throw ConfigError("unknown feature map '" + std::string(s) + "'");
}

bool is_tabular(FeatureMapId id) { return id != FeatureMapId::hashed_facts && id != FeatureMapId::hashed_fact_pairs; }

Digest128 tabular_state_key(FeatureMapId id, const StateRef& state) {
  switch (id) {
    case FeatureMapId::tabular_history:
      if (state.history_key == Digest128{}) throw UnsupportedOperation("tabular-history needs the history digest");
      return state.history_key;
    case FeatureMapId::tabular_observation:
      return obs_of(state).digest();
    case FeatureMapId::tabular_observation_turn: {
      CanonicalWriter w("prmlab.obs-turn.v1");
      obs_of(state).write(w);
      w.put_i64(state.turn);
      return w.digest();
    }
    case FeatureMapId::hashed_facts:
    case FeatureMapId::hashed_fact_pairs:
      break;
  }
  throw UnsupportedOperation("feature map " + to_string(id) + " has no tabular key");
}

void hashed_features(const StateRef& state, ActionId action, std::uint32_t dim, std::vector<SparseFeature>& out,
                     bool pairs) {
  const Observation& obs = obs_of(state);
  out.clear();
  const std::uint64_t base = fnv(kFnvOffset, static_cast<std::int64_t>(action));
  out.push_back({bucket(fnv(base, std::string_view("bias")), dim), 1.0});
  out.push_back({bucket(fnv(fnv(base, std::string_view("goal")), obs.goal_id), dim), 1.0});
  for (const auto& f : obs.facts) out.push_back({bucket(fnv(fnv(base, std::string_view("fact")), f), dim), 1.0});
  if (!pairs) return;
  const std::uint64_t pair_base = fnv(base, std::string_view("pair"));
  for (std::size_t i = 0; i < obs.facts.size(); ++i)
    for (std::size_t j = i + 1; j < obs.facts.size(); ++j)
      out.push_back({bucket(fnv(fnv(pair_base, obs.facts[i]), obs.facts[j]), dim), 1.0});
}

ScoreModel::ScoreModel(FeatureMapId id, std::uint32_t hashed_dim) : map_(id) {
  if (!tabular()) {
    if (hashed_dim == 0) throw ConfigError("hashed feature dimension must be positive");
    dim_ = hashed_dim;
    weights_.assign(dim_, 0.0);
  }
}

Digest128 ScoreModel::row_key(const StateRef& state) const {
  if (!tabular() || map_ == FeatureMapId::tabular_history) return state.history_key;
  if (state.history_key == Digest128{}) return tabular_state_key(map_, state);
  // The history digest determines observation and turn, so row keys can be memoised on it.
  thread_local std::unordered_map<Digest128, Digest128, Digest128Hash> cache[2];
  auto& c = cache[map_ == FeatureMapId::tabular_observation ? 0 : 1];
  if (const auto it = c.find(state.history_key); it != c.end()) return it->second;
  if (c.size() > (1u << 20)) c.clear();
  const Digest128 key = tabular_state_key(map_, state);
  c.emplace(state.history_key, key);
  return key;
}

std::optional<std::uint32_t> ScoreModel::slot(const Digest128& row, ActionId action) const {
  const auto it = slots_.find({row, action});
  if (it == slots_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> ScoreModel::logit_at(const Digest128& row, const StateRef& state, ActionId action) const {
  if (tabular()) {
    const auto s = slot(row, action);
    if (!s) return std::nullopt;
    return weights_[*s];
  }
  thread_local std::vector<SparseFeature> feats;
  hashed_features(state, action, dim_, feats, map_ == FeatureMapId::hashed_fact_pairs);
  double z = 0.0;
  for (const auto& f : feats) z += weights_[f.index] * f.value;
  return z;
}

std::optional<double> ScoreModel::logit(const StateRef& state, ActionId action) const {
  return logit_at(row_key(state), state, action);
}

void ScoreModel::accumulate(const StateRef& state, ActionId action, double coeff, std::span<double> grad) const {
  if (tabular()) {
    if (const auto s = slot(row_key(state), action)) grad[*s] += coeff;
    return;
  }
  thread_local std::vector<SparseFeature> feats;
  hashed_features(state, action, dim_, feats, map_ == FeatureMapId::hashed_fact_pairs);
  for (const auto& f : feats) grad[f.index] += coeff * f.value;
}

void ScoreModel::support(const StateRef& state, ActionId action, std::vector<std::uint32_t>& out) const {
  out.clear();
  if (tabular()) {
    if (const auto s = slot(row_key(state), action)) out.push_back(*s);
    return;
  }
  std::vector<SparseFeature> feats;
  hashed_features(state, action, dim_, feats, map_ == FeatureMapId::hashed_fact_pairs);
  for (const auto& f : feats) out.push_back(f.index);
}

void ScoreModel::ensure(const StateRef& state, ActionId action) {
  if (!tabular()) return;
  const auto key = std::make_pair(row_key(state), action);
  if (slots_.count(key)) return;
  slots_.emplace(key, static_cast<std::uint32_t>(weights_.size()));
  weights_.push_back(0.0);
}

void ScoreModel::set_slot(const Digest128& row, ActionId action, double value) {
  if (!tabular()) throw UnsupportedOperation("set_slot on a hashed model");
  const auto key = std::make_pair(row, action);
  const auto it = slots_.find(key);
  if (it != slots_.end()) {
    weights_[it->second] = value;
    return;
  }
  slots_.emplace(key, static_cast<std::uint32_t>(weights_.size()));
  weights_.push_back(value);
}

nlohmann::json ScoreModel::to_json() const {
  nlohmann::json j;
  j["feature_map"] = to_string(map_);
  if (tabular()) {
    // Rows in key order so the file does not depend on insertion order.
    auto rows = nlohmann::json::array();
    for (const auto& [key, idx] : slots_) rows.push_back({key.first.hex(), key.second, weights_[idx]});
    j["slots"] = std::move(rows);
  } else {
    j["dim"] = dim_;
    j["weights"] = weights_;
  }
  return j;
}

ScoreModel ScoreModel::from_json(const nlohmann::json& j) {
  ScoreModel m(feature_map_from_string(j.at("feature_map").get<std::string>()),
               j.value("dim", kDefaultHashedDim));
  if (m.tabular()) {
    for (const auto& row : j.at("slots"))
      m.set_slot(Digest128::from_hex(row.at(0).get<std::string>()), row.at(1).get<ActionId>(), row.at(2).get<double>());
  } else {
    m.weights_ = j.at("weights").get<std::vector<double>>();
    if (m.weights_.size() != m.dim_) throw ConfigError("hashed weight vector does not match dim");
  }
  return m;
}

}  // namespace prmlab
