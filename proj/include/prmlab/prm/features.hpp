#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "prmlab/env/types.hpp"

namespace prmlab {

/// How a (state, action) pair is mapped to parameters.
///  tabular-history           one slot per (history digest, action)
///  tabular-observation       one slot per (latest observation, action); Markov for keydoor/chain
///  tabular-observation-turn  same, additionally keyed by the turn index
///  hashed-facts              hashed sparse fact x action, goal x action and action-bias features
enum class FeatureMapId { tabular_history, tabular_observation, tabular_observation_turn, hashed_facts, hashed_fact_pairs };

std::string to_string(FeatureMapId id);
FeatureMapId feature_map_from_string(std::string_view s);
bool is_tabular(FeatureMapId id);

/// Non-owning view of a turn-level state as seen by featurizers.
struct StateRef {
  Digest128 history_key;
  const Observation* observation = nullptr;
  int turn = 0;
};

/// Key of the tabular row a state maps to. Throws UnsupportedOperation when the
/// map needs the history digest and none is available.
Digest128 tabular_state_key(FeatureMapId id, const StateRef& state);

struct SparseFeature {
  std::uint32_t index = 0;
  double value = 0.0;
};

/// Bias, goal and fact indicators crossed with the action; with `pairs`, also every
/// unordered pair of facts crossed with the action.
void hashed_features(const StateRef& state, ActionId action, std::uint32_t dim, std::vector<SparseFeature>& out,
                     bool pairs = false);

/// Linear logit over sparse features: one-hot slots for tabular maps, hashed
/// features otherwise. Shared by PRMs and softmax policies.
class ScoreModel {
 public:
  static constexpr std::uint32_t kDefaultHashedDim = 4096;

  ScoreModel() : ScoreModel(FeatureMapId::tabular_observation) {}
  explicit ScoreModel(FeatureMapId id, std::uint32_t hashed_dim = kDefaultHashedDim);

  FeatureMapId feature_map() const { return map_; }
  bool tabular() const { return is_tabular(map_); }
  std::size_t size() const { return weights_.size(); }
  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Row key (tabular) or the history digest (hashed); precompute once per state.
  Digest128 row_key(const StateRef& state) const;

  /// nullopt when a tabular slot does not exist.
  std::optional<double> logit(const StateRef& state, ActionId action) const;
  std::optional<double> logit_at(const Digest128& row, const StateRef& state, ActionId action) const;

  /// grad += coeff * d logit / d weights. Missing tabular slots contribute nothing.
  void accumulate(const StateRef& state, ActionId action, double coeff, std::span<double> grad) const;
  /// Parameter indices with nonzero derivative for (state, action).
  void support(const StateRef& state, ActionId action, std::vector<std::uint32_t>& out) const;

  /// Creates a zero-initialised tabular slot when missing. No-op for hashed maps.
  void ensure(const StateRef& state, ActionId action);
  std::optional<std::uint32_t> slot(const Digest128& row, ActionId action) const;
  void set_slot(const Digest128& row, ActionId action, double value);

  const std::map<std::pair<Digest128, ActionId>, std::uint32_t>& slots() const { return slots_; }

  nlohmann::json to_json() const;
  static ScoreModel from_json(const nlohmann::json& j);

 private:
  FeatureMapId map_;
  std::uint32_t dim_ = 0;
  std::vector<double> weights_;
  std::map<std::pair<Digest128, ActionId>, std::uint32_t> slots_;
};

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace prmlab
