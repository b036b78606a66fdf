#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "prmlab/core/digest.hpp"

namespace prmlab {

using ActionId = std::int32_t;

/// Reserved action id for the absorbing successor of a terminal transition.
inline constexpr ActionId kNullAction = -1;

/// Symbolic observation. Facts are kept in lexicographic order so the
/// serialization of an observation is unique.
struct Observation {
  std::vector<std::string> facts;
  std::string goal_id;

  Observation() = default;
  Observation(std::vector<std::string> f, std::string goal);

  bool has(std::string_view fact) const;
  bool operator==(const Observation&) const = default;

  void write(CanonicalWriter& w) const;
  std::string canonical() const;
  Digest128 digest() const;
};

struct EnvAction {
  ActionId id = 0;
  std::string label;

  bool operator==(const EnvAction&) const = default;
};

/// Turn-level state: o_0, a_0, o_1, ..., a_{t-1}, o_t.
class HistoryState {
 public:
  HistoryState() = default;
  explicit HistoryState(Observation initial);

  int turn() const { return static_cast<int>(actions_.size()); }
  const Observation& latest() const { return observations_.back(); }
  const std::vector<Observation>& observations() const { return observations_; }
  const std::vector<ActionId>& actions() const { return actions_; }
  bool empty() const { return observations_.empty(); }

  void append(ActionId action, Observation next);
  HistoryState extended(ActionId action, Observation next) const;

  void write(CanonicalWriter& w) const;
  Digest128 digest() const;
  /// Digest of the (state, action) pair; the key used by the rollout dictionary.
  Digest128 action_digest(ActionId action) const;

  bool operator==(const HistoryState&) const = default;

 private:
  std::vector<Observation> observations_;
  std::vector<ActionId> actions_;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  bool success = false;
  /// Action was outside the legal set and was executed as a no-op.
  bool illegal = false;
};

enum class EnvFamily { keydoor, chain, minihouse };

enum class HouseCategory { pick, clean, heat, cool, look, pick2 };

inline constexpr int kDefaultHorizonMinihouse = 30;
inline constexpr int kDefaultHorizonKeydoor = 20;

struct TaskSpec {
  EnvFamily family = EnvFamily::keydoor;
  std::optional<HouseCategory> category;
  std::uint64_t seed = 0;
  int horizon = kDefaultHorizonKeydoor;
  /// Grid side for keydoor, chain length for chain; unused for minihouse.
  int size = 5;

  bool operator==(const TaskSpec&) const = default;

  /// Throws ConfigError when fields are inconsistent.
  void validate() const;
  static int default_horizon(EnvFamily family, int size);
};

std::string to_string(EnvFamily f);
std::string to_string(HouseCategory c);
EnvFamily family_from_string(std::string_view s);
HouseCategory category_from_string(std::string_view s);

/// Opaque canonical Markov state token (enumerable families only).
struct MarkovToken {
  std::uint64_t value = 0;
  auto operator<=>(const MarkovToken&) const = default;
};

void to_json(nlohmann::json& j, const Observation& o);
void from_json(const nlohmann::json& j, Observation& o);
void to_json(nlohmann::json& j, const HistoryState& h);
void from_json(const nlohmann::json& j, HistoryState& h);
void to_json(nlohmann::json& j, const TaskSpec& s);
void from_json(const nlohmann::json& j, TaskSpec& s);

}  // namespace prmlab
