#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "prmlab/env/types.hpp"
#include "prmlab/policy/policy.hpp"
#include "prmlab/prm/prm.hpp"

namespace prmlab {

struct EnvBlock {
  std::vector<TaskSpec> tasks;
  /// Held-out validation tasks (distinct seeds).
  std::vector<TaskSpec> eval_tasks;
  std::uint64_t eval_episodes_per_task = 200;
};

struct RolloutBlock {
  std::uint64_t episodes_per_task = 200;
  std::uint64_t repeats = 1;
};

struct ShapingBlock {
  bool enabled = false;
  double alpha = 0.5;
  /// mu = epsilon-greedy on Q*.
  double mu_epsilon = 0.5;
  /// "exact" (dynamic programming) or "fitted" (Monte Carlo from mu's rollouts).
  std::string values = "exact";
  std::uint64_t fit_episodes_per_task = 200;
};

struct PrmBlock {
  PrmFamily family = PrmFamily::tabular;
  FeatureMapId feature_map = FeatureMapId::tabular_observation;
  std::uint32_t hashed_dim = ScoreModel::kDefaultHashedDim;
  LossKind loss = LossKind::bce;
  PrmOptimizer optimizer;
  double delta = 0.1;
  TargetNormalization normalization = TargetNormalization::clip;
  /// Members of the hacking-probe ensemble; 0 disables it.
  std::size_t ensemble_k = 0;
  ShapingBlock shaping;
};

struct PolicyBlock {
  PolicyFamily family = PolicyFamily::tabular_softmax;
  FeatureMapId feature_map = FeatureMapId::tabular_observation;
  std::uint32_t hashed_dim = ScoreModel::kDefaultHashedDim;
  double temperature = 1.0;
  /// "preference" (online DPO) or "closed-form" (tabular KL maximiser).
  std::string update = "preference";
  double beta = 0.1;
  int steps = 400;
  std::size_t states_per_step = 8;
  std::size_t pairs_per_state = 1;
  double learning_rate = 10.0;
  ProposalKind proposal = ProposalKind::none;
  double proposal_temperature = 2.0;
  double proposal_epsilon = 0.3;
  double proposal_bonus = 1.0;
  double reset_mix = 0.0;
  std::uint64_t reset_pool_episodes_per_task = 20;
  /// "on-policy" (fresh rollouts of the current policy) or "stage1" (fixed pool).
  std::string state_source = "on-policy";
  int refresh_every = 50;
  std::uint64_t source_episodes_per_task = 20;
  /// Evaluate a snapshot every this many Stage-3 steps; 0 disables the trace.
  int snapshot_every = 0;
  /// pi_0: "uniform" (zero logits) or "bc" (behaviour cloning on expert demos, an SFT stand-in).
  std::string init = "uniform";
  std::uint64_t init_demos_per_task = 10;
};

struct EvalBlock {
  std::string mode = "sample";
  std::vector<std::size_t> bon_n = {16};
};

struct InverseBlock {
  /// "oracle-greedy" (greedy on Q*) or "scripted" (the environment's expert).
  std::string expert = "oracle-greedy";
  std::vector<TaskSpec> demo_tasks;
  std::uint64_t demos_per_task = 100;
  /// Demonstrations held out for the discriminator accuracy report.
  std::uint64_t holdout_demos_per_task = 20;
  int bc_epochs = 200;
};

struct RunConfig {
  int iterations = 3;
  double gamma = 0.95;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out_dir;
  bool resume = false;
  /// Wall-clock timings are kept out of artifacts unless asked for.
  bool record_wall_clock = false;
  EnvBlock env;
  RolloutBlock rollout;
  PrmBlock prm;
  PolicyBlock policy;
  EvalBlock eval;
  InverseBlock inverse;

  /// Throws ConfigError.
  void validate() const;
  /// Default desk-scale keydoor 5x5 run.
  static RunConfig keydoor_default();
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_config(const std::string& path);

}  // namespace prmlab
