#pragma once

#include <span>
#include <string>
#include <vector>

#include "prmlab/oracle/oracle.hpp"
#include "prmlab/prm/features.hpp"
#include "prmlab/rollout/rollout.hpp"

namespace prmlab {

enum class PrmFamily { tabular, linear_sigmoid };
enum class LossKind { bce, bt, irl };

std::string to_string(PrmFamily f);
PrmFamily prm_family_from_string(std::string_view s);
std::string to_string(LossKind k);
LossKind loss_kind_from_string(std::string_view s);

/// Q_phi(s, a) = sigmoid(w . phi(s, a)).
struct PrmParams {
  PrmFamily family = PrmFamily::tabular;
  ScoreModel model;
  int version = 0;

  static PrmParams make(PrmFamily family, FeatureMapId map, std::uint32_t hashed_dim = ScoreModel::kDefaultHashedDim);

  nlohmann::json to_json() const;
  static PrmParams from_json(const nlohmann::json& j);
};

/// Pre-sigmoid score; 0 (prior 0.5) for an unseen tabular key, with `coverage_miss` set.
double prm_logit(const PrmParams& prm, const StateRef& state, ActionId action, bool* coverage_miss = nullptr);
double prm_score(const PrmParams& prm, const StateRef& state, ActionId action, bool* coverage_miss = nullptr);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

inline constexpr double kProbClamp = 1e-12;

/// Mean soft binary cross-entropy of sigmoid(logit) against q_hat.
LossGrad bce_loss_and_grad(const PrmParams& prm, std::span<const QTargetRecord> batch);
/// Mean -log sigmoid(z(s, winner) - z(s, loser)) on logits.
LossGrad bt_loss_and_grad(const PrmParams& prm, std::span<const PreferenceRecord> batch);
/// Discriminator over d = z(s, a) - gamma * z(s', a'), z(terminal) = 0:
/// mean over positives of softplus(-d) plus mean over negatives of softplus(d).
LossGrad irl_loss_and_grad(const PrmParams& prm, std::span<const TransitionRecord> positives,
                           std::span<const TransitionRecord> negatives, double gamma);

/// Discriminator value d of one transition.
double irl_difference(const PrmParams& prm, const TransitionRecord& r, double gamma);

struct PrmOptimizer {
  /// Tabular step (before the per-coordinate scaling).
  double learning_rate = 4.0;
  double linear_learning_rate = 0.2;
  int epochs = 200;
  /// Mini-batch size for linear-sigmoid; tabular training is always full batch.
  std::size_t batch_size = 64;
  double l2 = 0.0;
  std::uint64_t seed = 0;
};

struct PrmTrainResult {
  PrmParams params;
  /// Full-dataset loss before training and after every epoch.
  std::vector<double> loss_history;
};

/// Creates slots for every key of the dataset (tabular) and minimises the
/// loss. Tabular: full-batch gradient descent, each coordinate's step divided by
/// its total loss weight plus l2. Linear: shuffled mini-batches, fixed step.
/// Throws RuntimeAbort when the loss turns NaN.
PrmTrainResult train_prm_bce(PrmParams init, std::span<const QTargetRecord> data, const PrmOptimizer& opt);
PrmTrainResult train_prm_bt(PrmParams init, std::span<const PreferenceRecord> data, const PrmOptimizer& opt);
PrmTrainResult train_prm_irl(PrmParams init, const TransitionDatasets& data, double gamma, const PrmOptimizer& opt);

/// Held-out discriminator accuracy: positives with d > 0 and negatives with d < 0.
double irl_accuracy(const PrmParams& prm, std::span<const TransitionRecord> positives,
                    std::span<const TransitionRecord> negatives, double gamma);

struct ShapedTargetConfig {
  double alpha = 0.5;
  double gamma = 0.95;
  ReferenceValues reference;
};

/// Q <- (1 - alpha) Q_hat + alpha A^mu with A^mu = r + gamma V^mu(s') - V^mu(s),
/// re-clipped to [0, 1]. Throws CoverageError naming the states V^mu lacks.
std::vector<QTargetRecord> shaped_targets(std::span<const QTargetRecord> targets,
                                          std::span<const Trajectory> trajectories, const ShapedTargetConfig& cfg);

/// Sample standard deviation of member scores.
double ensemble_disagreement(std::span<const PrmParams> ensemble, const StateRef& state, ActionId action);

/// Members trained with BCE on a random k-way partition of the records.
std::vector<PrmParams> train_ensemble(const PrmParams& init, std::span<const QTargetRecord> data, std::size_t k,
                                      const PrmOptimizer& opt);

/// Tabular PRM whose scores are a clamped Q table, keyed by (observation, turn).
PrmParams prm_from_q_table(const ExactQTable& q, const EnvModel& model);

}  // namespace prmlab
