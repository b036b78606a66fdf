#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prmlab/pipeline/config.hpp"

namespace prmlab {

struct EvalResult {
  double success_rate = 0.0;
  double avg_actions = 0.0;
  std::map<std::string, double> per_category;
  std::size_t episodes = 0;
  std::vector<Trajectory> trajectories;
};

EvalResult evaluate_actor(const Actor& actor, std::span<const TaskSpec> tasks, std::uint64_t episodes_per_task,
                          std::uint64_t seed, int workers, const StartSampler& start = default_start());
/// bon mode requires a PRM.
EvalResult evaluate(const PolicyParams& policy, const PrmParams* prm, ActMode mode, std::span<const TaskSpec> tasks,
                    std::uint64_t episodes_per_task, std::uint64_t seed, int workers,
                    const StartSampler& start = default_start());

struct CurvePoint {
  int step = 0;
  double true_suc = 0.0;
  double proxy = 0.0;
  double ensemble_std = 0.0;
};

struct IterationReport {
  int iteration = 0;
  double success_rate = 0.0;
  double avg_actions = 0.0;
  std::map<std::string, double> per_category;
  std::optional<double> prm_validation_loss;
  std::optional<double> discriminator_accuracy;
  std::size_t rollouts = 0;
  std::size_t pairs_used = 0;
  std::size_t ties_skipped = 0;
  std::vector<CurvePoint> proxy_curve;
  double wall_clock_s = 0.0;
};

nlohmann::json to_json(const IterationReport& r, bool with_wall_clock);

struct RunResult {
  /// reports[0] is the initial policy pi_0.
  std::vector<IterationReport> reports;
  std::vector<PolicyParams> policies;
  std::vector<PrmParams> prms;
  /// Validation-best iteration in 1..K (ties toward the later iteration).
  int best_iteration = 0;
  const PolicyParams& best() const { return policies[static_cast<std::size_t>(best_iteration)]; }
};

/// AgentPRM: rollouts and Q targets, PRM training, KL-regularised policy update.
RunResult run_agentprm(const RunConfig& config);
/// Same loop with a fixed PRM substituted for Stages 1-2.
RunResult run_agentprm_with_prm(const RunConfig& config, const PrmParams& prm);

/// Successful expert demonstrations on the demo tasks.
std::vector<Trajectory> expert_demos(const RunConfig& config, std::uint64_t episodes_per_task, std::uint64_t seed);

/// InversePRM: IRL datasets with negative aggregation, discriminator PRM, policy update.
RunResult run_inverseprm(const RunConfig& config, std::span<const Trajectory> demos,
                         std::span<const Trajectory> holdout_demos = {});

/// Starts from every non-terminal Markov state of the task never visited by the
/// demonstrations (enumerable families).
StartSampler off_demo_start(const TaskSpec& spec, std::span<const Trajectory> demos);

struct BonRow {
  std::size_t n = 0;
  double success_rate = 0.0;
  double avg_actions = 0.0;
};

/// One evaluation per N with matched seeds.
std::vector<BonRow> bon_sweep(const PolicyParams& policy, const PrmParams& prm, std::span<const std::size_t> n_list,
                              std::span<const TaskSpec> tasks, std::uint64_t episodes_per_task, std::uint64_t seed,
                              int workers);
void write_bon_csv(std::ostream& out, std::span<const BonRow> rows);

/// Snapshot evaluation: true %suc, mean PRM score over the snapshot's own
/// validation steps, and mean ensemble disagreement on the same steps.
CurvePoint diagnose_snapshot(int step, const PolicyParams& snapshot, const PrmParams& prm,
                             std::span<const PrmParams> ensemble, std::span<const TaskSpec> tasks,
                             std::uint64_t episodes_per_task, std::uint64_t seed, int workers);
/// Curve over policy snapshots of a training trace.
std::vector<CurvePoint> hacking_diagnostic(std::span<const std::pair<int, PolicyParams>> trace, const PrmParams& prm,
                                           std::span<const PrmParams> ensemble, std::span<const TaskSpec> tasks,
                                           std::uint64_t episodes_per_task, std::uint64_t seed, int workers);
/// Columns: step,true_suc,proxy,ensemble_std.
void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve);

/// Reward-hacking signature: mean proxy over the final quarter exceeds the proxy
/// at the true-success peak (first maximum), and mean true success over the final
/// quarter is strictly below the peak by more than `min_drop` points.
struct HackingSignature {
  bool present = false;
  double peak_true = 0.0;
  double final_true = 0.0;
  double proxy_at_peak = 0.0;
  double final_quarter_proxy = 0.0;
  double degradation = 0.0;
};
HackingSignature hacking_signature(std::span<const CurvePoint> curve, double min_drop = 0.0);
/// Pearson correlation of true_suc and proxy over the curve.
double curve_correlation(std::span<const CurvePoint> curve);

/// Writes report.json and metrics/iterations.csv for a finished run.
void write_run_report(const RunConfig& config, const RunResult& result, const std::string& kind);

}  // namespace prmlab
