#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "prmlab/core/error.hpp"
#include "prmlab/pipeline/pipeline.hpp"

using namespace prmlab;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
};

RunConfig resolve(const Globals& g) {
  RunConfig c = g.config.empty() ? RunConfig::keydoor_default() : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (g.out) c.out_dir = *g.out;
  if (g.workers) c.workers = *g.workers;
  c.validate();
  if (c.out_dir.empty()) c.out_dir = "out";
  return c;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

template <class T, class Parse>
std::vector<T> read_records(const std::string& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return read_jsonl<T>(in, parse);
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeAbort("cannot write " + path.string());
  return out;
}

PolicyParams load_policy(const RunConfig& c, const std::string& path) {
  if (path.empty()) return PolicyParams::make(c.policy.family, c.policy.feature_map, c.policy.temperature, c.policy.hashed_dim);
  return PolicyParams::from_json(read_json(path));
}

/// "oracle" builds the exact optimal Q table of the first training task.
PrmParams load_prm(const RunConfig& c, const std::string& path) {
  if (path == "oracle") {
    EnvModel model(c.env.tasks.front());
    return prm_from_q_table(optimal_q(model, c.gamma, c.env.tasks.front().horizon), model);
  }
  return PrmParams::from_json(read_json(path));
}

void print_report(const IterationReport& r) {
  std::cout << "iteration " << r.iteration << "  %suc " << r.success_rate << "  #act " << r.avg_actions << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prmlab: process reward models for turn-level agents"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--workers", g.workers, "rollout worker threads")->check(CLI::PositiveNumber);

  std::string policy_path, prm_path, data_path, negatives_path, trace_dir, mode = "";
  std::vector<std::string> ensemble_paths;
  std::vector<std::size_t> n_list;
  std::uint64_t episodes = 0;
  double min_drop = 0.0;

  auto* rollout = app.add_subcommand("rollout", "collect rollouts and build Q targets and preference pairs");
  rollout->add_option("--policy", policy_path, "policy checkpoint (default: initial policy)");

  auto* train_prm = app.add_subcommand("train-prm", "train a PRM on a dataset");
  train_prm->add_option("--data", data_path, "q targets (bce), pairs (bt) or positive transitions (irl)")->required();
  train_prm->add_option("--negatives", negatives_path, "negative transitions (irl)");

  auto* train_policy = app.add_subcommand("train-policy", "KL-regularised policy update against a PRM");
  train_policy->add_option("--policy", policy_path, "reference policy checkpoint");
  train_policy->add_option("--prm", prm_path, "PRM checkpoint or 'oracle'")->required();
  train_policy->add_option("--states", data_path, "trajectories whose states feed closed-form or stage1 updates");

  auto* run_agent = app.add_subcommand("run-agentprm", "full AgentPRM loop");
  auto* run_inverse = app.add_subcommand("run-inverseprm", "full InversePRM loop on oracle-expert demos");

  auto* eval = app.add_subcommand("eval", "evaluate a policy on the validation tasks");
  eval->add_option("--policy", policy_path, "policy checkpoint (default: initial policy)");
  eval->add_option("--prm", prm_path, "PRM checkpoint or 'oracle' (bon mode)");
  eval->add_option("--mode", mode, "sample, greedy or bon:N");
  eval->add_option("--episodes", episodes, "episodes per task");

  auto* bon = app.add_subcommand("bon-sweep", "best-of-N sweep with matched seeds");
  bon->add_option("--policy", policy_path, "policy checkpoint (default: initial policy)");
  bon->add_option("--prm", prm_path, "PRM checkpoint or 'oracle'")->required();
  bon->add_option("--n", n_list, "N values (default: eval.bon_n)");
  bon->add_option("--episodes", episodes, "episodes per task");

  auto* hack = app.add_subcommand("diagnose-hacking", "proxy vs true success over a policy trace");
  hack->add_option("--trace", trace_dir, "directory of policy_step_<n>.json snapshots")->required();
  hack->add_option("--prm", prm_path, "PRM checkpoint or 'oracle'")->required();
  hack->add_option("--ensemble", ensemble_paths, "ensemble member checkpoints");
  hack->add_option("--episodes", episodes, "episodes per task");
  hack->add_option("--min-drop", min_drop, "success drop (points) below which no signature is reported");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig c = resolve(g);
    const fs::path out(c.out_dir);
    const std::uint64_t eval_episodes = episodes ? episodes : c.env.eval_episodes_per_task;

    if (*rollout) {
      const auto policy = load_policy(c, policy_path);
      const PolicyActor actor(policy, ActMode{});
      RolloutPlan plan{c.env.tasks, c.rollout.episodes_per_task, c.rollout.repeats, c.seed, c.workers};
      const auto log = collect_rollouts(actor, plan);
      const auto gd = build_g_dict(log.trajectories, c.gamma);
      const auto targets = compute_q_targets(gd, c.prm.normalization);
      const auto pairs = build_preference_pairs(gd, targets, c.prm.delta);
      auto o1 = open_out(out / "trajectories" / "rollouts.jsonl");
      write_jsonl<Trajectory>(o1, log.trajectories);
      auto o2 = open_out(out / "datasets" / "g.jsonl");
      write_g_jsonl(o2, gd);
      auto o3 = open_out(out / "datasets" / "q_targets.jsonl");
      write_jsonl<QTargetRecord>(o3, targets);
      auto o4 = open_out(out / "datasets" / "pairs.jsonl");
      write_jsonl<PreferenceRecord>(o4, pairs);
      std::cout << log.trajectories.size() << " trajectories, " << targets.size() << " targets, " << pairs.size()
                << " pairs\n";
    } else if (*train_prm) {
      const auto init = PrmParams::make(c.prm.family, c.prm.feature_map, c.prm.hashed_dim);
      PrmTrainResult r;
      if (c.prm.loss == LossKind::bce) {
        r = train_prm_bce(init, read_records<QTargetRecord>(data_path, q_target_from_json), c.prm.optimizer);
      } else if (c.prm.loss == LossKind::bt) {
        r = train_prm_bt(init, read_records<PreferenceRecord>(data_path, preference_from_json), c.prm.optimizer);
      } else {
        if (negatives_path.empty()) throw ConfigError("irl training needs --negatives");
        TransitionDatasets ds{read_records<TransitionRecord>(data_path, transition_from_json),
                              read_records<TransitionRecord>(negatives_path, transition_from_json)};
        r = train_prm_irl(init, ds, c.gamma, c.prm.optimizer);
      }
      auto o = open_out(out / "checkpoints" / "prm.json");
      o << r.params.to_json().dump() << '\n';
      auto m = open_out(out / "metrics" / "prm_loss.csv");
      m << "epoch,loss\n";
      for (std::size_t i = 0; i < r.loss_history.size(); ++i) m << i << ',' << nlohmann::json(r.loss_history[i]).dump() << '\n';
      if (!r.loss_history.empty()) std::cout << "final loss " << r.loss_history.back() << '\n';
    } else if (*train_policy) {
      const auto ref = load_policy(c, policy_path);
      const auto prm = load_prm(c, prm_path);
      std::vector<PolicyState> states;
      if (!data_path.empty())
        for (const auto& t : read_records<Trajectory>(data_path, trajectory_from_json))
          for (const auto& s : t.steps) states.push_back({s.state, s.legal});
      PolicyParams next;
      if (c.policy.update == "closed-form") {
        if (states.empty()) throw ConfigError("closed-form update needs --states");
        next = kl_regularized_update_closed_form(ref, prm, c.policy.beta, states);
      } else {
        std::unique_ptr<StateSource> source;
        if (c.policy.state_source == "stage1") {
          if (states.empty()) throw ConfigError("state_source 'stage1' needs --states");
          source = std::make_unique<PoolStateSource>(states);
        } else {
          RolloutPlan plan{c.env.tasks, c.policy.source_episodes_per_task, 1, derive_seed(c.seed, {0x5050ULL}), c.workers};
          source = std::make_unique<OnPolicyStateSource>(plan, default_start(), c.policy.refresh_every);
        }
        PreferenceUpdateConfig cfg;
        cfg.beta = c.policy.beta;
        cfg.steps = c.policy.steps;
        cfg.states_per_step = c.policy.states_per_step;
        cfg.pairs_per_state = c.policy.pairs_per_state;
        cfg.learning_rate = c.policy.learning_rate;
        cfg.proposal.kind = c.policy.proposal;
        cfg.proposal.temperature = c.policy.proposal_temperature;
        cfg.proposal.epsilon = c.policy.proposal_epsilon;
        cfg.proposal.bonus = c.policy.proposal_bonus;
        StepCallback snap;
        if (c.policy.snapshot_every > 0)
          snap = [&](int step, const PolicyParams& p) {
            if (step % c.policy.snapshot_every) return;
            auto o = open_out(out / "checkpoints" / "trace" / ("policy_step_" + std::to_string(step) + ".json"));
            o << p.to_json().dump() << '\n';
          };
        Rng rng = Rng::stream(c.seed, {0x53ULL});
        PreferenceStats stats;
        next = online_preference_update(ref, ref, prm, *source, cfg, rng, &stats, snap);
        std::cout << stats.pairs_used << " pairs, " << stats.ties_skipped << " ties skipped\n";
      }
      next.version = ref.version + 1;
      auto o = open_out(out / "checkpoints" / "policy.json");
      o << next.to_json().dump() << '\n';
    } else if (*run_agent) {
      const auto r = run_agentprm(c);
      write_run_report(c, r, "agentprm");
      for (const auto& rep : r.reports) print_report(rep);
      std::cout << "best iteration " << r.best_iteration << '\n';
    } else if (*run_inverse) {
      const auto demos = expert_demos(c, c.inverse.demos_per_task, derive_seed(c.seed, {0xde30ULL}));
      const auto holdout = expert_demos(c, c.inverse.holdout_demos_per_task, derive_seed(c.seed, {0xde31ULL}));
      auto o = open_out(out / "trajectories" / "demos.jsonl");
      write_jsonl<Trajectory>(o, demos);
      const auto r = run_inverseprm(c, demos, holdout);
      write_run_report(c, r, "inverseprm");
      for (const auto& rep : r.reports) print_report(rep);
      std::cout << "best iteration " << r.best_iteration << '\n';
    } else if (*eval) {
      const auto policy = load_policy(c, policy_path);
      const ActMode m = ActMode::parse(mode.empty() ? c.eval.mode : mode);
      std::optional<PrmParams> prm;
      if (!prm_path.empty()) prm = load_prm(c, prm_path);
      if (m.kind == ActMode::bon && !prm) throw ConfigError("bon mode needs --prm");
      const auto ev = evaluate(policy, prm ? &*prm : nullptr, m, c.env.eval_tasks, eval_episodes, c.seed, c.workers);
      nlohmann::json j{{"mode", m.str()},
                       {"episodes", ev.episodes},
                       {"success_rate", ev.success_rate},
                       {"avg_actions", ev.avg_actions},
                       {"per_category", ev.per_category}};
      auto o = open_out(out / "report.json");
      o << j.dump(2) << '\n';
      auto m2 = open_out(out / "trajectories" / "eval.jsonl");
      write_jsonl<Trajectory>(m2, ev.trajectories);
      std::cout << "%suc " << ev.success_rate << "  #act " << ev.avg_actions << '\n';
    } else if (*bon) {
      const auto policy = load_policy(c, policy_path);
      const auto prm = load_prm(c, prm_path);
      if (n_list.empty()) n_list = c.eval.bon_n;
      const auto rows = bon_sweep(policy, prm, n_list, c.env.eval_tasks, eval_episodes, c.seed, c.workers);
      auto o = open_out(out / "metrics" / "bon.csv");
      write_bon_csv(o, rows);
      write_bon_csv(std::cout, rows);
    } else if (*hack) {
      std::vector<std::pair<int, PolicyParams>> trace;
      for (const auto& e : fs::directory_iterator(trace_dir)) {
        const auto stem = e.path().stem().string();
        if (e.path().extension() != ".json" || stem.rfind("policy_step_", 0) != 0) continue;
        trace.emplace_back(std::stoi(stem.substr(12)), PolicyParams::from_json(read_json(e.path().string())));
      }
      std::sort(trace.begin(), trace.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      const auto prm = load_prm(c, prm_path);
      std::vector<PrmParams> ensemble;
      for (const auto& p : ensemble_paths) ensemble.push_back(PrmParams::from_json(read_json(p)));
      const auto curve = hacking_diagnostic(trace, prm, ensemble, c.env.eval_tasks, eval_episodes, c.seed, c.workers);
      auto o = open_out(out / "metrics" / "hacking.csv");
      write_curve_csv(o, curve);
      const auto sig = hacking_signature(curve, min_drop);
      std::cout << "signature " << (sig.present ? "present" : "absent") << "  peak " << sig.peak_true << "  final "
                << sig.final_true << "  corr " << curve_correlation(curve) << '\n';
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const UnsupportedOperation& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const RuntimeAbort& e) {
    std::cerr << "runtime abort: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
