#include "prmlab/pipeline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "prmlab/core/error.hpp"

namespace prmlab {

namespace fs = std::filesystem;

namespace {

std::string num(double x) { return nlohmann::json(x).dump(); }

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeAbort("cannot write " + path.string());
  out << text;
}

template <class T>
void write_records(const fs::path& path, std::span<const T> records) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeAbort("cannot write " + path.string());
  write_jsonl(out, records);
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

std::string iter_name(const char* stem, int i, const char* ext) { return std::string(stem) + "_iter_" + std::to_string(i) + ext; }

/// Epsilon-mixed scripted expert: the reference policy for non-enumerable families.
class NoisyExpertActor final : public Actor {
 public:
  explicit NoisyExpertActor(double epsilon) : epsilon_(epsilon) {}
  ActionId act(const ActorContext& ctx) const override {
    const ActionId expert = *ctx.env.expert_action();
    const std::size_t u = ctx.rng.index(ctx.legal.size());
    return ctx.rng.bernoulli(epsilon_) ? ctx.legal[u] : expert;
  }

 private:
  double epsilon_;
};

/// Shared model for tasks that must agree on (family, size, horizon).
const TaskSpec& common_spec(std::span<const TaskSpec> tasks) {
  for (const auto& t : tasks)
    if (t.family != tasks.front().family || t.size != tasks.front().size || t.horizon != tasks.front().horizon)
      throw ConfigError("oracle-based components need tasks sharing family, size and horizon");
  return tasks.front();
}

std::unique_ptr<Actor> make_expert(const RunConfig& c, std::span<const TaskSpec> tasks) {
  if (c.inverse.expert == "scripted") return std::make_unique<ExpertActor>();
  const TaskSpec& spec = common_spec(tasks);
  EnvModel model(spec);
  return std::make_unique<MarkovActor>(greedy_policy(optimal_q(model, c.gamma, spec.horizon)));
}

ReferenceValues shaping_values(const RunConfig& c) {
  const auto& sh = c.prm.shaping;
  auto env = make_environment(c.env.tasks.front());
  if (sh.values == "exact") {
    if (!env->enumerable()) throw ConfigError("exact shaping values need an enumerable family; use 'fitted'");
    const TaskSpec& spec = common_spec(c.env.tasks);
    EnvModel model(spec);
    const auto mu = epsilon_greedy_policy(optimal_q(model, c.gamma, spec.horizon), sh.mu_epsilon);
    return reference_values_from(evaluate_policy(model, mu, c.gamma, spec.horizon).v, model);
  }
  RolloutPlan plan{c.env.tasks, sh.fit_episodes_per_task, 1, derive_seed(c.seed, {0x5a0eULL}), c.workers};
  RolloutLog log;
  if (env->enumerable()) {
    const TaskSpec& spec = common_spec(c.env.tasks);
    EnvModel model(spec);
    const MarkovActor mu(epsilon_greedy_policy(optimal_q(model, c.gamma, spec.horizon), sh.mu_epsilon));
    log = collect_rollouts(mu, plan);
  } else {
    log = collect_rollouts(NoisyExpertActor(sh.mu_epsilon), plan);
  }
  return fit_reference_values(log.trajectories, c.gamma);
}

ResetDistribution reset_distribution(const RunConfig& c) {
  ResetDistribution dist;
  dist.mix = c.policy.reset_mix;
  if (dist.mix > 0.0) {
    const auto expert = make_expert(c, c.env.tasks);
    RolloutPlan plan{c.env.tasks, c.policy.reset_pool_episodes_per_task, 1, derive_seed(c.seed, {0x9001ULL}), 1};
    dist.pool = build_expert_pool(*expert, plan);
  }
  return dist;
}

Proposal make_proposal(const PolicyBlock& p, const VisitCounts* counts) {
  Proposal prop;
  prop.kind = p.proposal;
  prop.temperature = p.proposal_temperature;
  prop.epsilon = p.proposal_epsilon;
  prop.bonus = p.proposal_bonus;
  prop.counts = counts;
  return prop;
}

std::uint64_t eval_seed(const RunConfig& c) { return derive_seed(c.seed, {0xe7a1ULL}); }

struct Loop {
  const RunConfig& c;
  fs::path out;
  ResetDistribution reset;
  StartSampler start;
  std::chrono::steady_clock::time_point t0;

  explicit Loop(const RunConfig& config) : c(config), out(config.out_dir) {
    c.validate();
    reset = reset_distribution(c);
    start = c.policy.reset_mix > 0.0 ? start_sampler(reset) : default_start();
  }

  bool writing() const { return !c.out_dir.empty(); }

  EvalResult eval(const PolicyParams& p, const PrmParams* prm) const {
    return evaluate(p, prm, ActMode::parse(c.eval.mode), c.env.eval_tasks, c.env.eval_episodes_per_task, eval_seed(c),
                    c.workers);
  }

  RolloutLog stage1(const PolicyParams& prev, int i) const {
    const PolicyActor actor(prev, ActMode{});
    RolloutPlan plan{c.env.tasks, c.rollout.episodes_per_task, c.rollout.repeats, derive_seed(c.seed, {0x51ULL, std::uint64_t(i)}),
                     c.workers};
    auto log = collect_rollouts(actor, plan, start);
    for (const auto& d : log.discarded) std::cerr << "prmlab: discarded " << d << '\n';
    if (log.trajectories.empty()) throw RuntimeAbort("Stage 1 produced no trajectories");
    return log;
  }

  PolicyParams stage3(const PolicyParams& prev, const PrmParams& prm, std::span<const PrmParams> ensemble,
                      std::span<const Trajectory> stage1_trajs, int i, IterationReport& rep) const {
    const auto& p = c.policy;
    if (p.update == "closed-form") {
      std::vector<PolicyState> states;
      for (const auto& t : stage1_trajs)
        for (const auto& s : t.steps) states.push_back({s.state, s.legal});
      return kl_regularized_update_closed_form(prev, prm, p.beta, states);
    }
    VisitCounts counts;
    for (const auto& t : stage1_trajs)
      for (const auto& s : t.steps) counts.add(s.state.ref(), s.action);
    PreferenceUpdateConfig cfg;
    cfg.beta = p.beta;
    cfg.steps = p.steps;
    cfg.states_per_step = p.states_per_step;
    cfg.pairs_per_state = p.pairs_per_state;
    cfg.learning_rate = p.learning_rate;
    cfg.proposal = make_proposal(p, &counts);

    std::unique_ptr<StateSource> source;
    if (p.state_source == "stage1") {
      std::vector<PolicyState> pool;
      for (const auto& t : stage1_trajs)
        for (const auto& s : t.steps) pool.push_back({s.state, s.legal});
      source = std::make_unique<PoolStateSource>(std::move(pool));
    } else {
      RolloutPlan plan{c.env.tasks, p.source_episodes_per_task, 1, derive_seed(c.seed, {0x5050ULL, std::uint64_t(i)}),
                       c.workers};
      source = std::make_unique<OnPolicyStateSource>(plan, start, p.refresh_every);
    }
    StepCallback on_step;
    if (p.snapshot_every > 0) {
      on_step = [&](int step, const PolicyParams& snap) {
        if (step % p.snapshot_every != 0) return;
        rep.proxy_curve.push_back(diagnose_snapshot(step, snap, prm, ensemble, c.env.eval_tasks,
                                                    c.env.eval_episodes_per_task, eval_seed(c), c.workers));
      };
    }
    Rng rng = Rng::stream(c.seed, {0x53ULL, std::uint64_t(i)});
    PreferenceStats stats;
    auto next = online_preference_update(prev, prev, prm, *source, cfg, rng, &stats, on_step);
    rep.pairs_used = stats.pairs_used;
    rep.ties_skipped = stats.ties_skipped;
    return next;
  }

  void finish_iteration(IterationReport& rep, const EvalResult& ev) const {
    rep.success_rate = ev.success_rate;
    rep.avg_actions = ev.avg_actions;
    rep.per_category = ev.per_category;
    rep.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  void save_policy(const PolicyParams& p, int i) const {
    if (writing()) write_text(out / "checkpoints" / iter_name("policy", i, ".json"), p.to_json().dump() + "\n");
  }
  void save_prm(const PrmParams& p, int i) const {
    if (writing()) write_text(out / "checkpoints" / iter_name("prm", i, ".json"), p.to_json().dump() + "\n");
  }
  void save_curve(const IterationReport& rep) const {
    if (!writing() || rep.proxy_curve.empty()) return;
    std::ostringstream s;
    write_curve_csv(s, rep.proxy_curve);
    write_text(out / "metrics" / iter_name("proxy", rep.iteration, ".csv"), s.str());
  }

  void save_stats(const IterationReport& rep) const {
    if (!writing()) return;
    nlohmann::json j{{"rollouts", rep.rollouts}, {"pairs_used", rep.pairs_used}, {"ties_skipped", rep.ties_skipped}};
    j["prm_validation_loss"] =
        rep.prm_validation_loss ? nlohmann::json(*rep.prm_validation_loss) : nlohmann::json(nullptr);
    auto curve = nlohmann::json::array();
    for (const auto& p : rep.proxy_curve) curve.push_back({p.step, p.true_suc, p.proxy, p.ensemble_std});
    j["proxy_curve"] = std::move(curve);
    write_text(out / "checkpoints" / iter_name("stats", rep.iteration, ".json"), j.dump() + "\n");
  }
  void load_stats(IterationReport& rep) const {
    const auto p = out / "checkpoints" / iter_name("stats", rep.iteration, ".json");
    if (!fs::exists(p)) return;
    const auto j = read_json(p);
    rep.rollouts = j.at("rollouts").get<std::size_t>();
    rep.pairs_used = j.at("pairs_used").get<std::size_t>();
    rep.ties_skipped = j.at("ties_skipped").get<std::size_t>();
    if (!j.at("prm_validation_loss").is_null()) rep.prm_validation_loss = j.at("prm_validation_loss").get<double>();
    for (const auto& e : j.at("proxy_curve"))
      rep.proxy_curve.push_back({e[0].get<int>(), e[1].get<double>(), e[2].get<double>(), e[3].get<double>()});
  }

  std::optional<std::pair<PolicyParams, PrmParams>> resumed(int i) const {
    if (!c.resume || !writing()) return std::nullopt;
    const auto pp = out / "checkpoints" / iter_name("policy", i, ".json");
    const auto pr = out / "checkpoints" / iter_name("prm", i, ".json");
    if (!fs::exists(pp) || !fs::exists(pr)) return std::nullopt;
    return std::make_pair(PolicyParams::from_json(read_json(pp)), PrmParams::from_json(read_json(pr)));
  }

  PolicyParams initial_policy() const {
    auto p = PolicyParams::make(c.policy.family, c.policy.feature_map, c.policy.temperature, c.policy.hashed_dim);
    if (c.policy.init == "uniform") return p;
    const auto demos = expert_demos(c, c.policy.init_demos_per_task, derive_seed(c.seed, {0x5f7ULL}));
    BcConfig bc;
    bc.epochs = c.inverse.bc_epochs;
    return behavior_cloning(demos, std::move(p), bc);
  }

  int best_of(const RunResult& r) const {
    int best = 1;
    for (int i = 1; i < static_cast<int>(r.reports.size()); ++i)
      if (r.reports[static_cast<std::size_t>(i)].success_rate >= r.reports[static_cast<std::size_t>(best)].success_rate)
        best = i;
    return best;
  }
};

RunResult agentprm_loop(const RunConfig& config, const PrmParams* fixed_prm) {
  Loop L(config);
  const auto& c = L.c;
  if (!fixed_prm && c.prm.loss == LossKind::irl) throw ConfigError("loss 'irl' belongs to run-inverseprm");
  RunResult res;
  L.t0 = std::chrono::steady_clock::now();
  res.policies.push_back(L.initial_policy());
  L.save_policy(res.policies.back(), 0);
  EvalResult prev_eval = L.eval(res.policies.back(), nullptr);
  IterationReport rep0;
  L.finish_iteration(rep0, prev_eval);
  res.reports.push_back(rep0);

  for (int i = 1; i <= c.iterations; ++i) {
    L.t0 = std::chrono::steady_clock::now();
    const PolicyParams& prev = res.policies.back();
    IterationReport rep;
    rep.iteration = i;
    PolicyParams next;
    PrmParams prm;
    if (auto r = L.resumed(i)) {
      next = std::move(r->first);
      prm = std::move(r->second);
      L.load_stats(rep);
    } else {
      const RolloutLog log = L.stage1(prev, i);
      rep.rollouts = log.trajectories.size();
      std::vector<PrmParams> ensemble;
      if (fixed_prm) {
        prm = *fixed_prm;
      } else {
        const RolloutDict g = build_g_dict(log.trajectories, c.gamma);
        auto targets = compute_q_targets(g, c.prm.normalization);
        if (c.prm.shaping.enabled) {
          ShapedTargetConfig sc{c.prm.shaping.alpha, c.gamma, shaping_values(c)};
          targets = shaped_targets(targets, log.trajectories, sc);
        }
        PrmOptimizer opt = c.prm.optimizer;
        opt.seed = derive_seed(c.seed ^ opt.seed, {0x0bULL, std::uint64_t(i)});
        const auto init = PrmParams::make(c.prm.family, c.prm.feature_map, c.prm.hashed_dim);
        const auto val_targets = compute_q_targets(build_g_dict(prev_eval.trajectories, c.gamma), c.prm.normalization);
        if (c.prm.loss == LossKind::bce) {
          prm = train_prm_bce(init, targets, opt).params;
          rep.prm_validation_loss = bce_loss_and_grad(prm, val_targets).loss;
        } else {
          const auto pairs = build_preference_pairs(g, targets, c.prm.delta);
          prm = train_prm_bt(init, pairs, opt).params;
          const RolloutDict vg = build_g_dict(prev_eval.trajectories, c.gamma);
          rep.prm_validation_loss = bt_loss_and_grad(prm, build_preference_pairs(vg, val_targets, c.prm.delta)).loss;
          if (L.writing()) write_records<PreferenceRecord>(L.out / "datasets" / iter_name("pairs", i, ".jsonl"), pairs);
        }
        prm.version = i;
        if (c.prm.ensemble_k >= 2) ensemble = train_ensemble(init, targets, c.prm.ensemble_k, opt);
        if (L.writing()) {
          write_records<QTargetRecord>(L.out / "datasets" / iter_name("q_targets", i, ".jsonl"), targets);
          std::ofstream gout((fs::create_directories(L.out / "datasets"), L.out / "datasets" / iter_name("g", i, ".jsonl")),
                             std::ios::binary);
          write_g_jsonl(gout, g);
        }
      }
      if (L.writing()) write_records<Trajectory>(L.out / "trajectories" / iter_name("rollouts", i, ".jsonl"), log.trajectories);
      L.save_prm(prm, i);
      next = L.stage3(prev, prm, ensemble, log.trajectories, i, rep);
      L.save_policy(next, i);
      L.save_stats(rep);
    }
    prev_eval = L.eval(next, &prm);
    L.finish_iteration(rep, prev_eval);
    L.save_curve(rep);
    res.reports.push_back(std::move(rep));
    res.policies.push_back(std::move(next));
    res.prms.push_back(std::move(prm));
  }
  res.best_iteration = L.best_of(res);
  return res;
}

}  // namespace

EvalResult evaluate_actor(const Actor& actor, std::span<const TaskSpec> tasks, std::uint64_t episodes_per_task,
                          std::uint64_t seed, int workers, const StartSampler& start) {
  RolloutPlan plan{std::vector<TaskSpec>(tasks.begin(), tasks.end()), episodes_per_task, 1, seed, workers};
  EvalResult r;
  r.trajectories = collect_rollouts(actor, plan, start).trajectories;
  r.episodes = r.trajectories.size();
  if (r.episodes == 0) return r;
  std::size_t wins = 0, actions = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> cats;
  for (const auto& t : r.trajectories) {
    wins += t.success;
    actions += t.steps.size();
    if (t.spec.category) {
      auto& [w, n] = cats[to_string(*t.spec.category)];
      w += t.success;
      ++n;
    }
  }
  r.success_rate = 100.0 * static_cast<double>(wins) / static_cast<double>(r.episodes);
  r.avg_actions = static_cast<double>(actions) / static_cast<double>(r.episodes);
  for (const auto& [k, v] : cats) r.per_category[k] = 100.0 * static_cast<double>(v.first) / static_cast<double>(v.second);
  return r;
}

EvalResult evaluate(const PolicyParams& policy, const PrmParams* prm, ActMode mode, std::span<const TaskSpec> tasks,
                    std::uint64_t episodes_per_task, std::uint64_t seed, int workers, const StartSampler& start) {
  const PolicyActor actor(policy, mode, prm);
  return evaluate_actor(actor, tasks, episodes_per_task, seed, workers, start);
}

nlohmann::json to_json(const IterationReport& r, bool with_wall_clock) {
  nlohmann::json j{{"iteration", r.iteration},
                   {"success_rate", r.success_rate},
                   {"avg_actions", r.avg_actions},
                   {"per_category", r.per_category},
                   {"rollouts", r.rollouts},
                   {"pairs_used", r.pairs_used},
                   {"ties_skipped", r.ties_skipped}};
  j["prm_validation_loss"] = r.prm_validation_loss ? nlohmann::json(*r.prm_validation_loss) : nlohmann::json(nullptr);
  j["discriminator_accuracy"] =
      r.discriminator_accuracy ? nlohmann::json(*r.discriminator_accuracy) : nlohmann::json(nullptr);
  auto curve = nlohmann::json::array();
  for (const auto& p : r.proxy_curve)
    curve.push_back({{"step", p.step}, {"true_suc", p.true_suc}, {"proxy", p.proxy}, {"ensemble_std", p.ensemble_std}});
  j["proxy_curve"] = std::move(curve);
  if (with_wall_clock) j["wall_clock_s"] = r.wall_clock_s;
  return j;
}

RunResult run_agentprm(const RunConfig& config) { return agentprm_loop(config, nullptr); }

RunResult run_agentprm_with_prm(const RunConfig& config, const PrmParams& prm) { return agentprm_loop(config, &prm); }

std::vector<Trajectory> expert_demos(const RunConfig& c, std::uint64_t episodes_per_task, std::uint64_t seed) {
  const auto& tasks = c.inverse.demo_tasks.empty() ? c.env.tasks : c.inverse.demo_tasks;
  const auto expert = make_expert(c, tasks);
  RolloutPlan plan{tasks, episodes_per_task, 1, seed, c.workers};
  auto log = collect_rollouts(*expert, plan);
  std::vector<Trajectory> demos;
  for (auto& t : log.trajectories)
    if (t.success) demos.push_back(std::move(t));
  if (demos.empty()) throw RuntimeAbort("the expert produced no successful demonstrations");
  return demos;
}

RunResult run_inverseprm(const RunConfig& config, std::span<const Trajectory> demos,
                         std::span<const Trajectory> holdout_demos) {
  Loop L(config);
  const auto& c = L.c;
  if (demos.empty()) throw ConfigError("InversePRM needs expert demonstrations");
  if (c.rollout.episodes_per_task * c.rollout.repeats == 0) throw ConfigError("learner rollout budget is empty");
  RunResult res;
  L.t0 = std::chrono::steady_clock::now();
  res.policies.push_back(L.initial_policy());
  L.save_policy(res.policies.back(), 0);
  EvalResult prev_eval = L.eval(res.policies.back(), nullptr);
  IterationReport rep0;
  L.finish_iteration(rep0, prev_eval);
  res.reports.push_back(rep0);
  std::vector<TransitionRecord> negatives;

  for (int i = 1; i <= c.iterations; ++i) {
    L.t0 = std::chrono::steady_clock::now();
    const PolicyParams prev = res.policies.back();
    IterationReport rep;
    rep.iteration = i;
    const RolloutLog log = L.stage1(prev, i);
    rep.rollouts = log.trajectories.size();
    const RelabelPolicy relabel_with_prev = [&prev](const StateRecord& s, std::span<const ActionId> legal, Rng& rng) {
      return sample_action(prev, s.ref(), legal, rng);
    };
    Rng rng = Rng::stream(c.seed, {0x1a7eULL, std::uint64_t(i)});
    TransitionDatasets ds = build_irl_datasets(demos, log.trajectories, negatives, i, relabel_with_prev, rng);
    negatives = ds.negatives;

    PrmOptimizer opt = c.prm.optimizer;
    opt.seed = derive_seed(c.seed ^ opt.seed, {0x0bULL, std::uint64_t(i)});
    PrmParams prm = train_prm_irl(PrmParams::make(c.prm.family, c.prm.feature_map, c.prm.hashed_dim), ds, c.gamma, opt).params;
    prm.version = i;
    if (!holdout_demos.empty()) {
      auto pos = transitions_of(holdout_demos, 0);
      auto neg = transitions_of(prev_eval.trajectories, i);
      relabel(pos, relabel_with_prev, rng);
      relabel(neg, relabel_with_prev, rng);
      rep.discriminator_accuracy = irl_accuracy(prm, pos, neg, c.gamma);
    }
    if (L.writing()) {
      write_records<Trajectory>(L.out / "trajectories" / iter_name("rollouts", i, ".jsonl"), log.trajectories);
      write_records<TransitionRecord>(L.out / "datasets" / iter_name("irl_positives", i, ".jsonl"), ds.positives);
      write_records<TransitionRecord>(L.out / "datasets" / iter_name("irl_negatives", i, ".jsonl"), ds.negatives);
    }
    L.save_prm(prm, i);
    PolicyParams next = L.stage3(prev, prm, {}, log.trajectories, i, rep);
    L.save_policy(next, i);
    prev_eval = L.eval(next, &prm);
    L.finish_iteration(rep, prev_eval);
    L.save_curve(rep);
    res.reports.push_back(std::move(rep));
    res.policies.push_back(std::move(next));
    res.prms.push_back(std::move(prm));
  }
  res.best_iteration = L.best_of(res);
  return res;
}

StartSampler off_demo_start(const TaskSpec& spec, std::span<const Trajectory> demos) {
  EnvModel model(spec);
  std::set<MarkovToken> visited;
  for (const auto& d : demos) {
    for (const auto& s : d.steps)
      if (s.state.token) visited.insert(*s.state.token);
    if (d.final_state.token) visited.insert(*d.final_state.token);
  }
  // Every state reachable from a start state, minus the demonstrated ones.
  std::set<MarkovToken> seen(model.start_states().begin(), model.start_states().end());
  std::vector<MarkovToken> frontier(seen.begin(), seen.end());
  while (!frontier.empty()) {
    const MarkovToken s = frontier.back();
    frontier.pop_back();
    if (model.node(s).terminal) continue;
    for (ActionId a : model.node(s).legal) {
      const auto& tr = model.transition(s, a);
      if (seen.insert(tr.next).second) frontier.push_back(tr.next);
    }
  }
  std::vector<MarkovToken> starts;
  for (auto s : seen)
    if (!model.node(s).terminal && !visited.count(s)) starts.push_back(s);
  if (starts.empty()) throw ConfigError("the demonstrations visit every reachable state");
  return [starts](const TaskSpec& task, std::uint64_t, Rng& rng) {
    auto env = make_environment(task);
    env->set_markov_state(starts[rng.index(starts.size())], 0);
    HistoryState h(env->observe());
    return std::make_pair(std::move(env), std::move(h));
  };
}

std::vector<BonRow> bon_sweep(const PolicyParams& policy, const PrmParams& prm, std::span<const std::size_t> n_list,
                              std::span<const TaskSpec> tasks, std::uint64_t episodes_per_task, std::uint64_t seed,
                              int workers) {
  if (n_list.empty()) throw ConfigError("bon sweep needs at least one N");
  std::vector<BonRow> rows;
  for (std::size_t n : n_list) {
    const auto ev = evaluate(policy, &prm, ActMode{ActMode::bon, n}, tasks, episodes_per_task, seed, workers);
    rows.push_back({n, ev.success_rate, ev.avg_actions});
  }
  return rows;
}

void write_bon_csv(std::ostream& out, std::span<const BonRow> rows) {
  out << "n,success_rate,avg_actions\n";
  for (const auto& r : rows) out << r.n << ',' << num(r.success_rate) << ',' << num(r.avg_actions) << '\n';
}

CurvePoint diagnose_snapshot(int step, const PolicyParams& snapshot, const PrmParams& prm,
                             std::span<const PrmParams> ensemble, std::span<const TaskSpec> tasks,
                             std::uint64_t episodes_per_task, std::uint64_t seed, int workers) {
  const auto ev = evaluate(snapshot, nullptr, ActMode{}, tasks, episodes_per_task, seed, workers);
  CurvePoint p;
  p.step = step;
  p.true_suc = ev.success_rate;
  std::size_t n = 0;
  for (const auto& t : ev.trajectories)
    for (const auto& s : t.steps) {
      p.proxy += prm_score(prm, s.state.ref(), s.action);
      if (ensemble.size() >= 2) p.ensemble_std += ensemble_disagreement(ensemble, s.state.ref(), s.action);
      ++n;
    }
  if (n) {
    p.proxy /= static_cast<double>(n);
    p.ensemble_std /= static_cast<double>(n);
  }
  return p;
}

std::vector<CurvePoint> hacking_diagnostic(std::span<const std::pair<int, PolicyParams>> trace, const PrmParams& prm,
                                           std::span<const PrmParams> ensemble, std::span<const TaskSpec> tasks,
                                           std::uint64_t episodes_per_task, std::uint64_t seed, int workers) {
  if (trace.empty()) throw ConfigError("training trace has no snapshots");
  std::vector<CurvePoint> out;
  for (const auto& [step, p] : trace)
    out.push_back(diagnose_snapshot(step, p, prm, ensemble, tasks, episodes_per_task, seed, workers));
  return out;
}

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve) {
  out << "step,true_suc,proxy,ensemble_std\n";
  for (const auto& p : curve)
    out << p.step << ',' << num(p.true_suc) << ',' << num(p.proxy) << ',' << num(p.ensemble_std) << '\n';
}

HackingSignature hacking_signature(std::span<const CurvePoint> curve, double min_drop) {
  HackingSignature s;
  if (curve.empty()) return s;
  std::size_t peak = 0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i].true_suc > curve[peak].true_suc) peak = i;
  const std::size_t q = std::max<std::size_t>(1, curve.size() / 4);
  double proxy = 0.0, suc = 0.0;
  for (std::size_t i = curve.size() - q; i < curve.size(); ++i) {
    proxy += curve[i].proxy;
    suc += curve[i].true_suc;
  }
  s.peak_true = curve[peak].true_suc;
  s.proxy_at_peak = curve[peak].proxy;
  s.final_quarter_proxy = proxy / static_cast<double>(q);
  s.final_true = suc / static_cast<double>(q);
  s.degradation = s.peak_true - s.final_true;
  s.present = s.final_quarter_proxy > s.proxy_at_peak && s.degradation > min_drop && s.final_true < s.peak_true;
  return s;
}

double curve_correlation(std::span<const CurvePoint> curve) {
  const double n = static_cast<double>(curve.size());
  if (curve.size() < 2) return 0.0;
  double mx = 0, my = 0;
  for (const auto& p : curve) {
    mx += p.true_suc / n;
    my += p.proxy / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (const auto& p : curve) {
    sxy += (p.true_suc - mx) * (p.proxy - my);
    sxx += (p.true_suc - mx) * (p.true_suc - mx);
    syy += (p.proxy - my) * (p.proxy - my);
  }
  return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

void write_run_report(const RunConfig& config, const RunResult& result, const std::string& kind) {
  if (config.out_dir.empty()) return;
  const fs::path out(config.out_dir);
  auto iters = nlohmann::json::array();
  std::ostringstream csv;
  csv << "iteration,success_rate,avg_actions,prm_validation_loss,discriminator_accuracy,pairs_used,ties_skipped\n";
  for (const auto& r : result.reports) {
    iters.push_back(to_json(r, config.record_wall_clock));
    csv << r.iteration << ',' << num(r.success_rate) << ',' << num(r.avg_actions) << ','
        << (r.prm_validation_loss ? num(*r.prm_validation_loss) : "") << ','
        << (r.discriminator_accuracy ? num(*r.discriminator_accuracy) : "") << ',' << r.pairs_used << ','
        << r.ties_skipped << '\n';
  }
  const nlohmann::json report{
      {"schema", 1},
      {"kind", kind},
      {"config", config},
      {"iterations", iters},
      {"best_iteration", result.best_iteration},
      {"validation_metric", "success_rate"},
      {"best_validation_success", result.reports[static_cast<std::size_t>(result.best_iteration)].success_rate}};
  write_text(out / "report.json", report.dump(2) + "\n");
  write_text(out / "metrics" / "iterations.csv", csv.str());
}

}  // namespace prmlab
