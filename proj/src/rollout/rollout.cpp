#include "prmlab/rollout/rollout.hpp"

#include <algorithm>
#include <exception>
#include <set>

#include <omp.h>

#include "prmlab/core/error.hpp"

namespace prmlab {

ActionId UniformActor::act(const ActorContext& ctx) const { return ctx.legal[ctx.rng.index(ctx.legal.size())]; }

ActionId ExpertActor::act(const ActorContext& ctx) const {
  const auto a = ctx.env.expert_action();
  if (!a) throw UnsupportedOperation("environment family has no scripted expert");
  return *a;
}

ActionId MarkovActor::act(const ActorContext& ctx) const {
  const auto probs = policy_(ctx.env.markov_state(), ctx.history.latest(), ctx.history.turn(), ctx.legal);
  return ctx.legal[ctx.rng.categorical(probs)];
}

StartSampler default_start() {
  return [](const TaskSpec& spec, std::uint64_t instance, Rng&) {
    Rng stream = task_stream(spec, instance);
    return reset(spec, stream);
  };
}

namespace {

StateRecord record_state(const Environment& env, const HistoryState& history) {
  StateRecord s;
  s.key = history.digest();
  s.observation = history.latest();
  s.turn = history.turn();
  if (env.enumerable()) s.token = env.markov_state();
  return s;
}

struct EpisodeIndex {
  std::uint64_t task, instance, repeat;
};

EpisodeIndex split(const RolloutPlan& plan, std::uint64_t e) {
  const std::uint64_t per_task = plan.episodes_per_task * plan.repeats;
  return {e / per_task, (e / plan.repeats) % plan.episodes_per_task, e % plan.repeats};
}

void check_plan(const RolloutPlan& plan) {
  if (plan.tasks.empty()) throw ConfigError("rollout plan has no tasks");
  if (plan.episodes_per_task * plan.repeats < 1) throw ConfigError("episodes_per_task x repeats must be at least 1");
  if (plan.workers < 1) throw ConfigError("workers must be at least 1");
}

/// Runs episode e into its slot; faults are reported through `error`.
void run_indexed(const Actor& actor, const RolloutPlan& plan, const StartSampler& start, std::uint64_t e,
                 std::optional<Trajectory>& slot, std::string& error) {
  const auto [j, k, r] = split(plan, e);
  try {
    Rng start_rng = Rng::stream(plan.seed, {0x57a7ULL, j, k, r});
    Rng policy_rng = Rng::stream(plan.seed, {0x9011ULL, j, k, r});
    auto [env, history] = start(plan.tasks[j], k, start_rng);
    slot = run_episode(actor, std::move(env), std::move(history), policy_rng, k, r);
  } catch (const std::exception& ex) {
    error = "episode " + std::to_string(e) + " (task " + std::to_string(j) + ", instance " + std::to_string(k) +
            ", repeat " + std::to_string(r) + "): " + ex.what();
  }
}

RolloutLog gather(std::vector<std::optional<Trajectory>>& slots, std::vector<std::string>& errors) {
  RolloutLog log;
  log.trajectories.reserve(slots.size());
  for (std::size_t e = 0; e < slots.size(); ++e) {
    if (slots[e]) log.trajectories.push_back(std::move(*slots[e]));
    else log.discarded.push_back(std::move(errors[e]));
  }
  return log;
}

}  // namespace

Trajectory run_episode(const Actor& actor, std::unique_ptr<Environment> env, HistoryState history, Rng& policy_rng,
                       std::uint64_t instance, std::uint64_t repeat) {
  Trajectory traj;
  traj.spec = env->spec();
  traj.instance = instance;
  traj.repeat = repeat;
  while (!env->done()) {
    TrajectoryStep step;
    step.state = record_state(*env, history);
    step.legal = env->legal_actions();
    step.action = actor.act({history, step.state.key, step.legal, *env, policy_rng});
    const StepResult res = env->step(step.action);
    if (res.reward < 0.0 || res.reward > 1.0) throw RuntimeAbort("reward outside [0, 1]");
    step.reward = res.reward;
    history.append(step.action, res.observation);
    traj.steps.push_back(std::move(step));
  }
  traj.final_state = record_state(*env, history);
  traj.success = env->succeeded();
  traj.length = env->turn();
  return traj;
}

RolloutLog collect_rollouts(const Actor& actor, const RolloutPlan& plan, const StartSampler& start) {
  check_plan(plan);
  const auto total = static_cast<std::int64_t>(plan.tasks.size() * plan.episodes_per_task * plan.repeats);
  std::vector<std::optional<Trajectory>> slots(static_cast<std::size_t>(total));
  std::vector<std::string> errors(slots.size());
#pragma omp parallel for schedule(dynamic) num_threads(plan.workers)
  for (std::int64_t e = 0; e < total; ++e)
    run_indexed(actor, plan, start, static_cast<std::uint64_t>(e), slots[static_cast<std::size_t>(e)],
                errors[static_cast<std::size_t>(e)]);
  return gather(slots, errors);
}

RolloutLog collect_rollouts_serial(const Actor& actor, const RolloutPlan& plan, const StartSampler& start) {
  check_plan(plan);
  const std::uint64_t total = plan.tasks.size() * plan.episodes_per_task * plan.repeats;
  std::vector<std::optional<Trajectory>> slots(total);
  std::vector<std::string> errors(total);
  for (std::uint64_t e = 0; e < total; ++e) run_indexed(actor, plan, start, e, slots[e], errors[e]);
  return gather(slots, errors);
}

RolloutDict build_g_dict(std::span<const Trajectory> trajectories, double gamma) {
  RolloutDict g;
  g.gamma = gamma;
  for (const auto& traj : trajectories) {
    double ret = 0.0;
    for (std::size_t i = traj.steps.size(); i-- > 0;) {
      const auto& step = traj.steps[i];
      ret = step.reward + gamma * ret;
      const Digest128 pair_key = [&] {
        CanonicalWriter w("prmlab.state-action.v1");
        w.put_string(std::string_view(reinterpret_cast<const char*>(step.state.key.bytes.data()), 16));
        w.put_i64(step.action);
        return w.digest();
      }();
      auto [it, fresh] = g.by_pair.try_emplace(pair_key);
      if (fresh) {
        it->second.state = step.state;
        it->second.action = step.action;
      }
      it->second.samples.push_back(ret);
      g.by_state[step.state.key].emplace_back(step.action, ret);
    }
  }
  // Sorted samples make every downstream sum independent of trajectory order.
  for (auto& [k, e] : g.by_pair) std::sort(e.samples.begin(), e.samples.end());
  for (auto& [k, v] : g.by_state) std::sort(v.begin(), v.end());
  return g;
}

std::vector<QTargetRecord> compute_q_targets(const RolloutDict& g, TargetNormalization norm) {
  if (g.by_pair.empty()) throw ConfigError("rollout dictionary is empty");
  std::vector<QTargetRecord> out;
  out.reserve(g.by_pair.size());
  for (const auto& [k, e] : g.by_pair) {
    double sum = 0.0;
    for (double x : e.samples) sum += x;
    out.push_back({e.state, e.action, sum / static_cast<double>(e.samples.size()), e.samples.size()});
  }
  if (norm == TargetNormalization::clip) {
    for (auto& r : out) r.q_hat = std::clamp(r.q_hat, 0.0, 1.0);
  } else {
    double lo = out.front().q_hat, hi = out.front().q_hat;
    for (const auto& r : out) {
      lo = std::min(lo, r.q_hat);
      hi = std::max(hi, r.q_hat);
    }
    for (auto& r : out) r.q_hat = hi > lo ? (r.q_hat - lo) / (hi - lo) : 0.5;
  }
  return out;
}

std::vector<PreferenceRecord> build_preference_pairs(const RolloutDict& g, std::span<const QTargetRecord> targets,
                                                     double delta) {
  if (delta < 0.0) throw ConfigError("delta must be nonnegative");
  std::map<Digest128, std::vector<const QTargetRecord*>> per_state;
  for (const auto& r : targets) per_state[r.state.key].push_back(&r);
  std::vector<PreferenceRecord> out;
  for (const auto& [key, recs] : per_state) {
    if (!g.by_state.count(key) || recs.size() < 2) continue;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      for (std::size_t j = i + 1; j < recs.size(); ++j) {
        const QTargetRecord* a = recs[i];
        const QTargetRecord* b = recs[j];
        if (a->action == b->action) continue;
        const double gap = a->q_hat - b->q_hat;
        if (std::abs(gap) < delta || gap == 0.0) continue;
        if (gap > 0) out.push_back({a->state, a->action, b->action, gap});
        else out.push_back({a->state, b->action, a->action, -gap});
      }
    }
  }
  return out;
}

std::vector<TransitionRecord> transitions_of(std::span<const Trajectory> trajectories, int source_iteration) {
  std::vector<TransitionRecord> out;
  for (const auto& traj : trajectories) {
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
      TransitionRecord r;
      r.state = traj.steps[i].state;
      r.action = traj.steps[i].action;
      r.terminal = i + 1 == traj.steps.size();
      if (r.terminal) {
        r.next = traj.final_state;
      } else {
        r.next = traj.steps[i + 1].state;
        r.next_legal = traj.steps[i + 1].legal;
      }
      r.source_iteration = source_iteration;
      out.push_back(std::move(r));
    }
  }
  return out;
}

void relabel(std::vector<TransitionRecord>& records, const RelabelPolicy& policy, Rng& rng) {
  for (auto& r : records) r.next_action = r.terminal ? kNullAction : policy(r.next, r.next_legal, rng);
}

TransitionDatasets build_irl_datasets(std::span<const Trajectory> expert_demos,
                                      std::span<const Trajectory> learner_trajectories,
                                      std::span<const TransitionRecord> prior_negatives, int iteration,
                                      const RelabelPolicy& relabel_policy, Rng& rng) {
  if (expert_demos.empty()) throw ConfigError("InversePRM needs at least one expert demonstration");
  for (const auto& d : expert_demos)
    if (!d.success) throw ConfigError("expert demonstrations must be successful");
  TransitionDatasets ds;
  ds.positives = transitions_of(expert_demos, 0);
  ds.negatives.assign(prior_negatives.begin(), prior_negatives.end());
  auto fresh = transitions_of(learner_trajectories, iteration);
  ds.negatives.insert(ds.negatives.end(), std::make_move_iterator(fresh.begin()), std::make_move_iterator(fresh.end()));
  relabel(ds.positives, relabel_policy, rng);
  relabel(ds.negatives, relabel_policy, rng);
  return ds;
}

nlohmann::json to_json(const StateRecord& s) {
  nlohmann::json j{{"key", s.key.hex()}, {"observation", s.observation}, {"turn", s.turn}};
  if (s.token) j["token"] = s.token->value;
  return j;
}

StateRecord state_record_from_json(const nlohmann::json& j) {
  StateRecord s;
  s.key = Digest128::from_hex(j.at("key").get<std::string>());
  s.observation = j.at("observation").get<Observation>();
  s.turn = j.at("turn").get<int>();
  if (j.contains("token")) s.token = MarkovToken{j.at("token").get<std::uint64_t>()};
  return s;
}

nlohmann::json to_json(const Trajectory& t) {
  auto steps = nlohmann::json::array();
  for (const auto& s : t.steps) {
    nlohmann::json js{{"state_key", s.state.key.hex()},
                      {"state", s.state.observation},
                      {"turn", s.state.turn},
                      {"legal", s.legal},
                      {"action", s.action},
                      {"reward", s.reward}};
    if (s.state.token) js["token"] = s.state.token->value;
    steps.push_back(std::move(js));
  }
  return {{"schema", 1},          {"spec", t.spec},       {"instance", t.instance},
          {"repeat", t.repeat},   {"steps", steps},       {"final_state", to_json(t.final_state)},
          {"success", t.success}, {"length", t.length}};
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  t.spec = j.at("spec").get<TaskSpec>();
  t.instance = j.at("instance").get<std::uint64_t>();
  t.repeat = j.at("repeat").get<std::uint64_t>();
  for (const auto& js : j.at("steps")) {
    TrajectoryStep s;
    s.state.key = Digest128::from_hex(js.at("state_key").get<std::string>());
    s.state.observation = js.at("state").get<Observation>();
    s.state.turn = js.at("turn").get<int>();
    if (js.contains("token")) s.state.token = MarkovToken{js.at("token").get<std::uint64_t>()};
    s.legal = js.at("legal").get<std::vector<ActionId>>();
    s.action = js.at("action").get<ActionId>();
    s.reward = js.at("reward").get<double>();
    t.steps.push_back(std::move(s));
  }
  t.final_state = state_record_from_json(j.at("final_state"));
  t.success = j.at("success").get<bool>();
  t.length = j.at("length").get<int>();
  return t;
}

nlohmann::json to_json(const QTargetRecord& r) {
  return {{"schema", 1}, {"state", to_json(r.state)}, {"action", r.action}, {"q_hat", r.q_hat}, {"visits", r.visits}};
}

QTargetRecord q_target_from_json(const nlohmann::json& j) {
  return {state_record_from_json(j.at("state")), j.at("action").get<ActionId>(), j.at("q_hat").get<double>(),
          j.at("visits").get<std::size_t>()};
}

nlohmann::json to_json(const PreferenceRecord& r) {
  return {{"schema", 1},
          {"state", to_json(r.state)},
          {"winner", r.winner},
          {"loser", r.loser},
          {"margin", r.margin}};
}

PreferenceRecord preference_from_json(const nlohmann::json& j) {
  return {state_record_from_json(j.at("state")), j.at("winner").get<ActionId>(), j.at("loser").get<ActionId>(),
          j.at("margin").get<double>()};
}

nlohmann::json to_json(const TransitionRecord& r) {
  nlohmann::json j{{"schema", 1},
                   {"state", to_json(r.state)},
                   {"action", r.action},
                   {"next", to_json(r.next)},
                   {"next_legal", r.next_legal},
                   {"terminal", r.terminal},
                   {"source_iteration", r.source_iteration}};
  j["next_action"] = r.next_action ? nlohmann::json(*r.next_action) : nlohmann::json(nullptr);
  return j;
}

TransitionRecord transition_from_json(const nlohmann::json& j) {
  TransitionRecord r;
  r.state = state_record_from_json(j.at("state"));
  r.action = j.at("action").get<ActionId>();
  r.next = state_record_from_json(j.at("next"));
  r.next_legal = j.at("next_legal").get<std::vector<ActionId>>();
  r.terminal = j.at("terminal").get<bool>();
  r.source_iteration = j.at("source_iteration").get<int>();
  if (!j.at("next_action").is_null()) r.next_action = j.at("next_action").get<ActionId>();
  return r;
}

void write_g_jsonl(std::ostream& out, const RolloutDict& g) {
  for (const auto& [k, e] : g.by_pair)
    out << nlohmann::json{{"schema", 1},
                          {"key", k.hex()},
                          {"gamma", g.gamma},
                          {"state", to_json(e.state)},
                          {"action", e.action},
                          {"samples", e.samples}}
               .dump()
        << '\n';
}

std::optional<double> ReferenceValues::find(const Observation& obs, int turn) const {
  const auto it = values.find({obs.digest(), turn});
  if (it == values.end()) return std::nullopt;
  return it->second;
}

ReferenceValues fit_reference_values(std::span<const Trajectory> trajectories, double gamma) {
  std::map<std::pair<Digest128, int>, std::pair<double, std::size_t>> acc;
  for (const auto& traj : trajectories) {
    double ret = 0.0;
    for (std::size_t i = traj.steps.size(); i-- > 0;) {
      const auto& step = traj.steps[i];
      ret = step.reward + gamma * ret;
      auto& [sum, n] = acc[{step.state.observation.digest(), step.state.turn}];
      sum += ret;
      ++n;
    }
  }
  ReferenceValues out;
  out.gamma = gamma;
  for (const auto& [k, v] : acc) out.values[k] = v.first / static_cast<double>(v.second);
  return out;
}

ReferenceValues reference_values_from(const ExactVTable& v, const EnvModel& model) {
  ReferenceValues out;
  out.gamma = v.gamma();
  for (const auto& [k, value] : v.entries()) out.values[{model.node(k.state).observation.digest(), k.turn}] = value;
  return out;
}

}  // namespace prmlab
