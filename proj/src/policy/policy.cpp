#include "prmlab/policy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "prmlab/core/error.hpp"

namespace prmlab {

std::string to_string(PolicyFamily f) { return f == PolicyFamily::tabular_softmax ? "tabular-softmax" : "linear-softmax"; }

PolicyFamily policy_family_from_string(std::string_view s) {
  if (s == "tabular-softmax") return PolicyFamily::tabular_softmax;
  if (s == "linear-softmax") return PolicyFamily::linear_softmax;
  throw ConfigError("unknown policy family '" + std::string(s) + "'");
}

PolicyParams PolicyParams::make(PolicyFamily family, FeatureMapId map, double temperature, std::uint32_t hashed_dim) {
  if ((family == PolicyFamily::tabular_softmax) != is_tabular(map))
    throw ConfigError("policy family " + to_string(family) + " does not match feature map " + to_string(map));
  if (!(temperature > 0.0)) throw ConfigError("policy temperature must be positive");
  return {family, ScoreModel(map, hashed_dim), temperature, 0};
}

nlohmann::json PolicyParams::to_json() const {
  return {{"schema", 1},          {"kind", "policy"},  {"family", to_string(family)},
          {"temperature", temperature}, {"version", version}, {"model", model.to_json()}};
}

PolicyParams PolicyParams::from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "policy") throw ConfigError("checkpoint is not a policy");
  PolicyParams p;
  p.family = policy_family_from_string(j.at("family").get<std::string>());
  p.temperature = j.at("temperature").get<double>();
  p.version = j.at("version").get<int>();
  p.model = ScoreModel::from_json(j.at("model"));
  if ((p.family == PolicyFamily::tabular_softmax) != p.model.tabular())
    throw ConfigError("policy family and feature map disagree");
  return p;
}

namespace {

std::vector<double> softmax(std::vector<double> z, double temperature) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double& x : z) {
    x /= temperature;
    hi = std::max(hi, x);
  }
  double sum = 0.0;
  for (double& x : z) sum += (x = std::exp(x - hi));
  for (double& x : z) x /= sum;
  return z;
}

std::size_t position(std::span<const ActionId> legal, ActionId a) {
  const auto it = std::find(legal.begin(), legal.end(), a);
  if (it == legal.end()) throw ContractViolation("action " + std::to_string(a) + " is not legal here");
  return static_cast<std::size_t>(it - legal.begin());
}

void check_legal(std::span<const ActionId> legal) {
  if (legal.empty()) throw ContractViolation("empty legal action set");
}

}  // namespace

std::vector<double> policy_logits(const PolicyParams& p, const StateRef& state, std::span<const ActionId> legal) {
  check_legal(legal);
  const Digest128 row = p.model.row_key(state);
  std::vector<double> z;
  z.reserve(legal.size());
  for (ActionId a : legal) z.push_back(p.model.logit_at(row, state, a).value_or(0.0));
  return z;
}

std::vector<double> action_distribution(const PolicyParams& p, const StateRef& state, std::span<const ActionId> legal) {
  return softmax(policy_logits(p, state, legal), p.temperature);
}

double log_prob(const PolicyParams& p, const StateRef& state, std::span<const ActionId> legal, ActionId action) {
  auto z = policy_logits(p, state, legal);
  double hi = -std::numeric_limits<double>::infinity();
  for (double& x : z) hi = std::max(hi, x /= p.temperature);
  double sum = 0.0;
  for (double x : z) sum += std::exp(x - hi);
  return z[position(legal, action)] - hi - std::log(sum);
}

ActionId sample_action(const PolicyParams& p, const StateRef& state, std::span<const ActionId> legal, Rng& rng) {
  const auto probs = action_distribution(p, state, legal);
  return legal[rng.categorical(probs)];
}

ActionId greedy_action(const PolicyParams& p, const StateRef& state, std::span<const ActionId> legal) {
  const auto z = policy_logits(p, state, legal);
  std::size_t best = 0;
  for (std::size_t i = 1; i < z.size(); ++i)
    if (z[i] > z[best] || (z[i] == z[best] && legal[i] < legal[best])) best = i;
  return legal[best];
}

PolicyParams kl_regularized_update_closed_form(const PolicyParams& reference, const PrmParams& prm, double beta,
                                               std::span<const PolicyState> states) {
  if (reference.family != PolicyFamily::tabular_softmax)
    throw UnsupportedOperation("closed-form KL update needs a tabular policy; use the preference update");
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  PolicyParams out = reference;
  std::set<Digest128> done;
  for (const auto& ps : states) {
    const StateRef s = ps.state.ref();
    const Digest128 row = reference.model.row_key(s);
    if (!done.insert(row).second) continue;
    const auto z = policy_logits(reference, s, ps.legal);
    for (std::size_t i = 0; i < ps.legal.size(); ++i)
      out.model.set_slot(row, ps.legal[i], z[i] + reference.temperature * prm_score(prm, s, ps.legal[i]) / beta);
  }
  out.version = reference.version + 1;
  return out;
}

double kl_objective(std::span<const double> pi, std::span<const double> ref, std::span<const double> q, double beta) {
  double v = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    v += pi[i] * q[i];
    if (pi[i] > 0.0) v -= beta * pi[i] * std::log(pi[i] / ref[i]);
  }
  return v;
}

std::string to_string(ProposalKind k) {
  switch (k) {
    case ProposalKind::none: return "none";
    case ProposalKind::temperature: return "temperature";
    case ProposalKind::epsilon_mix: return "epsilon-mix";
    case ProposalKind::optimistic: return "optimistic";
  }
  return "?";
}

ProposalKind proposal_kind_from_string(std::string_view s) {
  for (auto k : {ProposalKind::none, ProposalKind::temperature, ProposalKind::epsilon_mix, ProposalKind::optimistic})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown proposal kind '" + std::string(s) + "'");
}

void VisitCounts::add(const StateRef& state, ActionId action) {
  ++counts_[{tabular_state_key(FeatureMapId::tabular_observation, state), action}];
}

std::size_t VisitCounts::get(const StateRef& state, ActionId action) const {
  const auto it = counts_.find({tabular_state_key(FeatureMapId::tabular_observation, state), action});
  return it == counts_.end() ? 0 : it->second;
}

std::vector<double> proposal_distribution(const PolicyParams& base, const Proposal& proposal, const StateRef& state,
                                          std::span<const ActionId> legal) {
  auto mix_uniform = [&](std::vector<double> p) {
    if (!(proposal.epsilon >= 0.0 && proposal.epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
    const double u = proposal.epsilon / static_cast<double>(legal.size());
    for (double& x : p) x = (1.0 - proposal.epsilon) * x + u;
    return p;
  };
  switch (proposal.kind) {
    case ProposalKind::none:
      return action_distribution(base, state, legal);
    case ProposalKind::temperature:
      if (!(proposal.temperature > 0.0)) throw ConfigError("proposal temperature must be positive");
      return softmax(policy_logits(base, state, legal), base.temperature * proposal.temperature);
    case ProposalKind::epsilon_mix:
      return mix_uniform(action_distribution(base, state, legal));
    case ProposalKind::optimistic: {
      auto z = policy_logits(base, state, legal);
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double n = proposal.counts ? static_cast<double>(proposal.counts->get(state, legal[i])) : 0.0;
        z[i] = z[i] / base.temperature + proposal.bonus / std::sqrt(1.0 + n);
      }
      return mix_uniform(softmax(std::move(z), 1.0));
    }
  }
  throw ContractViolation("unhandled proposal kind");
}

ActionId bon_act(const PolicyParams& policy, const PrmParams& prm, std::size_t n, const StateRef& state,
                 std::span<const ActionId> legal, Rng& rng, const Proposal* proposal) {
  if (n < 1) throw ConfigError("Best-of-N needs n >= 1");
  const auto probs = proposal ? proposal_distribution(policy, *proposal, state, legal)
                              : action_distribution(policy, state, legal);
  ActionId best = kNullAction;
  double best_score = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const ActionId a = legal[rng.categorical(probs)];
    if (a == best) continue;
    const double s = prm_score(prm, state, a);
    if (best == kNullAction || s > best_score || (s == best_score && a < best)) {
      best = a;
      best_score = s;
    }
  }
  return best;
}

PoolStateSource::PoolStateSource(std::vector<PolicyState> pool) : pool_(std::move(pool)) {
  if (pool_.empty()) throw ConfigError("state pool is empty");
}

std::vector<PolicyState> PoolStateSource::draw(const PolicyParams&, std::size_t n, Rng& rng) {
  std::vector<PolicyState> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool_[rng.index(pool_.size())]);
  return out;
}

OnPolicyStateSource::OnPolicyStateSource(RolloutPlan plan, StartSampler start, int refresh_every)
    : plan_(std::move(plan)), start_(std::move(start)), refresh_every_(std::max(1, refresh_every)) {}

std::vector<PolicyState> OnPolicyStateSource::draw(const PolicyParams& current, std::size_t n, Rng& rng) {
  if (draws_++ % refresh_every_ == 0) {
    RolloutPlan plan = plan_;
    plan.seed = derive_seed(plan_.seed, {0x0b51ULL, generation_++});
    const PolicyActor actor(current, ActMode{});
    const auto log = collect_rollouts(actor, plan, start_);
    pool_.clear();
    for (const auto& t : log.trajectories)
      for (const auto& s : t.steps) pool_.push_back({s.state, s.legal});
    if (pool_.empty()) throw RuntimeAbort("on-policy rollouts produced no states");
  }
  std::vector<PolicyState> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool_[rng.index(pool_.size())]);
  return out;
}

double preference_margin(const PolicyParams& policy, const PolicyParams& reference, const StateRef& state,
                         std::span<const ActionId> legal, ActionId winner, ActionId loser) {
  return (log_prob(policy, state, legal, winner) - log_prob(reference, state, legal, winner)) -
         (log_prob(policy, state, legal, loser) - log_prob(reference, state, legal, loser));
}

void preference_step(PolicyParams& policy, const PolicyParams& reference, const StateRef& state,
                     std::span<const ActionId> legal, ActionId winner, ActionId loser, double beta,
                     double learning_rate) {
  if (winner == loser) throw ContractViolation("preference pair with winner == loser");
  policy.model.ensure(state, winner);
  policy.model.ensure(state, loser);
  const double h = preference_margin(policy, reference, state, legal, winner, loser);
  // d(-log sigmoid(beta h))/dh = -beta sigmoid(-beta h); h is linear in the weights.
  const double c = learning_rate * beta * sigmoid(-beta * h) / policy.temperature;
  std::vector<double> dir(policy.model.size(), 0.0);
  policy.model.accumulate(state, winner, c, dir);
  policy.model.accumulate(state, loser, -c, dir);
  auto& w = policy.model.weights();
  for (std::size_t k = 0; k < w.size(); ++k) w[k] += dir[k];
}

PolicyParams online_preference_update(PolicyParams policy, const PolicyParams& reference, const PrmParams& prm,
                                      StateSource& source, const PreferenceUpdateConfig& cfg, Rng& rng,
                                      PreferenceStats* stats, const StepCallback& on_step) {
  if (!(cfg.beta > 0.0)) throw ConfigError("beta must be positive");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("policy learning rate must be positive");
  PreferenceStats local;
  PreferenceStats& st = stats ? *stats : local;
  if (on_step) on_step(0, policy);
  for (int step = 1; step <= cfg.steps; ++step) {
    for (const auto& ps : source.draw(policy, cfg.states_per_step, rng)) {
      if (ps.legal.size() < 2) {
        ++st.states_skipped;
        continue;
      }
      const StateRef s = ps.state.ref();
      for (std::size_t k = 0; k < cfg.pairs_per_state; ++k) {
        const auto probs = proposal_distribution(policy, cfg.proposal, s, ps.legal);
        const ActionId a1 = ps.legal[rng.categorical(probs)];
        const ActionId a2 = ps.legal[rng.categorical(probs)];
        const double s1 = prm_score(prm, s, a1);
        const double s2 = prm_score(prm, s, a2);
        if (a1 == a2 || s1 == s2) {
          ++st.ties_skipped;
          continue;
        }
        ++st.pairs_used;
        if (s1 > s2) preference_step(policy, reference, s, ps.legal, a1, a2, cfg.beta, cfg.learning_rate);
        else preference_step(policy, reference, s, ps.legal, a2, a1, cfg.beta, cfg.learning_rate);
      }
    }
    if (on_step) on_step(step, policy);
  }
  policy.version = reference.version + 1;
  return policy;
}

ActMode ActMode::parse(std::string_view s) {
  if (s == "sample") return {sample, 16};
  if (s == "greedy") return {greedy, 16};
  if (s == "bon") return {bon, 16};
  if (s.rfind("bon:", 0) == 0) {
    try {
      const long n = std::stol(std::string(s.substr(4)));
      if (n >= 1) return {bon, static_cast<std::size_t>(n)};
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("unknown act mode '" + std::string(s) + "' (sample, greedy, bon:N)");
}

std::string ActMode::str() const {
  switch (kind) {
    case sample: return "sample";
    case greedy: return "greedy";
    case bon: return "bon:" + std::to_string(n);
  }
  return "?";
}

PolicyActor::PolicyActor(const PolicyParams& policy, ActMode mode, const PrmParams* prm, const Proposal* proposal)
    : policy_(policy), mode_(mode), prm_(prm), proposal_(proposal) {
  if (mode_.kind == ActMode::bon && !prm_) throw ConfigError("bon mode requires a PRM");
}

ActionId PolicyActor::act(const ActorContext& ctx) const {
  const StateRef s{ctx.state_key, &ctx.history.latest(), ctx.history.turn()};
  switch (mode_.kind) {
    case ActMode::greedy:
      return greedy_action(policy_, s, ctx.legal);
    case ActMode::bon:
      return bon_act(policy_, *prm_, mode_.n, s, ctx.legal, ctx.rng, proposal_);
    case ActMode::sample:
      break;
  }
  if (proposal_) return ctx.legal[ctx.rng.categorical(proposal_distribution(policy_, *proposal_, s, ctx.legal))];
  return sample_action(policy_, s, ctx.legal, ctx.rng);
}

MarkovPolicy markov_policy(const PolicyParams& p) {
  if (p.model.feature_map() == FeatureMapId::tabular_history)
    throw UnsupportedOperation("history-keyed policies have no Markov form");
  return [p](MarkovToken, const Observation& obs, int turn, std::span<const ActionId> legal) {
    return action_distribution(p, StateRef{{}, &obs, turn}, legal);
  };
}

void ResetDistribution::validate() const {
  if (!(mix >= 0.0 && mix <= 1.0)) throw ConfigError("reset mix must lie in [0, 1]");
  if (mix > 0.0 && pool.empty()) throw ConfigError("reset mix > 0 needs a nonempty expert state pool");
}

std::pair<std::unique_ptr<Environment>, HistoryState> sample_start(const ResetDistribution& dist,
                                                                   const TaskSpec& spec, std::uint64_t instance,
                                                                   Rng& rng, bool* from_pool) {
  dist.validate();
  bool pooled = dist.mix >= 1.0;
  if (dist.mix > 0.0 && dist.mix < 1.0) pooled = rng.bernoulli(dist.mix);
  if (from_pool) *from_pool = pooled;
  if (!pooled) {
    Rng stream = task_stream(spec, instance);
    return prmlab::reset(spec, stream);
  }
  const auto& entry = dist.pool[rng.index(dist.pool.size())];
  auto env = make_environment(entry.checkpoint.at("spec").get<TaskSpec>());
  env->restore(entry.checkpoint);
  return {std::move(env), entry.history};
}

StartSampler start_sampler(const ResetDistribution& dist) {
  dist.validate();
  return [dist](const TaskSpec& spec, std::uint64_t instance, Rng& rng) {
    return sample_start(dist, spec, instance, rng);
  };
}

std::vector<ResetPoolEntry> build_expert_pool(const Actor& expert, const RolloutPlan& plan) {
  std::vector<ResetPoolEntry> pool;
  for (std::uint64_t j = 0; j < plan.tasks.size(); ++j)
    for (std::uint64_t k = 0; k < plan.episodes_per_task; ++k) {
      Rng stream = task_stream(plan.tasks[j], k);
      auto [env, history] = prmlab::reset(plan.tasks[j], stream);
      Rng rng = Rng::stream(plan.seed, {0xe7e7ULL, j, k});
      while (!env->done()) {
        pool.push_back({env->checkpoint(), history});
        const auto legal = env->legal_actions();
        const Digest128 key = history.digest();
        const ActionId a = expert.act({history, key, legal, *env, rng});
        history.append(a, env->step(a).observation);
      }
    }
  return pool;
}

PolicyParams behavior_cloning(std::span<const Trajectory> demos, PolicyParams init, const BcConfig& cfg) {
  std::vector<const TrajectoryStep*> steps;
  for (const auto& d : demos)
    for (const auto& s : d.steps) steps.push_back(&s);
  if (steps.empty()) throw ConfigError("behaviour cloning needs demonstrations");
  PolicyParams p = std::move(init);
  for (const auto* s : steps)
    for (ActionId a : s->legal) p.model.ensure(s->state.ref(), a);

  const double w = 1.0 / static_cast<double>(steps.size());
  std::vector<double> precond(p.model.size(), 1.0);
  if (p.model.tabular()) {
    std::vector<double> mass(p.model.size(), 0.0);
    std::vector<std::uint32_t> idx;
    for (const auto* s : steps)
      for (ActionId a : s->legal) {
        p.model.support(s->state.ref(), a, idx);
        for (auto k : idx) mass[k] += w;
      }
    for (std::size_t k = 0; k < mass.size(); ++k) precond[k] = mass[k] > 0 ? 1.0 / mass[k] : 1.0;
  }
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<double> grad(p.model.size(), 0.0);
    for (const auto* s : steps) {
      const StateRef ref = s->state.ref();
      const auto probs = action_distribution(p, ref, s->legal);
      for (std::size_t i = 0; i < s->legal.size(); ++i) {
        const double target = s->legal[i] == s->action ? 1.0 : 0.0;
        p.model.accumulate(ref, s->legal[i], w * (probs[i] - target) / p.temperature, grad);
      }
    }
    const double lr = p.model.tabular() ? cfg.learning_rate : cfg.learning_rate * 0.1;
    auto& wt = p.model.weights();
    for (std::size_t k = 0; k < wt.size(); ++k) wt[k] -= lr * precond[k] * grad[k];
  }
  p.version += 1;
  return p;
}

}  // namespace prmlab
