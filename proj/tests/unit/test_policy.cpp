#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "prmlab/core/error.hpp"
#include "prmlab/env/keydoor.hpp"
#include "prmlab/oracle/oracle.hpp"
#include "prmlab/policy/policy.hpp"
#include "prmlab/prm/prm.hpp"
#include "prmlab/rollout/rollout.hpp"

using namespace prmlab;

namespace {

TaskSpec keydoor(int n, std::uint64_t seed, int horizon = kDefaultHorizonKeydoor) {
  TaskSpec s;
  s.family = EnvFamily::keydoor;
  s.size = n;
  s.seed = seed;
  s.horizon = horizon;
  return s;
}

StateRecord synthetic_state(int id, int turn = 0) {
  StateRecord s;
  s.observation = Observation({"room " + std::to_string(id)}, "g");
  s.turn = turn;
  CanonicalWriter w("test.state");
  w.put_string(s.observation.canonical()).put_i64(turn);
  s.key = w.digest();
  return s;
}

std::vector<ActionId> actions(int n) {
  std::vector<ActionId> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0) h -= x * std::log(x);
  return h;
}

double tv(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return 0.5 * d;
}

/// Mirror ascent on the per-state objective E_pi[q] - beta KL(pi || ref).
std::vector<double> ascend(const std::vector<double>& ref, const std::vector<double>& q, double beta) {
  std::vector<double> pi(ref.size(), 1.0 / static_cast<double>(ref.size()));
  const double eta = 0.5 / beta;
  for (int it = 0; it < 2000; ++it) {
    double hi = -1e300;
    std::vector<double> lp(pi.size());
    for (std::size_t i = 0; i < pi.size(); ++i) {
      lp[i] = std::log(pi[i]) + eta * (q[i] - beta * (std::log(pi[i] / ref[i]) + 1.0));
      hi = std::max(hi, lp[i]);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) sum += (pi[i] = std::exp(lp[i] - hi));
    for (double& x : pi) x /= sum;
  }
  return pi;
}

/// Tabular policy and PRM with random values on `states` x `n` actions.
std::pair<PolicyParams, PrmParams> random_tables(const std::vector<StateRecord>& states, int n, Rng& rng) {
  auto pol = PolicyParams::make(PolicyFamily::tabular_softmax, FeatureMapId::tabular_observation);
  auto prm = PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_observation);
  for (const auto& s : states)
    for (ActionId a = 0; a < n; ++a) {
      pol.model.set_slot(pol.model.row_key(s.ref()), a, 2.0 * rng.normal());
      prm.model.set_slot(prm.model.row_key(s.ref()), a, 2.0 * rng.normal());
    }
  return {pol, prm};
}

std::vector<double> prm_scores(const PrmParams& prm, const StateRecord& s, std::span<const ActionId> legal) {
  std::vector<double> q;
  for (ActionId a : legal) q.push_back(prm_score(prm, s.ref(), a));
  return q;
}

/// Records every state handed to the update.
class RecordingSource final : public StateSource {
 public:
  explicit RecordingSource(StateSource& inner) : inner_(inner) {}
  std::vector<PolicyState> draw(const PolicyParams& current, std::size_t n, Rng& rng) override {
    auto out = inner_.draw(current, n, rng);
    for (const auto& s : out) seen.emplace(s.state.key, s);
    return out;
  }
  std::map<Digest128, PolicyState> seen;

 private:
  StateSource& inner_;
};

std::vector<Trajectory> rollouts(const Actor& actor, const TaskSpec& t, std::uint64_t episodes, std::uint64_t seed) {
  RolloutPlan plan;
  plan.tasks = {t};
  plan.episodes_per_task = episodes;
  plan.seed = seed;
  plan.workers = 4;
  return collect_rollouts(actor, plan).trajectories;
}

}  // namespace

TEST_CASE("action distributions") {
  Rng rng(1);
  const auto legal = actions(5);
  auto zero = PolicyParams::make(PolicyFamily::tabular_softmax, FeatureMapId::tabular_observation);
  const auto s0 = synthetic_state(0);
  for (double p : action_distribution(zero, s0.ref(), legal)) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));

  std::vector<StateRecord> states;
  for (int i = 0; i < 1000; ++i) states.push_back(synthetic_state(i));
  auto [pol, prm] = random_tables(states, 5, rng);
  double worst = 0.0;
  for (const auto& s : states) {
    const auto p = action_distribution(pol, s.ref(), legal);
    double sum = 0.0;
    for (double x : p) sum += x;
    worst = std::max(worst, std::abs(sum - 1.0));
    CHECK(std::exp(log_prob(pol, s.ref(), legal, 3)) == doctest::Approx(p[3]).epsilon(1e-12));
  }
  CHECK(worst <= 1e-12);

  auto cold = pol;
  cold.temperature = 1e-3;
  const auto p = action_distribution(cold, states[0].ref(), legal);
  const auto best = greedy_action(pol, states[0].ref(), legal);
  CHECK(p[static_cast<std::size_t>(best)] >= 1.0 - 1e-12);

  const auto round = PolicyParams::from_json(pol.to_json());
  CHECK(round.to_json() == pol.to_json());
  CHECK_THROWS_AS(action_distribution(pol, s0.ref(), std::vector<ActionId>{}), ContractViolation);
}

TEST_CASE("closed-form update maximises the per-state objective") {
  Rng rng(2);
  std::vector<StateRecord> states;
  std::vector<PolicyState> ps;
  for (int i = 0; i < 30; ++i) {
    states.push_back(synthetic_state(i));
    ps.push_back({states.back(), actions(2 + i % 5)});
  }
  auto [ref, prm] = random_tables(states, 6, rng);
  const double beta = 0.1;
  const auto next = kl_regularized_update_closed_form(ref, prm, beta, ps);
  CHECK(next.version == ref.version + 1);
  double worst_tv = 0.0;
  for (const auto& s : ps) {
    const auto r = action_distribution(ref, s.state.ref(), s.legal);
    const auto pi = action_distribution(next, s.state.ref(), s.legal);
    const auto q = prm_scores(prm, s.state, s.legal);
    worst_tv = std::max(worst_tv, tv(pi, ascend(r, q, beta)));

    const double best = kl_objective(pi, r, q, beta);
    for (int k = 0; k < 1000 / 30 + 1; ++k) {
      std::vector<double> other = pi;
      double sum = 0.0;
      for (double& x : other) sum += (x = std::max(0.0, x + 0.2 * rng.normal() * x + 0.01 * rng.uniform()));
      for (double& x : other) x /= sum;
      CHECK(kl_objective(other, r, q, beta) <= best + 1e-9);
    }
    const auto star = std::max_element(q.begin(), q.end()) - q.begin();
    CHECK(pi[static_cast<std::size_t>(star)] >= r[static_cast<std::size_t>(star)]);
  }
  CHECK(worst_tv <= 1e-6);
}

TEST_CASE("closed-form limits") {
  Rng rng(3);
  const std::vector<StateRecord> states = {synthetic_state(0)};
  const std::vector<PolicyState> ps = {{states[0], actions(4)}};
  auto [ref, prm] = random_tables(states, 4, rng);
  const auto r = action_distribution(ref, states[0].ref(), ps[0].legal);

  SUBCASE("constant scores") {
    auto flat = prm;
    for (ActionId a = 0; a < 4; ++a) flat.model.set_slot(flat.model.row_key(states[0].ref()), a, 0.7);
    const auto pi = action_distribution(kl_regularized_update_closed_form(ref, flat, 0.1, ps), states[0].ref(), ps[0].legal);
    CHECK(tv(pi, r) <= 1e-12);
  }
  SUBCASE("large beta") {
    const auto pi = action_distribution(kl_regularized_update_closed_form(ref, prm, 1e9, ps), states[0].ref(), ps[0].legal);
    CHECK(tv(pi, r) <= 1e-8);
  }
  SUBCASE("temperature is respected") {
    auto warm = ref;
    warm.temperature = 2.5;
    const auto rw = action_distribution(warm, states[0].ref(), ps[0].legal);
    const auto pi = action_distribution(kl_regularized_update_closed_form(warm, prm, 0.3, ps), states[0].ref(), ps[0].legal);
    CHECK(tv(pi, ascend(rw, prm_scores(prm, states[0], ps[0].legal), 0.3)) <= 1e-6);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(kl_regularized_update_closed_form(ref, prm, 0.0, ps), ConfigError);
    const auto lin = PolicyParams::make(PolicyFamily::linear_softmax, FeatureMapId::hashed_facts, 1.0, 64);
    CHECK_THROWS_AS(kl_regularized_update_closed_form(lin, prm, 0.1, ps), UnsupportedOperation);
  }
}

TEST_CASE("best-of-N") {
  Rng rng(4);
  const std::vector<StateRecord> states = {synthetic_state(0)};
  const auto legal = actions(5);
  auto [pol, prm] = random_tables(states, 5, rng);
  const StateRef s = states[0].ref();

  SUBCASE("n = 1 is the policy") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      Rng a(seed);
      Rng b(seed);
      CHECK(bon_act(pol, prm, 1, s, legal, a) == sample_action(pol, s, legal, b));
    }
  }
  SUBCASE("ties go to the smaller id") {
    auto flat = prm;
    for (ActionId a : legal) flat.model.set_slot(flat.model.row_key(s), a, 0.0);
    const auto uniform = PolicyParams::make(PolicyFamily::tabular_softmax, FeatureMapId::tabular_observation);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      Rng a(seed);
      Rng b(seed);
      std::vector<ActionId> drawn;
      for (int k = 0; k < 3; ++k) drawn.push_back(sample_action(uniform, s, legal, b));
      CHECK(bon_act(uniform, flat, 3, s, legal, a) == *std::min_element(drawn.begin(), drawn.end()));
    }
  }
  SUBCASE("only the ordering of scores matters") {
    auto squashed = prm;
    for (ActionId a : legal) {
      const auto slot = *prm.model.slot(prm.model.row_key(s), a);
      squashed.model.set_slot(squashed.model.row_key(s), a, 0.25 * prm.model.weights()[slot] - 3.0);
    }
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
      Rng a(seed);
      Rng b(seed);
      CHECK(bon_act(pol, prm, 4, s, legal, a) == bon_act(pol, squashed, 4, s, legal, b));
    }
  }
  SUBCASE("invalid n") { CHECK_THROWS_AS(bon_act(pol, prm, 0, s, legal, rng), ConfigError); }
}

TEST_CASE("best-of-N with exact Q* picks the oracle argmax") {
  const auto spec = keydoor(4, 5);
  const EnvModel model(spec);
  const auto q = optimal_q(model, 0.95, spec.horizon);
  const auto prm = prm_from_q_table(q, model);
  const auto uniform = PolicyParams::make(PolicyFamily::tabular_softmax, FeatureMapId::tabular_observation);
  const auto traj = rollouts(UniformActor(), spec, 60, 1);
  Rng rng(5);
  int checked = 0;
  for (const auto& t : traj)
    for (const auto& st : t.steps) {
      if (checked == 1000) break;
      const auto oracle = q.argmax(*st.state.token, st.state.turn, st.legal);
      CHECK(bon_act(uniform, prm, 64, st.state.ref(), st.legal, rng) == oracle);
      ++checked;
    }
  CHECK(checked == 1000);
}

TEST_CASE("proposals") {
  Rng rng(6);
  std::vector<StateRecord> states;
  for (int i = 0; i < 200; ++i) states.push_back(synthetic_state(i));
  auto [pol, prm] = random_tables(states, 6, rng);
  const auto legal = actions(6);

  Proposal none;
  Proposal hot;
  hot.kind = ProposalKind::temperature;
  hot.temperature = 2.0;
  Proposal eps;
  eps.kind = ProposalKind::epsilon_mix;
  eps.epsilon = 0.3;
  for (const auto& s : states) {
    const auto base = action_distribution(pol, s.ref(), legal);
    CHECK(proposal_distribution(pol, none, s.ref(), legal) == base);
    CHECK(entropy(proposal_distribution(pol, hot, s.ref(), legal)) >= entropy(base) - 1e-12);
    const auto mixed = proposal_distribution(pol, eps, s.ref(), legal);
    for (std::size_t i = 0; i < legal.size(); ++i) CHECK(mixed[i] == doctest::Approx(0.7 * base[i] + 0.05));
  }

  SUBCASE("optimism favours rarely tried actions") {
    VisitCounts counts;
    for (int k = 0; k < 50; ++k) counts.add(states[0].ref(), 2);
    CHECK(counts.get(states[0].ref(), 2) == 50);
    CHECK(counts.get(states[0].ref(), 3) == 0);
    const auto flat = PolicyParams::make(PolicyFamily::tabular_softmax, FeatureMapId::tabular_observation);
    Proposal opt;
    opt.kind = ProposalKind::optimistic;
    opt.counts = &counts;
    const auto p = proposal_distribution(flat, opt, states[0].ref(), legal);
    CHECK(p[2] < p[3]);
    CHECK(p[3] == doctest::Approx(p[4]));
  }
  SUBCASE("bad knobs") {
    eps.epsilon = 1.5;
    CHECK_THROWS_AS(proposal_distribution(pol, eps, states[0].ref(), legal), ConfigError);
    hot.temperature = 0.0;
    CHECK_THROWS_AS(proposal_distribution(pol, hot, states[0].ref(), legal), ConfigError);
  }
  CHECK(proposal_kind_from_string(to_string(ProposalKind::optimistic)) == ProposalKind::optimistic);
}

TEST_CASE("epsilon-mix proposal visits at least as many state-action pairs") {
  const auto spec = keydoor(5, 7);
  const auto demos = rollouts(ExpertActor(), spec, 5, 0);
  const auto base = behavior_cloning(demos, PolicyParams::make(PolicyFamily::tabular_softmax, FeatureMapId::tabular_observation));
  Proposal eps;
  eps.kind = ProposalKind::epsilon_mix;
  eps.epsilon = 0.3;
  auto distinct = [](const std::vector<Trajectory>& t) {
    std::set<std::pair<Digest128, ActionId>> keys;
    for (const auto& tr : t)
      for (const auto& st : tr.steps) keys.insert({st.state.key, st.action});
    return keys.size();
  };
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto plain = distinct(rollouts(PolicyActor(base, ActMode{}), spec, 200, seed));
    const auto mixed = distinct(rollouts(PolicyActor(base, ActMode{}, nullptr, &eps), spec, 200, seed));
    CHECK(mixed >= plain);
  }
}

TEST_CASE("a preference step raises the margin") {
  Rng rng(8);
  std::vector<StateRecord> states;
  for (int i = 0; i < 50; ++i) states.push_back(synthetic_state(i));
  auto [pol, prm] = random_tables(states, 5, rng);
  const auto ref = random_tables(states, 5, rng).first;
  const auto legal = actions(5);
  auto lin = PolicyParams::make(PolicyFamily::linear_softmax, FeatureMapId::hashed_facts, 1.0, 128);
  for (double& w : lin.model.weights()) w = rng.normal();
  const auto lin_ref = PolicyParams::make(PolicyFamily::linear_softmax, FeatureMapId::hashed_facts, 1.0, 128);
  for (const auto& s : states) {
    const ActionId w = static_cast<ActionId>(rng.index(5));
    const ActionId l = (w + 1 + static_cast<ActionId>(rng.index(4))) % 5;
    for (double lr : {1e-3, 0.1, 10.0}) {
      auto p = pol;
      const double before = preference_margin(p, ref, s.ref(), legal, w, l);
      preference_step(p, ref, s.ref(), legal, w, l, 0.1, lr);
      CHECK(preference_margin(p, ref, s.ref(), legal, w, l) > before);
      auto q = lin;
      const double lb = preference_margin(q, lin_ref, s.ref(), legal, w, l);
      preference_step(q, lin_ref, s.ref(), legal, w, l, 0.1, lr);
      CHECK(preference_margin(q, lin_ref, s.ref(), legal, w, l) > lb);
    }
  }
  CHECK_THROWS_AS(preference_step(pol, ref, states[0].ref(), legal, 1, 1, 0.1, 1.0), ContractViolation);
}

TEST_CASE("online preference update") {
  const auto s = synthetic_state(0);
  const auto legal = actions(2);
  const auto uniform = PolicyParams::make(PolicyFamily::tabular_softmax, FeatureMapId::tabular_observation);
  PoolStateSource source({{s, legal}});

  SUBCASE("two-action bandit") {
    auto prm = PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_observation);
    prm.model.set_slot(prm.model.row_key(s.ref()), 0, 1.0);
    prm.model.set_slot(prm.model.row_key(s.ref()), 1, -1.0);
    PreferenceUpdateConfig cfg;
    cfg.steps = 100;
    cfg.states_per_step = 1;
    Rng rng(9);
    std::vector<double> p0;
    PreferenceStats stats;
    const auto out = online_preference_update(uniform, uniform, prm, source, cfg, rng, &stats,
                                              [&](int, const PolicyParams& p) {
                                                p0.push_back(action_distribution(p, s.ref(), legal)[0]);
                                              });
    CHECK(p0.size() == 101);
    CHECK(p0.back() > p0.front());
    CHECK(stats.pairs_used + stats.ties_skipped == 100);
    CHECK(stats.pairs_used > 0);
    for (std::size_t i = 1; i < p0.size(); ++i) CHECK(p0[i] >= p0[i - 1]);
    CHECK(out.version == 1);
  }
  SUBCASE("ties leave the policy unchanged") {
    const auto flat = PrmParams::make(PrmFamily::linear_sigmoid, FeatureMapId::hashed_facts, 64);
    PreferenceUpdateConfig cfg;
    cfg.steps = 50;
    cfg.states_per_step = 2;
    Rng rng(10);
    PreferenceStats stats;
    const auto out = online_preference_update(uniform, uniform, flat, source, cfg, rng, &stats);
    CHECK(stats.pairs_used == 0);
    CHECK(stats.ties_skipped == 100);
    CHECK(out.model.weights() == uniform.model.weights());
  }
  SUBCASE("single-action states are skipped") {
    PoolStateSource single({{s, actions(1)}});
    PreferenceUpdateConfig cfg;
    cfg.steps = 5;
    Rng rng(11);
    PreferenceStats stats;
    online_preference_update(uniform, uniform, PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_observation),
                             single, cfg, rng, &stats);
    CHECK(stats.states_skipped == 5 * cfg.states_per_step);
  }
  SUBCASE("invalid settings") {
    PreferenceUpdateConfig cfg;
    cfg.beta = 0.0;
    Rng rng(12);
    CHECK_THROWS_AS(online_preference_update(uniform, uniform, PrmParams{}, source, cfg, rng), ConfigError);
  }
}

TEST_CASE("online preference update towards exact Q* on keydoor") {
  const auto spec = keydoor(4, 13);
  const EnvModel model(spec);
  const auto q = optimal_q(model, 0.95, spec.horizon);
  const auto prm = prm_from_q_table(q, model);
  const auto uniform = PolicyParams::make(PolicyFamily::tabular_softmax, FeatureMapId::tabular_observation);
  RolloutPlan plan;
  plan.tasks = {spec};
  plan.episodes_per_task = 20;
  plan.seed = 14;
  plan.workers = 4;
  OnPolicyStateSource on_policy(plan, default_start(), 10);
  RecordingSource source(on_policy);
  PreferenceUpdateConfig cfg;
  Rng rng(15);
  const auto trained = online_preference_update(uniform, uniform, prm, source, cfg, rng);

  std::size_t states = 0;
  std::size_t improved = 0;
  for (const auto& [key, ps] : source.seen) {
    const auto& st = ps.state;
    double top = -1.0;
    for (ActionId a : ps.legal) top = std::max(top, q.at(*st.token, a, st.turn));
    std::vector<bool> best;
    for (ActionId a : ps.legal) best.push_back(q.at(*st.token, a, st.turn) >= top - 1e-12);
    if (std::all_of(best.begin(), best.end(), [](bool b) { return b; })) continue;
    auto mass = [&](const PolicyParams& p) {
      const auto probs = action_distribution(p, st.ref(), ps.legal);
      double m = 0.0;
      for (std::size_t i = 0; i < probs.size(); ++i) m += best[i] ? probs[i] : 0.0;
      return m;
    };
    ++states;
    improved += mass(trained) > mass(uniform);
  }
  MESSAGE(improved, " of ", states, " visited states gained greedy mass");
  CHECK(states >= 20);
  CHECK(static_cast<double>(improved) >= 0.95 * static_cast<double>(states));
}

TEST_CASE("reset distribution") {
  const auto spec = keydoor(5, 16);
  RolloutPlan pool_plan;
  pool_plan.tasks = {spec};
  pool_plan.episodes_per_task = 3;
  ResetDistribution dist;
  dist.pool = build_expert_pool(ExpertActor(), pool_plan);
  REQUIRE(!dist.pool.empty());
  std::set<std::string> pooled_histories;
  for (const auto& e : dist.pool) pooled_histories.insert(e.history.digest().hex());

  SUBCASE("mix 0 is the plain reset") {
    dist.mix = 0.0;
    for (std::uint64_t k = 0; k < 20; ++k) {
      Rng rng(k);
      Rng untouched(k);
      bool pooled = true;
      auto [env, hist] = sample_start(dist, spec, k, rng, &pooled);
      Rng stream = task_stream(spec, k);
      auto [env2, hist2] = reset(spec, stream);
      CHECK(!pooled);
      CHECK(hist == hist2);
      CHECK(env->checkpoint() == env2->checkpoint());
      CHECK(rng.next_u64() == untouched.next_u64());
    }
  }
  SUBCASE("mix 1 always starts from the pool") {
    dist.mix = 1.0;
    Rng rng(17);
    for (int k = 0; k < 200; ++k) {
      bool pooled = false;
      auto [env, hist] = sample_start(dist, spec, 0, rng, &pooled);
      CHECK(pooled);
      CHECK(pooled_histories.count(hist.digest().hex()) == 1);
      CHECK(env->observe() == hist.latest());
      CHECK(env->turn() == hist.turn());
    }
  }
  SUBCASE("mix 0.5 pools half of the starts") {
    dist.mix = 0.5;
    Rng rng(18);
    int pooled_count = 0;
    for (int k = 0; k < 10000; ++k) {
      bool pooled = false;
      sample_start(dist, spec, static_cast<std::uint64_t>(k), rng, &pooled);
      pooled_count += pooled;
    }
    CHECK(std::abs(pooled_count / 10000.0 - 0.5) <= 3.0 * std::sqrt(0.25 / 10000.0));
  }
  SUBCASE("pooled starts continue to success under the expert") {
    dist.mix = 1.0;
    RolloutPlan plan;
    plan.tasks = {spec};
    plan.episodes_per_task = 50;
    const auto log = collect_rollouts(ExpertActor(), plan, start_sampler(dist));
    for (const auto& t : log.trajectories) CHECK(t.success);
  }
  SUBCASE("errors") {
    ResetDistribution empty;
    empty.mix = 0.5;
    Rng rng(19);
    CHECK_THROWS_AS(sample_start(empty, spec, 0, rng), ConfigError);
    dist.mix = 1.2;
    CHECK_THROWS_AS(dist.validate(), ConfigError);
    dist.mix = 1.0;
    dist.pool[0].checkpoint["layout_version"] = 999;
    dist.pool.resize(1);
    CHECK_THROWS_AS(sample_start(dist, spec, 0, rng), RuntimeAbort);
  }
}

TEST_CASE("behaviour cloning reproduces the demonstrator") {
  const auto spec = keydoor(5, 20);
  const auto demos = rollouts(ExpertActor(), spec, 20, 0);
  const auto bc = behavior_cloning(demos, PolicyParams::make(PolicyFamily::tabular_softmax, FeatureMapId::tabular_observation));
  std::size_t agree = 0;
  std::size_t total = 0;
  for (const auto& t : demos)
    for (const auto& st : t.steps) {
      agree += greedy_action(bc, st.state.ref(), st.legal) == st.action;
      ++total;
    }
  CHECK(static_cast<double>(agree) >= 0.95 * static_cast<double>(total));
  CHECK_THROWS_AS(behavior_cloning({}, bc), ConfigError);
}

TEST_CASE("acting modes") {
  CHECK(ActMode::parse("sample").kind == ActMode::sample);
  CHECK(ActMode::parse("greedy").kind == ActMode::greedy);
  const auto b = ActMode::parse("bon:7");
  CHECK(b.kind == ActMode::bon);
  CHECK(b.n == 7);
  CHECK(ActMode::parse(b.str()).n == 7);
  CHECK_THROWS_AS(ActMode::parse("bon:0"), ConfigError);
  CHECK_THROWS_AS(ActMode::parse("best"), ConfigError);
  const auto p = PolicyParams::make(PolicyFamily::tabular_softmax, FeatureMapId::tabular_observation);
  CHECK_THROWS_AS(PolicyActor(p, ActMode::parse("bon:2")), ConfigError);
  const auto h = PolicyParams::make(PolicyFamily::tabular_softmax, FeatureMapId::tabular_history);
  CHECK_THROWS_AS(markov_policy(h), UnsupportedOperation);
}
