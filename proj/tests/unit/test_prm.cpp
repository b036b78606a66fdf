#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "prmlab/core/error.hpp"
#include "prmlab/env/chain.hpp"
#include "prmlab/env/keydoor.hpp"
#include "prmlab/oracle/oracle.hpp"
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

std::vector<Trajectory> rollouts(const Actor& actor, std::vector<TaskSpec> tasks, std::uint64_t episodes,
                                 std::uint64_t seed, std::uint64_t repeats = 1) {
  RolloutPlan plan;
  plan.tasks = std::move(tasks);
  plan.episodes_per_task = episodes;
  plan.repeats = repeats;
  plan.seed = seed;
  plan.workers = 4;
  return collect_rollouts(actor, plan).trajectories;
}

const std::vector<Trajectory>& random_keydoor() {
  static const auto t = rollouts(UniformActor(), {keydoor(4, 1)}, 60, 3);
  return t;
}

RelabelPolicy uniform_relabel() {
  return [](const StateRecord&, std::span<const ActionId> legal, Rng& rng) { return legal[rng.index(legal.size())]; };
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

/// Central differences of `loss` around the parameters of `prm`.
template <class Loss>
std::vector<double> numeric_gradient(PrmParams prm, Loss&& loss, double h = 1e-5) {
  std::vector<double> g(prm.model.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double w0 = prm.model.weights()[k];
    prm.model.weights()[k] = w0 + h;
    const double up = loss(prm);
    prm.model.weights()[k] = w0 - h;
    const double down = loss(prm);
    prm.model.weights()[k] = w0;
    g[k] = (up - down) / (2 * h);
  }
  return g;
}

void randomize(PrmParams& prm, Rng& rng, double scale) {
  for (double& w : prm.model.weights()) w = scale * rng.normal();
}

template <class T>
std::vector<T> sample(const std::vector<T>& pool, std::size_t n, Rng& rng) {
  std::vector<T> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool[rng.index(pool.size())]);
  return out;
}

StateRecord synthetic_state(int id) {
  StateRecord s;
  s.observation = Observation({"cell " + std::to_string(id)}, "g");
  s.turn = 0;
  s.key = s.observation.digest();
  return s;
}

}  // namespace

TEST_CASE("score basics") {
  const auto& traj = random_keydoor();
  const StateRef s = traj[0].steps[0].state.ref();
  auto prm = PrmParams::make(PrmFamily::linear_sigmoid, FeatureMapId::hashed_facts, 64);
  CHECK(prm_score(prm, s, 0) == 0.5);
  CHECK(prm_score(prm, s, 3) == 0.5);

  auto tab = PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_observation);
  bool miss = false;
  CHECK(prm_score(tab, s, 1, &miss) == 0.5);
  CHECK(miss);
  tab.model.set_slot(tab.model.row_key(s), 1, 20.0);
  miss = false;
  CHECK(prm_score(tab, s, 1, &miss) >= 0.9999);
  CHECK(!miss);
  CHECK(prm_logit(tab, s, 1) == 20.0);

  const auto round = PrmParams::from_json(tab.to_json());
  CHECK(round.to_json() == tab.to_json());
  CHECK(prm_score(round, s, 1) == prm_score(tab, s, 1));
}

TEST_CASE("loss values at known points") {
  const auto& traj = random_keydoor();
  const StateRecord& s = traj[0].steps[0].state;
  auto prm = PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_history);
  prm.model.ensure(s.ref(), 0);
  prm.model.ensure(s.ref(), 1);

  SUBCASE("BCE") {
    std::vector<QTargetRecord> b = {{s, 0, 0.5, 1}};
    CHECK(bce_loss_and_grad(prm, b).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    prm.model.set_slot(s.key, 0, std::log((1 - 1e-12) / 1e-12));
    b[0].q_hat = 1.0;
    CHECK(bce_loss_and_grad(prm, b).loss <= 1e-11);
  }
  SUBCASE("Bradley-Terry") {
    std::vector<PreferenceRecord> b = {{s, 0, 1, 0.0}};
    CHECK(bt_loss_and_grad(prm, b).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    prm.model.set_slot(s.key, 0, 20.0);
    CHECK(bt_loss_and_grad(prm, b).loss <= 3e-9);
    b[0].loser = 0;
    CHECK_THROWS_AS(bt_loss_and_grad(prm, b), ContractViolation);
  }
  SUBCASE("discriminator") {
    auto trans = transitions_of(std::vector<Trajectory>{traj[0]}, 1);
    Rng rng(1);
    relabel(trans, uniform_relabel(), rng);
    auto p = PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_history);
    const std::vector<TransitionRecord> pos = {trans[0]};
    const std::vector<TransitionRecord> neg = {trans[1]};
    CHECK(irl_loss_and_grad(p, pos, neg, 1.0).loss == doctest::Approx(2 * std::log(2.0)).epsilon(1e-15));

    // d = +20 on the positive, -20 on the negative.
    auto a = trans.back();
    a.terminal = true;
    a.next_action = kNullAction;
    auto b = a;
    b.action = a.action == 0 ? 1 : 0;
    p.model.set_slot(a.state.key, a.action, 20.0);
    p.model.set_slot(b.state.key, b.action, -20.0);
    const std::vector<TransitionRecord> pa = {a};
    const std::vector<TransitionRecord> nb = {b};
    CHECK(irl_loss_and_grad(p, pa, nb, 1.0).loss <= 5e-9);
    CHECK(irl_accuracy(p, pa, nb, 1.0) == 1.0);

    auto raw = transitions_of(std::vector<Trajectory>{traj[0]}, 1);
    CHECK_THROWS_AS(irl_loss_and_grad(p, raw, raw, 1.0), ContractViolation);
  }
}

TEST_CASE("analytic gradients match central differences") {
  const auto& traj = random_keydoor();
  const auto g = build_g_dict(traj, 0.95);
  const auto targets = compute_q_targets(g);
  std::vector<PreferenceRecord> pairs;
  for (const auto& t : traj)
    for (const auto& st : t.steps)
      if (st.legal.size() >= 2) pairs.push_back({st.state, st.legal[0], st.legal.back(), 0.0});
  auto trans = transitions_of(traj, 1);
  Rng relabel_rng(5);
  relabel(trans, uniform_relabel(), relabel_rng);

  Rng rng(17);
  double worst_bce = 0.0;
  double worst_bt = 0.0;
  double worst_irl = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    const auto map = draw % 2 ? FeatureMapId::hashed_fact_pairs : FeatureMapId::tabular_observation;
    const auto family = draw % 2 ? PrmFamily::linear_sigmoid : PrmFamily::tabular;
    auto base = PrmParams::make(family, map, 48);

    auto batch = sample(targets, 8, rng);
    for (auto& r : batch) r.q_hat = rng.uniform();
    auto prm = base;
    for (const auto& r : batch) prm.model.ensure(r.state.ref(), r.action);
    randomize(prm, rng, draw % 2 ? 0.3 : 1.5);
    worst_bce = std::max(worst_bce, relative_error(bce_loss_and_grad(prm, batch).grad,
                                                   numeric_gradient(prm, [&](const PrmParams& p) {
                                                     return bce_loss_and_grad(p, batch).loss;
                                                   })));

    const auto pb = sample(pairs, 8, rng);
    prm = base;
    for (const auto& r : pb) {
      prm.model.ensure(r.state.ref(), r.winner);
      prm.model.ensure(r.state.ref(), r.loser);
    }
    randomize(prm, rng, draw % 2 ? 0.3 : 1.5);
    worst_bt = std::max(worst_bt, relative_error(bt_loss_and_grad(prm, pb).grad,
                                                 numeric_gradient(prm, [&](const PrmParams& p) {
                                                   return bt_loss_and_grad(p, pb).loss;
                                                 })));

    const auto pos = sample(trans, 6, rng);
    const auto neg = sample(trans, 6, rng);
    const double gamma = draw % 3 ? 0.95 : 1.0;
    prm = base;
    for (const auto* set : {&pos, &neg})
      for (const auto& r : *set) {
        prm.model.ensure(r.state.ref(), r.action);
        if (!r.terminal) prm.model.ensure(r.next.ref(), *r.next_action);
      }
    randomize(prm, rng, draw % 2 ? 0.3 : 1.5);
    worst_irl = std::max(worst_irl, relative_error(irl_loss_and_grad(prm, pos, neg, gamma).grad,
                                                   numeric_gradient(prm, [&](const PrmParams& p) {
                                                     return irl_loss_and_grad(p, pos, neg, gamma).loss;
                                                   })));
  }
  CHECK(worst_bce <= 1e-5);
  CHECK(worst_bt <= 1e-5);
  CHECK(worst_irl <= 1e-5);
}

TEST_CASE("tabular BCE training converges to the soft labels") {
  Rng rng(23);
  std::vector<QTargetRecord> data;
  for (int i = 0; i < 40; ++i)
    for (ActionId a = 0; a < 3; ++a) data.push_back({synthetic_state(i), a, 0.05 + 0.9 * rng.uniform(), 1});
  const auto res = train_prm_bce(PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_observation), data, {});
  double worst = 0.0;
  for (const auto& r : data) worst = std::max(worst, std::abs(prm_score(res.params, r.state.ref(), r.action) - r.q_hat));
  CHECK(worst <= 1e-6);
  for (std::size_t i = 1; i < res.loss_history.size(); ++i)
    CHECK(res.loss_history[i] <= res.loss_history[i - 1] + 1e-9);
  CHECK(res.params.version == 1);
}

TEST_CASE("tabular BCE with shared keys converges to the mean label") {
  // Two records on one key: the minimiser is the average target.
  std::vector<QTargetRecord> data = {{synthetic_state(0), 0, 0.2, 1}, {synthetic_state(0), 0, 0.6, 1},
                                     {synthetic_state(1), 0, 0.9, 1}};
  const auto res = train_prm_bce(PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_observation), data, {});
  CHECK(prm_score(res.params, data[0].state.ref(), 0) == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(prm_score(res.params, data[2].state.ref(), 0) == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("L2 shrinks the tabular optimum to the regularised stationary point") {
  const double lambda = 0.05;
  std::vector<QTargetRecord> data = {{synthetic_state(0), 0, 0.9, 1}};
  PrmOptimizer opt;
  opt.l2 = lambda;
  opt.epochs = 400;
  const auto res = train_prm_bce(PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_observation), data, opt);
  // sigmoid(z) - q + lambda z = 0, solved by bisection.
  double lo = -20.0;
  double hi = 20.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (sigmoid(mid) - 0.9 + lambda * mid > 0 ? hi : lo) = mid;
  }
  CHECK(prm_logit(res.params, data[0].state.ref(), 0) == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-6));
  for (std::size_t i = 1; i < res.loss_history.size(); ++i)
    CHECK(res.loss_history[i] <= res.loss_history[i - 1] + 1e-9);
}

TEST_CASE("divergent training aborts") {
  std::vector<QTargetRecord> data = {{synthetic_state(0), 0, 0.9, 1}, {synthetic_state(1), 0, std::nan(""), 1}};
  PrmOptimizer opt;
  opt.epochs = 5;
  CHECK_THROWS_AS(train_prm_bce(PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_observation), data, opt),
                  RuntimeAbort);
  CHECK_THROWS_AS(train_prm_bce(PrmParams::make(PrmFamily::linear_sigmoid, FeatureMapId::hashed_facts, 16), data, opt),
                  RuntimeAbort);
  CHECK_THROWS_AS(train_prm_bce(PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_observation), {}, opt),
                  ConfigError);
}

TEST_CASE("Bradley-Terry training recovers a full ordering") {
  Rng rng(29);
  std::vector<PreferenceRecord> pairs;
  std::map<int, std::vector<double>> truth;
  for (int i = 0; i < 10; ++i) {
    auto& v = truth[i];
    for (int a = 0; a < 6; ++a) v.push_back(rng.uniform());
    for (ActionId a = 0; a < 6; ++a)
      for (ActionId b = a + 1; b < 6; ++b) {
        const bool a_wins = v[static_cast<std::size_t>(a)] > v[static_cast<std::size_t>(b)];
        pairs.push_back({synthetic_state(i), a_wins ? a : b, a_wins ? b : a, 0.0});
      }
  }
  const auto res = train_prm_bt(PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_observation), pairs, {});
  for (const auto& [i, v] : truth) {
    std::vector<int> by_truth(6);
    std::iota(by_truth.begin(), by_truth.end(), 0);
    auto by_model = by_truth;
    const auto s = synthetic_state(i);
    std::sort(by_truth.begin(), by_truth.end(), [&](int a, int b) { return v[static_cast<std::size_t>(a)] > v[static_cast<std::size_t>(b)]; });
    std::sort(by_model.begin(), by_model.end(),
              [&](int a, int b) { return prm_logit(res.params, s.ref(), a) > prm_logit(res.params, s.ref(), b); });
    CHECK(by_model == by_truth);
  }
  for (std::size_t i = 1; i < res.loss_history.size(); ++i)
    CHECK(res.loss_history[i] <= res.loss_history[i - 1] + 1e-9);
}

TEST_CASE("discriminator separates expert from random transitions on held-out data") {
  const std::vector<TaskSpec> tasks = {keydoor(4, 2)};
  const auto demos = rollouts(ExpertActor(), tasks, 40, 0);
  const auto random = rollouts(UniformActor(), tasks, 200, 4);
  const std::vector<Trajectory> demo_train(demos.begin(), demos.begin() + 20), demo_test(demos.begin() + 20, demos.end());
  const std::vector<Trajectory> rand_train(random.begin(), random.begin() + 100), rand_test(random.begin() + 100, random.end());
  Rng rng(6);
  const auto ds = build_irl_datasets(demo_train, rand_train, {}, 1, uniform_relabel(), rng);
  const auto held = build_irl_datasets(demo_test, rand_test, {}, 1, uniform_relabel(), rng);

  // A random step that repeats an expert (observation, action) pair cannot be
  // told apart by any Markov discriminator; score those separately.
  std::set<std::pair<Digest128, ActionId>> expert_pairs;
  for (const auto* set : {&ds.positives, &held.positives})
    for (const auto& r : *set) expert_pairs.insert({r.state.observation.digest(), r.action});
  std::vector<TransitionRecord> separable;
  for (const auto& r : held.negatives)
    if (!expert_pairs.count({r.state.observation.digest(), r.action})) separable.push_back(r);
  CHECK(separable.size() < held.negatives.size());

  for (auto map : {FeatureMapId::tabular_observation, FeatureMapId::hashed_facts}) {
    const auto family = is_tabular(map) ? PrmFamily::tabular : PrmFamily::linear_sigmoid;
    const auto res = train_prm_irl(PrmParams::make(family, map), ds, 0.95, {});
    const double raw = irl_accuracy(res.params, held.positives, held.negatives, 0.95);
    const double balanced = 0.5 * (irl_accuracy(res.params, held.positives, {}, 0.95) +
                                   irl_accuracy(res.params, {}, separable, 0.95));
    MESSAGE(to_string(map), " held-out accuracy ", raw, ", balanced on separable negatives ", balanced);
    CHECK(irl_accuracy(res.params, held.positives, {}, 0.95) >= 0.85);
    CHECK(raw >= 0.65);
    CHECK(balanced >= 0.8);
  }
}

TEST_CASE("discriminator differences telescope positive along an expert path") {
  const std::vector<TaskSpec> tasks = {keydoor(5, 8)};
  const auto demos = rollouts(ExpertActor(), tasks, 1, 0);
  const auto random = rollouts(UniformActor(), tasks, 100, 1);
  // Relabel with the expert's own next action, so a' follows the path.
  std::map<Digest128, ActionId> expert_next;
  for (const auto& t : demos)
    for (const auto& st : t.steps) expert_next[st.state.key] = st.action;
  const RelabelPolicy follow = [&](const StateRecord& s, std::span<const ActionId> legal, Rng& rng) {
    const auto it = expert_next.find(s.key);
    return it != expert_next.end() ? it->second : legal[rng.index(legal.size())];
  };
  Rng rng(2);
  const auto ds = build_irl_datasets(demos, random, {}, 1, follow, rng);
  PrmOptimizer opt;
  opt.epochs = 2000;
  const auto res = train_prm_irl(PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_history), ds, 1.0, opt);
  REQUIRE(ds.positives.size() >= 3);
  for (const auto& r : ds.positives) {
    const double z = prm_logit(res.params, r.state.ref(), r.action);
    const double zn = r.terminal ? 0.0 : prm_logit(res.params, r.next.ref(), *r.next_action);
    CHECK(z >= zn);
  }
}

TEST_CASE("BT and BCE agree on the best action") {
  const auto spec = keydoor(3, 5, 12);
  const EnvModel model(spec);
  const auto qstar = optimal_q(model, 1.0, spec.horizon);
  const MarkovActor actor(epsilon_greedy_policy(qstar, 0.5));
  const auto traj = rollouts(actor, {spec}, 5, 7, 200);
  const auto g = build_g_dict(traj, 1.0);
  const auto targets = compute_q_targets(g);
  const auto pairs = build_preference_pairs(g, targets, 0.0);
  PrmOptimizer opt;
  opt.epochs = 400;
  const auto bce = train_prm_bce(PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_history), targets, opt).params;
  const auto bt = train_prm_bt(PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_history), pairs, opt).params;

  std::map<Digest128, std::vector<const QTargetRecord*>> per_state;
  for (const auto& r : targets) per_state[r.state.key].push_back(&r);
  std::size_t states = 0;
  std::size_t agree = 0;
  for (const auto& [key, recs] : per_state) {
    if (recs.size() < 2) continue;
    ++states;
    auto best = [&](const PrmParams& p) {
      const QTargetRecord* arg = recs[0];
      for (const auto* r : recs)
        if (prm_logit(p, r->state.ref(), r->action) > prm_logit(p, arg->state.ref(), arg->action)) arg = r;
      return arg->action;
    };
    agree += best(bce) == best(bt);
  }
  MESSAGE(agree, " of ", states, " multi-action states agree");
  CHECK(states >= 50);
  CHECK(static_cast<double>(agree) >= 0.9 * static_cast<double>(states));
}

TEST_CASE("shaped targets") {
  TaskSpec spec;
  spec.family = EnvFamily::chain;
  spec.size = 4;
  spec.horizon = 6;
  Rng stream = task_stream(spec, 0);
  auto [env, hist] = reset(spec, stream);
  Rng rng(1);
  class Right final : public Actor {
   public:
    ActionId act(const ActorContext&) const override { return ChainEnv::kRight; }
  };
  const std::vector<Trajectory> traj = {run_episode(Right(), std::move(env), std::move(hist), rng)};
  REQUIRE(traj[0].steps.size() == 3);
  const auto& s0 = traj[0].steps[0].state;
  const auto& s1 = traj[0].steps[1].state;

  ShapedTargetConfig cfg;
  cfg.gamma = 1.0;
  cfg.reference.gamma = 1.0;
  cfg.reference.values[{s0.observation.digest(), 0}] = 0.3;
  cfg.reference.values[{s1.observation.digest(), 1}] = 0.5;
  const std::vector<QTargetRecord> q = {{s0, ChainEnv::kRight, 0.8, 1}};

  cfg.alpha = 0.5;
  CHECK(shaped_targets(q, traj, cfg)[0].q_hat == doctest::Approx(0.5).epsilon(1e-15));
  cfg.alpha = 0.0;
  CHECK(shaped_targets(q, traj, cfg)[0].q_hat == 0.8);
  cfg.alpha = 1.0;
  CHECK(shaped_targets(q, traj, cfg)[0].q_hat == doctest::Approx(0.2).epsilon(1e-15));

  SUBCASE("negative advantages clip at zero") {
    cfg.reference.values[{s1.observation.digest(), 1}] = 0.0;
    CHECK(shaped_targets(q, traj, cfg)[0].q_hat == 0.0);
  }
  SUBCASE("terminal successors have value zero") {
    const auto& last = traj[0].steps.back();
    cfg.reference.values[{last.state.observation.digest(), last.state.turn}] = 0.25;
    const std::vector<QTargetRecord> t = {{last.state, last.action, 1.0, 1}};
    CHECK(shaped_targets(t, traj, cfg)[0].q_hat == doctest::Approx(0.75).epsilon(1e-15));
  }
  SUBCASE("missing reference values") {
    cfg.reference.values.clear();
    CHECK_THROWS_AS(shaped_targets(q, traj, cfg), CoverageError);
    cfg.alpha = 0.0;
    CHECK_NOTHROW(shaped_targets(q, traj, cfg));
  }
  SUBCASE("alpha outside [0, 1]") {
    cfg.alpha = 1.5;
    CHECK_THROWS_AS(shaped_targets(q, traj, cfg), ConfigError);
  }
}

TEST_CASE("ensemble disagreement") {
  const auto s = synthetic_state(0);
  auto member = [&](double p) {
    auto m = PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_observation);
    m.model.set_slot(m.model.row_key(s.ref()), 0, std::log(p / (1 - p)));
    return m;
  };
  const std::vector<PrmParams> two = {member(0.2), member(0.8)};
  CHECK(ensemble_disagreement(two, s.ref(), 0) == doctest::Approx(0.4243).epsilon(1e-4));
  const std::vector<PrmParams> same = {member(0.3), member(0.3), member(0.3)};
  CHECK(ensemble_disagreement(same, s.ref(), 0) == 0.0);
  CHECK_THROWS_AS(ensemble_disagreement(std::span<const PrmParams>(two).first(1), s.ref(), 0), ConfigError);
}

TEST_CASE("ensemble disagrees more away from its training data") {
  const auto train = rollouts(UniformActor(), {keydoor(4, 5)}, 300, 8);
  const auto far = rollouts(UniformActor(), {keydoor(7, 6)}, 50, 9);
  const auto targets = compute_q_targets(build_g_dict(train, 0.95));
  PrmOptimizer opt;
  opt.epochs = 20;
  const auto ens = train_ensemble(PrmParams::make(PrmFamily::linear_sigmoid, FeatureMapId::hashed_facts), targets, 4, opt);
  REQUIRE(ens.size() == 4);
  auto mean_disagreement = [&](const std::vector<Trajectory>& t) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& tr : t)
      for (const auto& st : tr.steps) {
        sum += ensemble_disagreement(ens, st.state.ref(), st.action);
        ++n;
      }
    return sum / static_cast<double>(n);
  };
  const double on = mean_disagreement(train);
  const double off = mean_disagreement(far);
  MESSAGE("on ", on, " off ", off);
  CHECK(off > on);
  CHECK_THROWS_AS(train_ensemble(PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_observation), targets, 1, opt),
                  ConfigError);
}

TEST_CASE("Q-table PRM reproduces the table") {
  const auto spec = keydoor(3, 1, 6);
  const EnvModel model(spec);
  const auto q = optimal_q(model, 1.0, spec.horizon);
  const auto prm = prm_from_q_table(q, model);
  for (const auto& [k, v] : q.entries()) {
    const StateRef s{{}, &model.node(k.state).observation, k.turn};
    CHECK(prm_score(prm, s, k.action) == doctest::Approx(std::clamp(v, kProbClamp, 1 - kProbClamp)).epsilon(1e-9));
  }
}

TEST_CASE("fact-pair features") {
  const Observation obs({"a", "b", "c", "d"}, "g");
  const StateRef s{{}, &obs, 0};
  std::vector<SparseFeature> plain;
  std::vector<SparseFeature> pairs;
  hashed_features(s, 2, 1u << 20, plain);
  hashed_features(s, 2, 1u << 20, pairs, true);
  CHECK(plain.size() == 2 + 4);
  CHECK(pairs.size() == plain.size() + 6);
  for (std::size_t i = 0; i < plain.size(); ++i) CHECK(pairs[i].index == plain[i].index);

  auto prm = PrmParams::make(PrmFamily::linear_sigmoid, FeatureMapId::hashed_fact_pairs, 256);
  CHECK(!is_tabular(FeatureMapId::hashed_fact_pairs));
  CHECK(feature_map_from_string(to_string(FeatureMapId::hashed_fact_pairs)) == FeatureMapId::hashed_fact_pairs);
  std::vector<std::uint32_t> idx;
  prm.model.support(s, 2, idx);
  for (auto k : idx) prm.model.weights()[k] = 0.1;
  // Support indices may collide in 256 buckets; the logit sums feature values.
  std::vector<SparseFeature> f;
  hashed_features(s, 2, 256, f, true);
  double z = 0.0;
  for (const auto& x : f) z += prm.model.weights()[x.index] * x.value;
  CHECK(prm_logit(prm, s, 2) == doctest::Approx(z));
}
