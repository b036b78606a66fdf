#include "prmlab/prm/prm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "prmlab/core/error.hpp"

namespace prmlab {

std::string to_string(PrmFamily f) { return f == PrmFamily::tabular ? "tabular" : "linear-sigmoid"; }

PrmFamily prm_family_from_string(std::string_view s) {
  if (s == "tabular") return PrmFamily::tabular;
  if (s == "linear-sigmoid") return PrmFamily::linear_sigmoid;
  throw ConfigError("unknown PRM family '" + std::string(s) + "'");
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::bce: return "bce";
    case LossKind::bt: return "bt";
    case LossKind::irl: return "irl";
  }
  return "?";
}

LossKind loss_kind_from_string(std::string_view s) {
  for (auto k : {LossKind::bce, LossKind::bt, LossKind::irl})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown loss kind '" + std::string(s) + "'");
}

PrmParams PrmParams::make(PrmFamily family, FeatureMapId map, std::uint32_t hashed_dim) {
  if ((family == PrmFamily::tabular) != is_tabular(map))
    throw ConfigError("PRM family " + to_string(family) + " does not match feature map " + to_string(map));
  return {family, ScoreModel(map, hashed_dim), 0};
}

nlohmann::json PrmParams::to_json() const {
  return {{"schema", 1}, {"kind", "prm"}, {"family", to_string(family)}, {"version", version}, {"model", model.to_json()}};
}

PrmParams PrmParams::from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "prm") throw ConfigError("checkpoint is not a PRM");
  PrmParams p;
  p.family = prm_family_from_string(j.at("family").get<std::string>());
  p.version = j.at("version").get<int>();
  p.model = ScoreModel::from_json(j.at("model"));
  if ((p.family == PrmFamily::tabular) != p.model.tabular()) throw ConfigError("PRM family and feature map disagree");
  return p;
}

double prm_logit(const PrmParams& prm, const StateRef& state, ActionId action, bool* coverage_miss) {
  const auto z = prm.model.logit(state, action);
  if (coverage_miss) *coverage_miss = !z.has_value();
  return z.value_or(0.0);
}

double prm_score(const PrmParams& prm, const StateRef& state, ActionId action, bool* coverage_miss) {
  return sigmoid(prm_logit(prm, state, action, coverage_miss));
}

LossGrad bce_loss_and_grad(const PrmParams& prm, std::span<const QTargetRecord> batch) {
  LossGrad out{0.0, std::vector<double>(prm.model.size(), 0.0)};
  if (batch.empty()) return out;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& r : batch) {
    const StateRef s = r.state.ref();
    const double z = prm_logit(prm, s, r.action);
    const double raw = sigmoid(z);
    const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
    out.loss -= w * (r.q_hat * std::log(p) + (1.0 - r.q_hat) * std::log(1.0 - p));
    if (p == raw) prm.model.accumulate(s, r.action, w * (p - r.q_hat), out.grad);
  }
  return out;
}

LossGrad bt_loss_and_grad(const PrmParams& prm, std::span<const PreferenceRecord> batch) {
  LossGrad out{0.0, std::vector<double>(prm.model.size(), 0.0)};
  if (batch.empty()) return out;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& r : batch) {
    if (r.winner == r.loser) throw ContractViolation("preference record with winner == loser");
    const StateRef s = r.state.ref();
    const double d = prm_logit(prm, s, r.winner) - prm_logit(prm, s, r.loser);
    out.loss += w * softplus(-d);
    const double c = -w * sigmoid(-d);
    prm.model.accumulate(s, r.winner, c, out.grad);
    prm.model.accumulate(s, r.loser, -c, out.grad);
  }
  return out;
}

namespace {

bool absorbing(const TransitionRecord& r) {
  if (!r.next_action) throw ContractViolation("transition record has not been relabeled");
  return r.terminal || *r.next_action == kNullAction;
}

void irl_term(const PrmParams& prm, const TransitionRecord& r, double gamma, double sign, double w, LossGrad& out) {
  const double d = irl_difference(prm, r, gamma);
  // Positives: softplus(-d); negatives: softplus(d).
  out.loss += w * softplus(-sign * d);
  const double dd = -sign * w * sigmoid(sign * -d);
  prm.model.accumulate(r.state.ref(), r.action, dd, out.grad);
  if (!absorbing(r)) prm.model.accumulate(r.next.ref(), *r.next_action, -gamma * dd, out.grad);
}

}  // namespace

double irl_difference(const PrmParams& prm, const TransitionRecord& r, double gamma) {
  const double z = prm_logit(prm, r.state.ref(), r.action);
  const double zn = absorbing(r) ? 0.0 : prm_logit(prm, r.next.ref(), *r.next_action);
  return z - gamma * zn;
}

LossGrad irl_loss_and_grad(const PrmParams& prm, std::span<const TransitionRecord> positives,
                           std::span<const TransitionRecord> negatives, double gamma) {
  LossGrad out{0.0, std::vector<double>(prm.model.size(), 0.0)};
  if (!positives.empty()) {
    const double w = 1.0 / static_cast<double>(positives.size());
    for (const auto& r : positives) irl_term(prm, r, gamma, 1.0, w, out);
  }
  if (!negatives.empty()) {
    const double w = 1.0 / static_cast<double>(negatives.size());
    for (const auto& r : negatives) irl_term(prm, r, gamma, -1.0, w, out);
  }
  return out;
}

double irl_accuracy(const PrmParams& prm, std::span<const TransitionRecord> positives,
                    std::span<const TransitionRecord> negatives, double gamma) {
  std::size_t right = 0;
  for (const auto& r : positives) right += irl_difference(prm, r, gamma) > 0.0;
  for (const auto& r : negatives) right += irl_difference(prm, r, gamma) < 0.0;
  const std::size_t n = positives.size() + negatives.size();
  return n ? static_cast<double>(right) / static_cast<double>(n) : 0.0;
}

namespace {

struct Support {
  std::vector<const StateRecord*> states;
  std::vector<ActionId> actions;
  std::vector<double> weights;

  void add(const StateRecord& s, ActionId a, double w) {
    states.push_back(&s);
    actions.push_back(a);
    weights.push_back(w);
  }
};

/// Generic optimisation loop shared by the three losses.
template <class Eval, class Batches>
PrmTrainResult optimise(PrmParams prm, const Support& support, const PrmOptimizer& opt, Eval&& eval,
                        Batches&& batches) {
  for (std::size_t i = 0; i < support.states.size(); ++i) prm.model.ensure(support.states[i]->ref(), support.actions[i]);

  std::vector<double> precond;
  if (prm.model.tabular()) {
    // Per-coordinate step: the inverse of the loss weight carried by the coordinate plus the L2 curvature.
    std::vector<double> mass(prm.model.size(), 0.0);
    std::vector<std::uint32_t> idx;
    for (std::size_t i = 0; i < support.states.size(); ++i) {
      prm.model.support(support.states[i]->ref(), support.actions[i], idx);
      for (auto k : idx) mass[k] += support.weights[i];
    }
    precond.resize(mass.size());
    for (std::size_t k = 0; k < mass.size(); ++k) {
      const double curvature = mass[k] + std::max(opt.l2, 0.0);
      precond[k] = curvature > 0 ? 1.0 / curvature : 1.0;
    }
  }

  auto regularised = [&](LossGrad lg) {
    if (opt.l2 > 0) {
      const auto& w = prm.model.weights();
      for (std::size_t k = 0; k < w.size(); ++k) {
        lg.loss += 0.5 * opt.l2 * w[k] * w[k];
        lg.grad[k] += opt.l2 * w[k];
      }
    }
    return lg;
  };
  auto check = [](double loss) {
    if (!std::isfinite(loss)) throw RuntimeAbort("PRM training diverged (loss is not finite)");
    return loss;
  };

  PrmTrainResult res;
  res.loss_history.push_back(check(regularised(eval(prm, nullptr)).loss));
  Rng rng = Rng::stream(opt.seed, {0x7a11ULL});
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    if (prm.model.tabular()) {
      const LossGrad lg = regularised(eval(prm, nullptr));
      auto& w = prm.model.weights();
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= opt.learning_rate * precond[k] * lg.grad[k];
      res.loss_history.push_back(check(regularised(eval(prm, nullptr)).loss));
    } else {
      for (const auto& batch : batches(rng)) {
        const LossGrad lg = regularised(eval(prm, &batch));
        auto& w = prm.model.weights();
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= opt.linear_learning_rate * lg.grad[k];
      }
      res.loss_history.push_back(check(regularised(eval(prm, nullptr)).loss));
    }
  }
  prm.version += 1;
  res.params = std::move(prm);
  return res;
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  const std::size_t bs = std::max<std::size_t>(1, batch_size);
  for (std::size_t i = 0; i < n; i += bs)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + bs)));
  return out;
}

template <class T>
std::vector<T> pick(std::span<const T> data, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(data[i]);
  return out;
}

}  // namespace

PrmTrainResult train_prm_bce(PrmParams init, std::span<const QTargetRecord> data, const PrmOptimizer& opt) {
  if (data.empty()) throw ConfigError("BCE training set is empty");
  Support sup;
  for (const auto& r : data) sup.add(r.state, r.action, 1.0 / static_cast<double>(data.size()));
  return optimise(
      std::move(init), sup, opt,
      [&](const PrmParams& p, const std::vector<std::size_t>* idx) {
        if (!idx) return bce_loss_and_grad(p, data);
        const auto b = pick(data, *idx);
        return bce_loss_and_grad(p, b);
      },
      [&](Rng& rng) { return shuffled_batches(data.size(), opt.batch_size, rng); });
}

PrmTrainResult train_prm_bt(PrmParams init, std::span<const PreferenceRecord> data, const PrmOptimizer& opt) {
  if (data.empty()) throw ConfigError("preference training set is empty");
  Support sup;
  const double w = 1.0 / static_cast<double>(data.size());
  for (const auto& r : data) {
    sup.add(r.state, r.winner, w);
    sup.add(r.state, r.loser, w);
  }
  return optimise(
      std::move(init), sup, opt,
      [&](const PrmParams& p, const std::vector<std::size_t>* idx) {
        if (!idx) return bt_loss_and_grad(p, data);
        const auto b = pick(data, *idx);
        return bt_loss_and_grad(p, b);
      },
      [&](Rng& rng) { return shuffled_batches(data.size(), opt.batch_size, rng); });
}

PrmTrainResult train_prm_irl(PrmParams init, const TransitionDatasets& data, double gamma, const PrmOptimizer& opt) {
  if (data.positives.empty() || data.negatives.empty()) throw ConfigError("IRL training needs positives and negatives");
  Support sup;
  auto add = [&](const std::vector<TransitionRecord>& set) {
    const double w = 1.0 / static_cast<double>(set.size());
    for (const auto& r : set) {
      sup.add(r.state, r.action, w);
      if (!absorbing(r)) sup.add(r.next, *r.next_action, gamma * w);
    }
  };
  add(data.positives);
  add(data.negatives);
  const std::size_t np = data.positives.size();
  return optimise(
      std::move(init), sup, opt,
      [&](const PrmParams& p, const std::vector<std::size_t>* idx) {
        if (!idx) return irl_loss_and_grad(p, data.positives, data.negatives, gamma);
        std::vector<TransitionRecord> pos, neg;
        for (auto i : *idx) (i < np ? pos : neg).push_back(i < np ? data.positives[i] : data.negatives[i - np]);
        return irl_loss_and_grad(p, pos, neg, gamma);
      },
      [&](Rng& rng) { return shuffled_batches(np + data.negatives.size(), opt.batch_size, rng); });
}

std::vector<QTargetRecord> shaped_targets(std::span<const QTargetRecord> targets,
                                          std::span<const Trajectory> trajectories, const ShapedTargetConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  struct Next {
    double reward;
    const StateRecord* next;
    bool terminal;
  };
  std::map<std::pair<Digest128, ActionId>, Next> transitions;
  for (const auto& traj : trajectories)
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
      const bool terminal = i + 1 == traj.steps.size();
      transitions.try_emplace({traj.steps[i].state.key, traj.steps[i].action},
                              Next{traj.steps[i].reward, terminal ? &traj.final_state : &traj.steps[i + 1].state,
                                   terminal});
    }

  std::vector<QTargetRecord> out(targets.begin(), targets.end());
  if (cfg.alpha == 0.0) return out;
  std::set<std::string> missing;
  for (auto& r : out) {
    const auto it = transitions.find({r.state.key, r.action});
    if (it == transitions.end()) {
      missing.insert("transition " + r.state.key.hex() + "/" + std::to_string(r.action));
      continue;
    }
    const auto v = cfg.reference.find(r.state.observation, r.state.turn);
    if (!v) missing.insert("V(" + r.state.key.hex() + ", t=" +
                           std::to_string(r.state.turn) + ")");
    std::optional<double> vn = 0.0;
    if (!it->second.terminal) {
      vn = cfg.reference.find(it->second.next->observation, it->second.next->turn);
      if (!vn)
        missing.insert("V(" + it->second.next->key.hex() + ", t=" + std::to_string(it->second.next->turn) + ")");
    }
    if (!v || !vn) continue;
    const double adv = it->second.reward + cfg.gamma * *vn - *v;
    r.q_hat = std::clamp((1.0 - cfg.alpha) * r.q_hat + cfg.alpha * adv, 0.0, 1.0);
  }
  if (!missing.empty()) {
    std::string msg = "reference values missing for " + std::to_string(missing.size()) + " entries:";
    int shown = 0;
    for (const auto& m : missing) {
      if (shown++ == 8) {
        msg += " ...";
        break;
      }
      msg += " " + m;
    }
    throw CoverageError(msg);
  }
  return out;
}

double ensemble_disagreement(std::span<const PrmParams> ensemble, const StateRef& state, ActionId action) {
  if (ensemble.size() < 2) throw ConfigError("ensemble disagreement needs at least two members");
  std::vector<double> s;
  for (const auto& m : ensemble) s.push_back(prm_score(m, state, action));
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  double ss = 0.0;
  for (double x : s) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(s.size() - 1));
}

std::vector<PrmParams> train_ensemble(const PrmParams& init, std::span<const QTargetRecord> data, std::size_t k,
                                      const PrmOptimizer& opt) {
  if (k < 2) throw ConfigError("ensemble size must be at least 2");
  if (data.size() < k) throw ConfigError("fewer records than ensemble members");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::stream(opt.seed, {0xe45eULL});
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<QTargetRecord>> parts(k);
  for (std::size_t i = 0; i < order.size(); ++i) parts[i % k].push_back(data[order[i]]);
  std::vector<PrmParams> out;
  for (std::size_t m = 0; m < k; ++m) {
    PrmOptimizer o = opt;
    o.seed = derive_seed(opt.seed, {m});
    out.push_back(train_prm_bce(init, parts[m], o).params);
  }
  return out;
}

PrmParams prm_from_q_table(const ExactQTable& q, const EnvModel& model) {
  PrmParams p = PrmParams::make(PrmFamily::tabular, FeatureMapId::tabular_observation_turn);
  for (const auto& [k, v] : q.entries()) {
    const StateRef s{{}, &model.node(k.state).observation, k.turn};
    const double c = std::clamp(v, kProbClamp, 1.0 - kProbClamp);
    p.model.set_slot(tabular_state_key(p.model.feature_map(), s), k.action, std::log(c / (1.0 - c)));
  }
  return p;
}

}  // namespace prmlab
