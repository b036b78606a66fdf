#include "prmlab/pipeline/config.hpp"

#include <fstream>
#include <set>

#include "prmlab/core/error.hpp"

namespace prmlab {

namespace {

/// Reads the keys present in `j`; absent keys keep their defaults and unknown
/// keys are rejected so typos surface as configuration errors.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string block) : j_(j), block_(std::move(block)) {
    if (!j_.is_object()) throw ConfigError("config block '" + block_ + "' must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key '" + k + "' in config block '" + block_ + "'");
  }

  template <class T>
  void operator()(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for '" + block_ + "." + key + "': " + e.what());
    }
  }

  template <class T, class Parse>
  void parsed(const char* key, T& field, Parse parse) {
    std::string s;
    (*this)(key, s);
    if (j_.contains(key)) field = parse(s);
  }

  const nlohmann::json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const nlohmann::json& j_;
  std::string block_;
  std::set<std::string> seen_;
};

TaskSpec keydoor_task(std::uint64_t seed) {
  TaskSpec t;
  t.family = EnvFamily::keydoor;
  t.size = 5;
  t.seed = seed;
  t.horizon = kDefaultHorizonKeydoor;
  return t;
}

TargetNormalization normalization_from_string(const std::string& s) {
  if (s == "clip") return TargetNormalization::clip;
  if (s == "minmax") return TargetNormalization::minmax;
  throw ConfigError("unknown target normalization '" + s + "'");
}

}  // namespace

RunConfig RunConfig::keydoor_default() {
  RunConfig c;
  c.env.tasks = {keydoor_task(1)};
  c.env.eval_tasks = {keydoor_task(2)};
  c.inverse.demo_tasks = {keydoor_task(3)};
  return c;
}

void RunConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (env.tasks.empty()) throw ConfigError("env.tasks is empty");
  if (env.eval_tasks.empty()) throw ConfigError("env.eval_tasks is empty");
  for (const auto& t : env.tasks) t.validate();
  for (const auto& t : env.eval_tasks) t.validate();
  for (const auto& t : inverse.demo_tasks) t.validate();
  if (env.eval_episodes_per_task < 1) throw ConfigError("env.eval_episodes_per_task must be at least 1");
  if (rollout.episodes_per_task * rollout.repeats < 1) throw ConfigError("rollout budget must be at least 1 episode");
  if ((prm.family == PrmFamily::tabular) != is_tabular(prm.feature_map))
    throw ConfigError("prm.family does not match prm.feature_map");
  if ((policy.family == PolicyFamily::tabular_softmax) != is_tabular(policy.feature_map))
    throw ConfigError("policy.family does not match policy.feature_map");
  if (prm.delta < 0) throw ConfigError("prm.delta must be nonnegative");
  if (prm.ensemble_k == 1) throw ConfigError("prm.ensemble_k must be 0 or at least 2");
  if (!(prm.shaping.alpha >= 0.0 && prm.shaping.alpha <= 1.0)) throw ConfigError("prm.shaping.alpha must lie in [0, 1]");
  if (prm.shaping.values != "exact" && prm.shaping.values != "fitted")
    throw ConfigError("prm.shaping.values must be 'exact' or 'fitted'");
  if (!(policy.beta > 0.0)) throw ConfigError("policy.beta must be positive");
  if (!(policy.temperature > 0.0)) throw ConfigError("policy.temperature must be positive");
  if (policy.steps < 0) throw ConfigError("policy.steps must be nonnegative");
  if (policy.update != "preference" && policy.update != "closed-form")
    throw ConfigError("policy.update must be 'preference' or 'closed-form'");
  if (policy.update == "closed-form" && policy.family != PolicyFamily::tabular_softmax)
    throw ConfigError("closed-form update needs a tabular policy");
  if (policy.state_source != "on-policy" && policy.state_source != "stage1")
    throw ConfigError("policy.state_source must be 'on-policy' or 'stage1'");
  if (!(policy.reset_mix >= 0.0 && policy.reset_mix <= 1.0)) throw ConfigError("policy.reset_mix must lie in [0, 1]");
  if (policy.snapshot_every < 0) throw ConfigError("policy.snapshot_every must be nonnegative");
  if (policy.init != "uniform" && policy.init != "bc") throw ConfigError("policy.init must be 'uniform' or 'bc'");
  if (policy.init == "bc" && policy.init_demos_per_task < 1)
    throw ConfigError("policy.init_demos_per_task must be at least 1");
  ActMode::parse(eval.mode);
  if (eval.bon_n.empty()) throw ConfigError("eval.bon_n is empty");
  for (auto n : eval.bon_n)
    if (n < 1) throw ConfigError("eval.bon_n entries must be at least 1");
  if (inverse.expert != "oracle-greedy" && inverse.expert != "scripted")
    throw ConfigError("inverse.expert must be 'oracle-greedy' or 'scripted'");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  const auto& p = c.prm;
  const auto& o = p.optimizer;
  const auto& q = c.policy;
  j = {{"schema", 1},
       {"iterations", c.iterations},
       {"gamma", c.gamma},
       {"seed", c.seed},
       {"workers", c.workers},
       {"out_dir", c.out_dir},
       {"resume", c.resume},
       {"record_wall_clock", c.record_wall_clock},
       {"env", {{"tasks", c.env.tasks}, {"eval_tasks", c.env.eval_tasks},
                {"eval_episodes_per_task", c.env.eval_episodes_per_task}}},
       {"rollout", {{"episodes_per_task", c.rollout.episodes_per_task}, {"repeats", c.rollout.repeats}}},
       {"prm",
        {{"family", to_string(p.family)},
         {"feature_map", to_string(p.feature_map)},
         {"hashed_dim", p.hashed_dim},
         {"loss", to_string(p.loss)},
         {"optimizer",
          {{"learning_rate", o.learning_rate},
           {"linear_learning_rate", o.linear_learning_rate},
           {"epochs", o.epochs},
           {"batch_size", o.batch_size},
           {"l2", o.l2},
           {"seed", o.seed}}},
         {"delta", p.delta},
         {"normalization", p.normalization == TargetNormalization::clip ? "clip" : "minmax"},
         {"ensemble_k", p.ensemble_k},
         {"shaping",
          {{"enabled", p.shaping.enabled},
           {"alpha", p.shaping.alpha},
           {"mu_epsilon", p.shaping.mu_epsilon},
           {"values", p.shaping.values},
           {"fit_episodes_per_task", p.shaping.fit_episodes_per_task}}}}},
       {"policy",
        {{"family", to_string(q.family)},
         {"feature_map", to_string(q.feature_map)},
         {"hashed_dim", q.hashed_dim},
         {"temperature", q.temperature},
         {"update", q.update},
         {"beta", q.beta},
         {"steps", q.steps},
         {"states_per_step", q.states_per_step},
         {"pairs_per_state", q.pairs_per_state},
         {"learning_rate", q.learning_rate},
         {"proposal", to_string(q.proposal)},
         {"proposal_temperature", q.proposal_temperature},
         {"proposal_epsilon", q.proposal_epsilon},
         {"proposal_bonus", q.proposal_bonus},
         {"reset_mix", q.reset_mix},
         {"reset_pool_episodes_per_task", q.reset_pool_episodes_per_task},
         {"state_source", q.state_source},
         {"refresh_every", q.refresh_every},
         {"source_episodes_per_task", q.source_episodes_per_task},
         {"snapshot_every", q.snapshot_every},
         {"init", q.init},
         {"init_demos_per_task", q.init_demos_per_task}}},
       {"eval", {{"mode", c.eval.mode}, {"bon_n", c.eval.bon_n}}},
       {"inverse",
        {{"expert", c.inverse.expert},
         {"demo_tasks", c.inverse.demo_tasks},
         {"demos_per_task", c.inverse.demos_per_task},
         {"holdout_demos_per_task", c.inverse.holdout_demos_per_task},
         {"bc_epochs", c.inverse.bc_epochs}}}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  try {
    Reader r(j, "root");
    int schema = 1;
    r("schema", schema);
    if (schema != 1) throw ConfigError("unsupported config schema " + std::to_string(schema));
    r("iterations", c.iterations);
    r("gamma", c.gamma);
    r("seed", c.seed);
    r("workers", c.workers);
    r("out_dir", c.out_dir);
    r("resume", c.resume);
    r("record_wall_clock", c.record_wall_clock);
    if (const auto* e = r.sub("env")) {
      Reader re(*e, "env");
      re("tasks", c.env.tasks);
      re("eval_tasks", c.env.eval_tasks);
      re("eval_episodes_per_task", c.env.eval_episodes_per_task);
    }
    if (const auto* e = r.sub("rollout")) {
      Reader re(*e, "rollout");
      re("episodes_per_task", c.rollout.episodes_per_task);
      re("repeats", c.rollout.repeats);
    }
    if (const auto* e = r.sub("prm")) {
      auto& p = c.prm;
      Reader re(*e, "prm");
      re.parsed("family", p.family, prm_family_from_string);
      re.parsed("feature_map", p.feature_map, feature_map_from_string);
      re("hashed_dim", p.hashed_dim);
      re.parsed("loss", p.loss, loss_kind_from_string);
      if (const auto* o = re.sub("optimizer")) {
        Reader ro(*o, "prm.optimizer");
        ro("learning_rate", p.optimizer.learning_rate);
        ro("linear_learning_rate", p.optimizer.linear_learning_rate);
        ro("epochs", p.optimizer.epochs);
        ro("batch_size", p.optimizer.batch_size);
        ro("l2", p.optimizer.l2);
        ro("seed", p.optimizer.seed);
      }
      re("delta", p.delta);
      re.parsed("normalization", p.normalization, normalization_from_string);
      re("ensemble_k", p.ensemble_k);
      if (const auto* s = re.sub("shaping")) {
        Reader rs(*s, "prm.shaping");
        rs("enabled", p.shaping.enabled);
        rs("alpha", p.shaping.alpha);
        rs("mu_epsilon", p.shaping.mu_epsilon);
        rs("values", p.shaping.values);
        rs("fit_episodes_per_task", p.shaping.fit_episodes_per_task);
      }
    }
    if (const auto* e = r.sub("policy")) {
      auto& q = c.policy;
      Reader re(*e, "policy");
      re.parsed("family", q.family, policy_family_from_string);
      re.parsed("feature_map", q.feature_map, feature_map_from_string);
      re("hashed_dim", q.hashed_dim);
      re("temperature", q.temperature);
      re("update", q.update);
      re("beta", q.beta);
      re("steps", q.steps);
      re("states_per_step", q.states_per_step);
      re("pairs_per_state", q.pairs_per_state);
      re("learning_rate", q.learning_rate);
      re.parsed("proposal", q.proposal, proposal_kind_from_string);
      re("proposal_temperature", q.proposal_temperature);
      re("proposal_epsilon", q.proposal_epsilon);
      re("proposal_bonus", q.proposal_bonus);
      re("reset_mix", q.reset_mix);
      re("reset_pool_episodes_per_task", q.reset_pool_episodes_per_task);
      re("state_source", q.state_source);
      re("refresh_every", q.refresh_every);
      re("source_episodes_per_task", q.source_episodes_per_task);
      re("snapshot_every", q.snapshot_every);
      re("init", q.init);
      re("init_demos_per_task", q.init_demos_per_task);
    }
    if (const auto* e = r.sub("eval")) {
      Reader re(*e, "eval");
      re("mode", c.eval.mode);
      re("bon_n", c.eval.bon_n);
    }
    if (const auto* e = r.sub("inverse")) {
      Reader re(*e, "inverse");
      re("expert", c.inverse.expert);
      re("demo_tasks", c.inverse.demo_tasks);
      re("demos_per_task", c.inverse.demos_per_task);
      re("holdout_demos_per_task", c.inverse.holdout_demos_per_task);
      re("bc_epochs", c.inverse.bc_epochs);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  RunConfig c = RunConfig::keydoor_default();
  from_json(j, c);
  c.validate();
  return c;
}

}  // namespace prmlab
