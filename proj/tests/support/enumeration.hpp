#pragma once

// Test-only oracle: expected discounted return by exhaustive enumeration of
// every trajectory (no state aggregation, no memoization). Independent of the
// dynamic-programming code path in prmlab::oracle.

#include <vector>

#include "prmlab/env/environment.hpp"
#include "prmlab/oracle/oracle.hpp"

namespace prmlab::testing {

/// Expected return-to-go of following `policy` from the current env state.
inline double enumerate_value(const Environment& env, const MarkovPolicy& policy, double gamma) {
  if (env.done()) return 0.0;
  const auto legal = env.legal_actions();
  const auto probs = policy(env.markov_state(), env.observe(), env.turn(), legal);
  double v = 0.0;
  for (std::size_t i = 0; i < legal.size(); ++i) {
    if (probs[i] == 0.0) continue;
    auto next = env.clone();
    const StepResult r = next->step(legal[i]);
    v += probs[i] * (r.reward + gamma * enumerate_value(*next, policy, gamma));
  }
  return v;
}

/// Expected return of taking `action` first, then following `policy`.
inline double enumerate_q(const Environment& env, ActionId action, const MarkovPolicy& policy, double gamma) {
  auto next = env.clone();
  const StepResult r = next->step(action);
  return r.reward + gamma * enumerate_value(*next, policy, gamma);
}

/// Number of trajectories visited by a full enumeration (for sizing checks).
inline long long count_trajectories(const Environment& env) {
  if (env.done()) return 1;
  long long n = 0;
  for (ActionId a : env.legal_actions()) {
    auto next = env.clone();
    next->step(a);
    n += count_trajectories(*next);
  }
  return n;
}

}  // namespace prmlab::testing
