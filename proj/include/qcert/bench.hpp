#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qcert/agents.hpp"
#include "qcert/constraint_space.hpp"
#include "qcert/environment.hpp"
#include "qcert/hamiltonian.hpp"
#include "qcert/patterns.hpp"
#include "qcert/relaxation.hpp"

namespace qcert {

/// Runs body(i) for i in [0, count) on up to `threads` workers.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------
// Full-knowledge references

/// Ledger from a complete list of (beta, p): ties within tolerance of the
/// maximum define the cost window.
inline RewardLedger ledger_from(const std::vector<CachedBound>& bounds, double d = 2.0, double tie_tol = kTieTolerance) {
  RewardLedger L;
  L.d = d;
  L.tie_tol = tie_tol;
  for (const auto& b : bounds)
    if (b.ok()) {
      L.beta_max = std::max(L.beta_max, b.beta);
      L.beta_min = std::min(L.beta_min, b.beta);
    }
  if (L.empty()) return L;
  L.p_best = std::numeric_limits<long>::max();
  L.p_worst = 0;
  for (const auto& b : bounds)
    if (b.ok() && b.beta >= L.beta_max - tie_tol) {
      L.p_best = std::min(L.p_best, b.p);
      L.p_worst = std::max(L.p_worst, b.p);
    }
  return L;
}

struct ExhaustiveResult {
  std::vector<ConstraintSet> states;
  std::vector<CachedBound> bounds;
  std::vector<double> rewards;
  RewardLedger ledger;
  std::vector<std::size_t> optimal;  // indices with reward 1
};

inline ExhaustiveResult exhaustive_search(const CandidatePool& pool, BoundCache& cache, double d = 2.0, std::size_t limit = 50'000) {
  ExhaustiveResult r;
  r.states = enumerate_reachable(pool, limit);
  for (const auto& s : r.states) r.bounds.push_back(cache.get_or_compute(s).first);
  r.ledger = ledger_from(r.bounds, d);
  for (std::size_t i = 0; i < r.states.size(); ++i) {
    r.rewards.push_back(reward(r.bounds[i].beta, r.bounds[i].p, r.ledger));
    if (r.rewards.back() >= 1.0 - 1e-12) r.optimal.push_back(i);
  }
  return r;
}

/// Connected groups of nonzero bonds of an XX ring, as subsets of size >= 2.
inline ConstraintSet coupled_groups(const std::vector<double>& J, int n) {
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  for (int i = 0; i < n; ++i)
    if (J[i] != 0.0) parent[find(i)] = find((i + 1) % n);
  std::map<int, Subset> groups;
  for (int i = 0; i < n; ++i) groups[find(i)].push_back(i);
  ConstraintSet c(n);
  for (auto& [root, g] : groups)
    if (g.size() >= 2) c.insert(g);
  return c;
}

inline std::vector<double> triplet_couplings(int n) {
  std::vector<double> J(n);
  for (int i = 0; i < n; ++i) J[i] = i % 3;
  return J;
}

/// Reference ledger built around a known optimum: beta_max from the optimum,
/// beta_min from the minimal set, the cost window from every reachable state
/// above the optimum in the poset.
inline RewardLedger ledger_from_optimum(const CandidatePool& pool, BoundCache& cache, const ConstraintSet& optimum, double d = 2.0) {
  RewardLedger L;
  L.d = d;
  const CachedBound opt = cache.get_or_compute(optimum).first;
  const CachedBound empty = cache.get_or_compute(ConstraintSet(pool.n)).first;
  if (!opt.ok() || !empty.ok()) throw SolverError("reference solve failed");
  L.beta_max = opt.beta;
  L.beta_min = empty.beta;
  L.p_best = L.p_worst = opt.p;
  // supersets of the optimum reachable by adds within budget
  std::set<ConstraintSet> seen{simplify(optimum)};
  std::vector<ConstraintSet> stack{simplify(optimum)};
  while (!stack.empty()) {
    const ConstraintSet cur = stack.back();
    stack.pop_back();
    const auto mask = valid_action_mask(cur, pool);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!mask[i] || cur.contains(pool.candidates[i])) continue;
      ConstraintSet next = apply_action(cur, ActionSpec::add(i), pool);
      if (!partial_order_leq(optimum, next) || !seen.insert(next).second) continue;
      const CachedBound b = cache.get_or_compute(next).first;
      if (b.ok() && b.beta >= L.beta_max - L.tie_tol) {
        L.p_best = std::min(L.p_best, b.p);
        L.p_worst = std::max(L.p_worst, b.p);
      }
      stack.push_back(std::move(next));
    }
  }
  return L;
}

struct Reference {
  RewardLedger ledger;
  std::optional<ConstraintSet> optimum;
  std::size_t reachable = 0;  // 0 when not enumerated
  bool exhaustive = false;
};

/// Exhaustive when the reachable space is small enough, else built from `known_optimum`.
inline Reference reference_for(const CandidatePool& pool, BoundCache& cache, std::optional<ConstraintSet> known_optimum, double d = 2.0,
                               std::size_t limit = 50'000) {
  Reference ref;
  try {
    const ExhaustiveResult ex = exhaustive_search(pool, cache, d, limit);
    ref.ledger = ex.ledger;
    ref.reachable = ex.states.size();
    ref.exhaustive = true;
    if (!ex.optimal.empty()) ref.optimum = ex.states[ex.optimal.front()];
    return ref;
  } catch (const ValidationError&) {
    if (!known_optimum) throw ValidationError("state space too large for exhaustive scoring and no known optimum given");
  }
  ref.ledger = ledger_from_optimum(pool, cache, *known_optimum, d);
  ref.optimum = known_optimum;
  return ref;
}

// ---------------------------------------------------------------------------
// Benchmark (new states visited until a reference reward of 0.95)

enum class Algorithm { Rl, Mc, Bfs, Exhaustive };

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "rl") return Algorithm::Rl;
  if (s == "mc") return Algorithm::Mc;
  if (s == "bfs") return Algorithm::Bfs;
  if (s == "exhaustive") return Algorithm::Exhaustive;
  throw ValidationError("unknown algorithm \"" + s + "\" (rl | mc | bfs | exhaustive)");
}

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Rl: return "rl";
    case Algorithm::Mc: return "mc";
    case Algorithm::Bfs: return "bfs";
    case Algorithm::Exhaustive: return "exhaustive";
  }
  return "?";
}

inline double mc_temperature_for(std::optional<BudgetPreset> preset) {
  return preset && *preset == BudgetPreset::AllThreeBody ? 0.097 : 0.084;
}

struct BenchmarkOptions {
  double threshold = 0.95;
  std::size_t max_states = 4000;
  int rl_max_episodes = 3000;
  int episode_length = 0;  // 0: rule from the budget preset
  double temperature = 0.084;
  DqnConfig dqn;
  bool rl_evaluate = false;  // count only training-episode visits
};

struct BenchmarkRecord {
  std::string algorithm;
  int n = 0;
  long budget = 0;
  std::uint64_t seed = 0;
  bool reached = false;
  std::size_t states_to_threshold = 0;  // unique states visited when not reached
  std::size_t unique_states = 0;
  double wall_time = 0.0;
  double best_beta = -std::numeric_limits<double>::infinity();
  std::string best_state;
  double best_reference_reward = 0.0;
  std::string error;

  nlohmann::json to_json() const {
    return {{"algorithm", algorithm},
            {"n", n},
            {"budget", budget},
            {"seed", seed},
            {"reached", reached},
            {"new_states_visited_to_threshold", reached ? nlohmann::json(states_to_threshold) : nlohmann::json(nullptr)},
            {"unique_states", unique_states},
            {"wall_time", wall_time},
            {"best_beta", std::isfinite(best_beta) ? nlohmann::json(best_beta) : nlohmann::json(nullptr)},
            {"best_state", best_state},
            {"best_reference_reward", best_reference_reward},
            {"error", error}};
  }
};

inline BenchmarkRecord run_benchmark_member(Algorithm algo, const CandidatePool& pool, std::shared_ptr<BoundCache> cache, const RewardLedger& reference,
                                            int episode_length, std::uint64_t seed, const BenchmarkOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  BenchmarkRecord rec;
  rec.algorithm = to_string(algo);
  rec.n = pool.n;
  rec.budget = pool.budget;
  rec.seed = seed;
  try {
    Environment env(pool, cache, EpisodeConfig{episode_length, reference.d, true});
    env.set_reference(reference);
    std::mt19937_64 rng(seed);
    SearchOptions so;
    so.max_states = opts.max_states;
    so.stop_threshold = opts.threshold;
    switch (algo) {
      case Algorithm::Bfs: {
        const auto r = bfs_search(env, so, rng);
        rec.best_beta = r.best_bound.beta;
        rec.best_state = r.best.to_string();
        rec.best_reference_reward = r.best_reward;
        break;
      }
      case Algorithm::Mc: {
        const auto r = mc_search(env, McConfig{opts.temperature}, so, rng);
        rec.best_beta = r.best_bound.beta;
        rec.best_state = r.best.to_string();
        rec.best_reference_reward = r.best_reward;
        break;
      }
      case Algorithm::Rl: {
        DqnConfig cfg = opts.dqn;
        cfg.seed = seed;
        cfg.episodes = opts.rl_max_episodes;
        cfg.stop_on_reference_visit = true;
        cfg.evaluate = opts.rl_evaluate;
        DqnAgent agent(static_cast<int>(pool.size()), cfg);
        agent.train(env);
        double best = -1.0;
        for (const auto& v : env.visits())
          if (v.reference_reward > best) {
            best = v.reference_reward;
            rec.best_beta = v.beta;
            rec.best_state = v.key;
          }
        rec.best_reference_reward = best;
        break;
      }
      case Algorithm::Exhaustive:
        throw ValidationError("exhaustive enumeration is not a benchmark algorithm");
    }
    rec.unique_states = env.unique_states();
    const auto hit = first_visits_to_threshold(env.visits(), opts.threshold);
    rec.reached = hit.has_value();
    rec.states_to_threshold = hit ? *hit : env.unique_states();
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

struct BenchmarkSummary {
  std::string algorithm;
  int n = 0;
  std::size_t runs = 0, reached = 0;
  double mean = 0.0, median = 0.0;
};

inline BenchmarkSummary summarize(const std::vector<BenchmarkRecord>& recs) {
  BenchmarkSummary s;
  if (recs.empty()) return s;
  s.algorithm = recs.front().algorithm;
  s.n = recs.front().n;
  s.runs = recs.size();
  std::vector<double> v;
  for (const auto& r : recs) {
    v.push_back(static_cast<double>(r.states_to_threshold));
    s.reached += r.reached;
  }
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  std::sort(v.begin(), v.end());
  s.median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  return s;
}

/// The inhomogeneous model with couplings i mod 3 and unit field.
inline LocalHamiltonian triplet_model(int n, double B = 1.0) {
  return build_xx(n, triplet_couplings(n), std::vector<double>(n, B), true);
}

// ---------------------------------------------------------------------------
// Scan over B/J: canonical patterns plus the exhaustive optimum

struct ScanRow {
  double b_over_j = 0.0;
  std::string label;  // pattern letter or "optimum"
  std::string state;
  double beta = 0.0;
  long p = 0;
  double reward = std::numeric_limits<double>::quiet_NaN();
  std::string matched_pattern;  // for the optimum
  double exact = std::numeric_limits<double>::quiet_NaN();
};

struct ScanOptions {
  int n = 6;
  double J = 1.0;
  long budget = 0;
  Geometry geometry = Geometry::Ring;
  int max_body = 3;
  bool exhaustive = true;  // include the search optimum
  std::size_t exhaustive_limit = 50'000;
  double d = 2.0;
  RelaxationOptions relaxation;
};

/// Rows for one B/J value. Rewards are taken against the exhaustive ledger
/// when enumerated, otherwise against the ledger of the four patterns.
inline std::vector<ScanRow> scan_point(double b_over_j, const ScanOptions& o) {
  const LocalHamiltonian h = build_xx(o.n, o.J, b_over_j * o.J, true);
  BoundCache cache(h, o.relaxation);
  const double exact = h.n <= kMaxExactQubits ? exact_ground_energy(h) : std::numeric_limits<double>::quiet_NaN();
  std::vector<ScanRow> rows;
  std::vector<CachedBound> pattern_bounds;
  for (Pattern pat : kAllPatterns) {
    ScanRow r;
    r.b_over_j = b_over_j;
    r.label = std::string(1, pattern_name(pat));
    ConstraintSet c(o.n);
    try {
      c = make_pattern(pat, o.n);
    } catch (const ValidationError&) {
      continue;
    }
    const CachedBound b = cache.get_or_compute(c).first;
    r.state = c.to_string();
    r.beta = b.beta;
    r.p = b.p;
    r.exact = exact;
    pattern_bounds.push_back(b);
    rows.push_back(r);
  }
  RewardLedger L = ledger_from(pattern_bounds, o.d);
  if (o.exhaustive) {
    const CandidatePool pool = candidate_pool(o.n, o.budget, o.geometry, o.max_body);
    const ExhaustiveResult ex = exhaustive_search(pool, cache, o.d, o.exhaustive_limit);
    L = ex.ledger;
    for (std::size_t idx : ex.optimal) {
      ScanRow r;
      r.b_over_j = b_over_j;
      r.label = "optimum";
      r.state = ex.states[idx].to_string();
      r.beta = ex.bounds[idx].beta;
      r.p = ex.bounds[idx].p;
      r.exact = exact;
      const auto m = match_pattern(ex.states[idx]);
      r.matched_pattern = m ? std::string(1, pattern_name(*m)) : "";
      rows.push_back(r);
    }
  }
  for (auto& r : rows) r.reward = reward(r.beta, r.p, L);
  return rows;
}

// ---------------------------------------------------------------------------
// Transfer learning: convergence time with and without a warm start

/// Episodes until the greedy evaluation reaches the threshold; `max_episodes`
/// when it never does within the cap.
inline int convergence_time(DqnAgent& agent, Environment& env, bool* converged = nullptr) {
  const TrainLog log = agent.train(env);
  if (converged) *converged = log.converged_episode > 0;
  return log.converged_episode > 0 ? log.converged_episode : agent.config().episodes;
}

struct TransferOptions {
  int n = 6;
  double J = 1.0;
  double source_b = 5.0;
  std::vector<double> targets{4.0, 0.5};
  long budget = 0;
  Geometry geometry = Geometry::Ring;
  int max_body = 3;
  int episode_length = 0;  // 0: ceil(1.2 n)
  int source_episodes = 300;
  int max_episodes = 500;
  double d = 2.0;
  DqnConfig dqn;
  std::vector<std::uint64_t> seeds;
  unsigned threads = 1;
  RelaxationOptions relaxation;
};

struct TransferRow {
  double target_b = 0.0;
  std::size_t seeds = 0;
  double mean_t0 = 0.0, mean_ttl = 0.0;
  double ratio_of_means = 0.0;
  double mean_of_ratios = 0.0;
  std::size_t censored_t0 = 0, censored_ttl = 0;
  std::vector<int> t0, ttl;
};

inline std::vector<TransferRow> run_transfer(const TransferOptions& o) {
  if (o.seeds.empty()) throw ValidationError("transfer needs at least one seed");
  const int L = o.episode_length > 0 ? o.episode_length : static_cast<int>(std::ceil(1.2 * o.n));
  const CandidatePool pool = candidate_pool(o.n, o.budget, o.geometry, o.max_body);
  auto make_cache = [&](double b) { return std::make_shared<BoundCache>(build_xx(o.n, o.J, b * o.J, true), o.relaxation); };

  const auto src_cache = make_cache(o.source_b);
  const RewardLedger src_ref = reference_for(pool, *src_cache, std::nullopt, o.d).ledger;
  std::vector<std::unique_ptr<DqnAgent>> sources(o.seeds.size());
  parallel_for(o.seeds.size(), o.threads, [&](std::size_t i) {
    DqnConfig cfg = o.dqn;
    cfg.seed = o.seeds[i];
    cfg.episodes = o.source_episodes;
    auto agent = std::make_unique<DqnAgent>(static_cast<int>(pool.size()), cfg);
    Environment env(pool, src_cache, EpisodeConfig{L, o.d, true});
    env.set_reference(src_ref);
    agent->train(env);
    sources[i] = std::move(agent);
  });

  std::vector<TransferRow> rows;
  for (double tb : o.targets) {
    const auto cache = make_cache(tb);
    const RewardLedger ref = reference_for(pool, *cache, std::nullopt, o.d).ledger;
    TransferRow row;
    row.target_b = tb;
    row.seeds = o.seeds.size();
    row.t0.assign(o.seeds.size(), 0);
    row.ttl.assign(o.seeds.size(), 0);
    std::vector<int> c0(o.seeds.size()), c1(o.seeds.size());
    parallel_for(o.seeds.size(), o.threads, [&](std::size_t i) {
      DqnConfig cfg = o.dqn;
      cfg.seed = o.seeds[i] + 7919;  // same stream for cold and warm runs
      cfg.episodes = o.max_episodes;
      cfg.stop_on_convergence = true;
      bool ok = false;
      {
        DqnAgent cold(static_cast<int>(pool.size()), cfg);
        Environment env(pool, cache, EpisodeConfig{L, o.d, true});
        env.set_reference(ref);
        row.t0[i] = convergence_time(cold, env, &ok);
        c0[i] = !ok;
      }
      {
        DqnAgent warm = transfer(*sources[i], Environment(pool, cache, EpisodeConfig{L, o.d, true}), cfg);
        Environment env(pool, cache, EpisodeConfig{L, o.d, true});
        env.set_reference(ref);
        row.ttl[i] = convergence_time(warm, env, &ok);
        c1[i] = !ok;
      }
    });
    double ratios = 0.0;
    for (std::size_t i = 0; i < o.seeds.size(); ++i) {
      row.mean_t0 += row.t0[i];
      row.mean_ttl += row.ttl[i];
      ratios += static_cast<double>(row.ttl[i]) / row.t0[i];
      row.censored_t0 += c0[i];
      row.censored_ttl += c1[i];
    }
    row.mean_t0 /= static_cast<double>(o.seeds.size());
    row.mean_ttl /= static_cast<double>(o.seeds.size());
    row.ratio_of_means = row.mean_ttl / row.mean_t0;
    row.mean_of_ratios = ratios / static_cast<double>(o.seeds.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

/// beta ≤ E0 + tol whenever E0 is computable.
inline bool audit_bound(const LocalHamiltonian& h, double beta, double tol = 1e-6) {
  if (h.n > kMaxExactQubits || !std::isfinite(beta)) return true;
  return beta <= exact_ground_energy(h) + tol;
}

}  // namespace qcert
