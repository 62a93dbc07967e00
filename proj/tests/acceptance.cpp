// Acceptance checks. Prints one "criterion k: PASS|FAIL <detail>" line per criterion.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "qcert/qcert.hpp"

using namespace qcert;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

ConstraintSet random_set(int n, const CandidatePool& pool, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  ConstraintSet c(n);
  for (const auto& s : pool.candidates)
    if (coin(rng)) c.insert(s);
  return simplify(c);
}

CandidatePool half_pool(int n) { return candidate_pool(n, budget_for(BudgetPreset::HalfThreeBody, n), Geometry::Ring, 3); }

// 1. beta_C <= E0 + 1e-6 on random constraint sets.
Outcome certificate_validity() {
  std::mt19937_64 rng(1001);
  std::size_t checked = 0, violations = 0, failures = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (int n = 4; n <= 8; ++n) {
    const auto windows = candidate_pool(n, 1L << 30, Geometry::Ring, 3);
    const auto arbitrary = candidate_pool(n, 1L << 30, Geometry::AllSubsets, 3);
    for (double B : {0.0, 0.5, 1.0, 2.0, 3.0, 5.0}) {
      const auto h = build_xx(n, 1.0, B);
      const double e0 = exact_ground_energy(h);
      BoundCache cache(h, RelaxationOptions{});
      for (int k = 0; k < 200; ++k) {
        const ConstraintSet c = k % 2 ? random_set(n, windows, 0.3, rng) : random_set(n, arbitrary, 6.0 / static_cast<double>(arbitrary.size()), rng);
        const auto b = cache.get_or_compute(c).first;
        ++checked;
        if (!b.ok()) {
          ++failures;
          continue;
        }
        worst = std::max(worst, b.beta - e0);
        if (b.beta > e0 + 1e-6) ++violations;
      }
    }
  }
  return {violations == 0 && failures == 0,
          fmt("%zu sets, %zu violations, %zu solver failures, max(beta - E0) = %.3e", checked, violations, failures, worst)};
}

// 2. beta_empty <= beta_1 <= beta_2 <= E0.
Outcome hierarchy_chain() {
  bool ok = true;
  double worst = std::numeric_limits<double>::infinity();
  for (double B : {0.5, 1.0, 2.0, 3.0, 5.0}) {
    const auto h = build_xx(6, 1.0, B);
    const double b0 = solve_bound(h, ConstraintSet(6)).beta;
    const double b1 = solve_bound(h, level1_constraints(h)).beta;
    const double b2 = solve_bound(h, level2_constraints(h)).beta;
    const double e0 = exact_ground_energy(h);
    const double gap = std::min({b1 - b0, b2 - b1, e0 - b2});
    worst = std::min(worst, gap);
    if (!(gap >= -1e-7)) ok = false;
  }
  return {ok, fmt("5 field values, smallest consecutive gap %.3e", worst)};
}

// 3. Monotonicity along the partial order.
Outcome poset_monotonicity() {
  std::mt19937_64 rng(1003);
  const auto pool = candidate_pool(6, 1L << 30, Geometry::Ring, 4);
  const double fields[] = {0.0, 0.5, 1.0, 2.0, 5.0};
  std::size_t pairs = 0, violations = 0, failures = 0;
  double worst = -std::numeric_limits<double>::infinity();
  while (pairs < 100) {
    const double B = fields[pairs % 5];
    const auto h = build_xx(6, 1.0, B);
    const ConstraintSet lo = random_set(6, pool, 0.2, rng);
    ConstraintSet hi = lo;
    const int extra = 1 + static_cast<int>(rng() % 3);
    for (int k = 0; k < extra; ++k) hi.insert(pool.candidates[rng() % pool.size()]);
    hi = simplify(hi);
    if (!partial_order_leq(lo, hi)) continue;
    const auto a = solve_bound(h, lo), b = solve_bound(h, hi);
    ++pairs;
    if (a.status == SolveStatus::Failed || b.status == SolveStatus::Failed) {
      ++failures;
      continue;
    }
    worst = std::max(worst, a.beta - b.beta);
    if (a.beta > b.beta + 1e-6) ++violations;
  }
  return {violations == 0 && failures == 0, fmt("%zu pairs, %zu violations, %zu failures, max(beta_C - beta_C') = %.3e", pairs, violations, failures, worst)};
}

// 4. No coupling: the trivial relaxation is already exact.
Outcome frustration_free() {
  std::mt19937_64 rng(1004);
  const std::vector<double> B{0.3, -1.2, 2.0, 0.7, -0.1, 1.5};
  const auto h = build_xx(6, std::vector<double>(6, 0.0), B, false);
  const double e0 = exact_ground_energy(h);
  const double b0 = solve_bound(h, ConstraintSet(6)).beta;
  const auto pool = candidate_pool(6, 1L << 30, Geometry::Chain, 4);
  double drift = 0.0;
  for (int k = 0; k < 20; ++k) {
    ConstraintSet c = random_set(6, pool, 0.25, rng);
    if (c.empty()) c.insert(pool.candidates[rng() % pool.size()]);
    drift = std::max(drift, std::abs(solve_bound(h, c).beta - b0));
  }
  const bool ok = std::abs(b0 - e0) <= 1e-8 && drift <= 1e-7;
  return {ok, fmt("|beta_empty - E0| = %.3e, max drift over 20 strengthenings %.3e", std::abs(b0 - e0), drift)};
}

// 5. The ZZ triangle.
Outcome frustrated_triangle() {
  const auto h = build_zz_graph(3, {{0, 1}, {1, 2}, {0, 2}}, {1.0, 1.0, 1.0});
  const double term_min = term_min_eigenvalue(build_zz_graph(2, {{0, 1}}, {1.0}).terms.front());
  const double b0 = solve_bound(h, ConstraintSet(3)).beta;
  const double b1 = solve_bound(h, level1_constraints(h)).beta;
  const double full = solve_bound(h, ConstraintSet(3, {{0, 1, 2}})).beta;
  const bool c0 = std::abs(b0 - 3.0 * term_min) <= 1e-7;
  const bool c1 = b1 > b0 + 0.1;
  const bool c2 = std::abs(full + 1.0) <= 1e-7;
  return {c0 && c1 && c2, fmt("beta_empty = %.9f (3 min = %.1f) %s, beta_1 = %.9f %s, beta_full = %.9f %s", b0, 3.0 * term_min, c0 ? "ok" : "off", b1,
                              c1 ? "separated" : "not separated from beta_empty", full, c2 ? "ok" : "off")};
}

// 6. Phase patterns at n = 6 from exhaustive enumeration.
Outcome phase_patterns() {
  ScanOptions o;
  o.n = 6;
  o.budget = budget_for(BudgetPreset::HalfThreeBody, 6);
  bool d_ok = true;
  std::string c_region;
  std::ostringstream optima;
  for (double B : {0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0}) {
    const auto rows = scan_point(B, o);
    const ScanRow *a = nullptr, *c = nullptr, *d = nullptr;
    std::set<std::string> labels;
    for (const auto& r : rows) {
      if (r.label == "a") a = &r;
      if (r.label == "c") c = &r;
      if (r.label == "d") d = &r;
      if (r.label == "optimum") labels.insert(r.matched_pattern.empty() ? r.state : r.matched_pattern);
    }
    optima << " " << B << ":";
    for (const auto& l : labels) optima << l;
    if (B >= 2.0 && !(d && d->reward >= 1.0 - 1e-9)) d_ok = false;
    if (B < 2.0 && a && c && c->beta >= a->beta - 1e-6 && c->p < a->p) c_region += fmt(" %.2f", B);
  }
  return {d_ok && !c_region.empty(), fmt("(d) optimal for all B/J >= 2: %s; (c) >= (a) with fewer parameters at B/J =%s; optima:", d_ok ? "yes" : "no",
                                         c_region.empty() ? " none" : c_region.c_str()) +
                                         optima.str()};
}

// 7. The n = 6 optimal pattern stays optimal among the patterns at n = 12.
Outcome size_consistency() {
  ScanOptions o6;
  o6.n = 6;
  o6.budget = budget_for(BudgetPreset::HalfThreeBody, 6);
  bool ok = true;
  std::string detail;
  for (double B : {1.0, 5.0}) {
    std::string best6, best12;
    for (const auto& r : scan_point(B, o6))
      if (r.label.size() == 1 && r.reward >= 1.0 - 1e-9) best6 += r.label;
    ScanOptions o12 = o6;
    o12.n = 12;
    o12.exhaustive = false;
    for (const auto& r : scan_point(B, o12))
      if (r.reward >= 1.0 - 1e-9) best12 += r.label;
    const bool shared = !best6.empty() && best6.find_first_of(best12) != std::string::npos;
    ok = ok && shared;
    detail += fmt("B/J=%.0f: n=6 {%s} n=12 {%s}; ", B, best6.c_str(), best12.c_str());
  }
  return {ok, detail};
}

// 8. Benchmark on the i mod 3 model.
Outcome benchmark_ordering() {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(s);
  bool all_reached = true, rl_within = true, bfs_monotone = true;
  double bfs10 = 0, mc10 = 0, prev_bfs = 0;
  std::string detail;
  for (int n = 6; n <= 10; ++n) {
    const auto pool = half_pool(n);
    auto cache = std::make_shared<BoundCache>(triplet_model(n), RelaxationOptions{});
    const auto ref = reference_for(pool, *cache, coupled_groups(triplet_couplings(n), n));
    BenchmarkOptions bo;
    bo.dqn.exploration.delta = exploration_decay_for(n);
    const int L = episode_length_for(BudgetPreset::HalfThreeBody, n);
    double mean[3];
    int k = 0;
    for (Algorithm algo : {Algorithm::Bfs, Algorithm::Mc, Algorithm::Rl}) {
      std::vector<BenchmarkRecord> recs;
      for (auto s : seeds) recs.push_back(run_benchmark_member(algo, pool, cache, ref.ledger, L, s, bo));
      const auto sm = summarize(recs);
      if (sm.reached != sm.runs) all_reached = false;
      mean[k++] = sm.mean;
    }
    if (mean[2] > 3.0 * mean[1]) rl_within = false;
    if (n > 6 && mean[0] <= prev_bfs) bfs_monotone = false;
    prev_bfs = mean[0];
    if (n == 10) bfs10 = mean[0], mc10 = mean[1];
    detail += fmt("n=%d bfs %.1f mc %.1f rl %.1f (rl/mc %.2f); ", n, mean[0], mean[1], mean[2], mean[2] / mean[1]);
  }
  const bool ok = all_reached && rl_within && bfs_monotone && bfs10 >= mc10;
  detail += fmt("all reached %s, bfs >= mc at n=10 %s, rl within 3x mc %s, bfs increasing %s", all_reached ? "yes" : "no", bfs10 >= mc10 ? "yes" : "no",
                rl_within ? "yes" : "no", bfs_monotone ? "yes" : "no");
  return {ok, detail};
}

// 9. Learning machinery.
Outcome rl_machinery() {
  std::mt19937_64 rng(1009);
  std::normal_distribution<double> nd;
  double worst_fd = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int s = 3 + trial % 6;
    QNetwork net(QNetwork::standard_dims(s));
    net.init_uniform(rng);
    Matrix in(s, 4);
    for (Eigen::Index k = 0; k < in.size(); ++k) in.data()[k] = nd(rng);
    std::vector<int> actions;
    Vector targets(4);
    for (int j = 0; j < 4; ++j) {
      actions.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(s + 1)));
      targets[j] = nd(rng);
    }
    Vector grad;
    net.loss_and_gradient(in, actions, targets, &grad);
    const Vector p0 = net.parameters();
    for (Eigen::Index k = 0; k < p0.size(); ++k) {
      Vector p = p0;
      const double h = 1e-6;
      p[k] = p0[k] + h;
      net.set_parameters(p);
      const double up = net.loss_and_gradient(in, actions, targets, nullptr);
      p[k] = p0[k] - h;
      net.set_parameters(p);
      const double down = net.loss_and_gradient(in, actions, targets, nullptr);
      worst_fd = std::max(worst_fd, std::abs((up - down) / (2 * h) - grad[k]) / std::max(1.0, std::abs(grad[k])));
    }
  }

  bool schedule_ok = true;
  for (double delta : {0.5, 0.95}) {
    ExplorationSchedule sch;
    sch.delta = delta;
    for (int e = 0; e <= 100; ++e) schedule_ok = schedule_ok && sch.epsilon(e) == std::max(0.1, std::pow(delta, e) * 0.9);
  }

  QNetwork online({1, 3}), target({1, 3});
  online.bias(0) << 1.0, 3.0, 2.0;
  target.bias(0) << 10.0, 20.0, 30.0;
  RewardLedger L;
  L.beta_max = -1.0;
  L.beta_min = -2.0;
  L.p_best = L.p_worst = 10;
  const Transition t1{{0}, 0, -1.0, 10, {1}, {1, 1, 1}}, t2{{0}, 0, -1.5, 10, {1}, {1, 0, 1}};
  const Vector y = double_dqn_targets(online, target, {&t1, &t2}, L, 0.9);
  const bool target_ok = std::abs(y[0] - (1.0 + 0.9 * 20.0)) < 1e-12 && std::abs(y[1] - (0.25 + 0.9 * 30.0)) < 1e-12;

  // three-state ring landscape, symmetric proposals
  const double R[3] = {0.0, 0.05, 0.12}, T = 0.084;
  long occ[3] = {0, 0, 0};
  int s = 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 300000; ++k) {
    const int next = (s + (rng() % 2 ? 1 : 2)) % 3;
    if (u(rng) < metropolis_acceptance(R[next], R[s], T)) s = next;
    ++occ[s];
  }
  double worst_mc = 0.0;
  for (int i = 1; i < 3; ++i)
    worst_mc = std::max(worst_mc, std::abs(static_cast<double>(occ[i]) / static_cast<double>(occ[0]) / std::exp((R[i] - R[0]) / T) - 1.0));

  const bool ok = worst_fd <= 1e-4 && schedule_ok && target_ok && worst_mc <= 0.05;
  return {ok, fmt("gradient rel err %.2e, schedule %s, double-DQN target %s, Metropolis occupation deviation %.2f%%", worst_fd, schedule_ok ? "exact" : "wrong",
                  target_ok ? "exact" : "wrong", 100.0 * worst_mc)};
}

// 10. Random block SDPs against the offline reference.
Outcome sdp_reference() {
  const std::string dir = std::string(QCERT_TEST_DATA) + "/sdp/";
  std::ifstream rf(dir + "reference.json");
  if (!rf) return {false, "missing reference data"};
  const auto ref = nlohmann::json::parse(rf);
  std::size_t bad = 0, weak = 0;
  double worst_err = 0.0, worst_gap = 0.0;
  for (const auto& [name, e] : ref.items()) {
    std::ifstream f(dir + name);
    const SdpProblem p = read_dump(f);
    SdpSolution s;
    try {
      s = solve(p);
    } catch (const SolverError&) {
      ++bad;
      continue;
    }
    const double err = std::abs(s.primal_obj - e.at("objective").get<double>());
    worst_err = std::max(worst_err, err);
    worst_gap = std::max(worst_gap, std::abs(s.gap));
    for (const auto& h : s.history)
      if (h.primal_obj < h.dual_obj) ++weak;
    if (s.status == SolveStatus::Failed || err > 1e-6 || std::abs(s.gap) > 1e-7) ++bad;
  }
  return {bad == 0 && weak == 0,
          fmt("%zu problems, %zu outside tolerance, max objective error %.2e, max gap %.2e, weak duality violations %zu", ref.size(), bad, worst_err, worst_gap, weak)};
}

// 11. Warm-started training from B/J = 5.
Outcome transfer_learning() {
  TransferOptions o;
  o.n = 6;
  o.budget = budget_for(BudgetPreset::HalfThreeBody, 6);
  o.source_b = 5.0;
  o.targets = {4.0, 0.5};
  o.dqn.exploration.delta = exploration_decay_for(6);
  for (std::uint64_t s = 1; s <= 20; ++s) o.seeds.push_back(s);
  const auto rows = run_transfer(o);
  const bool near = rows[0].ratio_of_means < 1.0;
  const bool far = rows[1].ratio_of_means >= 0.5 && rows[1].ratio_of_means <= 1.5;
  std::string detail;
  for (const auto& r : rows)
    detail += fmt("B/J=%.1f: mean t0 %.1f, mean t_TL %.1f, ratio %.3f (censored %zu/%zu); ", r.target_b, r.mean_t0, r.mean_ttl, r.ratio_of_means, r.censored_t0,
                  r.censored_ttl);
  return {near && far, detail};
}

const std::vector<std::function<Outcome()>> kCriteria{certificate_validity, hierarchy_chain,    poset_monotonicity, frustration_free,
                                                      frustrated_triangle,  phase_patterns,     size_consistency,   benchmark_ordering,
                                                      rl_machinery,         sdp_reference,      transfer_learning};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      which.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: qcert_acceptance [--criterion k]...\n";
      return 2;
    }
  }
  if (which.empty())
    for (int k = 1; k <= static_cast<int>(kCriteria.size()); ++k) which.push_back(k);
  bool all = true;
  for (int k : which) {
    if (k < 1 || k > static_cast<int>(kCriteria.size())) {
      std::cerr << "no criterion " << k << "\n";
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = kCriteria[k - 1]();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << k << ": " << (out.pass ? "PASS" : "FAIL") << " " << out.detail << " [" << fmt("%.1f", secs) << " s]" << std::endl;
    all = all && out.pass;
  }
  return all ? 0 : 1;
}
