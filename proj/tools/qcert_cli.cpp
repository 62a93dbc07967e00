// qcert: certified ground-state lower bounds and search over marginal constraints.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include "qcert/qcert.hpp"

using namespace qcert;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kValidation = 2, kSolver = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  bool verbose = false;
};

class AuditFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Json load_config(const Common& c) { return c.config.empty() ? Json::object() : load_json_file(c.config); }

fs::path out_dir(const Common& c) {
  fs::path p(c.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ValidationError("cannot create output directory " + c.out + ": " + ec.message());
  return p;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw ValidationError("cannot write " + p.string());
  return os;
}

void log(const Common& c, const std::string& msg) {
  if (c.verbose) std::cerr << msg << "\n";
}

Json beta_json(double b) { return std::isfinite(b) ? Json(b) : Json(nullptr); }

// Exact energies memoized per Hamiltonian for the beta <= E0 audit.
class Auditor {
 public:
  void check(const LocalHamiltonian& h, const std::string& key, double beta, const std::string& where) {
    if (h.n > kMaxExactQubits || !std::isfinite(beta)) return;
    std::lock_guard<std::mutex> lock(mu_);
    auto it = e0_.find(key);
    if (it == e0_.end()) it = e0_.emplace(key, exact_ground_energy(h)).first;
    ++checked_;
    if (beta > it->second + 1e-6)
      failures_.push_back(where + ": beta " + std::to_string(beta) + " exceeds the exact ground energy " + std::to_string(it->second));
  }
  void finish(const Common& c) const {
    log(c, "audit: " + std::to_string(checked_) + " bounds checked against exact diagonalization");
    if (!failures_.empty()) throw AuditFailure("certificate audit failed: " + failures_.front());
  }

 private:
  std::mutex mu_;
  std::map<std::string, double> e0_;
  std::size_t checked_ = 0;
  std::vector<std::string> failures_;
};

ConstraintSet constraints_from(const Json& root, int n) {
  if (root.contains("pattern")) return make_pattern(parse_pattern(root.at("pattern").get<std::string>()), n);
  if (!root.contains("constraints")) return ConstraintSet(n);
  const Json& c = root.at("constraints");
  return parse_constraint_set(c.is_string() ? c.get<std::string>() : c.dump(), n);
}

LocalHamiltonian model_from(const Json& root) {
  if (!root.contains("model")) throw ValidationError("config needs a \"model\" section");
  return parse_hamiltonian(root.at("model"));
}

// ---------------------------------------------------------------------------

int cmd_solve(const Common& c) {
  const Json root = load_config(c);
  const LocalHamiltonian h = model_from(root);
  const ConstraintSet cs = constraints_from(root, h.n);
  RelaxationOptions opts = parse_relaxation_options(root);
  const fs::path dir = out_dir(c);

  const CompiledRelaxation rel = compile_relaxation(h, cs, opts);
  {
    auto os = open_out(dir / "problem.sdp");
    write_dump(os, rel.problem);
  }
  std::ofstream trace;
  if (c.verbose) {
    trace = open_out(dir / "trace.csv");
    opts.trace_csv = &trace;
  }
  const BoundResult r = solve_bound(h, cs, opts);
  Json rec{{"constraints", cs.to_string()}, {"beta", beta_json(r.beta)}, {"p", r.p},
           {"status", to_string(r.status)}, {"certified", r.dual_certified}, {"dual_min_eig", r.dual_min_eig},
           {"unsupported_offset", r.unsupported_offset}, {"primal_value", beta_json(r.primal_value)}, {"iterations", r.iterations},
           {"seconds", r.seconds}, {"stop_reason", r.stop_reason}};
  if (!r.error.empty()) rec["error"] = r.error;
  if (h.n <= kMaxExactQubits) {
    const double e0 = exact_ground_energy(h);
    rec["exact"] = e0;
    rec["audit"] = !std::isfinite(r.beta) || r.beta <= e0 + 1e-6;
  }
  open_out(dir / "solve.jsonl") << rec.dump() << "\n";
  std::cout << "beta " << std::setprecision(12) << r.beta << "\np " << r.p << "\nstatus " << to_string(r.status) << "\ncertified "
            << (r.dual_certified ? "yes" : "no") << "\n";
  if (rec.contains("exact")) std::cout << "exact " << rec["exact"].get<double>() << "\n";
  if (r.status == SolveStatus::Failed) {
    std::cerr << "solver failure: " << (r.error.empty() ? r.stop_reason : r.error) << "\n";
    return kSolver;
  }
  if (rec.contains("audit") && !rec["audit"].get<bool>()) throw AuditFailure("certificate audit failed: beta exceeds the exact ground energy");
  return kOk;
}

int cmd_optimize(const Common& c) {
  const Json root = load_config(c);
  const LocalHamiltonian h = model_from(root);
  const PoolSpec spec = parse_pool_spec(root);
  const CandidatePool pool = spec.pool(h.n);
  const RelaxationOptions ropts = parse_relaxation_options(root);
  const std::string algo_name = detail::get_or<std::string>(root, "algorithm", "rl");
  const Algorithm algo = parse_algorithm(algo_name);
  const std::uint64_t seed = c.seed.value_or(detail::get_or<std::uint64_t>(root, "seed", 1));
  const double d = detail::get_or<double>(root, "d", 2.0);
  const int L = detail::get_or<int>(root, "episode_length", spec.preset ? episode_length_for(*spec.preset, h.n) : std::max(1, h.n));
  const fs::path dir = out_dir(c);
  auto cache = std::make_shared<BoundCache>(h, ropts);
  Auditor audit;

  std::optional<RewardLedger> reference;
  if (detail::get_or<bool>(root, "reference", true)) {
    try {
      reference = reference_for(pool, *cache, std::nullopt, d).ledger;
      log(c, "reference ledger from exhaustive enumeration");
    } catch (const ValidationError&) {
      log(c, "state space too large for a reference ledger; reporting running rewards only");
    }
  }

  Environment env(pool, cache, EpisodeConfig{L, d, true});
  env.set_reference(reference);
  Json result{{"algorithm", algo_name}, {"n", h.n}, {"budget", pool.budget}, {"seed", seed}, {"pool_size", pool.size()}};
  std::mt19937_64 rng(seed);
  SearchOptions so;
  so.max_states = detail::get_or<std::size_t>(root, "max_states", 4000);

  auto write_visits = [&] {
    auto os = open_out(dir / "visits.jsonl");
    for (const auto& v : env.visits()) {
      Json j{{"state", v.key}, {"beta", beta_json(v.beta)}, {"p", v.p}, {"first_visit", v.first_visit}};
      if (!std::isnan(v.reference_reward)) j["reference_reward"] = v.reference_reward;
      os << j.dump() << "\n";
      audit.check(h, "model", v.beta, "visit " + v.key);
    }
  };

  switch (algo) {
    case Algorithm::Rl: {
      DqnConfig cfg = parse_dqn_config(root, h.n);
      cfg.seed = seed;
      DqnAgent agent(static_cast<int>(pool.size()), cfg);
      if (root.contains("init_weights")) {
        const QNetwork net = load_weights(root.at("init_weights").get<std::string>());
        if (net.dims() != agent.online().dims()) throw ValidationError("init_weights: network shape does not match the candidate pool");
        agent.online() = net;
        agent.target() = net;
      }
      const TrainLog tl = agent.train(env, true);
      {
        auto os = open_out(dir / "steps.jsonl");
        for (const auto& s : tl.steps) os << s.to_json().dump() << "\n";
      }
      {
        auto os = open_out(dir / "training.csv");
        os << "episode,eval_reward,eval_reference_reward,eval_beta,eval_state\n";
        for (std::size_t e = 0; e < tl.eval_reward.size(); ++e)
          os << e + 1 << "," << tl.eval_reward[e] << "," << tl.eval_reference_reward[e] << "," << tl.eval_beta[e] << ",\"" << tl.eval_state[e] << "\"\n";
      }
      save_weights((dir / "weights.bin").string(), agent.online(),
                   {{"n", h.n}, {"budget", pool.budget}, {"seed", seed}, {"episodes", tl.episodes_run}, {"pool", pool.size()}});
      result["episodes_run"] = tl.episodes_run;
      result["converged_episode"] = tl.converged_episode;
      if (!tl.eval_state.empty()) {
        result["final_state"] = tl.eval_state.back();
        result["final_beta"] = beta_json(tl.eval_beta.back());
      }
      write_visits();
      break;
    }
    case Algorithm::Mc:
    case Algorithm::Bfs: {
      const SearchResult r = algo == Algorithm::Mc
                                 ? mc_search(env, McConfig{detail::get_or<double>(root, "temperature", mc_temperature_for(spec.preset))}, so, rng)
                                 : bfs_search(env, so, rng);
      result["best_state"] = r.best.to_string();
      result["best_beta"] = beta_json(r.best_bound.beta);
      result["best_p"] = r.best_bound.p;
      result["best_reward"] = r.best_reward;
      result["steps"] = r.steps;
      write_visits();
      break;
    }
    case Algorithm::Exhaustive: {
      const ExhaustiveResult ex = exhaustive_search(pool, *cache, d, detail::get_or<std::size_t>(root, "exhaustive_limit", 50'000));
      auto os = open_out(dir / "states.jsonl");
      for (std::size_t i = 0; i < ex.states.size(); ++i) {
        os << Json{{"state", ex.states[i].to_string()}, {"beta", beta_json(ex.bounds[i].beta)}, {"p", ex.bounds[i].p}, {"reward", ex.rewards[i]}}.dump()
           << "\n";
        audit.check(h, "model", ex.bounds[i].beta, "state " + ex.states[i].to_string());
      }
      Json optima = Json::array();
      for (std::size_t i : ex.optimal) optima.push_back(ex.states[i].to_string());
      result["reachable"] = ex.states.size();
      result["optimal_states"] = optima;
      result["ledger"] = ex.ledger.to_json();
      break;
    }
  }
  result["unique_states"] = algo == Algorithm::Exhaustive ? result["reachable"] : Json(env.unique_states());
  result["cache_hits"] = cache->hits();
  result["cache_misses"] = cache->misses();
  open_out(dir / "result.json") << result.dump(2) << "\n";
  std::cout << result.dump() << "\n";
  audit.finish(c);
  return kOk;
}

int cmd_benchmark(const Common& c) {
  const Json root = load_config(c);
  const int n = detail::get_or<int>(root, "n", 6);
  const LocalHamiltonian h = root.contains("model") ? model_from(root) : triplet_model(n, detail::get_or<double>(root, "B", 1.0));
  const PoolSpec spec = parse_pool_spec(root);
  const CandidatePool pool = spec.pool(h.n);
  const RelaxationOptions ropts = parse_relaxation_options(root);
  const auto seeds = parse_seeds(root, c.seed.value_or(1), 20);
  const double d = detail::get_or<double>(root, "d", 2.0);
  std::vector<Algorithm> algos;
  for (const auto& a : root.contains("algorithms") ? root.at("algorithms").get<std::vector<std::string>>() : std::vector<std::string>{"bfs", "mc", "rl"}) {
    algos.push_back(parse_algorithm(a));
    if (algos.back() == Algorithm::Exhaustive) throw ValidationError("benchmark algorithms are rl, mc and bfs");
  }
  BenchmarkOptions bo;
  bo.threshold = detail::get_or<double>(root, "threshold", bo.threshold);
  bo.max_states = detail::get_or<std::size_t>(root, "max_states", bo.max_states);
  bo.rl_max_episodes = detail::get_or<int>(root, "rl_max_episodes", bo.rl_max_episodes);
  bo.temperature = detail::get_or<double>(root, "temperature", mc_temperature_for(spec.preset));
  bo.dqn = parse_dqn_config(root, h.n);
  const int L = detail::get_or<int>(root, "episode_length", spec.preset ? episode_length_for(*spec.preset, h.n) : std::max(1, h.n));
  const unsigned threads = detail::get_or<unsigned>(root, "threads", default_threads());
  const fs::path dir = out_dir(c);

  auto cache = std::make_shared<BoundCache>(h, ropts);
  std::optional<ConstraintSet> known;
  if (!root.contains("model")) known = coupled_groups(triplet_couplings(h.n), h.n);
  if (root.contains("optimum")) known = parse_constraint_set(root.at("optimum").dump(), h.n);
  const Reference ref = reference_for(pool, *cache, known, d);
  log(c, std::string("reference ledger: ") + (ref.exhaustive ? "exhaustive over " + std::to_string(ref.reachable) + " states" : "known optimum") + " " +
             ref.ledger.to_json().dump());

  Auditor audit;
  auto records = open_out(dir / "records.jsonl");
  std::mutex write_mu;
  auto summary = open_out(dir / "summary.csv");
  summary << "algorithm,n,budget,runs,reached,mean,median\n";
  for (Algorithm a : algos) {
    std::vector<BenchmarkRecord> recs(seeds.size());
    parallel_for(seeds.size(), threads, [&](std::size_t i) {
      recs[i] = run_benchmark_member(a, pool, cache, ref.ledger, L, seeds[i], bo);
      audit.check(h, "model", recs[i].best_beta, std::string(to_string(a)) + " seed " + std::to_string(seeds[i]));
      std::lock_guard<std::mutex> lock(write_mu);
      records << recs[i].to_json().dump() << "\n" << std::flush;
      log(c, std::string(to_string(a)) + " seed " + std::to_string(seeds[i]) + ": " + std::to_string(recs[i].states_to_threshold) + " states" +
                 (recs[i].reached ? "" : " (not reached)") + (recs[i].error.empty() ? "" : " error: " + recs[i].error));
    });
    const auto s = summarize(recs);
    summary << s.algorithm << "," << s.n << "," << pool.budget << "," << s.runs << "," << s.reached << "," << s.mean << "," << s.median << "\n";
    std::cout << s.algorithm << " n=" << s.n << " reached " << s.reached << "/" << s.runs << " mean " << s.mean << " median " << s.median << "\n";
  }
  audit.finish(c);
  return kOk;
}

int cmd_scan(const Common& c) {
  const Json root = load_config(c);
  ScanOptions o;
  o.n = detail::get_or<int>(root, "n", 6);
  o.J = detail::get_or<double>(root, "J", 1.0);
  const PoolSpec spec = parse_pool_spec(root);
  o.budget = spec.budget(o.n);
  o.geometry = spec.geometry;
  o.max_body = spec.max_body;
  o.exhaustive = detail::get_or<bool>(root, "exhaustive", o.n <= 8);
  o.exhaustive_limit = detail::get_or<std::size_t>(root, "exhaustive_limit", o.exhaustive_limit);
  o.d = detail::get_or<double>(root, "d", 2.0);
  o.relaxation = parse_relaxation_options(root);
  const auto grid = parse_grid(root, "b_over_j", {0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0});
  const fs::path dir = out_dir(c);

  std::size_t audited = 0;
  std::string audit_failure;
  auto csv = open_out(dir / "scan.csv");
  csv << "b_over_j,label,state,beta,p,reward,matched_pattern,exact\n";
  csv.precision(12);
  for (double b : grid) {
    log(c, "B/J = " + std::to_string(b));
    for (const auto& r : scan_point(b, o)) {
      csv << r.b_over_j << "," << r.label << ",\"" << r.state << "\"," << r.beta << "," << r.p << "," << r.reward << "," << r.matched_pattern << ","
          << (std::isnan(r.exact) ? "" : (std::ostringstream() << std::setprecision(12) << r.exact).str()) << "\n";
      if (!std::isnan(r.exact)) {
        ++audited;
        if (r.beta > r.exact + 1e-6 && audit_failure.empty()) audit_failure = "B/J " + std::to_string(b) + " " + r.label + ": beta exceeds the exact ground energy";
      }
      if (r.label == "optimum") std::cout << "B/J=" << b << " optimum " << r.state << (r.matched_pattern.empty() ? "" : " (pattern " + r.matched_pattern + ")") << "\n";
    }
  }
  log(c, "audit: " + std::to_string(audited) + " bounds checked against exact diagonalization");
  if (!audit_failure.empty()) throw AuditFailure("certificate audit failed: " + audit_failure);
  return kOk;
}

int cmd_transfer(const Common& c) {
  const Json root = load_config(c);
  TransferOptions o;
  o.n = detail::get_or<int>(root, "n", 6);
  o.J = detail::get_or<double>(root, "J", 1.0);
  const PoolSpec spec = parse_pool_spec(root);
  o.budget = spec.budget(o.n);
  o.geometry = spec.geometry;
  o.max_body = spec.max_body;
  o.source_b = detail::get_or<double>(root, "source_b", o.source_b);
  o.targets = parse_grid(root, "targets", o.targets);
  o.episode_length = detail::get_or<int>(root, "episode_length", 0);
  o.source_episodes = detail::get_or<int>(root, "source_episodes", o.source_episodes);
  o.max_episodes = detail::get_or<int>(root, "max_episodes", o.max_episodes);
  o.d = detail::get_or<double>(root, "d", 2.0);
  o.dqn = parse_dqn_config(root, o.n);
  o.seeds = parse_seeds(root, c.seed.value_or(1), 20);
  o.threads = detail::get_or<unsigned>(root, "threads", default_threads());
  o.relaxation = parse_relaxation_options(root);
  if (o.source_episodes < 1 || o.max_episodes < 1) throw ValidationError("episode counts must be >= 1");
  const fs::path dir = out_dir(c);

  const auto rows = run_transfer(o);
  auto csv = open_out(dir / "transfer.csv");
  csv << "target_b,seeds,mean_t0,mean_ttl,ratio_of_means,mean_of_ratios,censored_t0,censored_ttl\n";
  auto jl = open_out(dir / "transfer.jsonl");
  for (const auto& r : rows) {
    csv << r.target_b << "," << r.seeds << "," << r.mean_t0 << "," << r.mean_ttl << "," << r.ratio_of_means << "," << r.mean_of_ratios << "," << r.censored_t0
        << "," << r.censored_ttl << "\n";
    for (std::size_t i = 0; i < r.t0.size(); ++i)
      jl << Json{{"source_b", o.source_b}, {"target_b", r.target_b}, {"seed", o.seeds[i]}, {"t0", r.t0[i]}, {"t_tl", r.ttl[i]}}.dump() << "\n";
    std::cout << "B/J " << o.source_b << " -> " << r.target_b << ": t_TL/t_0 = " << r.ratio_of_means << " (mean t0 " << r.mean_t0 << ", mean t_TL "
              << r.mean_ttl << ")\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certified ground-state lower bounds from marginal relaxations"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON configuration file");
    sub->add_option("--seed", common.seed, "base random seed");
    sub->add_option("--out", common.out, "output directory")->capture_default_str();
    sub->add_flag("--verbose", common.verbose, "progress on stderr; SDP iteration trace for solve");
  };
  std::function<int(const Common&)> handler;
  const std::vector<std::tuple<const char*, const char*, int (*)(const Common&)>> subs{
      {"solve", "bound for one constraint set", cmd_solve},
      {"optimize", "search the constraint space with one agent", cmd_optimize},
      {"benchmark", "seed ensemble of rl, mc and bfs", cmd_benchmark},
      {"scan", "canonical patterns and the optimum over a B/J grid", cmd_scan},
      {"transfer", "warm-started training across field values", cmd_transfer},
  };
  for (const auto& [name, help, fn] : subs) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub);
    sub->callback([&handler, fn = fn] { handler = fn; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }
  try {
    return handler(common);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const Json::exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kValidation;
  } catch (const AuditFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSolver;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kSolver;
  } catch (const TrainingError& e) {
    std::cerr << "training failure: " << e.what() << "\n";
    return kSolver;
  }
}
