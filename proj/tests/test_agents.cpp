#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "test_util.hpp"

using namespace qcert;

namespace {

Environment make_env(int n, double B, BudgetPreset preset = BudgetPreset::HalfThreeBody) {
  auto cache = std::make_shared<BoundCache>(build_xx(n, 1.0, B), RelaxationOptions{});
  EpisodeConfig cfg;
  cfg.length = episode_length_for(preset, n);
  return Environment(candidate_pool(n, budget_for(preset, n), Geometry::Ring, 3), cache, cfg);
}

RewardLedger unit_ledger() {
  RewardLedger L;
  L.beta_max = -1.0;
  L.beta_min = -2.0;
  L.p_best = L.p_worst = 10;
  return L;
}

QNetwork linear_net(const Vector& bias) {
  QNetwork net({1, static_cast<int>(bias.size())});
  net.bias(0) = bias;
  return net;
}

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / ("qcert_test_" + name); }

}  // namespace

TEST(QNetwork, StandardShape) {
  EXPECT_EQ(QNetwork::standard_dims(12), (std::vector<int>{12, 36, 26, 26, 13}));
  QNetwork net(QNetwork::standard_dims(4));
  EXPECT_EQ(net.num_parameters(), static_cast<std::size_t>(4 * 12 + 12 + 12 * 10 + 10 + 10 * 10 + 10 + 10 * 5 + 5));
  EXPECT_THROW(QNetwork({3}), ValidationError);
}

TEST(QNetwork, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(53);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const int s = 2 + trial % 5;
    QNetwork net(QNetwork::standard_dims(s));
    net.init_uniform(rng);
    const int B = 3;
    Matrix in(s, B);
    for (Eigen::Index k = 0; k < in.size(); ++k) in.data()[k] = nd(rng);
    std::vector<int> actions;
    Vector targets(B);
    for (int j = 0; j < B; ++j) {
      actions.push_back(std::uniform_int_distribution<int>(0, s)(rng));
      targets[j] = nd(rng);
    }
    Vector grad;
    net.loss_and_gradient(in, actions, targets, &grad);
    const Vector p0 = net.parameters();
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < p0.size(); ++k) {
      Vector p = p0;
      p[k] += h;
      net.set_parameters(p);
      const double up = net.loss_and_gradient(in, actions, targets, nullptr);
      p[k] -= 2 * h;
      net.set_parameters(p);
      const double down = net.loss_and_gradient(in, actions, targets, nullptr);
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[k]) / std::max(1.0, std::abs(grad[k])));
    }
    net.set_parameters(p0);
    EXPECT_LE(worst, 1e-4) << "trial " << trial;
  }
}

TEST(Exploration, ScheduleValues) {
  for (double delta : {0.5, 0.95}) {
    ExplorationSchedule s;
    s.delta = delta;
    for (int e = 0; e <= 100; ++e) EXPECT_DOUBLE_EQ(s.epsilon(e), std::max(0.1, std::pow(delta, e) * 0.9)) << e;
  }
  EXPECT_EQ(exploration_decay_for(7), 0.5);
  EXPECT_EQ(exploration_decay_for(8), 0.95);
  ExplorationSchedule bad;
  bad.delta = 1.0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(ReplayBuffer, RingAndSampling) {
  ReplayBuffer<int> buf(5);
  for (int i = 0; i < 8; ++i) buf.push(i);
  EXPECT_EQ(buf.size(), 5u);
  std::mt19937_64 rng(59);
  const auto s = buf.sample(5, rng);
  std::set<int> got;
  for (const int* p : s) got.insert(*p);
  EXPECT_EQ(got, (std::set<int>{3, 4, 5, 6, 7}));
  EXPECT_THROW(buf.sample(6, rng), ValidationError);
  EXPECT_THROW(ReplayBuffer<int>(0), ValidationError);
}

TEST(DoubleDqn, TargetsUseOnlineArgmaxAndTargetValue) {
  Vector ob(3), tb(3);
  ob << 1.0, 3.0, 2.0;
  tb << 10.0, 20.0, 30.0;
  const QNetwork online = linear_net(ob), target = linear_net(tb);
  const auto L = unit_ledger();
  Transition full{{0}, 0, -1.0, 10, {1}, {1, 1, 1}};
  Transition masked{{0}, 0, -1.5, 10, {1}, {1, 0, 1}};
  Transition dead{{0}, 0, -1.0, 10, {1}, {0, 0, 0}};
  const auto t = double_dqn_targets(online, target, {&full, &masked, &dead}, L, 0.9);
  EXPECT_DOUBLE_EQ(t[0], 1.0 + 0.9 * 20.0);
  EXPECT_DOUBLE_EQ(t[1], 0.25 + 0.9 * 30.0);
  EXPECT_DOUBLE_EQ(t[2], 1.0);
  const auto t0 = double_dqn_targets(online, target, {&full}, L, 0.0);
  EXPECT_DOUBLE_EQ(t0[0], 1.0);
}

TEST(SelectAction, MaskingAndEpsilon) {
  Vector b(4);
  b << 5.0, 1.0, 4.0, 0.0;
  const QNetwork net = linear_net(b);
  std::mt19937_64 rng(61);
  EXPECT_EQ(select_action(net, {0}, {1, 1, 1, 1}, 0.0, rng), 0);
  EXPECT_EQ(select_action(net, {0}, {0, 1, 1, 1}, 0.0, rng), 2);
  std::vector<int> counts(4, 0);
  for (int k = 0; k < 4000; ++k) ++counts[select_action(net, {0}, {0, 1, 0, 1}, 1.0, rng)];
  EXPECT_EQ(counts[0] + counts[2], 0);
  EXPECT_NEAR(counts[1] / 4000.0, 0.5, 0.05);
  EXPECT_THROW(select_action(net, {0}, {0, 0, 0, 0}, 0.5, rng), ValidationError);
}

TEST(DqnTraining, RegressesToZeroReward) {
  std::mt19937_64 rng(67);
  QNetwork online(QNetwork::standard_dims(3));
  online.init_uniform(rng);
  QNetwork target = online;
  Adam opt(online.num_parameters(), 5e-3);
  std::vector<Transition> data;
  for (int a = 0; a < 4; ++a) data.push_back({{1, 0, 1}, a, -std::numeric_limits<double>::infinity(), 10, {0, 1, 0}, {1, 1, 1, 1}});
  std::vector<const Transition*> batch;
  for (const auto& t : data) batch.push_back(&t);
  for (int k = 0; k < 1500; ++k) dqn_train_step(online, target, opt, batch, unit_ledger(), 0.0);
  const Vector q = online.forward(bits_to_vector({1, 0, 1}));
  for (int a = 0; a < 4; ++a) EXPECT_NEAR(q[a], 0.0, 1e-3);
}

TEST(DqnTraining, ReachesBellmanFixedPoint) {
  std::mt19937_64 rng(71);
  QNetwork online(QNetwork::standard_dims(2));
  online.init_uniform(rng);
  QNetwork target = online;
  Adam opt(online.num_parameters(), 5e-3);
  // a self-loop with reward 1 and one legal action: Q = 1 / (1 - 0.5)
  const Transition loop{{1, 0}, 0, -1.0, 10, {1, 0}, {1, 0, 0}};
  for (int k = 0; k < 4000; ++k) {
    dqn_train_step(online, target, opt, {&loop}, unit_ledger(), 0.5);
    if (k % 20 == 19) target = online;
  }
  EXPECT_NEAR(online.forward(bits_to_vector({1, 0}))[0], 2.0, 0.02);
}

TEST(DqnAgent, ShortTrainingRunIsFiniteAndLogged) {
  auto env = make_env(4, 1.0);
  DqnConfig cfg;
  cfg.episodes = 15;
  cfg.seed = 3;
  DqnAgent agent(static_cast<int>(env.pool().size()), cfg);
  const auto log = agent.train(env, true);
  EXPECT_EQ(log.episodes_run, 15);
  EXPECT_EQ(log.eval_reward.size(), 15u);
  EXPECT_EQ(log.steps.size(), 15u * static_cast<std::size_t>(env.config().length));
  EXPECT_FALSE(log.loss.empty());
  for (double l : log.loss) EXPECT_TRUE(std::isfinite(l));
  EXPECT_TRUE(agent.online().finite());
}

TEST(DqnAgent, SameSeedSameTrajectory) {
  auto run = [] {
    auto env = make_env(4, 0.5);
    DqnConfig cfg;
    cfg.episodes = 8;
    cfg.seed = 11;
    DqnAgent agent(static_cast<int>(env.pool().size()), cfg);
    return agent.train(env).eval_state;
  };
  EXPECT_EQ(run(), run());
}

TEST(DqnAgent, TransferRequiresMatchingStateSize) {
  auto small = make_env(4, 1.0);
  auto big = make_env(5, 1.0);
  DqnConfig cfg;
  cfg.episodes = 1;
  DqnAgent agent(static_cast<int>(small.pool().size()), cfg);
  EXPECT_THROW(transfer(agent, big, cfg), ValidationError);
  auto same = make_env(4, 2.0);
  const auto copy = transfer(agent, same, cfg);
  EXPECT_EQ(copy.online().parameters(), agent.online().parameters());
}

TEST(Weights, SaveLoadRoundTrip) {
  std::mt19937_64 rng(73);
  QNetwork net(QNetwork::standard_dims(6));
  net.init_uniform(rng);
  const auto path = temp_file("weights.bin");
  save_weights(path.string(), net, {{"n", 6}});
  nlohmann::json header;
  const auto back = load_weights(path.string(), &header);
  EXPECT_EQ(back.dims(), net.dims());
  EXPECT_EQ(back.parameters(), net.parameters());
  EXPECT_EQ(header.at("n"), 6);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  EXPECT_THROW(load_weights(path.string()), ValidationError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_weights(path.string()), ValidationError);
}

TEST(Metropolis, AcceptanceExamples) {
  EXPECT_DOUBLE_EQ(metropolis_acceptance(0.5, 0.2, 0.084), 1.0);
  EXPECT_DOUBLE_EQ(metropolis_acceptance(0.3, 0.3, 0.084), 1.0);
  EXPECT_NEAR(metropolis_acceptance(0.0, 0.084, 0.084), std::exp(-1.0), 1e-15);
  EXPECT_THROW(metropolis_acceptance(0.0, 0.0, 0.0), ValidationError);
}

TEST(Metropolis, TwoStateOccupationRatio) {
  const double r[2] = {0.0, 0.1}, T = 0.084;
  std::mt19937_64 rng(79);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int state = 0;
  long occupied[2] = {0, 0};
  for (int k = 0; k < 100000; ++k) {
    const int other = 1 - state;
    if (u(rng) < metropolis_acceptance(r[other], r[state], T)) state = other;
    ++occupied[state];
  }
  const double ratio = static_cast<double>(occupied[1]) / static_cast<double>(occupied[0]);
  EXPECT_NEAR(ratio / std::exp((r[1] - r[0]) / T), 1.0, 0.05);
}

TEST(Bfs, VisitsEveryReachableStateOnce) {
  auto env = make_env(4, 1.0);
  std::mt19937_64 rng(83);
  SearchOptions o;
  o.max_states = 100000;
  const auto res = bfs_search(env, o, rng);
  EXPECT_EQ(res.unique_states, 42u);
  EXPECT_EQ(res.steps, 41u);
  EXPECT_EQ(env.visits().size(), 42u);
  EXPECT_EQ(env.cache()->misses(), 42u);
}

TEST(Bfs, StateLimit) {
  auto env = make_env(5, 1.0);
  std::mt19937_64 rng(89);
  SearchOptions o;
  o.max_states = 1;
  EXPECT_EQ(bfs_search(env, o, rng).unique_states, 1u);
  o.max_states = 0;
  EXPECT_THROW(bfs_search(env, o, rng), ValidationError);
}

TEST(Mc, ReproducibleAndBounded) {
  auto run = [](std::uint64_t seed) {
    auto env = make_env(5, 1.0);
    std::mt19937_64 rng(seed);
    SearchOptions o;
    o.max_states = 30;
    const auto res = mc_search(env, McConfig{}, o, rng);
    EXPECT_LE(res.unique_states, 30u);
    std::vector<std::string> keys;
    for (const auto& v : env.visits()) keys.push_back(v.key);
    return keys;
  };
  EXPECT_EQ(run(7), run(7));
  EXPECT_NE(run(7), run(8));
}

TEST(Mc, BestStateCarriesTheTopBound) {
  auto env = make_env(4, 1.0);
  std::mt19937_64 rng(97);
  SearchOptions o;
  o.max_states = 42;
  const auto res = mc_search(env, McConfig{}, o, rng);
  EXPECT_GE(res.best_reward, 0.0);
  EXPECT_LE(res.best_reward, 1.0);
  EXPECT_NEAR(res.best_bound.beta, env.ledger().beta_max, 1e-7);
}
