#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "test_util.hpp"

using namespace qcert;

namespace {

SparseSym sparse(const Matrix& m) { return m.sparseView(); }

SdpConstraint entry(int block, int dim, int r, int c, double v, double rhs) {
  Matrix a = Matrix::Zero(dim, dim);
  a(r, c) = v;
  a(c, r) = v;
  return {{{block, sparse(a)}}, rhs};
}

SdpConstraint trace_row(int block, int dim, double rhs) { return {{{block, sparse(Matrix::Identity(dim, dim))}}, rhs}; }

SdpProblem single_block(const Matrix& C, std::vector<SdpConstraint> rows) {
  SdpProblem p;
  p.block_dims = {static_cast<int>(C.rows())};
  p.objective = {C};
  p.constraints = std::move(rows);
  return p;
}

SdpProblem load_problem(const std::string& name) {
  std::ifstream is(std::string(QCERT_TEST_DATA) + "/sdp/" + name);
  if (!is) throw std::runtime_error("missing " + name);
  return read_dump(is);
}

}  // namespace

TEST(SdpSolver, TraceWithFixedCorner) {
  const auto p = single_block(Matrix::Identity(2, 2), {entry(0, 2, 0, 0, 1.0, 1.0)});
  const auto s = solve(p);
  ASSERT_NE(s.status, SolveStatus::Failed);
  EXPECT_NEAR(s.primal_obj, 1.0, 1e-6);
  EXPECT_NEAR(s.dual_obj, 1.0, 1e-6);
}

TEST(SdpSolver, MinimumEigenvalueProblem) {
  Matrix C = Matrix::Zero(2, 2);
  C(0, 0) = 1.0;
  C(1, 1) = -1.0;
  const auto s = solve(single_block(C, {trace_row(0, 2, 1.0)}));
  ASSERT_NE(s.status, SolveStatus::Failed);
  EXPECT_NEAR(s.primal_obj, -1.0, 1e-6);
  EXPECT_NEAR(s.X[0](1, 1), 1.0, 1e-5);
}

TEST(SdpSolver, ScalingCovariance) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  Matrix G(4, 4);
  for (int i = 0; i < 16; ++i) G.data()[i] = nd(rng);
  const Matrix C = 0.5 * (G + G.transpose());
  const auto base = solve(single_block(C, {trace_row(0, 4, 1.0), entry(0, 4, 0, 1, 1.0, 0.2)}));
  const auto scaled_c = solve(single_block(3.0 * C, {trace_row(0, 4, 1.0), entry(0, 4, 0, 1, 1.0, 0.2)}));
  const auto scaled_b = solve(single_block(C, {trace_row(0, 4, 2.0), entry(0, 4, 0, 1, 1.0, 0.4)}));
  EXPECT_NEAR(scaled_c.primal_obj, 3.0 * base.primal_obj, 1e-6);
  EXPECT_NEAR(scaled_b.primal_obj, 2.0 * base.primal_obj, 1e-6);
  // the minimum of a trace-one problem is the smallest eigenvalue when unconstrained otherwise
  const auto eig = solve(single_block(C, {trace_row(0, 4, 1.0)}));
  EXPECT_NEAR(eig.primal_obj, min_eigenvalue(C), 1e-6);
}

TEST(SdpSolver, BlocksAreIndependent) {
  Matrix C1 = Matrix::Zero(2, 2);
  C1(0, 0) = 2.0;
  C1(1, 1) = -0.5;
  Matrix C2 = Matrix::Ones(3, 3);
  SdpProblem p;
  p.block_dims = {2, 3};
  p.objective = {C1, C2};
  p.constraints = {trace_row(0, 2, 1.0), trace_row(1, 3, 2.0)};
  const auto joint = solve(p);
  const auto a = solve(single_block(C1, {trace_row(0, 2, 1.0)}));
  const auto b = solve(single_block(C2, {trace_row(0, 3, 2.0)}));
  EXPECT_NEAR(joint.primal_obj, a.primal_obj + b.primal_obj, 1e-6);
  EXPECT_NEAR(joint.primal_obj, -0.5 + 0.0, 1e-6);
}

TEST(SdpSolver, DualityGapAndCertificate) {
  const auto p = load_problem("problem_13.dat");
  const auto s = solve(p);
  ASSERT_NE(s.status, SolveStatus::Failed);
  const auto Z = dual_slack(p, s.y);
  EXPECT_GE(inner(s.X, Z), -1e-6);
  for (const auto& z : Z) EXPECT_TRUE(min_eig_check(z, 1e-6));
  EXPECT_LE(std::abs(s.gap), 1e-6 * (1.0 + std::abs(s.primal_obj)));
}

TEST(SdpSolver, MultiBlockProblemsMatchReference) {
  const auto ref = qcert::testing::load_data_json("sdp/reference.json");
  int checked = 0;
  for (const auto& [name, info] : ref.items()) {
    if (info["dims"].size() != 3) continue;
    const auto s = solve(load_problem(name));
    ASSERT_NE(s.status, SolveStatus::Failed) << name;
    const double obj = info["objective"].get<double>();
    EXPECT_NEAR(s.primal_obj, obj, 1e-6 * std::max(1.0, std::abs(obj))) << name;
    if (++checked == 3) break;
  }
  EXPECT_EQ(checked, 3);
}

TEST(SdpSolver, RankDeficientConstraintsRejected) {
  const Matrix e00 = [] {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 1;
    return m;
  }();
  const Matrix e11 = Matrix::Identity(2, 2) - e00;
  auto p = single_block(Matrix::Identity(2, 2), {{{{0, sparse(e00)}}, 0.5}, {{{0, sparse(e11)}}, 0.5}, {{{0, sparse(Matrix::Identity(2, 2))}}, 1.0}});
  try {
    solve(p);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_NE(std::string(e.what()).find("rank-deficient"), std::string::npos);
  }
}

TEST(SdpSolver, DuplicateRows) {
  auto p = single_block(Matrix::Identity(2, 2), {trace_row(0, 2, 1.0), trace_row(0, 2, 1.0), entry(0, 2, 0, 0, 1.0, 0.25)});
  const auto s = solve(p);
  ASSERT_NE(s.status, SolveStatus::Failed);
  EXPECT_NEAR(s.primal_obj, 1.0, 1e-6);
  EXPECT_EQ(s.y.size(), 3);
  p.constraints[1].rhs = 2.0;
  EXPECT_THROW(solve(p), SolverError);
}

TEST(SdpSolver, ValidationErrors) {
  Matrix C = Matrix::Identity(2, 2);
  C(0, 1) = 1.0;
  EXPECT_THROW(solve(single_block(C, {trace_row(0, 2, 1.0)})), ValidationError);
  EXPECT_THROW(solve(single_block(Matrix::Identity(2, 2), {})), ValidationError);
  EXPECT_THROW(solve(single_block(Matrix::Identity(2, 2), {trace_row(1, 2, 1.0)})), ValidationError);
  EXPECT_THROW(solve(single_block(Matrix::Identity(2, 2), {trace_row(0, 3, 1.0)})), ValidationError);
}

TEST(SdpSolver, DumpRoundTrip) {
  const auto p = load_problem("problem_01.dat");
  std::ostringstream a;
  write_dump(a, p);
  std::istringstream in(a.str());
  const auto q = read_dump(in);
  std::ostringstream b;
  write_dump(b, q);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NEAR(solve(p).primal_obj, solve(q).primal_obj, 1e-12);
}

TEST(SdpSolver, DumpRejectsGarbage) {
  std::istringstream bad("qcert-sdp 2\nblocks 1\n2\n");
  EXPECT_THROW(read_dump(bad), ValidationError);
  std::istringstream truncated("qcert-sdp 1\nblocks 1\n2\nconstraints 1\nobjective\n0 0 0 1\n");
  EXPECT_THROW(read_dump(truncated), ValidationError);
}

TEST(SdpSolver, MinEigCheck) {
  EXPECT_TRUE(min_eig_check(Matrix::Identity(3, 3), 0.0));
  Matrix m = Matrix::Identity(2, 2);
  m(1, 1) = -1e-9;
  EXPECT_TRUE(min_eig_check(m, 1e-8));
  EXPECT_FALSE(min_eig_check(m, 1e-10));
  EXPECT_NEAR(min_eigenvalue(Matrix::Ones(2, 2)), 0.0, 1e-14);
}

TEST(SdpSolver, TraceCsvIsWritten) {
  std::ostringstream csv;
  SolverOptions o;
  o.trace_csv = &csv;
  const auto s = solve(single_block(Matrix::Identity(2, 2), {trace_row(0, 2, 1.0)}), o);
  const std::string text = csv.str();
  EXPECT_EQ(text.rfind("iter,", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), s.history.size() + 1);
}
