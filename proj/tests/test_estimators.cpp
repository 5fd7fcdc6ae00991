#include <gtest/gtest.h>

#include <cmath>

#include "hyperinf/estimators.hpp"
#include "oracles.hpp"

using namespace hyperinf;

namespace {

GradientDump single_block(std::vector<DenseMatrix> train, DenseMatrix val) {
  GradientDump dump;
  const std::size_t d = val.rows(), r = val.cols();
  dump.blocks = {{"w", d, r}};
  dump.train_grads.resize(1);
  for (std::size_t k = 0; k < train.size(); ++k) {
    dump.train_grads[0].push_back({"w", std::move(train[k]), false});
    dump.example_ids.push_back(std::to_string(k));
  }
  dump.val_grads = {{"w", std::move(val), false}};
  return dump;
}

double l2_scale(const Vector& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

IterationConfig schulz_cfg(std::size_t iters = 25) {
  IterationConfig c;
  c.max_iters = iters;
  return c;
}

HyperinfOptions exact_inverter() { return {Inverter::Exact, false}; }

}  // namespace

TEST(GradientDump, ValidateCatchesInconsistency) {
  GradientDump dump = oracle::random_dump(4, 2, 3, 2, 1);
  EXPECT_NO_THROW(dump.validate());
  GradientDump missing = dump;
  missing.val_grads.pop_back();
  EXPECT_THROW(missing.validate(), DataError);
  GradientDump shape = dump;
  shape.train_grads[1][2].values = DenseMatrix(3, 1);
  EXPECT_THROW(shape.validate(), DataError);
  GradientDump count = dump;
  count.train_grads[0].pop_back();
  EXPECT_THROW(count.validate(), DataError);
  GradientDump dup = dump;
  dup.blocks[1].name = dup.blocks[0].name;
  EXPECT_THROW(dup.validate(), DataError);
}

TEST(Damping, PerBlockAndFixed) {
  const GradientDump dump = oracle::random_dump(5, 1, 4, 2, 2);
  EXPECT_DOUBLE_EQ(Damping::per_block().for_block(dump.train_grads[0]), oracle::naive_damping(dump.train_grads[0]));
  EXPECT_EQ(Damping::fixed(0.25).for_block(dump.train_grads[0]), 0.25);
  EXPECT_THROW(Damping::fixed(0.0), InvalidArgument);
  const GradientDump zero = single_block({DenseMatrix(3, 1)}, DenseMatrix(3, 1));
  EXPECT_EQ(Damping::per_block().for_block(zero.train_grads[0]), kDampingFloor);
}

TEST(ScoreExact, IdentityCurvatureGivesNegativeInnerProducts) {
  // FIM of {e1, e2} is 0.5 I; with lambda 0.5 the damped curvature is I.
  const GradientDump dump = single_block({DenseMatrix{{1}, {0}}, DenseMatrix{{0}, {1}}}, DenseMatrix{{1}, {0}});
  const InfluenceReport r = score_exact(dump, Damping::fixed(0.5));
  EXPECT_NEAR(r.scores[0], -1.0, 1e-15);
  EXPECT_NEAR(r.scores[1], 0.0, 1e-15);
}

TEST(ScoreExact, MatchesBruteForceSolve) {
  const GradientDump dump = oracle::random_dump(20, 2, 8, 2, 3);
  const Vector ref = oracle::fim_scores(dump, true, 0.0);
  const InfluenceReport r = score_exact(dump, Damping::per_block());
  EXPECT_LT(oracle::max_rel_diff(r.scores, ref), 1e-10);
  EXPECT_EQ(r.block_damping.size(), 2u);
}

TEST(ScoreExact, CgAgreesWithLu) {
  const GradientDump dump = oracle::random_dump(30, 2, 6, 3, 4);
  const InfluenceReport lu = score_exact(dump, Damping::per_block(), ExactSolver::Lu);
  const InfluenceReport cg = score_exact(dump, Damping::per_block(), ExactSolver::Cg);
  EXPECT_LE(oracle::max_rel_diff(cg.scores, lu.scores), 1e-8);
}

TEST(ScoreExact, RefusesOversizedBlocks) {
  const GradientDump dump = single_block({DenseMatrix(10001, 1)}, DenseMatrix(10001, 1));
  EXPECT_THROW(score_exact(dump, Damping::fixed(1.0)), CapacityError);
}

TEST(ScoreHyperinf, KroneckerLiftOracle) {
  const GradientDump dump = oracle::random_dump(20, 3, 16, 2, 5, 0.3);
  const Vector ref = oracle::kron_lift_scores(dump, true, 0.0);
  const InfluenceReport exact = score_hyperinf(dump, schulz_cfg(), Damping::per_block(), exact_inverter());
  EXPECT_LT(oracle::max_rel_diff(exact.scores, ref), 1e-10);
  const InfluenceReport schulz = score_hyperinf(dump, schulz_cfg(), Damping::per_block());
  EXPECT_TRUE(schulz.warnings.empty());
  EXPECT_LT(oracle::max_rel_diff(schulz.scores, ref), 1e-6);
}

TEST(ScoreHyperinf, RankOneBlocksMatchExact) {
  const GradientDump dump = oracle::random_dump(15, 2, 10, 1, 6, 0.3);
  const InfluenceReport ref = score_exact(dump, Damping::per_block());
  const InfluenceReport ex = score_hyperinf(dump, schulz_cfg(), Damping::per_block(), exact_inverter());
  EXPECT_LT(oracle::max_rel_diff(ex.scores, ref.scores), 1e-10);
  const InfluenceReport sz = score_hyperinf(dump, schulz_cfg(), Damping::per_block());
  EXPECT_LT(oracle::max_rel_diff(sz.scores, ref.scores), 1e-6);
}

TEST(ScoreHyperinf, FlattenFirstMatchesExact) {
  const GradientDump dump = oracle::random_dump(12, 2, 5, 3, 7, 0.3);
  const InfluenceReport ref = score_exact(dump, Damping::per_block());
  const InfluenceReport fim = score_hyperinf(dump, schulz_cfg(), Damping::per_block(), {Inverter::Exact, true});
  EXPECT_EQ(fim.estimator, "hyperinf_fim");
  EXPECT_LT(oracle::max_rel_diff(fim.scores, ref.scores), 1e-10);
}

TEST(ScoreHyperinf, WarnsOnNonConvergence) {
  const GradientDump dump = oracle::random_dump(10, 1, 8, 2, 8, 0.3);
  const InfluenceReport r = score_hyperinf(dump, schulz_cfg(3), Damping::per_block());
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("residual"), std::string::npos);
  EXPECT_EQ(r.size(), 10u);
}

TEST(ScoreHyperinf, PeakStorageIndependentOfRank) {
  std::vector<std::size_t> gfim, fim;
  for (std::size_t r : {1u, 4u, 16u}) {
    const GradientDump dump = oracle::random_dump(8, 1, 64, r, 9, 0.1);
    gfim.push_back(score_hyperinf(dump, schulz_cfg(), Damping::per_block()).peak_curvature_elements);
    fim.push_back(score_hyperinf(dump, schulz_cfg(), Damping::per_block(), {Inverter::Schulz, true}).peak_curvature_elements);
  }
  EXPECT_EQ(gfim[0], gfim[1]);
  EXPECT_EQ(gfim[1], gfim[2]);
  EXPECT_EQ(fim[1], 16 * fim[0]);
  EXPECT_EQ(fim[2], 256 * fim[0]);
}

TEST(ScoreDatainf, SingleExampleIsShermanMorrisonExact) {
  const GradientDump dump = oracle::random_dump(1, 2, 6, 2, 10);
  const InfluenceReport di = score_datainf(dump, Damping::fixed(0.3));
  const InfluenceReport ex = score_exact(dump, Damping::fixed(0.3));
  EXPECT_LT(oracle::max_rel_diff(di.scores, ex.scores), 1e-12);
}

TEST(ScoreDatainf, ZeroGradientsScoreZero) {
  const GradientDump dump = single_block({DenseMatrix(4, 2), DenseMatrix(4, 2)}, oracle::random_matrix(4, 2, 11));
  const InfluenceReport r = score_datainf(dump, Damping::fixed(0.1));
  for (double s : r.scores) EXPECT_EQ(s, 0.0);
}

TEST(ScoreDatainf, MatchesDenseMaterialization) {
  const GradientDump dump = oracle::random_dump(50, 2, 8, 2, 12);
  const InfluenceReport r = score_datainf(dump, Damping::per_block());
  Vector ref(50, 0.0);
  for (std::size_t l = 0; l < 2; ++l) {
    // (1/(n lambda)) sum_i (I - g_i g_i^T / (lambda + g_i^T g_i)), built entry by entry.
    const auto& grads = dump.train_grads[l];
    const double lam = oracle::naive_damping(grads);
    const std::size_t p = 16;
    DenseMatrix h(p, p);
    for (const auto& g : grads) {
      const Vector v = oracle::flatten(g.values);
      const double denom = lam + oracle::naive_dot(v, v);
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) h(i, j) += ((i == j ? 1.0 : 0.0) - v[i] * v[j] / denom) / (50.0 * lam);
    }
    EXPECT_LT(oracle::frob_diff(datainf_dense_inverse(grads, lam), h), 1e-10 * oracle::frob(h));
    const Vector w = oracle::naive_matvec(h, oracle::flatten(dump.val_grads[l].values));
    for (std::size_t k = 0; k < 50; ++k) ref[k] -= oracle::naive_dot(w, oracle::flatten(grads[k].values));
  }
  EXPECT_LT(oracle::max_rel_diff(r.scores, ref), 1e-10);
}

TEST(ScoreLissa, IdentityCurvatureIsTracin) {
  const GradientDump dump = single_block({DenseMatrix(3, 1), DenseMatrix(3, 1)}, oracle::random_matrix(3, 1, 13));
  const InfluenceReport r = score_lissa(dump, 10, Damping::fixed(1.0));
  for (double s : r.scores) EXPECT_EQ(s, 0.0);
  EXPECT_FALSE(r.diverged);
}

TEST(ScoreLissa, HalfIdentityApproachesGeometricLimit) {
  const GradientDump dump = oracle::orthogonal_dump(20, 3, 16, 2, 0.5, 14);
  const InfluenceReport r = score_lissa(dump, 10, Damping::fixed(1e-12));
  const InfluenceReport tracin = score_tracin(dump);
  Vector limit(tracin.scores);
  for (double& s : limit) s *= 2.0;
  EXPECT_LT(oracle::max_rel_diff(r.scores, limit), 1e-3);
  EXPECT_FALSE(r.diverged);
}

TEST(ScoreLissa, FlagsDivergence) {
  const GradientDump dump = oracle::random_dump(10, 1, 8, 2, 15, 3.0);
  const InfluenceReport r = score_lissa(dump, 10, Damping::per_block());
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_EQ(r.size(), 10u);
}

TEST(ScoreTracin, InnerProducts) {
  const DenseMatrix v{{1, 2}, {3, 4}};
  const GradientDump dump = single_block({v, DenseMatrix{{-2, 1}, {0, 0}}}, v);
  const InfluenceReport r = score_tracin(dump);
  EXPECT_EQ(r.scores[0], -30.0);
  EXPECT_EQ(r.scores[1], 0.0);
}

TEST(ScoreTracin, MatchesFlatDotLoop) {
  const GradientDump dump = oracle::random_dump(9, 3, 5, 2, 16);
  const InfluenceReport r = score_tracin(dump);
  for (std::size_t k = 0; k < 9; ++k) {
    double s = 0.0;
    for (std::size_t l = 0; l < 3; ++l)
      s -= oracle::naive_dot(oracle::flatten(dump.val_grads[l].values), oracle::flatten(dump.train_grads[l][k].values));
    EXPECT_NEAR(r.scores[k], s, 1e-12);
  }
}

TEST(Estimators, AgreeAtIdentityCurvature) {
  // d x 1 blocks with n = d orthogonal gradients: GFIM = FIM = 0.5 I, and
  // lambda = 0.5 makes every damped curvature the identity.
  const GradientDump dump = oracle::orthogonal_dump(8, 2, 8, 1, 0.5, 17);
  EstimatorSettings s;
  s.damping = Damping::fixed(0.5);
  const Vector ref = run_estimator("tracin", dump, s).scores;
  for (const char* name : {"hyperinf", "hyperinf_fim", "lissa", "exact"})
    EXPECT_LT(oracle::max_rel_diff(run_estimator(name, dump, s).scores, ref), 1e-8) << name;
  s.inverter = Inverter::Exact;
  EXPECT_LT(oracle::max_rel_diff(run_estimator("hyperinf", dump, s).scores, ref), 1e-8);

  const GradientDump zero = single_block({DenseMatrix(4, 1), DenseMatrix(4, 1)}, oracle::random_matrix(4, 1, 18));
  s.damping = Damping::fixed(1.0);
  EXPECT_EQ(run_estimator("datainf", zero, s).scores, run_estimator("tracin", zero, s).scores);
}

TEST(Estimators, BlockAdditivity) {
  const GradientDump dump = oracle::random_dump(12, 3, 6, 2, 19, 0.3);
  for (const auto& name : estimator_names()) {
    const InfluenceReport r = run_estimator(name, dump, {});
    ASSERT_EQ(r.per_block_scores.rows(), 12u);
    ASSERT_EQ(r.per_block_scores.cols(), 3u);
    for (std::size_t k = 0; k < 12; ++k) {
      const double sum = r.per_block_scores(k, 0) + r.per_block_scores(k, 1) + r.per_block_scores(k, 2);
      EXPECT_NEAR(r.scores[k], sum, 1e-10 * std::max(1.0, std::fabs(sum))) << name;
    }
  }
}

TEST(Estimators, PositiveScalingOfValidationGradient) {
  const GradientDump dump = oracle::random_dump(15, 2, 6, 2, 20, 0.3);
  GradientDump scaled = dump;
  for (auto& v : scaled.val_grads) v.values = scale(v.values, 3.5);
  for (const auto& name : estimator_names()) {
    const InfluenceReport a = run_estimator(name, dump, {}), b = run_estimator(name, scaled, {});
    EXPECT_EQ(a.ranking_ascending, b.ranking_ascending) << name;
    for (std::size_t k = 0; k < 15; ++k)
      EXPECT_NEAR(b.scores[k], 3.5 * a.scores[k], 1e-10 * std::max(1.0, l2_scale(b.scores))) << name;
  }
}

TEST(Estimators, Deterministic) {
  const GradientDump dump = oracle::random_dump(10, 2, 5, 2, 21);
  for (const auto& name : estimator_names()) EXPECT_EQ(run_estimator(name, dump, {}).scores, run_estimator(name, dump, {}).scores);
  EXPECT_THROW(run_estimator("influence", dump, {}), InvalidArgument);
}

TEST(Estimators, ConfigEcho) {
  const GradientDump dump = oracle::random_dump(4, 1, 3, 1, 22);
  const InfluenceReport r = score_hyperinf(dump, schulz_cfg(17), Damping::fixed(0.2));
  EXPECT_EQ(r.config["max_iters"], 17);
  EXPECT_EQ(r.config["damping"]["mode"], "fixed");
  EXPECT_EQ(r.config["damping"]["lambda"], 0.2);
  EXPECT_EQ(r.example_ids, dump.example_ids);
}

TEST(Ranking, AscendingStableWithNanLast) {
  InfluenceReport r;
  r.scores = {2.0, NAN, -1.0, 2.0, -1.0};
  r.example_ids = {"a", "b", "c", "d", "e"};
  EXPECT_EQ(rank_examples(r, RankMode::MostHelpful, 100), (std::vector<std::size_t>{2, 4, 0, 3, 1}));
  EXPECT_EQ(rank_examples(r, RankMode::MostHarmful, 100), (std::vector<std::size_t>{0, 3, 2, 4, 1}));
}

TEST(Ranking, PrefixSizeUsesCeiling) {
  InfluenceReport r;
  r.scores = {-3.0, -1.0, 2.0};
  EXPECT_EQ(rank_examples(r, RankMode::MostHelpful, 33.4), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(rank_examples(r, RankMode::MostHarmful, 33.4), (std::vector<std::size_t>{2, 1}));
  EXPECT_EQ(rank_examples(r, RankMode::MostHelpful, 100.0 / 3.0).size(), 1u);
  EXPECT_THROW(rank_examples(r, RankMode::MostHelpful, 0.0), InvalidArgument);
  EXPECT_THROW(rank_examples(r, RankMode::MostHelpful, 101.0), InvalidArgument);
  EXPECT_TRUE(rank_examples(InfluenceReport{}, RankMode::MostHelpful, 50).empty());
}

TEST(Ranking, TiesFollowIndex) {
  InfluenceReport r;
  r.scores = Vector(6, 0.5);
  EXPECT_EQ(rank_examples(r, RankMode::MostHelpful, 50), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(rank_examples(r, RankMode::MostHarmful, 50), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Ranking, MatchesFullSortPrefix) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> normal;
  InfluenceReport r;
  for (int i = 0; i < 57; ++i) r.scores.push_back(normal(rng));
  std::vector<std::size_t> idx(57);
  for (std::size_t i = 0; i < 57; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return r.scores[a] < r.scores[b]; });
  idx.resize(23);  // ceil(0.4 * 57)
  EXPECT_EQ(rank_examples(r, RankMode::MostHelpful, 40), idx);
}

TEST(Ranking, ReportRankingIsPermutation) {
  const GradientDump dump = oracle::random_dump(25, 1, 4, 2, 24);
  const InfluenceReport r = score_tracin(dump);
  std::vector<std::size_t> sorted = r.ranking_ascending;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(sorted[i], i);
  for (std::size_t i = 1; i < 25; ++i) EXPECT_LE(r.scores[r.ranking_ascending[i - 1]], r.scores[r.ranking_ascending[i]]);
}
