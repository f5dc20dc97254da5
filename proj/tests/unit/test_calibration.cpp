#include <cbctus/calibration.hpp>

#include <gtest/gtest.h>

#include <vector>

using namespace cbctus;

namespace {

struct Session {
  HandEyeRig rig;
  std::vector<AbsolutePoseSample> samples;
};

Session noise_free_session(std::uint64_t seed, std::size_t poses = 30) {
  Rng rng(seed);
  Session s;
  s.rig = {random_transform(rng, 1500.0), random_transform(rng, 100.0)};
  const auto flange = sample_poses_in_range(default_border_poses(), poses, derive_seed(seed, 1));
  s.samples = synthesize_session(flange, s.rig, {}, rng);
  return s;
}

Mat4 mat(const RigidTransform& t) { return t.matrix(); }

}  // namespace

TEST(BuildMotionPairs, TwoIdenticalSamplesGiveIdentityPair) {
  const RigidTransform t(Rotation::about_y(20.0), Vec3(1, 2, 3));
  const std::vector<AbsolutePoseSample> s{{t, t.inverse()}, {t, t.inverse()}};
  const auto pairs = build_motion_pairs(s);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_LT((mat(pairs[0].a) - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((mat(pairs[0].b) - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildMotionPairs, ThirtySamplesGiveTwentyNinePairs) {
  EXPECT_EQ(build_motion_pairs(noise_free_session(1).samples).size(), 29u);
}

TEST(BuildMotionPairs, AllPairsMode) {
  EXPECT_EQ(build_motion_pairs(noise_free_session(1, 6).samples, PairingMode::kAllPairs).size(), 15u);
}

TEST(BuildMotionPairs, NeedsTwoSamples) {
  const std::vector<AbsolutePoseSample> one(1);
  EXPECT_THROW(build_motion_pairs(one), InvalidInput);
}

TEST(BuildMotionPairs, GroupingMatchesHomogeneousProducts) {
  const Session s = noise_free_session(2, 8);
  const auto pairs = build_motion_pairs(s.samples);
  for (std::size_t i = 0; i + 1 < s.samples.size(); ++i) {
    const Mat4 a = mat(s.samples[i + 1].t_e_b).inverse() * mat(s.samples[i].t_e_b);
    const Mat4 b = mat(s.samples[i + 1].t_o_m) * mat(s.samples[i].t_o_m).inverse();
    EXPECT_LT((mat(pairs[i].a) - a).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((mat(pairs[i].b) - b).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(BuildMotionPairs, NoiseFreePairsSatisfyAXEqualsXB) {
  const Session s = noise_free_session(3);
  const Mat4 x = mat(s.rig.t_b_o);
  for (const auto& p : build_motion_pairs(s.samples)) {
    const Mat4 lhs = mat(p.a) * x;
    const Mat4 rhs = x * mat(p.b);
    EXPECT_LT((lhs.topLeftCorner<3, 3>() - rhs.topLeftCorner<3, 3>()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((lhs.topRightCorner<3, 1>() - rhs.topRightCorner<3, 1>()).norm(), 1e-9);
  }
}

TEST(BuildMotionPairs, SimilarPairsShareRotationAngle) {
  const Session s = noise_free_session(4);
  for (const auto& p : build_motion_pairs(s.samples))
    EXPECT_NEAR(rotation_angle(p.a.rotation()), rotation_angle(p.b.rotation()), 1e-9);
}

TEST(SolveTsaiLenz, RecoversRandomXExactly) {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const Session s = noise_free_session(seed);
    const auto sol = solve_tsai_lenz(build_motion_pairs(s.samples));
    const auto e = registration_error(sol.x, s.rig.t_b_o);
    EXPECT_LT(e.translation_mm, 1e-9) << "seed " << seed;
    EXPECT_LT(e.rotation_deg, 1e-9) << "seed " << seed;
    EXPECT_EQ(sol.pair_count, 29u);
  }
}

TEST(SolveTsaiLenz, ResidualsNoWorseThanTruth) {
  const Session s = noise_free_session(30);
  const auto pairs = build_motion_pairs(s.samples);
  const auto sol = solve_tsai_lenz(pairs);
  CalibrationSolution truth;
  truth.x = s.rig.t_b_o;
  fill_residuals(pairs, truth);
  EXPECT_LE(sol.rotation_residual_deg.max, truth.rotation_residual_deg.max + 1e-9);
  EXPECT_LE(sol.translation_residual_mm.max, truth.translation_residual_mm.max + 1e-9);
  EXPECT_GE(sol.rotation_residual_deg.mean, 0.0);
}

TEST(SolveTsaiLenz, SingleAxisIsDegenerate) {
  std::vector<AbsolutePoseSample> s;
  const HandEyeRig rig = default_rig();
  std::vector<RigidTransform> flange;
  for (int i = 0; i < 10; ++i)
    flange.emplace_back(Rotation::about_z(12.0 * i), Vec3(400.0 + 10.0 * i, 5.0 * i, 300.0));
  Rng rng(1);
  const auto samples = synthesize_session(flange, rig, {}, rng);
  EXPECT_THROW(solve_tsai_lenz(build_motion_pairs(samples)), DegenerateMotion);
}

TEST(SolveTsaiLenz, PureTranslationIsDegenerate) {
  std::vector<RigidTransform> flange;
  for (int i = 0; i < 6; ++i) flange.emplace_back(Rotation::about_x(180.0), Vec3(400.0 + 20.0 * i, 10.0 * i, 300.0));
  Rng rng(2);
  const auto samples = synthesize_session(flange, default_rig(), {}, rng);
  try {
    solve_tsai_lenz(build_motion_pairs(samples));
    FAIL();
  } catch (const DegenerateMotion& e) {
    EXPECT_NE(std::string(e.what()).find("min_rotation_deg"), std::string::npos);
  }
}

TEST(SolveTsaiLenz, DegenerateDiagnosticNamesThreshold) {
  std::vector<RigidTransform> flange;
  for (int i = 0; i < 5; ++i) flange.emplace_back(Rotation::about_y(20.0 * i), Vec3(0, 0, 10.0 * i));
  Rng rng(3);
  const auto samples = synthesize_session(flange, default_rig(), {}, rng);
  try {
    solve_tsai_lenz(build_motion_pairs(samples));
    FAIL();
  } catch (const DegenerateMotion& e) {
    EXPECT_NE(std::string(e.what()).find("min_axis_angle_deg"), std::string::npos);
  }
}

TEST(SolveTsaiLenz, NeedsTwoPairs) {
  const Session s = noise_free_session(5, 2);
  EXPECT_THROW(solve_tsai_lenz(build_motion_pairs(s.samples)), InvalidInput);
}

TEST(SolveTsaiLenz, SmallRotationPairsStillFeedTranslation) {
  Session s = noise_free_session(6, 12);
  // Duplicate a pose with a pure translation step between them.
  std::vector<RigidTransform> flange;
  for (const auto& smp : s.samples) flange.push_back(smp.t_e_b.inverse());
  flange.insert(flange.begin() + 3, RigidTransform(flange[2].rotation(), flange[2].translation() + Vec3(15, 0, 0)));
  Rng rng(7);
  const auto samples = synthesize_session(flange, s.rig, {}, rng);
  const auto sol = solve_tsai_lenz(build_motion_pairs(samples));
  EXPECT_EQ(sol.pair_count, 12u);
  EXPECT_EQ(sol.rotation_pairs_used, 11u);
  EXPECT_LT(registration_error(sol.x, s.rig.t_b_o).translation_mm, 1e-9);
}

TEST(SamplePosesInRange, IdenticalBordersCollapse) {
  const RigidTransform p(Rotation::about_x(170.0), Vec3(100, 200, 300));
  const std::vector<RigidTransform> border(4, p);
  for (const auto& q : sample_poses_in_range(border, 30, 1)) {
    const auto e = transform_error(q, p);
    EXPECT_EQ(e.translation_mm, 0.0);
    EXPECT_LT(e.rotation_deg, 1e-9);
  }
}

TEST(SamplePosesInRange, StaysInsideTheBox) {
  const auto border = default_border_poses();
  Vec3 lo = border[0].translation();
  Vec3 hi = lo;
  for (const auto& b : border) {
    lo = lo.cwiseMin(b.translation());
    hi = hi.cwiseMax(b.translation());
  }
  const auto poses = sample_poses_in_range(border, 30, 99);
  ASSERT_EQ(poses.size(), 30u);
  for (const auto& p : poses) {
    EXPECT_TRUE((p.translation().array() >= lo.array()).all());
    EXPECT_TRUE((p.translation().array() <= hi.array()).all());
    // Per-axis bounds of +-25 deg tilts relative to the first border pose
    // keep every sample within a modest geodesic distance of it.
    EXPECT_LT(rotation_distance(p.rotation(), border[0].rotation()), 90.0);
  }
}

TEST(SamplePosesInRange, DeterministicPerSeed) {
  const auto border = default_border_poses();
  const auto a = sample_poses_in_range(border, 30, 5);
  const auto b = sample_poses_in_range(border, 30, 5);
  const auto c = sample_poses_in_range(border, 30, 6);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].matrix(), b[i].matrix());
  EXPECT_NE(a[0].matrix(), c[0].matrix());
}

TEST(SamplePosesInRange, RejectsBadCounts) {
  const auto border = default_border_poses();
  EXPECT_THROW(sample_poses_in_range(std::span(border).first(3), 30, 1), InvalidInput);
  std::vector<RigidTransform> seven(7);
  EXPECT_THROW(sample_poses_in_range(seven, 30, 1), InvalidInput);
  EXPECT_THROW(sample_poses_in_range(border, 1, 1), InvalidInput);
}

TEST(ChainUsToCbct, IdentityAndMatrixOracle) {
  EXPECT_EQ(chain_us_to_cbct({}).matrix(), Mat4::Identity());
  Rng rng(8);
  const RegistrationChain c{random_transform(rng, 300), random_transform(rng, 300), random_transform(rng, 300)};
  EXPECT_LT((chain_us_to_cbct(c).matrix() - mat(c.t_u_b) * mat(c.t_b_o) * mat(c.t_o_c)).cwiseAbs().maxCoeff(), 1e-9);
  RegistrationChain partial = c;
  partial.t_b_o = RigidTransform::identity();
  EXPECT_LT((chain_us_to_cbct(partial).matrix() - mat(c.t_u_b) * mat(c.t_o_c)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ChainUsToCbct, SolvedXReproducesTruth) {
  const Session s = noise_free_session(9);
  Rng rng(10);
  const RegistrationChain truth{random_transform(rng, 500), s.rig.t_b_o, random_transform(rng, 500)};
  RegistrationChain est = truth;
  est.t_b_o = solve_tsai_lenz(build_motion_pairs(s.samples)).x;
  const auto e = registration_error(chain_us_to_cbct(est), chain_us_to_cbct(truth));
  EXPECT_LT(e.translation_mm, 1e-9);
  EXPECT_LT(e.rotation_deg, 1e-9);
}

TEST(UpdateAfterReposition, IdentityMotionLeavesRegistration) {
  Rng rng(11);
  const RigidTransform t = random_transform(rng, 500);
  EXPECT_EQ(update_after_reposition(t, RigidTransform::identity()).matrix(), t.matrix());
}

TEST(UpdateAfterReposition, MatchesRechainedRegistration) {
  Rng rng(12);
  const RegistrationChain chain{random_transform(rng, 500), random_transform(rng, 1500), random_transform(rng, 500)};
  const RigidTransform motion = RigidTransform::from_translation(Vec3(30, 10, 0));
  // Moving the device moves the camera-tracked CBCT frame: c_new = c_old * motion.
  RegistrationChain moved = chain;
  moved.t_o_c = chain.t_o_c * motion;
  const RigidTransform est = update_after_reposition(chain_us_to_cbct(chain), motion);
  const RigidTransform truth = chain_us_to_cbct(moved);
  EXPECT_LT((est.matrix() - truth.matrix()).cwiseAbs().maxCoeff(), 1e-12 * 1500);
  const Vec3 phantom_point(12.0, -4.0, 30.0);
  EXPECT_LT((truth.inverse() * (est * phantom_point) - phantom_point).norm(), 1e-9);
}

TEST(UpdateAfterReposition, ComposesMotions) {
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform t = random_transform(rng, 100);
    const RigidTransform m1 = random_transform(rng, 30);
    const RigidTransform m2 = random_transform(rng, 30);
    const Mat4 lhs = update_after_reposition(update_after_reposition(t, m1), m2).matrix();
    const Mat4 rhs = update_after_reposition(t, m1 * m2).matrix();
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(RegistrationError, Examples) {
  const RigidTransform truth(Rotation::about_x(40.0), Vec3(5, 6, 7));
  const auto same = registration_error(truth, truth);
  EXPECT_EQ(same.translation_mm, 0.0);
  EXPECT_EQ(same.rotation_deg, 0.0);
  const auto shifted = registration_error(RigidTransform::from_translation(Vec3(2, 0, 0)) * truth, truth);
  EXPECT_NEAR(shifted.translation_mm, 2.0, 1e-12);
  EXPECT_NEAR(shifted.rotation_deg, 0.0, 1e-12);
  const RigidTransform turned(Rotation::about_z(1.0) * truth.rotation(), truth.translation());
  const auto rot = registration_error(turned, truth);
  EXPECT_NEAR(rot.translation_mm, 0.0, 1e-12);
  EXPECT_NEAR(rot.rotation_deg, 1.0, 1e-9);
}

TEST(MonteCarlo, ErrorShrinksWithMorePairs) {
  MonteCarloConfig cfg;
  cfg.trials = 40;
  const auto rows = monte_carlo_recovery(cfg, default_border_poses(), default_rig());
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LE(rows[i].median_translation_mm, rows[i - 1].median_translation_mm);
    EXPECT_LE(rows[i].median_rotation_deg, rows[i - 1].median_rotation_deg);
  }
  for (const auto& r : rows) EXPECT_EQ(r.trials_solved + r.trials_degenerate, cfg.trials);
}

TEST(MonteCarlo, DeterministicForSeed) {
  MonteCarloConfig cfg;
  cfg.trials = 5;
  const auto a = monte_carlo_recovery(cfg, default_border_poses(), default_rig());
  const auto b = monte_carlo_recovery(cfg, default_border_poses(), default_rig());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].median_translation_mm, b[i].median_translation_mm);
    EXPECT_EQ(a[i].median_rotation_deg, b[i].median_rotation_deg);
  }
}
