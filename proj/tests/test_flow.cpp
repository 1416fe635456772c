#include "stackmanifold/flow.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace stackmanifold;
using namespace stackmanifold::flow;

namespace {

FlowConfig small_config(int D, int da, int db, std::uint64_t seed, int layers = 2) {
  FlowConfig c;
  c.D = D;
  c.dim_a = da;
  c.dim_b = db;
  c.layers = layers;
  c.hidden = 8;
  c.seed = seed;
  c.init_scale = 0.5;
  return c;
}

Vector uniform(int n, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST(Architecture, AngleSplitCoversAllAngles) {
  for (int D = 3; D <= 12; ++D) {
    const auto s = angle_split(D);
    EXPECT_EQ(s[0] + s[1], D - 1);
    EXPECT_EQ(s[1], (D - 1) / 2);
    std::vector<int> seen;
    for (int h = 0; h < 2; ++h)
      for (int k = 0; k < s[h]; ++k) seen.push_back(angle_index(D, h, k));
    std::sort(seen.begin(), seen.end());
    for (int i = 0; i < D - 1; ++i) EXPECT_EQ(seen[std::size_t(i)], i);
    EXPECT_EQ(angle_index(D, 0, s[0] - 1), D - 2);  // head A owns the azimuth
  }
}

TEST(Architecture, PermutationsAreBijections) {
  const FlowModel m(small_config(10, 3, 6, 42, 4));
  for (int h = 0; h < 2; ++h) {
    for (const auto& layer : m.head(h).layers) {
      std::vector<int> p = layer.perm;
      std::sort(p.begin(), p.end());
      for (int i = 0; i < int(p.size()); ++i) EXPECT_EQ(p[std::size_t(i)], i);
      EXPECT_EQ(layer.cond.size() + layer.trans.size(), std::size_t(m.head(h).width));
    }
  }
}

TEST(CouplingStack, LayerwiseInverseReproducesInput) {
  Rng rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const FlowModel m(small_config(4 + trial % 6, 1 + trial % 3, 1 + trial % 4, 100 + trial, 1 + trial % 3));
    for (int h = 0; h < 2; ++h) {
      const HeadLayout& head = m.head(h);
      // Single layers, each checked on its own.
      for (std::size_t l = 0; l < head.layers.size(); ++l) {
        HeadLayout one = head;
        one.layers = {head.layers[l]};
        const Vector x = uniform(head.width, rng, -2.0, 2.0);
        Vector ld = Vector::Zero(1);
        const Matrix z = head_forward(m.params(), one, Matrix(x), ld, nullptr);
        worst = std::max(worst, (head_inverse(m.params(), one, z.col(0)) - x).cwiseAbs().maxCoeff());
      }
    }
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(CouplingStack, LogdetIsSumOfScales) {
  const FlowModel m(small_config(6, 2, 2, 7, 1));
  const HeadLayout& head = m.head(0);
  const CouplingLayout& c = head.layers[0];
  Rng rng(2);
  const Vector x = uniform(head.width, rng);
  Vector ld = Vector::Zero(1);
  head_forward(m.params(), head, Matrix(x), ld, nullptr);
  Matrix xc(Eigen::Index(c.cond.size()), 1);
  for (std::size_t i = 0; i < c.cond.size(); ++i) xc(Eigen::Index(i), 0) = x[c.cond[i]];
  NetCache s;
  net_forward(m.params(), c.s, xc, s);
  EXPECT_EQ(ld[0], s.out.col(0).sum());
}

TEST(Forward, ZeroInitIsPaddingPermutationAndSquash) {
  FlowConfig cfg = small_config(10, 1, 2, 5, 3);
  cfg.zero_init = true;
  const FlowModel m(cfg);
  const Vector a = (Vector(1) << 0.3).finished(), b = (Vector(2) << 0.1, 0.9).finished();
  const ForwardResult f = forward(m, a, b);
  EXPECT_EQ(f.stack_logdet, 0.0);
  Vector angles(9);
  Eigen::Index zrow = 0;
  for (int h = 0; h < 2; ++h) {
    const HeadLayout& head = m.head(h);
    Vector x = Vector::Constant(head.width, kPadValue);
    x.head(head.dim) = h == 0 ? a : b;
    for (const auto& layer : head.layers) {
      Vector y(head.width);
      for (int i = 0; i < head.width; ++i) y[i] = x[layer.perm[i]];
      x = y;
    }
    EXPECT_TRUE(f.z.segment(zrow, head.width).isApprox(x, 1e-15));
    for (int k = 0; k < head.n_angles; ++k) {
      const auto r = FlowModel::angle_range(head, k);
      angles[angle_index(10, h, k)] = r[0] + (r[1] - r[0]) / (1.0 + std::exp(-x[k]));
    }
    zrow += head.width;
  }
  EXPECT_LT((f.angles - angles).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((f.point - geometry::spherical_to_cartesian(angles)).norm(), 1e-14);
}

TEST(Forward, UnitNormForRandomInputs) {
  Rng rng(3);
  const FlowModel m(small_config(7, 2, 3, 9, 3));
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const ForwardResult f = forward(m, uniform(2, rng), uniform(3, rng));
    worst = std::max(worst, std::abs(f.point.norm() - 1.0));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Forward, OutOfDomainActionRejected) {
  const FlowModel m(small_config(4, 2, 2, 1));
  EXPECT_THROW(forward(m, (Vector(2) << 1.5, 0.5).finished(), Vector::Constant(2, 0.5)), Error);
  EXPECT_THROW(forward(m, Vector::Constant(3, 0.5), Vector::Constant(2, 0.5)), Error);
}

TEST(Forward, LogdetMatchesFiniteDifferenceJacobian) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int D = 3 + trial % 4;  // D <= 6
    const FlowModel m(small_config(D, 1 + trial % 2, 1 + trial % 3, 300 + trial, 2));
    const int wa = m.head(0).width, wb = m.head(1).width;
    Vector a = uniform(m.dim_a(), rng), b = uniform(m.dim_b(), rng);
    Vector padded = Vector::Constant(wa + wb, kPadValue);
    padded.head(m.dim_a()) = a;
    padded.segment(wa, m.dim_b()) = b;
    const double h = 1e-6;
    Matrix J(wa + wb, wa + wb);
    for (int j = 0; j < wa + wb; ++j) {
      Vector xp = padded, xm = padded;
      xp[j] += h;
      xm[j] -= h;
      J.col(j) = (oracles::pre_spherical(m, xp) - oracles::pre_spherical(m, xm)) / (2 * h);
    }
    const double fd = std::log(std::abs(J.determinant()));
    // forward() pads with the same constants, so its logdet refers to this point.
    const double analytic = forward(m, a, b).logdet;
    EXPECT_LE(std::abs(fd - analytic), 1e-4 * std::max(1.0, std::abs(analytic))) << trial;
  }
}

TEST(Inverse, ReconstructsWhenHeadsAreDimensionCompatible) {
  Rng rng(5);
  for (const auto& cfg : {small_config(5, 2, 2, 11), small_config(10, 1, 1, 12), small_config(4, 2, 1, 13)}) {
    const FlowModel m(cfg);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
      const Vector a = uniform(cfg.dim_a, rng), b = uniform(cfg.dim_b, rng);
      const InverseResult r = inverse(m, forward(m, a, b).point);
      worst = std::max({worst, (r.a - a).norm(), (r.b - b).norm()});
      if (k < 50) {
        EXPECT_LT(r.padding_residual, 1e-8);
      }
    }
    EXPECT_LT(worst, 1e-6) << cfg.D;
  }
}

TEST(Inverse, ZeroInitIsUnsquashAndUnpad) {
  FlowConfig cfg = small_config(6, 1, 2, 21, 2);
  cfg.zero_init = true;
  const FlowModel m(cfg);
  const Vector a = (Vector(1) << 0.25).finished(), b = (Vector(2) << 0.6, 0.2).finished();
  const InverseResult r = inverse(m, forward(m, a, b).point);
  EXPECT_NEAR(r.a[0], 0.25, 1e-9);
  EXPECT_LT((r.b - b).norm(), 1e-9);
}

TEST(Inverse, PointOutsideSquashImageRejected) {
  const FlowModel m(small_config(4, 2, 2, 1));
  try {
    inverse(m, (Vector(4) << 1, 0, 0, 0).finished());  // first latitude 0 is below the margin
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotInImage);
  }
}

TEST(Inverse, OverflowHeadIsNotInjective) {
  // D = 4 with a two-dimensional follower leaves head B one angle for two
  // coordinates; the leader block still inverts exactly.
  const FlowModel m(small_config(4, 2, 2, 31));
  EXPECT_EQ(m.head(1).overflow(), 1);
  Rng rng(6);
  const Vector a = uniform(2, rng), b = uniform(2, rng);
  const InverseResult r = inverse(m, forward(m, a, b).point);
  EXPECT_LT((r.a - a).norm(), 1e-9);
  EXPECT_LT(head_stack_roundtrip_error(m, 1, b), 1e-12);
}

TEST(Bipartite, PerturbingOnePlayerLeavesTheOtherBlockExact) {
  Rng rng(7);
  const FlowModel m(small_config(9, 2, 3, 41, 3));
  for (int k = 0; k < 200; ++k) {
    const Vector a = uniform(2, rng), b = uniform(3, rng), b2 = uniform(3, rng), a2 = uniform(2, rng);
    const ForwardResult f = forward(m, a, b);
    EXPECT_EQ(head_block(m, 0, f.angles), head_block(m, 0, forward(m, a, b2).angles));
    EXPECT_EQ(head_block(m, 1, f.angles), head_block(m, 1, forward(m, a2, b).angles));
  }
}

TEST(Isoplane, FixedLeaderSharesHeadABlock) {
  const FlowModel m(small_config(6, 1, 2, 51));
  const Vector a = (Vector(1) << 0.4).finished();
  const auto pts = isoplane_points(m, FixedLeader{a}, 5);
  ASSERT_EQ(pts.size(), 25u);
  const Vector ref = head_block(m, 0, geometry::cartesian_to_spherical(pts[0]).angles);
  for (const auto& p : pts)
    EXPECT_LT((head_block(m, 0, geometry::cartesian_to_spherical(p).angles) - ref).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Isoplane, ThreeDimensionalCoordinates) {
  // D = 3: head A holds only the azimuth, head B the single latitude. A
  // fixed follower gives a circle of constant x1; a fixed leader gives a
  // meridian of constant azimuth atan2(x3, x2).
  const FlowModel m(small_config(3, 1, 1, 61));
  const auto fixed_b = isoplane_points(m, FixedFollower{Vector::Constant(1, 0.3)}, 50);
  for (const auto& p : fixed_b) EXPECT_NEAR(p[0], fixed_b[0][0], 1e-9);
  const auto fixed_a = isoplane_points(m, FixedLeader{Vector::Constant(1, 0.7)}, 50);
  const double g0 = std::atan2(fixed_a[0][2], fixed_a[0][1]);
  for (const auto& p : fixed_a) EXPECT_NEAR(std::atan2(p[2], p[1]), g0, 1e-9);
}

TEST(Isoplane, GridPointLiesOnBothIsoplanes) {
  const FlowModel m(small_config(5, 1, 1, 71));
  const Vector a = Vector::Constant(1, 0.5), b = Vector::Constant(1, 0.25);
  const Vector p = forward(m, a, b).point;
  auto contains = [&](const std::vector<Vector>& pts) {
    for (const auto& q : pts)
      if ((q - p).norm() < 1e-12) return true;
    return false;
  };
  EXPECT_TRUE(contains(isoplane_points(m, FixedLeader{a}, 5)));
  EXPECT_TRUE(contains(isoplane_points(m, FixedFollower{b}, 5)));
}

TEST(NllLoss, IdentityFlowValue) {
  EXPECT_NEAR(nll_value(Matrix::Zero(4, 1), Vector::Zero(1)), 2.0 * std::log(2.0 * kPi), 1e-12);
  EXPECT_NEAR(2.0 * std::log(2.0 * kPi), 3.6757541, 1e-7);
}

TEST(NllLoss, LinearInLogdet) {
  Rng rng(8);
  const Matrix z = Matrix::Random(5, 3);
  const Vector ld = Vector::Random(3);
  EXPECT_NEAR(nll_value(z, ld) - nll_value(z, 2.0 * ld), ld.mean(), 1e-12);
}

TEST(NllLoss, MatchesPerSampleFormula) {
  Rng rng(9);
  const FlowModel m(small_config(6, 2, 2, 81));
  const Matrix X = sample_unit_box(4, 64, rng);
  double acc = 0.0;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const ForwardResult f = forward(m, X.col(c).head(2), X.col(c).tail(2));
    const double d = double(f.z.size());
    acc += 0.5 * f.z.squaredNorm() + 0.5 * d * std::log(2 * kPi) - f.stack_logdet;
  }
  EXPECT_NEAR(nll_loss(m, X), acc / 64.0, 1e-10);
}

TEST(RepulsionLoss, Examples) {
  Matrix Y(3, 2);
  Y << 1, -1, 0, 0, 0, 0;
  EXPECT_NEAR(repulsion_loss(Y, 1.0), 2.0 * std::exp(-kPi), 1e-15);
  Y.col(1) = Y.col(0);
  EXPECT_NEAR(repulsion_loss(Y, 0.7), 2.0, 1e-15);
  EXPECT_THROW(repulsion_loss(Y.leftCols(1), 1.0), Error);
}

TEST(RepulsionLoss, BruteForceAndGradient) {
  Rng rng(10);
  Matrix Y(4, 10);
  for (int c = 0; c < 10; ++c) Y.col(c) = geometry::sample_sphere(4, rng);
  double brute = 0.0;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      if (i != j) brute += std::exp(-geometry::geodesic_distance(Y.col(i), Y.col(j)) / 0.5);
  Matrix G;
  EXPECT_NEAR(repulsion_loss(Y, 0.5, &G), brute, 1e-10);
  Matrix fd(4, 10);
  for (int i = 0; i < 40; ++i) {
    Matrix P = Y, M = Y;
    P.data()[i] += 1e-6;
    M.data()[i] -= 1e-6;
    fd.data()[i] = (repulsion_loss(P, 0.5) - repulsion_loss(M, 0.5)) / 2e-6;
  }
  EXPECT_LT(testing_support::relative_error(G, fd), 1e-6);
}

TEST(LipschitzLoss, JacobianNormsMatchCentralDifferences) {
  Rng rng(11);
  const FlowModel m(small_config(6, 2, 2, 91));
  const Matrix X = sample_unit_box(4, 8, rng);
  const JacobianNorms n = jacobian_block_norms(m, X, 1e-5);
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    double sa = 0.0, sb = 0.0;
    for (int k = 0; k < 4; ++k) {
      Vector xp = X.col(c), xm = X.col(c);
      xp[k] += 1e-5;
      xm[k] -= 1e-5;
      const Vector col = (forward_batch(m, xp, false).y - forward_batch(m, xm, false).y) / 2e-5;
      (k < 2 ? sa : sb) += col.squaredNorm();
    }
    EXPECT_NEAR(n.a[c], std::sqrt(sa), 1e-4 * std::max(1.0, std::sqrt(sa)));
    EXPECT_NEAR(n.b[c], std::sqrt(sb), 1e-4 * std::max(1.0, std::sqrt(sb)));
  }
}

TEST(LipschitzLoss, ZeroWhenNormsHitTarget) {
  Rng rng(12);
  const FlowModel m(small_config(5, 1, 2, 92));
  const Matrix X = sample_unit_box(3, 1, rng);
  const JacobianNorms n = jacobian_block_norms(m, X, 1e-5);
  EXPECT_NEAR(lipschitz_loss(m, X, n.a[0] + n.b[0]), 0.0, 1e-12);
  EXPECT_NEAR(lipschitz_loss(m, X, n.a[0] + n.b[0] + 0.5), 0.5, 1e-12);
}

TEST(PerturbationLoss, VanishesWithSigmaAndForConstantDeltas) {
  Rng rng(13);
  const FlowModel m(small_config(5, 2, 2, 93));
  const Matrix X = sample_unit_box(4, 32, rng);
  EXPECT_LT(perturbation_loss(m, X, 1e-9, rng), 1e-14);
  Matrix delta(3, 5);
  delta.colwise() = (Vector(3) << 0.2, -1.0, 4.0).finished();
  EXPECT_EQ(perturbation_value(delta), 0.0);
}

TEST(PerturbationLoss, MatchesLinearisedPropagation) {
  // At a single repeated point the variance is sigma^2 |J|_F^2 to first order.
  Rng rng(14);
  const FlowModel m(small_config(5, 2, 2, 94));
  const Vector x = (Vector(4) << 0.3, 0.6, 0.2, 0.8).finished();
  Matrix J(5, 4);
  for (int k = 0; k < 4; ++k) {
    Vector xp = x, xm = x;
    xp[k] += 1e-6;
    xm[k] -= 1e-6;
    J.col(k) = (forward_batch(m, xp, false).y - forward_batch(m, xm, false).y) / 2e-6;
  }
  const double sigma = 1e-4;
  const Matrix X = x.replicate(1, 100000);
  const double mc = perturbation_loss(m, X, sigma, rng);
  const double analytic = sigma * sigma * J.squaredNorm();
  EXPECT_NEAR(mc, analytic, 0.1 * analytic);
}

TEST(TotalLoss, ConvexCombinationReducesToNll) {
  Rng rng(15);
  const FlowModel m(small_config(4, 2, 2, 95));
  const Matrix X = sample_unit_box(4, 16, rng);
  LossConfig cfg;
  cfg.alpha_r = cfg.alpha_l = cfg.alpha_p = 0.0;
  const LossBreakdown l = evaluate_loss(m, X, Matrix::Zero(4, 16), cfg, nullptr);
  EXPECT_EQ(l.total, cfg.alpha_n * l.nll);
}

TEST(TotalLoss, TableDefaults) {
  const LossConfig cfg;
  EXPECT_EQ(cfg.alpha_n, 0.5);
  EXPECT_EQ(cfg.alpha_r, 1.0);
  EXPECT_EQ(cfg.alpha_p, 0.5);
  EXPECT_EQ(cfg.alpha_l, 1.5);
  EXPECT_EQ(cfg.C, 0.5);
  EXPECT_EQ(cfg.lr, 0.05);
  EXPECT_EQ(cfg.epochs, 20000);
  EXPECT_EQ(cfg.batch, 2048);
}

TEST(TotalLoss, GradientMatchesCentralDifferences) {
  Rng rng(16);
  for (int trial = 0; trial < 3; ++trial) {
    FlowModel m(small_config(4, 2, 2, 200 + trial, 2));
    const Matrix X = sample_unit_box(4, 12, rng);
    const Matrix E = gaussian_noise(4, 12, 0.05, rng);
    LossConfig cfg;
    Vector g;
    evaluate_loss(m, X, E, cfg, &g);
    Vector fd(m.param_count());
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < m.param_count(); ++i) {
      const double w = m.params()[i];
      m.params()[i] = w + h;
      const double lp = evaluate_loss(m, X, E, cfg, nullptr).total;
      m.params()[i] = w - h;
      const double lm = evaluate_loss(m, X, E, cfg, nullptr).total;
      m.params()[i] = w;
      fd[i] = (lp - lm) / (2 * h);
    }
    EXPECT_LT(testing_support::relative_error(g, fd), 1e-4) << trial;
  }
}

TEST(Train, LossDecreasesOnTableConfiguration) {
  Rng rng(17);
  FlowConfig fc;
  fc.D = 4;
  fc.dim_a = fc.dim_b = 2;
  fc.layers = 2;
  fc.seed = 1;
  FlowModel m(fc);
  const Matrix data = sample_unit_box(4, 1000, rng);
  const Matrix test = sample_unit_box(4, 200, rng);
  LossConfig cfg;
  cfg.epochs = 201;
  const TrainingReport r = train(m, data, test, cfg, rng);
  ASSERT_EQ(r.total.size(), 201u);
  EXPECT_LT(r.total[200], r.total[0]);
  EXPECT_EQ(r.test.samples, 200u);
}

TEST(Train, DeterministicGivenSeed) {
  auto run = [] {
    Rng rng(18);
    FlowModel m(small_config(4, 1, 1, 3));
    const Matrix data = sample_unit_box(2, 64, rng);
    LossConfig cfg;
    cfg.epochs = 5;
    cfg.batch = 16;
    train(m, data, data, cfg, rng);
    return m.params();
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, NonFiniteLossReportsEpoch) {
  Rng rng(19);
  FlowModel m(small_config(4, 1, 1, 4));
  m.params()[0] = std::numeric_limits<double>::quiet_NaN();
  const Matrix data = sample_unit_box(2, 8, rng);
  LossConfig cfg;
  cfg.epochs = 3;
  try {
    train(m, data, data, cfg, rng);
    FAIL();
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TrainingDiverged);
    EXPECT_EQ(e.epoch(), 0);
  }
}

TEST(ModelIo, RoundTripIsBitExact) {
  const FlowModel m(small_config(7, 2, 3, 123, 3));
  const auto path = std::filesystem::temp_directory_path() / "smfl_roundtrip.bin";
  save_model(m, path.string());
  EXPECT_EQ(std::filesystem::file_size(path), kHeaderBytes + std::size_t(m.param_count()) * 8);
  EXPECT_EQ(std::filesystem::file_size(path), model_file_size(m));
  const FlowModel l = load_model(path.string());
  EXPECT_EQ(l.config().hidden, m.config().hidden);
  EXPECT_EQ(l.config().seed, 123u);
  Rng rng(20);
  for (int k = 0; k < 100; ++k) {
    const Vector a = uniform(2, rng), b = uniform(3, rng);
    const ForwardResult f1 = forward(m, a, b), f2 = forward(l, a, b);
    EXPECT_EQ(f1.point, f2.point);
    EXPECT_EQ(f1.logdet, f2.logdet);
  }
  std::filesystem::remove(path);
}

TEST(ModelIo, TruncatedAndMismatchedFilesFail) {
  const FlowModel m(small_config(5, 1, 2, 5));
  auto bytes = serialize(m);
  auto expect_kind = [](const std::vector<unsigned char>& b, ErrorKind k) {
    try {
      deserialize(b);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), k);
    }
  };
  expect_kind(std::vector<unsigned char>(bytes.begin(), bytes.end() - 8), ErrorKind::TruncatedFile);
  expect_kind(std::vector<unsigned char>(bytes.begin(), bytes.begin() + 20), ErrorKind::TruncatedFile);
  auto wrong = bytes;
  wrong[4] = 9;
  expect_kind(wrong, ErrorKind::VersionMismatch);
  EXPECT_EQ(bytes.size(), 32 + 8 * std::size_t(m.param_count()));
}
