#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "eit/errors.hpp"
#include "eit/projection.hpp"

using namespace eit;

namespace {

Eigen::MatrixXd random_block(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd block(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) block(i, j) = normal(gen);
  return block;
}

}  // namespace

TEST_CASE("projector onto a block complement is a symmetric idempotent annihilator") {
  const Eigen::MatrixXd block = random_block(40, 6, 11);
  const ProjectionOperator p = build_projection({&block}, "block");
  CHECK(p.removed == 6);
  CHECK(p.matrix.rows() == 40);
  CHECK(p.range.cols() == 6);

  const double scale = p.matrix.norm();
  CHECK((p.matrix * p.matrix - p.matrix).norm() <= 1e-10 * scale);
  CHECK((p.matrix - p.matrix.transpose()).norm() <= 1e-10 * scale);
  CHECK((p.matrix * block).norm() <= 1e-10 * block.norm());
  CHECK(p.matrix.trace() == doctest::Approx(40.0 - 6.0).epsilon(1e-10));

  // apply agrees with the explicit matrix
  const Eigen::VectorXd v = random_block(40, 1, 5);
  CHECK((p.apply(v) - p.matrix * v).norm() <= 1e-14 * v.norm());
}

TEST_CASE("joint projectors annihilate every constituent block") {
  const Eigen::MatrixXd a = random_block(40, 5, 21);
  const Eigen::MatrixXd b = random_block(40, 7, 22);
  const ProjectionOperator p = build_projection({&a, &b}, "a,b");
  CHECK(p.removed == 12);
  CHECK((p.matrix * a).norm() <= 1e-10 * a.norm());
  CHECK((p.matrix * b).norm() <= 1e-10 * b.norm());
  CHECK(p.blocks == "a,b");
}

TEST_CASE("rank-deficient or degenerate blocks are rejected") {
  const Eigen::MatrixXd a = random_block(30, 3, 31);
  Eigen::MatrixXd doubled(30, 6);
  doubled << a, a;
  CHECK_THROWS_AS(build_projection({&doubled}, "doubled"), NumericError);
  Eigen::MatrixXd with_zero = a;
  with_zero.col(1).setZero();
  CHECK_THROWS_AS(build_projection({&with_zero}, "zero column"), NumericError);
}

TEST_CASE("projector is invariant under per-column scaling of the blocks") {
  Eigen::MatrixXd block = random_block(40, 6, 41);
  const ProjectionOperator reference = build_projection({&block}, "block");
  Eigen::MatrixXd scaled = block;
  scaled.col(0) *= 1e6;
  scaled.col(3) *= 1e-6;
  const ProjectionOperator p = build_projection({&scaled}, "scaled");
  CHECK((p.matrix - reference.matrix).norm() <= 1e-10 * reference.matrix.norm());
}

TEST_CASE("degenerate projection requests are rejected") {
  CHECK_THROWS_AS(build_projection({}, "empty"), ContractError);
  const Eigen::MatrixXd a = random_block(20, 2, 51);
  const Eigen::MatrixXd mismatched = random_block(19, 2, 52);
  CHECK_THROWS_AS(build_projection({&a, &mismatched}, "mix"), ContractError);
}

TEST_CASE("principal angles recover a constructed rotation") {
  const double angle_deg = 7.5;
  const double angle = angle_deg * M_PI / 180.0;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(6, 2);
  a(0, 0) = 1.0;
  a(1, 1) = 1.0;
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(6, 2);
  b(0, 0) = 1.0;
  b(1, 1) = std::cos(angle);
  b(2, 1) = std::sin(angle);

  const ProjectionOperator pa = build_projection({&a}, "a");
  const ProjectionOperator pb = build_projection({&b}, "b");
  // angles between the 4-dimensional kept ranges: only the constructed
  // rotation tilts them, every other direction coincides
  const std::vector<double> angles = principal_angles(pa, pb);
  REQUIRE(angles.size() == 4);
  CHECK(angles.front() == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(angles.back() == doctest::Approx(angle_deg).epsilon(1e-8));
  CHECK(angles[2] <= 1e-8);

  // identical subspaces in a different basis have all angles zero
  Eigen::MatrixXd mixed(6, 2);
  mixed.col(0) = a.col(0) + 2.0 * a.col(1);
  mixed.col(1) = a.col(0) - 0.5 * a.col(1);
  const ProjectionOperator pm = build_projection({&mixed}, "mixed");
  const std::vector<double> zero = principal_angles(pa, pm);
  CHECK(zero.back() <= 1e-8);
}

TEST_CASE("principal angle count follows the smaller kept range") {
  const Eigen::MatrixXd a = random_block(20, 3, 61);
  const Eigen::MatrixXd b = random_block(20, 5, 62);
  const ProjectionOperator pa = build_projection({&a}, "a");  // keeps 17 directions
  const ProjectionOperator pb = build_projection({&b}, "b");  // keeps 15 directions
  CHECK(principal_angles(pa, pb).size() == 15);
  CHECK(principal_angles(pb, pa).size() == 15);
  const std::vector<double> angles = principal_angles(pa, pb);
  for (size_t i = 1; i < angles.size(); ++i) CHECK(angles[i] >= angles[i - 1]);
  // two random 5-column blocks almost surely produce 5 nonzero tilts
  CHECK(angles.back() > 0.0);
}

TEST_CASE("frobenius discrepancy is the relative frobenius distance") {
  Eigen::MatrixXd j_ref = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd j = j_ref;
  j(0, 1) = 0.1;
  CHECK(frobenius_discrepancy(j, j_ref) == doctest::Approx(0.1 / std::sqrt(2.0)));
  CHECK(frobenius_discrepancy(j_ref, j_ref) == 0.0);
}

TEST_CASE("signal bundle subtracts the background and projects componentwise") {
  const Eigen::VectorXd base = random_block(24, 1, 71);
  const Eigen::VectorXd sigma_only = random_block(24, 1, 72);
  const Eigen::VectorXd zeta_only = random_block(24, 1, 73);
  const Eigen::VectorXd both = random_block(24, 1, 74);
  const Eigen::MatrixXd block = random_block(24, 4, 75);
  const ProjectionOperator p = build_projection({&block}, "block");

  const SignalBundle bundle = signal_bundle(base, sigma_only, zeta_only, both, {&p});
  CHECK((bundle.s_sigma - (sigma_only - base)).norm() == 0.0);
  CHECK((bundle.s_zeta - (zeta_only - base)).norm() == 0.0);
  CHECK((bundle.s_combined - (both - base)).norm() == 0.0);
  REQUIRE(bundle.projected.size() == 1);
  CHECK((bundle.projected[0].s_sigma - p.apply(bundle.s_sigma)).norm() == 0.0);
  CHECK((bundle.projected[0].s_zeta - p.apply(bundle.s_zeta)).norm() == 0.0);
  CHECK((bundle.projected[0].s_combined - p.apply(bundle.s_combined)).norm() == 0.0);

  const SignalBundle plain = signal_bundle(base, sigma_only, zeta_only, both, {});
  CHECK(plain.projected.empty());
}
