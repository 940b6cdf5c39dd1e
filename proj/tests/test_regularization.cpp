#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "eit/errors.hpp"
#include "eit/fe.hpp"
#include "eit/regularization.hpp"
#include "support.hpp"

using namespace eit;

namespace {

struct Fixture {
  TankMesh tank = testsupport::tiny_tank();
  std::vector<TetGeometry> geom = compute_tet_geometry(tank.mesh);
  RegularizerState state{1e-6, 0.5, 1e-2};

  Eigen::VectorXd random_field(unsigned seed) const {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal;
    Eigen::VectorXd w(tank.mesh.node_count());
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = 0.1 * normal(gen);
    return w;
  }
};

}  // namespace

TEST_CASE("prior matrix at zero is the scaled stiffness plus the shift") {
  Fixture f;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(f.tank.mesh.node_count());
  const Eigen::SparseMatrix<double> theta = theta_matrix(f.tank.mesh, f.geom, zero, f.state);

  const Eigen::VectorXd weights =
      Eigen::VectorXd::Constant(f.tank.mesh.tet_count(), 1.0 / std::hypot(0.0, f.state.T));
  Eigen::SparseMatrix<double> expected =
      element_weighted_stiffness(f.tank.mesh, weights, f.geom);
  Eigen::SparseMatrix<double> eye(expected.rows(), expected.cols());
  eye.setIdentity();
  expected += f.state.epsilon * eye;

  CHECK((theta - expected).norm() == 0.0);
}

TEST_CASE("prior matrix is symmetric positive definite for any field") {
  Fixture f;
  const Eigen::VectorXd w = f.random_field(3);
  const Eigen::SparseMatrix<double> theta = theta_matrix(f.tank.mesh, f.geom, w, f.state);
  const Eigen::MatrixXd dense(theta);
  CHECK((dense - dense.transpose()).norm() <= 1e-14 * dense.norm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("prior value at zero is the smoothing scale times the volume") {
  Fixture f;
  RegularizerState state = f.state;
  state.epsilon = 0.7;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(f.tank.mesh.node_count());
  const double psi = psi_value(f.tank.mesh, f.geom, zero, state);
  CHECK(psi == doctest::Approx(state.T * mesh_volume(f.tank.mesh)).epsilon(1e-12));
}

TEST_CASE("prior matrix times the field is the exact gradient of the prior value") {
  Fixture f;
  const Eigen::VectorXd w = f.random_field(17);
  const Eigen::VectorXd analytic = theta_matrix(f.tank.mesh, f.geom, w, f.state) * w;

  Eigen::VectorXd fd(w.size());
  const double h = 1e-6;
  Eigen::VectorXd probe = w;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    probe[i] = w[i] + h;
    const double up = psi_value(f.tank.mesh, f.geom, probe, f.state);
    probe[i] = w[i] - h;
    const double down = psi_value(f.tank.mesh, f.geom, probe, f.state);
    probe[i] = w[i];
    fd[i] = (up - down) / (2.0 * h);
  }
  CHECK((analytic - fd).norm() <= 1e-6 * fd.norm());
}

TEST_CASE("prior value decomposes into total variation and the quadratic shift") {
  Fixture f;
  const Eigen::VectorXd w = f.random_field(23);
  RegularizerState with_shift = f.state;
  RegularizerState tiny_shift = f.state;
  tiny_shift.epsilon = 0.0;
  const double difference = psi_value(f.tank.mesh, f.geom, w, with_shift) -
                            psi_value(f.tank.mesh, f.geom, w, tiny_shift);
  CHECK(difference == doctest::Approx(0.5 * f.state.epsilon * w.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("shift heuristic returns the first nonzero stiffness eigenvalue over T") {
  Fixture f;
  const double epsilon = epsilon_heuristic(f.tank.mesh, f.geom, f.state.T);
  const Eigen::SparseMatrix<double> k = element_weighted_stiffness(
      f.tank.mesh, Eigen::VectorXd::Ones(f.tank.mesh.tet_count()), f.geom);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig((Eigen::MatrixXd(k)));
  CHECK(epsilon == doctest::Approx(eig.eigenvalues()[1] / f.state.T).epsilon(1e-10));
  CHECK(epsilon > 0.0);

  // constants are flat for the prior: the zero eigenvalue sits below
  CHECK(eig.eigenvalues()[0] <= 1e-10 * eig.eigenvalues()[1]);
}

TEST_CASE("degenerate regularizer parameters are rejected") {
  Fixture f;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(f.tank.mesh.node_count());
  RegularizerState bad_t = f.state;
  bad_t.T = 0.0;
  CHECK_THROWS_AS(theta_matrix(f.tank.mesh, f.geom, zero, bad_t), ConfigError);
  CHECK_THROWS_AS(psi_value(f.tank.mesh, f.geom, zero, bad_t), ConfigError);
  CHECK_THROWS_AS(epsilon_heuristic(f.tank.mesh, f.geom, 0.0), ConfigError);
  RegularizerState no_shift = f.state;
  no_shift.epsilon = 0.0;
  CHECK_THROWS_AS(theta_matrix(f.tank.mesh, f.geom, zero, no_shift), ConfigError);
  const Eigen::VectorXd short_w = Eigen::VectorXd::Zero(10);
  CHECK_THROWS_AS(theta_matrix(f.tank.mesh, f.geom, short_w, f.state), ContractError);
}
