#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "eit/sensitivity.hpp"
#include "support.hpp"

using namespace eit;

namespace {

struct Fixture {
  TankMesh tank = testsupport::tiny_tank();
  Eigen::VectorXd sigma0 = Eigen::VectorXd::Constant(tank.mesh.node_count(), 0.2);
  Eigen::VectorXd zeta0 = Eigen::VectorXd::Constant(tank.layout.count(), 500.0);
  ForwardSolver solver{tank.mesh, tank.layout};
  CurrentPatterns patterns = make_patterns(tank.layout.count(), "fourier");
  ForwardSolution fwd;
  AdjointSet adj;

  Fixture() {
    solver.set_fields(sigma0, zeta0);
    fwd = solver.solve(patterns.currents);
    adj = build_adjoints(solver, patterns, &fwd);
  }
};

double column_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& fd) {
  return (analytic - fd).norm() / fd.norm();
}

}  // namespace

TEST_CASE("conductivity jacobian matches central differences") {
  Fixture f;
  const Eigen::MatrixXd js = jacobian_sigma(f.solver, f.fwd, f.adj);
  CHECK(js.rows() == f.patterns.currents.cols() * f.tank.layout.count());
  CHECK(js.cols() == f.tank.mesh.node_count());

  const double h = 1e-4;
  for (Eigen::Index col : {0L, 57L, 111L, 222L, 333L, 400L}) {
    Eigen::VectorXd up = f.sigma0, down = f.sigma0;
    up[col] += h;
    down[col] -= h;
    f.solver.set_fields(up, f.zeta0);
    const Eigen::VectorXd plus = f.solver.measure(f.patterns.currents).reshaped();
    f.solver.set_fields(down, f.zeta0);
    const Eigen::VectorXd minus = f.solver.measure(f.patterns.currents).reshaped();
    const Eigen::VectorXd fd = (plus - minus) / (2.0 * h);
    CHECK(column_error(js.col(col), fd) <= 1e-5);
  }
}

TEST_CASE("contact jacobian matches central differences") {
  Fixture f;
  const Eigen::MatrixXd jz = jacobian_peaks(f.solver, f.fwd, f.adj);
  CHECK(jz.cols() == f.tank.layout.count());

  const double h = 0.2;
  for (int e = 0; e < f.tank.layout.count(); ++e) {
    Eigen::VectorXd up = f.zeta0, down = f.zeta0;
    up[e] += h;
    down[e] -= h;
    f.solver.set_fields(f.sigma0, up);
    const Eigen::VectorXd plus = f.solver.measure(f.patterns.currents).reshaped();
    f.solver.set_fields(f.sigma0, down);
    const Eigen::VectorXd minus = f.solver.measure(f.patterns.currents).reshaped();
    const Eigen::VectorXd fd = (plus - minus) / (2.0 * h);
    CHECK(column_error(jz.col(e), fd) <= 1e-5);
  }
}

TEST_CASE("electrode angle jacobians match repositioned solves") {
  Fixture f;
  const AngleJacobians ja = jacobian_angles(f.solver, f.fwd, f.adj);
  CHECK(ja.theta.rows() == ja.phi.rows());
  CHECK(ja.phi.cols() == f.tank.layout.count());

  const double h = 1e-4;
  for (int e = 0; e < f.tank.layout.count(); ++e) {
    const Electrode& el = f.tank.layout.electrodes[e];
    for (bool azimuthal : {false, true}) {
      const double dtheta = azimuthal ? 0.0 : h;
      const double dphi = azimuthal ? h : 0.0;
      ElectrodeLayout up =
          reposition_electrode(f.tank.mesh, f.tank.layout, e, el.theta + dtheta, el.phi + dphi);
      ElectrodeLayout down =
          reposition_electrode(f.tank.mesh, f.tank.layout, e, el.theta - dtheta, el.phi - dphi);
      ForwardSolver sp(f.tank.mesh, up), sm(f.tank.mesh, down);
      sp.set_fields(f.sigma0, f.zeta0);
      sm.set_fields(f.sigma0, f.zeta0);
      const Eigen::VectorXd fd = (sp.measure(f.patterns.currents).reshaped() -
                                  sm.measure(f.patterns.currents).reshaped()) /
                                 (2.0 * h);
      const Eigen::VectorXd analytic = azimuthal ? ja.phi.col(e) : ja.theta.col(e);
      CHECK(column_error(analytic, fd) <= 5e-3);
    }
  }
}

TEST_CASE("spanning drive patterns reuse their own solutions as adjoints") {
  Fixture f;
  // the fourier family spans the mean-free space, so no extra solves happen;
  // forcing the solve path must produce the same operators
  AdjointSet solved = build_adjoints(f.solver, f.patterns, nullptr);
  const Eigen::MatrixXd js_reuse = jacobian_sigma(f.solver, f.fwd, f.adj);
  const Eigen::MatrixXd js_solved = jacobian_sigma(f.solver, f.fwd, solved);
  CHECK((js_reuse - js_solved).norm() <= 1e-11 * js_solved.norm());
  const Eigen::MatrixXd jz_reuse = jacobian_peaks(f.solver, f.fwd, f.adj);
  const Eigen::MatrixXd jz_solved = jacobian_peaks(f.solver, f.fwd, solved);
  CHECK((jz_reuse - jz_solved).norm() <= 1e-11 * jz_solved.norm());
}

TEST_CASE("non-spanning drive patterns fall back to basis solves") {
  TankMesh tank = testsupport::tiny_tank();
  ForwardSolver solver(tank.mesh, tank.layout);
  const Eigen::VectorXd sigma = Eigen::VectorXd::Constant(tank.mesh.node_count(), 0.2);
  const Eigen::VectorXd zeta = Eigen::VectorXd::Constant(tank.layout.count(), 500.0);
  solver.set_fields(sigma, zeta);
  CurrentPatterns adjacent = make_patterns(tank.layout.count(), "adjacent");
  ForwardSolution fwd = solver.solve(adjacent.currents);

  AdjointSet with_hint = build_adjoints(solver, adjacent, &fwd);
  AdjointSet without = build_adjoints(solver, adjacent, nullptr);
  const Eigen::MatrixXd a = jacobian_peaks(solver, fwd, with_hint);
  const Eigen::MatrixXd b = jacobian_peaks(solver, fwd, without);
  CHECK((a - b).norm() <= 1e-11 * b.norm());

  const double h = 0.2;
  Eigen::VectorXd up = zeta, down = zeta;
  up[2] += h;
  down[2] -= h;
  solver.set_fields(sigma, up);
  const Eigen::VectorXd plus = solver.measure(adjacent.currents).reshaped();
  solver.set_fields(sigma, down);
  const Eigen::VectorXd minus = solver.measure(adjacent.currents).reshaped();
  CHECK((a.col(2) - (plus - minus) / (2.0 * h)).norm() <=
        1e-5 * ((plus - minus) / (2.0 * h)).norm());
}

TEST_CASE("scaling identity ties the jacobians to the potentials") {
  Fixture f;
  const Eigen::MatrixXd js = jacobian_sigma(f.solver, f.fwd, f.adj);
  const Eigen::MatrixXd jz = jacobian_peaks(f.solver, f.fwd, f.adj);
  const Eigen::VectorXd u = f.fwd.electrode_potential.reshaped();
  // U(c sigma, c zeta) = U / c, differentiated at c = 1
  const Eigen::VectorXd residual = js * f.sigma0 + jz * f.zeta0 + u;
  CHECK(residual.norm() <= 1e-8 * u.norm());
}
