#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "eit/errors.hpp"
#include "eit/forward.hpp"
#include "support.hpp"

using namespace eit;

TEST_CASE("contact profile is a compact bump with flat center and rim") {
  ContactProfile profile;
  const double R = 0.005;
  CHECK(profile.value(0.0, R) == doctest::Approx(1.0));
  CHECK(profile.value(0.5 * R, R) < 1.0);
  CHECK(profile.value(0.5 * R, R) > 0.0);
  CHECK(profile.value(0.999 * R, R) < 1e-80);
  CHECK(profile.value(R, R) == 0.0);
  CHECK(profile.value(2.0 * R, R) == 0.0);
  CHECK(profile.slope(0.0, R) == 0.0);
  CHECK(profile.slope(R, R) == 0.0);
  CHECK(profile.slope(0.5 * R, R) < 0.0);  // strictly decreasing inside

  // monotone on a sample of radii
  double prev = profile.value(0.0, R);
  for (int k = 1; k <= 20; ++k) {
    const double value = profile.value(R * k / 20.0, R);
    CHECK(value <= prev);
    prev = value;
  }
}

TEST_CASE("current pattern families have the documented shapes") {
  for (int m : {4, 8, 16}) {
    CurrentPatterns adjacent = make_patterns(m, "adjacent");
    CHECK(adjacent.currents.rows() == m);
    CHECK(adjacent.currents.cols() == m / 2);
    CurrentPatterns fourier = make_patterns(m, "fourier");
    CHECK(fourier.currents.cols() == m - 1);
    CHECK(fourier.currents.colwise().sum().cwiseAbs().maxCoeff() <= 1e-17);
    CHECK(adjacent.currents.colwise().sum().cwiseAbs().maxCoeff() == 0.0);
  }
  CurrentPatterns opposite = make_patterns(16, "opposite");
  CHECK(opposite.currents.cols() == 4);
  CHECK(opposite.currents.colwise().sum().cwiseAbs().maxCoeff() == 0.0);

  // adjacent pattern j feeds electrode 2j and draws from the next even one
  CurrentPatterns adj = make_patterns(8, "adjacent", 2e-3);
  for (int j = 0; j < 4; ++j) {
    CHECK(adj.currents(2 * j, j) == doctest::Approx(2e-3));
    CHECK(adj.currents((2 * j + 2) % 8, j) == doctest::Approx(-2e-3));
  }

  CHECK_THROWS_AS(make_patterns(16, "spiral"), ConfigError);
  CHECK_THROWS_AS(make_patterns(5, "adjacent"), ConfigError);
  CHECK_THROWS_AS(make_patterns(6, "opposite"), ConfigError);
  CHECK_THROWS_AS(make_patterns(16, "adjacent", 0.0), ConfigError);
}

namespace {

struct Fixture {
  TankMesh tank = testsupport::tiny_tank();
  ForwardSolver solver{tank.mesh, tank.layout};
  CurrentPatterns patterns = make_patterns(tank.layout.count(), "adjacent");

  Fixture() {
    solver.set_fields(Eigen::VectorXd::Constant(tank.mesh.node_count(), 0.2),
                      Eigen::VectorXd::Constant(tank.layout.count(), 500.0));
  }
};

}  // namespace

TEST_CASE("electrode potentials are gauge-fixed to zero mean") {
  Fixture f;
  const Eigen::MatrixXd u = f.solver.measure(f.patterns.currents);
  CHECK(u.colwise().sum().cwiseAbs().maxCoeff() <= 1e-12 * u.norm());
}

TEST_CASE("drive and measurement roles commute") {
  Fixture f;
  const Eigen::MatrixXd u = f.solver.measure(f.patterns.currents);
  const Eigen::MatrixXd gram = f.patterns.currents.transpose() * u;
  CHECK((gram - gram.transpose()).norm() <= 1e-10 * gram.norm());
}

TEST_CASE("doubling conductivity and contacts halves the potentials") {
  Fixture f;
  const Eigen::MatrixXd u1 = f.solver.measure(f.patterns.currents);
  f.solver.set_fields(Eigen::VectorXd::Constant(f.tank.mesh.node_count(), 0.4),
                      Eigen::VectorXd::Constant(f.tank.layout.count(), 1000.0));
  const Eigen::MatrixXd u2 = f.solver.measure(f.patterns.currents);
  CHECK((u2 - 0.5 * u1).norm() <= 1e-12 * u1.norm());
}

TEST_CASE("interior potential recovers the electrode potential trace scale") {
  Fixture f;
  const ForwardSolution sol = f.solver.solve(f.patterns.currents);
  CHECK(sol.potential.rows() == f.tank.mesh.node_count());
  CHECK(sol.potential.cols() == f.patterns.currents.cols());
  // with positive contact admittance everywhere, interior potentials stay
  // within the range spanned by the boundary data up to the injection scale
  CHECK(sol.potential.cwiseAbs().maxCoeff() <
        100.0 * sol.electrode_potential.cwiseAbs().maxCoeff());
  CHECK(sol.potential.allFinite());
}

TEST_CASE("field validation rejects bad conductivity and contacts") {
  Fixture f;
  Eigen::VectorXd sigma = Eigen::VectorXd::Constant(f.tank.mesh.node_count(), 0.2);
  Eigen::VectorXd peaks = Eigen::VectorXd::Constant(f.tank.layout.count(), 500.0);
  Eigen::VectorXd bad_sigma = sigma;
  bad_sigma[3] = -0.1;
  CHECK_THROWS_AS(f.solver.set_fields(bad_sigma, peaks), DomainError);
  Eigen::VectorXd bad_peaks = peaks;
  bad_peaks[1] = 0.0;
  CHECK_THROWS_AS(f.solver.set_fields(sigma, bad_peaks), DomainError);
  CHECK_THROWS_AS(f.solver.set_fields(sigma.head(10), peaks), ValidationError);
  CHECK_THROWS_AS(f.solver.set_fields(sigma, peaks.head(2)), ValidationError);
}

TEST_CASE("solving requires fields and zero-sum currents") {
  TankMesh tank = testsupport::tiny_tank();
  ForwardSolver solver(tank.mesh, tank.layout);
  CurrentPatterns patterns = make_patterns(tank.layout.count(), "adjacent");
  CHECK_THROWS_AS(solver.solve(patterns.currents), ContractError);

  Fixture f;
  Eigen::MatrixXd bad = f.patterns.currents;
  bad(0, 0) += 1e-6;
  CHECK_THROWS_AS(f.solver.solve(bad), ValidationError);
  Eigen::MatrixXd wrong_rows = Eigen::MatrixXd::Zero(3, 2);
  CHECK_THROWS_AS(f.solver.solve(wrong_rows), ValidationError);
}

TEST_CASE("band quadrature integrates areas and keeps the profile normalized") {
  Fixture f;
  const ContactProfile& profile = f.solver.profile();
  for (int e = 0; e < f.tank.layout.count(); ++e) {
    const BandQuadrature& band = f.solver.bands()[static_cast<size_t>(e)];
    double weight_total = 0.0, band_area = 0.0;
    for (const BandQuadrature::Point& p : band.points) weight_total += p.w;
    for (int face : f.tank.layout.electrodes[e].band_faces)
      band_area += face_area(f.tank.mesh, face);
    CHECK(weight_total == doctest::Approx(band_area).epsilon(1e-10));
    CHECK(band.shape_integral > 0.0);
    // the profile integral is strictly below the patch area (bump < 1)
    CHECK(band.shape_integral < band_area);
    for (const BandQuadrature::Point& p : band.points) {
      CHECK(p.shape == profile.value(p.r, f.tank.layout.electrodes[e].radius));
      CHECK(p.w > 0.0);
    }
  }
}

TEST_CASE("measurement files round trip bitwise") {
  const std::string dir = testsupport::scratch_dir("forward_io");
  Fixture f;
  const Eigen::MatrixXd u = f.solver.measure(f.patterns.currents);
  save_measurements(dir + "/u.csv", u);
  const Eigen::MatrixXd loaded = load_measurements(dir + "/u.csv");
  CHECK(loaded.rows() == u.rows());
  CHECK(loaded.cols() == u.cols());
  CHECK((loaded - u).norm() == 0.0);
}

TEST_CASE("measurement files with defects are rejected") {
  const std::string dir = testsupport::scratch_dir("forward_io_bad");
  {
    std::ofstream out(dir + "/bad_header.csv");
    out << "voltage,electrode,pattern\n0,0,0\n";
  }
  CHECK_THROWS_AS(load_measurements(dir + "/bad_header.csv"), ValidationError);
  {
    std::ofstream out(dir + "/bad_row.csv");
    out << "pattern,electrode,voltage\n0,0,not_a_number\n";
  }
  CHECK_THROWS_AS(load_measurements(dir + "/bad_row.csv"), ValidationError);
  CHECK_THROWS_AS(load_measurements(dir + "/absent.csv"), ConfigError);
}
