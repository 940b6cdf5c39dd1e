#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "eit/errors.hpp"
#include "eit/mesh.hpp"
#include "support.hpp"

using namespace eit;

TEST_CASE("desk-scale tank honors the requested geometry") {
  CylinderSpec spec;
  TankMesh tank = generate_cylinder_tank(spec, 0);
  validate_mesh(tank.mesh);
  validate_layout(tank.mesh, tank.layout);

  CHECK(tank.layout.count() == spec.electrode_count);
  CHECK(tank.layout.is_cylinder);
  CHECK(tank.layout.cylinder_radius == doctest::Approx(spec.radius));
  CHECK(tank.layout.cylinder_height == doctest::Approx(spec.height));

  const double volume = mesh_volume(tank.mesh);
  const double expected = M_PI * spec.radius * spec.radius * spec.height;
  CHECK(std::abs(volume - expected) <= 0.02 * expected);

  const double lateral = 2.0 * M_PI * spec.radius * spec.height;
  const double caps = 2.0 * M_PI * spec.radius * spec.radius;
  CHECK(std::abs(boundary_area(tank.mesh) - lateral - caps) <= 0.02 * (lateral + caps));

  const double disc = M_PI * spec.electrode_radius * spec.electrode_radius;
  for (const Electrode& e : tank.layout.electrodes) {
    CHECK(!e.faces.empty());
    CHECK(std::abs(patch_area(tank.mesh, e) - disc) <= 0.08 * disc);
    // the quadrature band is the patch plus the faces membership can reach
    for (int f : e.faces)
      CHECK(std::find(e.band_faces.begin(), e.band_faces.end(), f) != e.band_faces.end());
    CHECK(std::abs(e.center.head<2>().norm() - spec.radius) <= 1e-9);
  }
}

TEST_CASE("electrode centers sit on distinct equally spaced azimuths") {
  TankMesh tank = testsupport::tiny_tank();
  const int m = tank.layout.count();
  for (int e = 0; e < m; ++e) {
    const double phi = tank.layout.electrodes[e].phi;
    const double expected = 2.0 * M_PI * e / m;
    const double wrapped = std::remainder(phi - expected, 2.0 * M_PI);
    CHECK(std::abs(wrapped) <= 1e-9);
  }
}

TEST_CASE("local polar coordinates vanish at the electrode center") {
  TankMesh tank = testsupport::tiny_tank();
  const Electrode& e = tank.layout.electrodes[1];
  const PolarCoord at_center = local_polar(tank.layout, 1, e.center);
  CHECK(at_center.r <= 1e-12);
  CHECK(electrode_axis_distance(e, e.center) <= 1e-12);
}

TEST_CASE("mesh save and load round trip preserves everything hashed") {
  const std::string dir = testsupport::scratch_dir("mesh_roundtrip");
  TankMesh tank = testsupport::tiny_tank();
  save_mesh(dir + "/mesh.json", tank.mesh, tank.layout);
  TankMesh loaded = load_mesh(dir + "/mesh.json");

  CHECK(loaded.mesh.node_count() == tank.mesh.node_count());
  CHECK(loaded.mesh.tet_count() == tank.mesh.tet_count());
  CHECK(loaded.mesh.face_count() == tank.mesh.face_count());
  CHECK(mesh_hash(loaded.mesh) == mesh_hash(tank.mesh));
  CHECK(loaded.layout.count() == tank.layout.count());
  for (int e = 0; e < tank.layout.count(); ++e) {
    CHECK(loaded.layout.electrodes[e].faces == tank.layout.electrodes[e].faces);
    CHECK((loaded.layout.electrodes[e].center - tank.layout.electrodes[e].center).norm() == 0.0);
  }
  validate_mesh(loaded.mesh);
  validate_layout(loaded.mesh, loaded.layout);
}

TEST_CASE("mesh hash reacts to geometry changes") {
  TankMesh tank = testsupport::tiny_tank();
  const std::uint64_t reference = mesh_hash(tank.mesh);
  CHECK(mesh_hash(tank.mesh) == reference);
  tank.mesh.nodes(0, 0) += 1e-12;
  CHECK(mesh_hash(tank.mesh) != reference);
}

TEST_CASE("malformed mesh files are rejected") {
  const std::string dir = testsupport::scratch_dir("mesh_malformed");
  {
    std::ofstream out(dir + "/broken.json");
    out << "{ \"nodes\": [[0, 0";
  }
  CHECK_THROWS_AS(load_mesh(dir + "/broken.json"), ValidationError);
  CHECK_THROWS_AS(load_mesh(dir + "/missing.json"), ConfigError);
}

TEST_CASE("node region selector agrees with a direct scan") {
  TankMesh tank = testsupport::tiny_tank();
  const double cx = 0.004, cy = -0.002, radius = 0.012, zmin = 0.004, zmax = 0.016;
  const std::vector<int> selected = nodes_in_cylinder(tank.mesh, cx, cy, radius, zmin, zmax);
  std::vector<int> expected;
  for (Eigen::Index i = 0; i < tank.mesh.node_count(); ++i) {
    const double dx = tank.mesh.nodes(i, 0) - cx, dy = tank.mesh.nodes(i, 1) - cy;
    const double z = tank.mesh.nodes(i, 2);
    if (dx * dx + dy * dy < radius * radius && z >= zmin && z <= zmax)
      expected.push_back(static_cast<int>(i));
  }
  CHECK(selected == expected);
  CHECK(!selected.empty());
}

TEST_CASE("repositioning one electrode leaves the others untouched") {
  TankMesh tank = testsupport::tiny_tank();
  const Electrode original = tank.layout.electrodes[2];
  const double new_phi = original.phi + 0.12;
  ElectrodeLayout moved =
      reposition_electrode(tank.mesh, tank.layout, 2, original.theta, new_phi);
  validate_layout(tank.mesh, moved);

  CHECK(moved.electrodes[2].phi == doctest::Approx(new_phi));
  CHECK(std::abs(moved.electrodes[2].center.head<2>().norm() -
                 tank.layout.cylinder_radius) <= 1e-9);
  CHECK(!moved.electrodes[2].faces.empty());
  for (int e = 0; e < tank.layout.count(); ++e) {
    if (e == 2) continue;
    CHECK(moved.electrodes[e].faces == tank.layout.electrodes[e].faces);
    CHECK((moved.electrodes[e].center - tank.layout.electrodes[e].center).norm() == 0.0);
  }

  // moving back restores the original patch
  ElectrodeLayout restored =
      reposition_electrode(tank.mesh, moved, 2, original.theta, original.phi);
  CHECK(restored.electrodes[2].faces == original.faces);
}

TEST_CASE("degenerate cylinder specs are rejected") {
  CylinderSpec spec = testsupport::tiny_tank_spec();
  spec.electrode_radius = 0.5 * spec.radius;  // electrodes would overlap
  CHECK_THROWS_AS(generate_cylinder_tank(spec, 0), ConfigError);
  CylinderSpec negative = testsupport::tiny_tank_spec();
  negative.height = -1.0;
  CHECK_THROWS_AS(generate_cylinder_tank(negative, 0), ConfigError);
}
