#pragma once

#include <filesystem>
#include <string>

#include "eit/mesh.hpp"

namespace testsupport {

// Small four-electrode column whose dense oracles stay cheap (~450 nodes).
inline eit::CylinderSpec tiny_tank_spec() {
  eit::CylinderSpec spec;
  spec.radius = 0.03;
  spec.height = 0.02;
  spec.electrode_count = 4;
  spec.electrode_radius = 0.003;
  spec.coarsen = 3.0;
  return spec;
}

inline eit::TankMesh tiny_tank() { return eit::generate_cylinder_tank(tiny_tank_spec(), 0); }

// Fresh scratch directory under the test working directory.
inline std::string scratch_dir(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::path("scratch") / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testsupport
