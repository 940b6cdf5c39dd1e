#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace eit {

// Conforming P1 tetrahedral mesh with an explicit boundary triangulation.
struct Mesh {
  Eigen::Matrix<double, Eigen::Dynamic, 3> nodes;
  Eigen::Matrix<int, Eigen::Dynamic, 4> tets;
  Eigen::Matrix<int, Eigen::Dynamic, 3> boundary_faces;
  Eigen::Matrix<double, Eigen::Dynamic, 3> boundary_normals;  // unit outward
  Eigen::VectorXi region_labels;                              // one per tet

  Eigen::Index node_count() const { return nodes.rows(); }
  Eigen::Index tet_count() const { return tets.rows(); }
  Eigen::Index face_count() const { return boundary_faces.rows(); }
};

// One disk electrode: geometry of the defining cylinder (center, normal,
// radius), its spherical angles w.r.t. the layout origin, the in-plane frame
// for the local polar map, center tangent fields, and the face bookkeeping.
// `faces` is the patch (boundary faces whose barycenter lies inside the
// defining cylinder); `band_faces` is the superset of faces the contact
// profile can touch (any vertex closer than `radius` to the axis, barycenter
// within 3*radius of the center).
struct Electrode {
  Eigen::Vector3d center;
  double radius = 0.0;
  double theta = 0.0;  // polar angle of center, in [0, pi/2] for tank walls
  double phi = 0.0;    // azimuthal angle of center
  Eigen::Vector3d normal;
  Eigen::Vector3d pole_u, pole_v;  // orthonormal, both orthogonal to normal
  Eigen::Vector3d tangent_theta, tangent_phi;
  std::vector<int> faces;
  std::vector<int> band_faces;
};

struct ElectrodeLayout {
  std::vector<Electrode> electrodes;
  Eigen::Vector3d angle_origin = Eigen::Vector3d::Zero();
  bool is_cylinder = false;  // generated tank wall; enables repositioning
  double cylinder_radius = 0.0;
  double cylinder_height = 0.0;

  int count() const { return static_cast<int>(electrodes.size()); }
};

struct TankMesh {
  Mesh mesh;
  ElectrodeLayout layout;
};

// Water-column phantom: structured extrusion of a graded disk triangulation.
// Electrodes sit on rings of the lateral wall; each ring carries
// electrode_count / ring_heights.size() equally spaced electrodes.
// Target element sizes shrink by 1.5 per refinement level and are multiplied
// by `coarsen` (values > 1 give the small meshes used by dense test oracles).
struct CylinderSpec {
  double radius = 0.115;
  double height = 0.043;
  int electrode_count = 16;
  double electrode_radius = 0.005;
  std::vector<double> ring_heights;  // empty -> {0.465 * height}
  double coarsen = 1.0;
  std::int64_t max_nodes = 2000000;
};

TankMesh generate_cylinder_tank(const CylinderSpec& spec, int refinement_level);

// JSON round trip. Node and element arrays are bit-exact across save/load.
void save_mesh(const std::string& path, const Mesh& mesh, const ElectrodeLayout& layout);
TankMesh load_mesh(const std::string& path);

struct PolarCoord {
  double r;    // distance to the defining-cylinder axis, in [0, radius)
  double psi;  // angle in [0, 2*pi)
};

// Local polar coordinates induced by electrode m's defining cylinder.
// Throws DomainError when x lies outside the electrode (r >= radius).
PolarCoord local_polar(const ElectrodeLayout& layout, int m, const Eigen::Vector3d& x);

// Distance from x to the defining-cylinder axis; no domain check.
double electrode_axis_distance(const Electrode& e, const Eigen::Vector3d& x);

// Electrode movement field sampled away from the center: the center vector
// carried to a point with the given surface normal, tangential length kept
// constant. Zero for electrodes without tangent fields.
Eigen::Vector3d tangent_field_at(const Electrode& e, const Eigen::Vector3d& surface_normal,
                                 bool azimuthal);

// Moves electrode m to spherical angles (theta, phi) on the generating
// surface and rebuilds its frame, patch and band. Cylinder layouts only.
ElectrodeLayout reposition_electrode(const Mesh& mesh, const ElectrodeLayout& layout,
                                     int m, double theta, double phi);

void validate_mesh(const Mesh& mesh);
void validate_layout(const Mesh& mesh, const ElectrodeLayout& layout);

double mesh_volume(const Mesh& mesh);
double face_area(const Mesh& mesh, int face);
Eigen::Vector3d face_barycenter(const Mesh& mesh, int face);
double patch_area(const Mesh& mesh, const Electrode& e);
double boundary_area(const Mesh& mesh);

// FNV-1a over node coordinates and tet indices; used for provenance stamps.
std::uint64_t mesh_hash(const Mesh& mesh);

// Region selector: indices of nodes with (x-cx)^2+(y-cy)^2 < radius^2 and
// zmin <= z <= zmax, ascending.
std::vector<int> nodes_in_cylinder(const Mesh& mesh, double cx, double cy,
                                   double radius, double zmin, double zmax);

}  // namespace eit
