#include "eit/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "eit/errors.hpp"
#include "eit/fe.hpp"

namespace eit {

namespace {

constexpr double kPi = 3.14159265358979323846;

// ---- disk division ---------------------------------------------------------

struct DiskPlan {
  std::vector<double> angle;       // base azimuthal division, ascending
  std::vector<double> ring_radius; // descending from the wall, > 0
  std::vector<int> ring_stride;    // power-of-two stride into `angle`
  double fine_arc = 0.0;
};

int trailing_twos(int n) {
  int c = 0;
  while (n % 2 == 0 && n > 1) {
    n /= 2;
    ++c;
  }
  return c;
}

DiskPlan plan_disk(double rho, int per_ring, double electrode_radius, double f) {
  DiskPlan plan;
  const double w = 1.4 * std::asin(electrode_radius / rho);  // half window angle
  const double pitch = 2.0 * kPi / per_ring;
  if (2.0 * w >= pitch)
    throw ConfigError(msg("electrode windows overlap: ", per_ring,
                          " electrodes of radius ", electrode_radius,
                          " on a wall of radius ", rho));
  const int n_win = 2 * static_cast<int>(std::ceil(6.0 * f));
  const double gap = pitch - 2.0 * w;
  const double gap_target = 0.0052 / (f * rho);
  std::vector<int> gap_counts(per_ring,
                              std::max(1, static_cast<int>(std::ceil(gap / gap_target))));
  int total = per_ring * n_win + std::accumulate(gap_counts.begin(), gap_counts.end(), 0);
  for (int k = 0; total % 8 != 0; ++k, ++total) ++gap_counts[k % per_ring];

  plan.angle.reserve(total);
  for (int m = 0; m < per_ring; ++m) {
    const double phi_m = pitch * m;
    for (int i = 0; i < n_win; ++i)
      plan.angle.push_back(phi_m - w + i * (2.0 * w / n_win));
    const double g0 = phi_m + w;
    const double g1 = phi_m + pitch - w;
    for (int i = 0; i < gap_counts[m]; ++i)
      plan.angle.push_back(g0 + i * ((g1 - g0) / gap_counts[m]));
  }

  plan.fine_arc = 2.0 * w * rho / n_win;
  const double dmax = 0.0095 / f;
  const int c_budget = std::min(5, trailing_twos(total));

  std::vector<double> dr;
  plan.ring_radius.push_back(rho);
  double d = 1.2 * plan.fine_arc;
  while (true) {
    const double next = plan.ring_radius.back() - d;
    if (next < 1.2 * d) break;
    plan.ring_radius.push_back(next);
    dr.push_back(d);
    d = std::min(d * 1.55, dmax);
  }

  plan.ring_stride.assign(plan.ring_radius.size(), 1);
  int c_prev = 0;
  for (size_t i = 1; i < plan.ring_radius.size(); ++i) {
    int c = static_cast<int>(std::floor(std::log2(1.4 * dr[i - 1] / plan.fine_arc)));
    c = std::clamp(c, c_prev, std::min(c_prev + 1, c_budget));
    while ((total >> c) < 6 && c > 0) --c;
    plan.ring_stride[i] = 1 << c;
    c_prev = c;
  }
  return plan;
}

// ---- z levels ---------------------------------------------------------------

std::vector<double> plan_levels(double height, const std::vector<double>& ring_heights,
                                double electrode_radius, double f) {
  const int half = static_cast<int>(std::ceil(3.0 * f));
  const double step = 1.2 * electrode_radius / half;
  std::set<double> band;
  for (double ze : ring_heights) {
    for (int k = -half; k <= half; ++k) {
      const double z = ze + k * step;
      if (z > 1e-12 && z < height - 1e-12) band.insert(z);
    }
  }
  std::vector<double> levels(band.begin(), band.end());
  const double coarse = 0.00775 / f;

  std::vector<double> out;
  out.push_back(0.0);
  auto fill = [&](double a, double b) {
    const int n = std::max(1, static_cast<int>(std::ceil((b - a) / coarse - 1e-9)));
    for (int i = 1; i < n; ++i) out.push_back(a + i * (b - a) / n);
  };
  double prev = 0.0;
  for (double z : levels) {
    if (z - prev > 1.5 * step) fill(prev, z);
    out.push_back(z);
    prev = z;
  }
  fill(prev, height);
  out.push_back(height);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end(),
                        [](double a, double b) { return std::abs(a - b) < 1e-12; }),
            out.end());
  return out;
}

// ---- prism split -----------------------------------------------------------

// Index permutations placing each argmin slot at position 0 while preserving
// the column structure (0-3, 1-4, 2-5).
constexpr int kPrismRot[6][6] = {
    {0, 1, 2, 3, 4, 5}, {1, 2, 0, 4, 5, 3}, {2, 0, 1, 5, 3, 4},
    {3, 5, 4, 0, 2, 1}, {4, 3, 5, 1, 0, 2}, {5, 4, 3, 2, 1, 0}};

// Splits a prism into three tets whose quad diagonals emanate from each
// quad's smallest global index, so shared quads of neighboring prisms agree.
void split_prism(const int p[6], std::vector<Eigen::Vector4i>& out) {
  int arg = 0;
  for (int k = 1; k < 6; ++k)
    if (p[k] < p[arg]) arg = k;
  int v[6];
  for (int k = 0; k < 6; ++k) v[k] = p[kPrismRot[arg][k]];
  if (std::min(v[1], v[5]) < std::min(v[2], v[4])) {
    out.emplace_back(v[0], v[1], v[2], v[5]);
    out.emplace_back(v[0], v[1], v[5], v[4]);
    out.emplace_back(v[0], v[4], v[5], v[3]);
  } else {
    out.emplace_back(v[0], v[1], v[2], v[4]);
    out.emplace_back(v[0], v[4], v[2], v[5]);
    out.emplace_back(v[0], v[4], v[5], v[3]);
  }
}

// ---- boundary extraction ----------------------------------------------------

std::uint64_t face_key(int a, int b, int c) {
  int v[3] = {a, b, c};
  std::sort(v, v + 3);
  return (static_cast<std::uint64_t>(v[0])) | (static_cast<std::uint64_t>(v[1]) << 21) |
         (static_cast<std::uint64_t>(v[2]) << 42);
}

constexpr int kTetFace[4][3] = {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};

struct FaceUse {
  int count = 0;
  int tet = -1;
  int local = -1;
};

std::unordered_map<std::uint64_t, FaceUse> face_uses(const Mesh& mesh) {
  std::unordered_map<std::uint64_t, FaceUse> uses;
  uses.reserve(static_cast<size_t>(mesh.tet_count()) * 2);
  for (Eigen::Index t = 0; t < mesh.tet_count(); ++t) {
    for (int l = 0; l < 4; ++l) {
      auto& u = uses[face_key(mesh.tets(t, kTetFace[l][0]), mesh.tets(t, kTetFace[l][1]),
                              mesh.tets(t, kTetFace[l][2]))];
      if (u.count++ == 0) {
        u.tet = static_cast<int>(t);
        u.local = l;
      }
    }
  }
  return uses;
}

Eigen::Vector3d outward_normal(const Mesh& mesh, int a, int b, int c, int opposite) {
  Eigen::Vector3d pa = mesh.nodes.row(a), pb = mesh.nodes.row(b), pc = mesh.nodes.row(c);
  Eigen::Vector3d n = (pb - pa).cross(pc - pa);
  const Eigen::Vector3d po = mesh.nodes.row(opposite);
  if (n.dot(po - pa) > 0.0) n = -n;
  const double len = n.norm();
  if (!(len > 1e-24)) throw ValidationError(msg("degenerate boundary face (", a, ",", b, ",", c, ")"));
  return n / len;
}

void extract_boundary(Mesh& mesh) {
  auto uses = face_uses(mesh);
  std::vector<Eigen::Vector3i> faces;
  for (const auto& [key, u] : uses) {
    if (u.count != 1) continue;
    faces.emplace_back(mesh.tets(u.tet, kTetFace[u.local][0]),
                       mesh.tets(u.tet, kTetFace[u.local][1]),
                       mesh.tets(u.tet, kTetFace[u.local][2]));
  }
  // hash order is not deterministic across platforms; sort by vertex triple
  std::sort(faces.begin(), faces.end(), [](const Eigen::Vector3i& x, const Eigen::Vector3i& y) {
    return face_key(x[0], x[1], x[2]) < face_key(y[0], y[1], y[2]);
  });
  mesh.boundary_faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (size_t i = 0; i < faces.size(); ++i) mesh.boundary_faces.row(static_cast<Eigen::Index>(i)) = faces[i];
}

void compute_normals(Mesh& mesh) {
  auto uses = face_uses(mesh);
  mesh.boundary_normals.resize(mesh.face_count(), 3);
  for (Eigen::Index fidx = 0; fidx < mesh.face_count(); ++fidx) {
    const int a = mesh.boundary_faces(fidx, 0), b = mesh.boundary_faces(fidx, 1),
              c = mesh.boundary_faces(fidx, 2);
    auto it = uses.find(face_key(a, b, c));
    if (it == uses.end() || it->second.count != 1)
      throw ValidationError(msg("boundary face ", fidx, " is not an exterior tet face"));
    const auto& u = it->second;
    int opp = -1;
    for (int k = 0; k < 4; ++k) {
      const int v = mesh.tets(u.tet, k);
      if (v != a && v != b && v != c) opp = v;
    }
    mesh.boundary_normals.row(fidx) = outward_normal(mesh, a, b, c, opp);
  }
}

// ---- electrode helpers -------------------------------------------------------

void build_frame(Electrode& e, const Eigen::Vector3d& origin) {
  const Eigen::Vector3d v = e.center - origin;
  const double s = v.norm();
  if (!(s > 0.0)) throw ValidationError("electrode center coincides with the angle origin");
  const Eigen::Vector3d rhat = v / s;
  e.theta = std::atan2(std::hypot(v.x(), v.y()), v.z());
  e.phi = std::atan2(v.y(), v.x());
  if (e.phi < 0.0) e.phi += 2.0 * kPi;
  const double ct = std::cos(e.theta), st = std::sin(e.theta);
  const double cp = std::cos(e.phi), sp = std::sin(e.phi);
  const Eigen::Vector3d that(ct * cp, ct * sp, -st);
  const Eigen::Vector3d phat(-sp, cp, 0.0);
  const double rn = rhat.dot(e.normal);
  if (std::abs(rn) < 1e-6) {
    // the ray from the angle origin grazes the surface; the electrode cannot
    // be parametrized by angles, so it carries no tangent fields
    e.tangent_theta.setZero();
    e.tangent_phi.setZero();
  } else {
    e.tangent_theta = s * (that - (that.dot(e.normal) / rn) * rhat);
    e.tangent_phi = s * st * (phat - (phat.dot(e.normal) / rn) * rhat);
  }
  Eigen::Vector3d u = Eigen::Vector3d::UnitZ().cross(e.normal);
  if (u.norm() < 1e-8) u = Eigen::Vector3d::UnitX().cross(e.normal);
  e.pole_u = u.normalized();
  e.pole_v = e.normal.cross(e.pole_u);
}

void assign_patch(const Mesh& mesh, Electrode& e) {
  e.faces.clear();
  for (Eigen::Index fidx = 0; fidx < mesh.face_count(); ++fidx) {
    const Eigen::Vector3d bary = face_barycenter(mesh, static_cast<int>(fidx));
    // the locality cut keeps the axis line from picking up the far wall
    if ((bary - e.center).norm() >= 3.0 * e.radius) continue;
    if (electrode_axis_distance(e, bary) < e.radius) e.faces.push_back(static_cast<int>(fidx));
  }
}

void assign_band(const Mesh& mesh, Electrode& e) {
  e.band_faces.clear();
  const double reach = 3.0 * e.radius;
  for (Eigen::Index fidx = 0; fidx < mesh.face_count(); ++fidx) {
    if ((face_barycenter(mesh, static_cast<int>(fidx)) - e.center).norm() >= reach) continue;
    double rmin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k)
      rmin = std::min(rmin,
                      electrode_axis_distance(e, mesh.nodes.row(mesh.boundary_faces(fidx, k))));
    if (rmin < e.radius) e.band_faces.push_back(static_cast<int>(fidx));
  }
}

}  // namespace

// ---- generation -------------------------------------------------------------

TankMesh generate_cylinder_tank(const CylinderSpec& spec, int refinement_level) {
  if (!(spec.radius > 0.0) || !(spec.height > 0.0))
    throw ConfigError("tank radius and height must be positive");
  if (spec.electrode_count < 2) throw ConfigError("need at least 2 electrodes");
  if (!(spec.electrode_radius > 0.0) || spec.electrode_radius >= spec.radius)
    throw ConfigError("electrode radius must be positive and smaller than the tank radius");
  if (refinement_level < 0) throw ConfigError("refinement level must be >= 0");
  if (!(spec.coarsen > 0.0)) throw ConfigError("coarsen must be positive");

  std::vector<double> rings = spec.ring_heights;
  if (rings.empty()) rings.push_back(0.465 * spec.height);
  if (spec.electrode_count % static_cast<int>(rings.size()) != 0)
    throw ConfigError(msg("electrode count ", spec.electrode_count,
                          " is not divisible by the number of rings ", rings.size()));
  const int per_ring = spec.electrode_count / static_cast<int>(rings.size());
  for (double ze : rings)
    if (ze - spec.electrode_radius <= 0.0 || ze + spec.electrode_radius >= spec.height)
      throw ConfigError(msg("electrode ring at height ", ze,
                            " does not fit on the lateral wall"));

  const double f = std::pow(1.5, refinement_level) / spec.coarsen;
  DiskPlan disk = plan_disk(spec.radius, per_ring, spec.electrode_radius, f);
  std::vector<double> levels = plan_levels(spec.height, rings, spec.electrode_radius, f);

  const int total = static_cast<int>(disk.angle.size());
  const int n_rings = static_cast<int>(disk.ring_radius.size());
  std::vector<int> ring_start(n_rings), ring_count(n_rings);
  int n2d = 0;
  for (int i = 0; i < n_rings; ++i) {
    ring_start[i] = n2d;
    ring_count[i] = total / disk.ring_stride[i];
    n2d += ring_count[i];
  }
  const int center2d = n2d++;
  const int nz = static_cast<int>(levels.size());

  if (static_cast<std::int64_t>(n2d) * nz > spec.max_nodes)
    throw ResourceError(msg("mesh would have ", static_cast<std::int64_t>(n2d) * nz,
                            " nodes, exceeding the budget of ", spec.max_nodes));

  Eigen::MatrixXd disk_xy(n2d, 2);
  for (int i = 0; i < n_rings; ++i)
    for (int j = 0; j < ring_count[i]; ++j) {
      const double a = disk.angle[static_cast<size_t>(j) * disk.ring_stride[i]];
      disk_xy.row(ring_start[i] + j) << disk.ring_radius[i] * std::cos(a),
          disk.ring_radius[i] * std::sin(a);
    }
  disk_xy.row(center2d).setZero();

  std::vector<Eigen::Vector3i> tris;
  for (int i = 0; i + 1 < n_rings; ++i) {
    const int no = ring_count[i], ni = ring_count[i + 1];
    const int so = ring_start[i], si = ring_start[i + 1];
    if (no == ni) {
      for (int j = 0; j < no; ++j) {
        const int jj = (j + 1) % no;
        tris.emplace_back(so + j, so + jj, si + j);
        tris.emplace_back(si + j, so + jj, si + jj);
      }
    } else if (no == 2 * ni) {
      for (int j = 0; j < ni; ++j) {
        const int jj = (j + 1) % ni;
        const int a = 2 * j, b = (2 * j + 1) % no, c = (2 * j + 2) % no;
        tris.emplace_back(so + a, so + b, si + j);
        tris.emplace_back(si + j, so + b, si + jj);
        tris.emplace_back(so + b, so + c, si + jj);
      }
    } else {
      throw NumericError("ring coarsening is not 1:1 or 2:1");
    }
  }
  {
    const int last = n_rings - 1;
    for (int j = 0; j < ring_count[last]; ++j) {
      const int jj = (j + 1) % ring_count[last];
      tris.emplace_back(center2d, ring_start[last] + j, ring_start[last] + jj);
    }
  }

  Mesh mesh;
  mesh.nodes.resize(static_cast<Eigen::Index>(n2d) * nz, 3);
  for (int l = 0; l < nz; ++l)
    for (int k = 0; k < n2d; ++k)
      mesh.nodes.row(static_cast<Eigen::Index>(l) * n2d + k) << disk_xy(k, 0), disk_xy(k, 1),
          levels[static_cast<size_t>(l)];

  std::vector<Eigen::Vector4i> tets;
  tets.reserve(tris.size() * static_cast<size_t>(nz - 1) * 3);
  for (int l = 0; l + 1 < nz; ++l) {
    const int lo = l * n2d, hi = (l + 1) * n2d;
    for (const auto& tri : tris) {
      const int p[6] = {lo + tri[0], lo + tri[1], lo + tri[2],
                        hi + tri[0], hi + tri[1], hi + tri[2]};
      split_prism(p, tets);
    }
  }
  mesh.tets.resize(static_cast<Eigen::Index>(tets.size()), 4);
  for (size_t t = 0; t < tets.size(); ++t) {
    Eigen::Vector4i tet = tets[t];
    Eigen::Vector3d p0 = mesh.nodes.row(tet[0]);
    Eigen::Matrix3d e;
    for (int k = 0; k < 3; ++k) e.col(k) = mesh.nodes.row(tet[k + 1]).transpose() - p0;
    if (e.determinant() < 0.0) std::swap(tet[2], tet[3]);
    mesh.tets.row(static_cast<Eigen::Index>(t)) = tet;
  }
  mesh.region_labels = Eigen::VectorXi::Zero(mesh.tet_count());

  extract_boundary(mesh);
  compute_normals(mesh);

  ElectrodeLayout layout;
  layout.angle_origin.setZero();
  layout.is_cylinder = true;
  layout.cylinder_radius = spec.radius;
  layout.cylinder_height = spec.height;
  for (double ze : rings) {
    for (int m = 0; m < per_ring; ++m) {
      Electrode e;
      const double phi = 2.0 * kPi * m / per_ring;
      e.center << spec.radius * std::cos(phi), spec.radius * std::sin(phi), ze;
      e.normal << std::cos(phi), std::sin(phi), 0.0;
      e.radius = spec.electrode_radius;
      build_frame(e, layout.angle_origin);
      assign_patch(mesh, e);
      assign_band(mesh, e);
      layout.electrodes.push_back(std::move(e));
    }
  }

  validate_mesh(mesh);
  validate_layout(mesh, layout);
  return {std::move(mesh), std::move(layout)};
}

// ---- geometry helpers ---------------------------------------------------------

double electrode_axis_distance(const Electrode& e, const Eigen::Vector3d& x) {
  const Eigen::Vector3d d = x - e.center;
  return (d - d.dot(e.normal) * e.normal).norm();
}

Eigen::Vector3d tangent_field_at(const Electrode& e, const Eigen::Vector3d& surface_normal,
                                 bool azimuthal) {
  const Eigen::Vector3d& h = azimuthal ? e.tangent_phi : e.tangent_theta;
  // carry the center vector to the point keeping the tangential length fixed
  const Eigen::Vector3d t = h - h.dot(surface_normal) * surface_normal;
  const double len = t.norm();
  if (!(len > 0.0)) return Eigen::Vector3d::Zero();
  return t * (h.norm() / len);
}

PolarCoord local_polar(const ElectrodeLayout& layout, int m, const Eigen::Vector3d& x) {
  if (m < 0 || m >= layout.count())
    throw ContractError(msg("electrode index ", m, " out of range [0,", layout.count(), ")"));
  const Electrode& e = layout.electrodes[static_cast<size_t>(m)];
  const Eigen::Vector3d d = x - e.center;
  const Eigen::Vector3d p = d - d.dot(e.normal) * e.normal;
  const double r = p.norm();
  if (!(r < e.radius))
    throw DomainError(msg("point at distance ", r, " lies outside electrode ", m,
                          " of radius ", e.radius));
  double psi = std::atan2(p.dot(e.pole_v), p.dot(e.pole_u));
  if (psi < 0.0) psi += 2.0 * kPi;
  if (psi >= 2.0 * kPi) psi = 0.0;
  return {r, psi};
}

ElectrodeLayout reposition_electrode(const Mesh& mesh, const ElectrodeLayout& layout,
                                     int m, double theta, double phi) {
  if (!layout.is_cylinder)
    throw ContractError("repositioning requires a generated cylinder layout");
  if (m < 0 || m >= layout.count())
    throw ContractError(msg("electrode index ", m, " out of range"));
  if (!(theta > 0.0) || !(theta < kPi / 2.0))
    throw DomainError(msg("polar angle ", theta, " leaves the lateral wall"));
  ElectrodeLayout out = layout;
  Electrode& e = out.electrodes[static_cast<size_t>(m)];
  const double rho = layout.cylinder_radius;
  const double z = rho / std::tan(theta);
  if (z - e.radius <= 0.0 || z + e.radius >= layout.cylinder_height)
    throw DomainError(msg("electrode moved to height ", z, " leaves the lateral wall"));
  e.center << rho * std::cos(phi), rho * std::sin(phi), z;
  e.normal << std::cos(phi), std::sin(phi), 0.0;
  build_frame(e, out.angle_origin);
  assign_patch(mesh, e);
  assign_band(mesh, e);
  validate_layout(mesh, out);
  return out;
}

// ---- validation ----------------------------------------------------------------

void validate_mesh(const Mesh& mesh) {
  const Eigen::Index n = mesh.node_count();
  if (n == 0 || mesh.tet_count() == 0) throw ValidationError("mesh has no nodes or no tets");
  if (!mesh.nodes.allFinite()) throw ValidationError("mesh nodes contain non-finite coordinates");
  if (mesh.region_labels.size() != mesh.tet_count())
    throw ValidationError("region label count differs from tet count");
  for (Eigen::Index t = 0; t < mesh.tet_count(); ++t) {
    const auto row = mesh.tets.row(t);
    for (int k = 0; k < 4; ++k)
      if (row[k] < 0 || row[k] >= n)
        throw ValidationError(msg("tetrahedron ", t, " references node ", row[k]));
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b)
        if (row[a] == row[b]) throw ValidationError(msg("tetrahedron ", t, " repeats node ", row[a]));
    Eigen::Vector3d p0 = mesh.nodes.row(row[0]);
    Eigen::Matrix3d e;
    for (int k = 0; k < 3; ++k) e.col(k) = mesh.nodes.row(row[k + 1]).transpose() - p0;
    if (!(std::abs(e.determinant()) / 6.0 > 1e-18))
      throw ValidationError(msg("tetrahedron ", t, " is degenerate"));
  }
  auto uses = face_uses(mesh);
  size_t exterior = 0;
  for (const auto& [key, u] : uses) {
    if (u.count == 1) ++exterior;
    if (u.count > 2)
      throw ValidationError(msg("a face is shared by ", u.count, " tets (non-manifold mesh)"));
  }
  if (exterior != static_cast<size_t>(mesh.face_count()))
    throw ValidationError(msg("boundary list has ", mesh.face_count(), " faces but the mesh has ",
                              exterior, " exterior faces"));
  std::set<std::uint64_t> listed;
  for (Eigen::Index fidx = 0; fidx < mesh.face_count(); ++fidx) {
    const auto key = face_key(mesh.boundary_faces(fidx, 0), mesh.boundary_faces(fidx, 1),
                              mesh.boundary_faces(fidx, 2));
    auto it = uses.find(key);
    if (it == uses.end() || it->second.count != 1)
      throw ValidationError(msg("boundary face ", fidx, " is not an exterior tet face"));
    if (!listed.insert(key).second)
      throw ValidationError(msg("boundary face ", fidx, " is listed twice"));
  }
  if (mesh.boundary_normals.rows() != mesh.face_count())
    throw ValidationError("boundary normal count differs from face count");
  for (Eigen::Index fidx = 0; fidx < mesh.face_count(); ++fidx)
    if (std::abs(mesh.boundary_normals.row(fidx).norm() - 1.0) > 1e-12)
      throw ValidationError(msg("boundary normal ", fidx, " is not unit length"));
}

void validate_layout(const Mesh& mesh, const ElectrodeLayout& layout) {
  if (layout.count() < 2) throw ValidationError("layout needs at least 2 electrodes");
  std::unordered_map<int, int> owner;
  for (int m = 0; m < layout.count(); ++m) {
    const Electrode& e = layout.electrodes[static_cast<size_t>(m)];
    if (!(e.radius > 0.0)) throw ValidationError(msg("electrode ", m, " has non-positive radius"));
    if (e.faces.empty()) throw ValidationError(msg("electrode ", m, " owns no boundary faces"));
    for (int fidx : e.faces) {
      if (fidx < 0 || fidx >= mesh.face_count())
        throw ValidationError(msg("electrode ", m, " references boundary face ", fidx));
      auto [it, fresh] = owner.emplace(fidx, m);
      if (!fresh)
        throw ValidationError(msg("boundary face ", fidx, " is assigned to electrodes ",
                                  it->second, " and ", m));
    }
    if (std::abs(e.normal.norm() - 1.0) > 1e-10)
      throw ValidationError(msg("electrode ", m, " has a non-unit normal"));
  }
}

// ---- measures -------------------------------------------------------------------

double mesh_volume(const Mesh& mesh) {
  double vol = 0.0;
  for (Eigen::Index t = 0; t < mesh.tet_count(); ++t) {
    const auto row = mesh.tets.row(t);
    Eigen::Vector3d p0 = mesh.nodes.row(row[0]);
    Eigen::Matrix3d e;
    for (int k = 0; k < 3; ++k) e.col(k) = mesh.nodes.row(row[k + 1]).transpose() - p0;
    vol += std::abs(e.determinant()) / 6.0;
  }
  return vol;
}

double face_area(const Mesh& mesh, int face) {
  Eigen::Vector3d a = mesh.nodes.row(mesh.boundary_faces(face, 0));
  Eigen::Vector3d b = mesh.nodes.row(mesh.boundary_faces(face, 1));
  Eigen::Vector3d c = mesh.nodes.row(mesh.boundary_faces(face, 2));
  return 0.5 * (b - a).cross(c - a).norm();
}

Eigen::Vector3d face_barycenter(const Mesh& mesh, int face) {
  return (mesh.nodes.row(mesh.boundary_faces(face, 0)) +
          mesh.nodes.row(mesh.boundary_faces(face, 1)) +
          mesh.nodes.row(mesh.boundary_faces(face, 2))) / 3.0;
}

double patch_area(const Mesh& mesh, const Electrode& e) {
  double area = 0.0;
  for (int fidx : e.faces) area += face_area(mesh, fidx);
  return area;
}

double boundary_area(const Mesh& mesh) {
  double area = 0.0;
  for (Eigen::Index fidx = 0; fidx < mesh.face_count(); ++fidx)
    area += face_area(mesh, static_cast<int>(fidx));
  return area;
}

std::uint64_t mesh_hash(const Mesh& mesh) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (Eigen::Index i = 0; i < mesh.nodes.rows(); ++i)
    for (int k = 0; k < 3; ++k) {
      const double v = mesh.nodes(i, k);
      mix(&v, sizeof(v));
    }
  for (Eigen::Index t = 0; t < mesh.tets.rows(); ++t)
    for (int k = 0; k < 4; ++k) {
      const int v = mesh.tets(t, k);
      mix(&v, sizeof(v));
    }
  return h;
}

std::vector<int> nodes_in_cylinder(const Mesh& mesh, double cx, double cy, double radius,
                                   double zmin, double zmax) {
  std::vector<int> out;
  const double r2 = radius * radius;
  for (Eigen::Index i = 0; i < mesh.node_count(); ++i) {
    const double dx = mesh.nodes(i, 0) - cx, dy = mesh.nodes(i, 1) - cy;
    const double z = mesh.nodes(i, 2);
    if (dx * dx + dy * dy < r2 && z >= zmin && z <= zmax) out.push_back(static_cast<int>(i));
  }
  return out;
}

// ---- serialization ----------------------------------------------------------------

void save_mesh(const std::string& path, const Mesh& mesh, const ElectrodeLayout& layout) {
  nlohmann::json j;
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < mesh.node_count(); ++i)
    nodes.push_back({mesh.nodes(i, 0), mesh.nodes(i, 1), mesh.nodes(i, 2)});
  auto& tets = j["tets"] = nlohmann::json::array();
  for (Eigen::Index t = 0; t < mesh.tet_count(); ++t)
    tets.push_back({mesh.tets(t, 0), mesh.tets(t, 1), mesh.tets(t, 2), mesh.tets(t, 3)});
  auto& faces = j["boundary_faces"] = nlohmann::json::array();
  for (Eigen::Index fidx = 0; fidx < mesh.face_count(); ++fidx)
    faces.push_back({mesh.boundary_faces(fidx, 0), mesh.boundary_faces(fidx, 1),
                     mesh.boundary_faces(fidx, 2)});
  auto& regions = j["regions"] = nlohmann::json::array();
  for (Eigen::Index t = 0; t < mesh.tet_count(); ++t) regions.push_back(mesh.region_labels[t]);
  auto& els = j["electrodes"] = nlohmann::json::array();
  for (const Electrode& e : layout.electrodes) {
    nlohmann::json je;
    je["center"] = {e.center.x(), e.center.y(), e.center.z()};
    je["radius"] = e.radius;
    je["faces"] = e.faces;
    els.push_back(std::move(je));
  }
  if (layout.is_cylinder)
    j["generator"] = {{"kind", "cylinder"},
                      {"radius", layout.cylinder_radius},
                      {"height", layout.cylinder_height}};
  std::ofstream out(path);
  if (!out) throw ConfigError(msg("cannot open ", path, " for writing"));
  out << j.dump();
  out << "\n";
  if (!out) throw ConfigError(msg("failed writing ", path));
}

TankMesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(msg("cannot open mesh file ", path));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& ex) {
    throw ValidationError(msg("mesh file ", path, " is not valid JSON: ", ex.what()));
  }
  try {
    Mesh mesh;
    const auto& nodes = j.at("nodes");
    mesh.nodes.resize(static_cast<Eigen::Index>(nodes.size()), 3);
    for (size_t i = 0; i < nodes.size(); ++i)
      for (int k = 0; k < 3; ++k) mesh.nodes(static_cast<Eigen::Index>(i), k) = nodes[i].at(static_cast<size_t>(k)).get<double>();
    const auto& tets = j.at("tets");
    mesh.tets.resize(static_cast<Eigen::Index>(tets.size()), 4);
    for (size_t t = 0; t < tets.size(); ++t)
      for (int k = 0; k < 4; ++k) mesh.tets(static_cast<Eigen::Index>(t), k) = tets[t].at(static_cast<size_t>(k)).get<int>();
    const auto& faces = j.at("boundary_faces");
    mesh.boundary_faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (size_t fidx = 0; fidx < faces.size(); ++fidx)
      for (int k = 0; k < 3; ++k)
        mesh.boundary_faces(static_cast<Eigen::Index>(fidx), k) = faces[fidx].at(static_cast<size_t>(k)).get<int>();
    if (j.contains("regions")) {
      const auto& regions = j.at("regions");
      mesh.region_labels.resize(static_cast<Eigen::Index>(regions.size()));
      for (size_t t = 0; t < regions.size(); ++t)
        mesh.region_labels[static_cast<Eigen::Index>(t)] = regions[t].get<int>();
    } else {
      mesh.region_labels = Eigen::VectorXi::Zero(mesh.tet_count());
    }
    compute_normals(mesh);
    validate_mesh(mesh);

    ElectrodeLayout layout;
    const Eigen::Index n = mesh.node_count();
    Eigen::Vector3d lo = mesh.nodes.colwise().minCoeff();
    Eigen::Vector3d hi = mesh.nodes.colwise().maxCoeff();
    (void)n;
    layout.angle_origin << 0.5 * (lo.x() + hi.x()), 0.5 * (lo.y() + hi.y()), lo.z();
    if (j.contains("generator") && j["generator"].value("kind", "") == "cylinder") {
      layout.is_cylinder = true;
      layout.cylinder_radius = j["generator"].at("radius").get<double>();
      layout.cylinder_height = j["generator"].at("height").get<double>();
      layout.angle_origin.setZero();
    }
    for (const auto& je : j.at("electrodes")) {
      Electrode e;
      for (int k = 0; k < 3; ++k) e.center[k] = je.at("center").at(static_cast<size_t>(k)).get<double>();
      e.radius = je.at("radius").get<double>();
      e.faces = je.at("faces").get<std::vector<int>>();
      if (e.faces.empty())
        throw ValidationError(msg("electrode ", layout.count(), " owns no boundary faces"));
      Eigen::Vector3d nsum = Eigen::Vector3d::Zero();
      for (int fidx : e.faces) {
        if (fidx < 0 || fidx >= mesh.face_count())
          throw ValidationError(msg("electrode ", layout.count(), " references boundary face ", fidx));
        nsum += face_area(mesh, fidx) * mesh.boundary_normals.row(fidx).transpose();
      }
      if (!(nsum.norm() > 0.0))
        throw ValidationError(msg("electrode ", layout.count(), " has a vanishing mean normal"));
      e.normal = nsum.normalized();
      build_frame(e, layout.angle_origin);
      assign_band(mesh, e);
      layout.electrodes.push_back(std::move(e));
    }
    validate_layout(mesh, layout);
    return {std::move(mesh), std::move(layout)};
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(msg("mesh file ", path, " is malformed: ", ex.what()));
  }
}

}  // namespace eit
