#include "eit/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "eit/errors.hpp"
#include "eit/projection.hpp"
#include "eit/sensitivity.hpp"

namespace eit {

namespace {

using nlohmann::json;

void require_keys(const json& j, std::initializer_list<const char*> keys, const char* where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : keys)
      if (item.key() == k) known = true;
    if (!known) throw ValidationError(msg("unknown key '", item.key(), "' in ", where));
  }
}

double get_number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ValidationError(msg("'", key, "' must be a number"));
  return j[key].get<double>();
}

int get_int(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) throw ValidationError(msg("'", key, "' must be an integer"));
  return j[key].get<int>();
}

std::string get_string(const json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string()) throw ValidationError(msg("'", key, "' must be a string"));
  return j[key].get<std::string>();
}

Eigen::VectorXd get_vector(const json& j, const char* key) {
  if (!j.contains(key)) return Eigen::VectorXd();
  if (!j[key].is_array()) throw ValidationError(msg("'", key, "' must be an array"));
  Eigen::VectorXd v(j[key].size());
  Eigen::Index i = 0;
  for (const auto& e : j[key]) {
    if (!e.is_number()) throw ValidationError(msg("'", key, "' entries must be numbers"));
    v[i++] = e.get<double>();
  }
  return v;
}

json serialize_config(const ExperimentConfig& c) {
  json j;
  j["tank"] = {{"radius", c.tank.radius},
               {"height", c.tank.height},
               {"electrode_count", c.tank.electrode_count},
               {"electrode_radius", c.tank.electrode_radius},
               {"ring_heights", c.tank.ring_heights},
               {"coarsen", c.tank.coarsen}};
  j["refinement"] = c.refinement;
  j["data_refinement"] = c.data_refinement;
  j["sigma0"] = c.sigma0;
  j["zeta0"] = c.zeta0;
  if (c.inclusion) {
    j["inclusion"] = {{"center", {c.inclusion->cx, c.inclusion->cy, c.inclusion->cz}},
                      {"radius", c.inclusion->radius},
                      {"height", c.inclusion->height},
                      {"conductivity", c.inclusion->conductivity}};
  }
  json contacts;
  if (c.contacts.multipliers.size() > 0)
    contacts["multipliers"] =
        std::vector<double>(c.contacts.multipliers.begin(), c.contacts.multipliers.end());
  if (c.contacts.radius_scale.size() > 0)
    contacts["radius_scale"] =
        std::vector<double>(c.contacts.radius_scale.begin(), c.contacts.radius_scale.end());
  contacts["azimuth_jitter_deg"] = c.contacts.azimuth_jitter_deg;
  j["contacts"] = contacts;
  j["patterns"] = {{"kind", c.pattern_kind}, {"amplitude", c.amplitude}};
  j["noise_fraction"] = c.noise_fraction;
  j["projections"] = c.projections;
  j["algorithm"] = c.algorithm;
  j["gamma"] = c.gamma;
  j["n_iter"] = c.n_iter;
  j["T"] = c.T;
  j["epsilon"] = c.epsilon;
  j["seed"] = c.seed;
  j["draws"] = c.draws;
  j["region"] = {{"whole", c.region.whole}, {"center", {c.region.cx, c.region.cy}},
                 {"radius", c.region.radius}, {"zmin", c.region.zmin},
                 {"zmax", c.region.zmax}};
  j["field"] = {{"log_mean", c.field.log_mean},
                {"corr_length", c.field.corr_length},
                {"pointwise_std", c.field.pointwise_std}};
  j["contact_law"] = {{"offset", c.contact_law.offset},
                      {"shared", c.contact_law.shared},
                      {"independent", c.contact_law.independent}};
  j["slice_heights"] = c.slice_heights;
  j["measurements_dir"] = c.measurements_dir;
  return j;
}

void validate_config(const ExperimentConfig& c) {
  if (c.tank.radius <= 0 || c.tank.height <= 0 || c.tank.electrode_radius <= 0 ||
      c.tank.coarsen <= 0)
    throw DomainError("tank dimensions must be positive");
  if (c.tank.electrode_count < 2) throw DomainError("at least two electrodes required");
  if (c.refinement < 0 || c.data_refinement < 0)
    throw DomainError("refinement levels must be non-negative");
  if (c.sigma0 <= 0 || c.zeta0 <= 0) throw DomainError("background fields must be positive");
  if (c.inclusion) {
    const InclusionSpec& inc = *c.inclusion;
    if (inc.radius <= 0 || inc.conductivity <= 0)
      throw DomainError("inclusion radius and conductivity must be positive");
    if (std::hypot(inc.cx, inc.cy) + inc.radius >= c.tank.radius)
      throw DomainError(msg("inclusion at radius ", std::hypot(inc.cx, inc.cy),
                            " does not fit inside the tank"));
    if (inc.height > 0 &&
        (inc.cz - 0.5 * inc.height < 0 || inc.cz + 0.5 * inc.height > c.tank.height))
      throw DomainError("inclusion column extends outside the tank");
  }
  const int m = c.tank.electrode_count;
  if (c.contacts.multipliers.size() > 0) {
    if (c.contacts.multipliers.size() != m)
      throw DomainError(msg("contact multipliers have ", c.contacts.multipliers.size(),
                            " entries for ", m, " electrodes"));
    if (c.contacts.multipliers.minCoeff() <= 0)
      throw DomainError("contact multipliers must be positive");
  }
  if (c.contacts.radius_scale.size() > 0) {
    if (c.contacts.radius_scale.size() != m)
      throw DomainError(msg("radius scales have ", c.contacts.radius_scale.size(),
                            " entries for ", m, " electrodes"));
    if (c.contacts.radius_scale.minCoeff() <= 0 || c.contacts.radius_scale.maxCoeff() > 1.0)
      throw DomainError("radius scales must lie in (0, 1]");
  }
  if (c.contacts.azimuth_jitter_deg < 0) throw DomainError("azimuth jitter must be non-negative");
  if (c.pattern_kind != "adjacent" && c.pattern_kind != "opposite" && c.pattern_kind != "fourier")
    throw DomainError(msg("unknown pattern kind '", c.pattern_kind, "'"));
  if (c.amplitude <= 0) throw DomainError("pattern amplitude must be positive");
  if (c.noise_fraction < 0) throw DomainError("noise fraction must be non-negative");
  for (const std::string& p : c.projections)
    if (p != "none" && p != "zeta" && p != "zeta_phi" && p != "zeta_theta_phi")
      throw DomainError(msg("unknown projection '", p, "'"));
  if (c.algorithm != "one_step" && c.algorithm != "lagged_diffusivity")
    throw DomainError(msg("unknown algorithm '", c.algorithm, "'"));
  if (c.gamma <= 0) throw DomainError("gamma must be positive");
  if (c.n_iter < 1) throw DomainError("n_iter must be at least 1");
  if (c.T <= 0) throw DomainError("T must be positive");
  if (c.epsilon < 0) throw DomainError("epsilon must be non-negative");
  if (c.draws < 1) throw DomainError("draws must be at least 1");
  if (!c.region.whole && c.region.radius <= 0) throw DomainError("region radius must be positive");
  if (c.field.corr_length <= 0 || c.field.pointwise_std <= 0)
    throw DomainError("field law parameters must be positive");
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << v;
  return out.str();
}

json provenance(const ExperimentConfig& c) {
  return {{"config_hash", hex64(config_hash(c))},
          {"seed", c.seed},
          {"version", kToolkitVersion}};
}

void ensure_dir(const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ResourceError(msg("cannot create directory ", out_dir, ": ", ec.message()));
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ResourceError(msg("cannot open ", path, " for writing"));
  out << j.dump(2) << "\n";
  if (!out) throw ResourceError(msg("failed writing ", path));
}

void write_matrix_triplets(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw ResourceError(msg("cannot open ", path, " for writing"));
  out << "row,col,value\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << i << "," << j << "," << m(i, j) << "\n";
  if (!out) throw ResourceError(msg("failed writing ", path));
}

// Perturbed copy of the generated layout: radius scaling first (it shrinks the
// patch in place), then the azimuth placement error, both rebuilt through the
// repositioning path so patches and bands stay consistent.
ElectrodeLayout perturb_layout(const Mesh& mesh, const ElectrodeLayout& nominal,
                               const ExperimentConfig& c) {
  ElectrodeLayout layout = nominal;
  const int m = layout.count();
  bool touched = false;
  if (c.contacts.radius_scale.size() > 0) {
    for (int e = 0; e < m; ++e) layout.electrodes[e].radius *= c.contacts.radius_scale[e];
    touched = true;
  }
  std::vector<double> phi(m);
  for (int e = 0; e < m; ++e) phi[e] = layout.electrodes[e].phi;
  if (c.contacts.azimuth_jitter_deg > 0) {
    Rng rng(derive_seed(c.seed, 7));
    const double amplitude = c.contacts.azimuth_jitter_deg * M_PI / 180.0;
    for (int e = 0; e < m; ++e) phi[e] += (2.0 * rng.uniform() - 1.0) * amplitude;
    touched = true;
  }
  if (!touched) return layout;
  for (int e = 0; e < m; ++e)
    layout = reposition_electrode(mesh, layout, e, layout.electrodes[e].theta, phi[e]);
  return layout;
}

std::vector<int> region_nodes(const ExperimentConfig& c, const Mesh& mesh) {
  if (c.region.whole) {
    std::vector<int> all(static_cast<size_t>(mesh.node_count()));
    for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return all;
  }
  std::vector<int> nodes =
      nodes_in_cylinder(mesh, c.region.cx, c.region.cy, c.region.radius, c.region.zmin,
                        c.region.zmax);
  if (nodes.empty()) throw DomainError("field region contains no mesh nodes");
  return nodes;
}

struct ProjectionSet {
  std::vector<std::string> names;            // without "none"
  std::vector<ProjectionOperator> operators;  // parallel to names

  const ProjectionOperator* find(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return &operators[i];
    return nullptr;
  }
};

// Jacobian blocks at the nominal background on the inversion mesh, combined
// per requested projection kind.
ProjectionSet build_projections(const ExperimentConfig& c, const ForwardSolver& solver,
                                const CurrentPatterns& patterns, const ForwardSolution& fwd) {
  bool need_angles = false, need_any = false;
  for (const std::string& p : c.projections) {
    if (p == "none") continue;
    need_any = true;
    if (p != "zeta") need_angles = true;
  }
  ProjectionSet set;
  if (!need_any) return set;
  AdjointSet adj = build_adjoints(solver, patterns, &fwd);
  Eigen::MatrixXd jz = jacobian_peaks(solver, fwd, adj);
  AngleJacobians ja;
  if (need_angles) ja = jacobian_angles(solver, fwd, adj);
  for (const std::string& p : c.projections) {
    if (p == "none" || set.find(p)) continue;
    std::vector<const Eigen::MatrixXd*> blocks{&jz};
    if (p == "zeta_phi") blocks.push_back(&ja.phi);
    if (p == "zeta_theta_phi") {
      blocks.push_back(&ja.theta);
      blocks.push_back(&ja.phi);
    }
    set.names.push_back(p);
    set.operators.push_back(build_projection(blocks, p));
  }
  return set;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(msg("cannot open config file ", path));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(msg("config file ", path, " is not valid JSON: ", e.what()));
  }
  if (!j.is_object()) throw ValidationError(msg("config file ", path, " must hold a JSON object"));

  ExperimentConfig c;
  try {
    require_keys(j,
                 {"tank", "refinement", "data_refinement", "sigma0", "zeta0", "inclusion",
                  "contacts", "patterns", "noise_fraction", "projections", "algorithm", "gamma",
                  "n_iter", "T", "epsilon", "seed", "draws", "region", "field", "contact_law",
                  "slice_heights", "measurements_dir"},
                 "config");
    if (j.contains("tank")) {
      const json& t = j["tank"];
      require_keys(t, {"radius", "height", "electrode_count", "electrode_radius", "ring_heights",
                       "coarsen"},
                   "tank");
      c.tank.radius = get_number(t, "radius", c.tank.radius);
      c.tank.height = get_number(t, "height", c.tank.height);
      c.tank.electrode_count = get_int(t, "electrode_count", c.tank.electrode_count);
      c.tank.electrode_radius = get_number(t, "electrode_radius", c.tank.electrode_radius);
      c.tank.coarsen = get_number(t, "coarsen", c.tank.coarsen);
      Eigen::VectorXd rings = get_vector(t, "ring_heights");
      c.tank.ring_heights.assign(rings.begin(), rings.end());
    }
    c.refinement = get_int(j, "refinement", c.refinement);
    c.data_refinement = get_int(j, "data_refinement", c.data_refinement);
    c.sigma0 = get_number(j, "sigma0", c.sigma0);
    c.zeta0 = get_number(j, "zeta0", c.zeta0);
    if (j.contains("inclusion") && !j["inclusion"].is_null()) {
      const json& inc = j["inclusion"];
      require_keys(inc, {"center", "radius", "height", "conductivity"}, "inclusion");
      InclusionSpec spec;
      Eigen::VectorXd center = get_vector(inc, "center");
      if (center.size() != 3) throw ValidationError("inclusion center must have 3 components");
      spec.cx = center[0];
      spec.cy = center[1];
      spec.cz = center[2];
      spec.radius = get_number(inc, "radius", spec.radius);
      spec.height = get_number(inc, "height", spec.height);
      spec.conductivity = get_number(inc, "conductivity", spec.conductivity);
      c.inclusion = spec;
    }
    if (j.contains("contacts")) {
      const json& ct = j["contacts"];
      require_keys(ct, {"multipliers", "radius_scale", "azimuth_jitter_deg"}, "contacts");
      c.contacts.multipliers = get_vector(ct, "multipliers");
      c.contacts.radius_scale = get_vector(ct, "radius_scale");
      c.contacts.azimuth_jitter_deg = get_number(ct, "azimuth_jitter_deg", 0.0);
    }
    if (j.contains("patterns")) {
      const json& p = j["patterns"];
      require_keys(p, {"kind", "amplitude"}, "patterns");
      c.pattern_kind = get_string(p, "kind", c.pattern_kind);
      c.amplitude = get_number(p, "amplitude", c.amplitude);
    }
    c.noise_fraction = get_number(j, "noise_fraction", c.noise_fraction);
    if (j.contains("projections")) {
      if (!j["projections"].is_array()) throw ValidationError("'projections' must be an array");
      c.projections.clear();
      for (const auto& e : j["projections"]) {
        if (!e.is_string()) throw ValidationError("'projections' entries must be strings");
        c.projections.push_back(e.get<std::string>());
      }
    }
    c.algorithm = get_string(j, "algorithm", c.algorithm);
    c.gamma = get_number(j, "gamma", c.gamma);
    c.n_iter = get_int(j, "n_iter", c.n_iter);
    c.T = get_number(j, "T", c.T);
    c.epsilon = get_number(j, "epsilon", c.epsilon);
    if (j.contains("seed")) {
      if (!j["seed"].is_number_integer() || j["seed"].get<std::int64_t>() < 0)
        throw ValidationError("'seed' must be a non-negative integer");
      c.seed = j["seed"].get<std::uint64_t>();
    }
    c.draws = get_int(j, "draws", c.draws);
    if (j.contains("region")) {
      const json& r = j["region"];
      require_keys(r, {"whole", "center", "radius", "zmin", "zmax"}, "region");
      if (r.contains("whole")) {
        if (!r["whole"].is_boolean()) throw ValidationError("'whole' must be a boolean");
        c.region.whole = r["whole"].get<bool>();
      }
      Eigen::VectorXd center = get_vector(r, "center");
      if (center.size() == 2) {
        c.region.cx = center[0];
        c.region.cy = center[1];
      } else if (center.size() != 0) {
        throw ValidationError("region center must have 2 components");
      }
      c.region.radius = get_number(r, "radius", c.region.radius);
      c.region.zmin = get_number(r, "zmin", c.region.zmin);
      c.region.zmax = get_number(r, "zmax", c.region.zmax);
    }
    if (j.contains("field")) {
      const json& f = j["field"];
      require_keys(f, {"log_mean", "corr_length", "pointwise_std"}, "field");
      c.field.log_mean = get_number(f, "log_mean", c.field.log_mean);
      c.field.corr_length = get_number(f, "corr_length", c.field.corr_length);
      c.field.pointwise_std = get_number(f, "pointwise_std", c.field.pointwise_std);
    }
    if (j.contains("contact_law")) {
      const json& l = j["contact_law"];
      require_keys(l, {"offset", "shared", "independent"}, "contact_law");
      c.contact_law.offset = get_number(l, "offset", c.contact_law.offset);
      c.contact_law.shared = get_number(l, "shared", c.contact_law.shared);
      c.contact_law.independent = get_number(l, "independent", c.contact_law.independent);
    }
    if (j.contains("slice_heights")) {
      Eigen::VectorXd hs = get_vector(j, "slice_heights");
      c.slice_heights.assign(hs.begin(), hs.end());
    }
    c.measurements_dir = get_string(j, "measurements_dir", c.measurements_dir);
  } catch (const json::exception& e) {
    throw ValidationError(msg("config file ", path, ": ", e.what()));
  }
  validate_config(c);
  return c;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  return fnv1a(serialize_config(config).dump());
}

Eigen::VectorXd sigma_field(const ExperimentConfig& config, const Mesh& mesh,
                            bool with_inclusion) {
  Eigen::VectorXd sigma = Eigen::VectorXd::Constant(mesh.node_count(), config.sigma0);
  if (!with_inclusion || !config.inclusion) return sigma;
  const InclusionSpec& inc = *config.inclusion;
  for (Eigen::Index i = 0; i < mesh.node_count(); ++i) {
    const double dx = mesh.nodes(i, 0) - inc.cx, dy = mesh.nodes(i, 1) - inc.cy;
    if (dx * dx + dy * dy > inc.radius * inc.radius) continue;
    if (inc.height > 0 && std::abs(mesh.nodes(i, 2) - inc.cz) > 0.5 * inc.height) continue;
    sigma[i] = inc.conductivity;
  }
  return sigma;
}

Eigen::VectorXd zeta_peaks(const ExperimentConfig& config, bool perturbed) {
  Eigen::VectorXd peaks =
      Eigen::VectorXd::Constant(config.tank.electrode_count, config.zeta0);
  if (perturbed && config.contacts.multipliers.size() > 0)
    peaks.array() *= config.contacts.multipliers.array();
  return peaks;
}

SimulatedData simulate_experiment(const ExperimentConfig& config) {
  validate_config(config);
  SimulatedData data;
  TankMesh nominal =
      generate_cylinder_tank(config.tank, config.refinement + config.data_refinement);
  data.tank.mesh = std::move(nominal.mesh);
  data.tank.layout = perturb_layout(data.tank.mesh, nominal.layout, config);

  CurrentPatterns patterns =
      make_patterns(config.tank.electrode_count, config.pattern_kind, config.amplitude);
  const Eigen::VectorXd sigma_base = sigma_field(config, data.tank.mesh, false);
  const Eigen::VectorXd sigma_inc = sigma_field(config, data.tank.mesh, true);
  const Eigen::VectorXd zeta_base = zeta_peaks(config, false);
  const Eigen::VectorXd zeta_pert = zeta_peaks(config, true);

  ForwardSolver measured(data.tank.mesh, data.tank.layout);
  measured.set_fields(sigma_base, zeta_base);
  data.base = measured.measure(patterns.currents);
  measured.set_fields(sigma_inc, zeta_base);
  data.sigma_only = measured.measure(patterns.currents);
  measured.set_fields(sigma_base, zeta_pert);
  data.zeta_only = measured.measure(patterns.currents);
  measured.set_fields(sigma_inc, zeta_pert);
  data.both = measured.measure(patterns.currents);

  if (config.contacts.azimuth_jitter_deg == 0 && config.contacts.radius_scale.size() == 0) {
    data.reference = data.base;
  } else {
    ForwardSolver model(data.tank.mesh, nominal.layout);
    model.set_fields(sigma_base, zeta_base);
    data.reference = model.measure(patterns.currents);
  }

  if (config.noise_fraction > 0) data.noise = make_noise(data.base, config.noise_fraction);
  return data;
}

void run_mesh_gen(const ExperimentConfig& config, const std::string& out_dir) {
  validate_config(config);
  ensure_dir(out_dir);
  TankMesh tank = generate_cylinder_tank(config.tank, config.refinement);
  save_mesh(join(out_dir, "mesh.json"), tank.mesh, tank.layout);
  json sidecar = provenance(config);
  sidecar["mesh_hash"] = hex64(mesh_hash(tank.mesh));
  sidecar["nodes"] = tank.mesh.node_count();
  sidecar["tets"] = tank.mesh.tet_count();
  sidecar["boundary_faces"] = tank.mesh.face_count();
  write_json(join(out_dir, "mesh_gen.json"), sidecar);
}

void run_simulate(const ExperimentConfig& config, const std::string& out_dir) {
  ensure_dir(out_dir);
  SimulatedData data = simulate_experiment(config);
  const Eigen::Index m = data.base.rows(), n = data.base.cols();
  const char* names[4] = {"u_base.csv", "u_sigma.csv", "u_zeta.csv", "u_both.csv"};
  const Eigen::MatrixXd* states[4] = {&data.base, &data.sigma_only, &data.zeta_only, &data.both};
  for (int k = 0; k < 4; ++k) {
    Eigen::MatrixXd out = *states[k];
    if (config.noise_fraction > 0) {
      Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(k)));
      out += data.noise.sample(m * n, rng).reshaped(m, n);
    }
    save_measurements(join(out_dir, names[k]), out);
  }
  save_measurements(join(out_dir, "reference.csv"), data.reference);
  json sidecar = provenance(config);
  sidecar["mesh_hash"] = hex64(mesh_hash(data.tank.mesh));
  sidecar["noise_s"] = config.noise_fraction > 0 ? data.noise.s : 0.0;
  sidecar["patterns"] = config.pattern_kind;
  sidecar["electrodes"] = m;
  sidecar["pattern_count"] = n;
  write_json(join(out_dir, "simulate.json"), sidecar);
}

void run_jacobian(const ExperimentConfig& config, const std::string& out_dir) {
  validate_config(config);
  ensure_dir(out_dir);
  TankMesh tank = generate_cylinder_tank(config.tank, config.refinement);
  CurrentPatterns patterns =
      make_patterns(config.tank.electrode_count, config.pattern_kind, config.amplitude);
  ForwardSolver solver(tank.mesh, tank.layout);
  solver.set_fields(sigma_field(config, tank.mesh, false), zeta_peaks(config, false));
  ForwardSolution fwd = solver.solve(patterns.currents);
  AdjointSet adj = build_adjoints(solver, patterns, &fwd);
  write_matrix_triplets(join(out_dir, "jac_sigma.csv"), jacobian_sigma(solver, fwd, adj));
  write_matrix_triplets(join(out_dir, "jac_zeta.csv"), jacobian_peaks(solver, fwd, adj));
  AngleJacobians angles = jacobian_angles(solver, fwd, adj);
  write_matrix_triplets(join(out_dir, "jac_theta.csv"), angles.theta);
  write_matrix_triplets(join(out_dir, "jac_phi.csv"), angles.phi);
  json sidecar = provenance(config);
  sidecar["mesh_hash"] = hex64(mesh_hash(tank.mesh));
  sidecar["rows"] = patterns.currents.cols() * patterns.currents.rows();
  sidecar["sigma_cols"] = tank.mesh.node_count();
  sidecar["electrode_cols"] = config.tank.electrode_count;
  write_json(join(out_dir, "jacobian.json"), sidecar);
}

void run_project(const ExperimentConfig& config, const std::string& out_dir) {
  validate_config(config);
  ensure_dir(out_dir);
  TankMesh tank = generate_cylinder_tank(config.tank, config.refinement);
  CurrentPatterns patterns =
      make_patterns(config.tank.electrode_count, config.pattern_kind, config.amplitude);
  ForwardSolver solver(tank.mesh, tank.layout);
  solver.set_fields(sigma_field(config, tank.mesh, false), zeta_peaks(config, false));
  ForwardSolution fwd = solver.solve(patterns.currents);
  ProjectionSet set = build_projections(config, solver, patterns, fwd);
  if (set.names.empty()) throw DomainError("no projection requested");
  for (size_t i = 0; i < set.names.size(); ++i) {
    const ProjectionOperator& p = set.operators[i];
    write_matrix_triplets(join(out_dir, "projection_" + set.names[i] + ".csv"), p.matrix);
    json sidecar = provenance(config);
    sidecar["mesh_hash"] = hex64(mesh_hash(tank.mesh));
    sidecar["blocks"] = p.blocks;
    sidecar["removed"] = p.removed;
    sidecar["trace"] = p.matrix.trace();
    write_json(join(out_dir, "projection_" + set.names[i] + ".json"), sidecar);
  }
}

AnglesStudyReport run_angles_study(const ExperimentConfig& config, const std::string& out_dir) {
  validate_config(config);
  ensure_dir(out_dir);
  TankMesh tank = generate_cylinder_tank(config.tank, config.refinement);
  CurrentPatterns patterns =
      make_patterns(config.tank.electrode_count, config.pattern_kind, config.amplitude);
  const Eigen::VectorXd sigma0 = sigma_field(config, tank.mesh, false);
  const Eigen::VectorXd zeta0 = zeta_peaks(config, false);
  ForwardSolver solver(tank.mesh, tank.layout);
  solver.set_fields(sigma0, zeta0);
  ForwardSolution fwd0 = solver.solve(patterns.currents);
  AdjointSet adj0 = build_adjoints(solver, patterns, &fwd0);
  const Eigen::MatrixXd jz0 = jacobian_peaks(solver, fwd0, adj0);
  const ProjectionOperator p0 = build_projection({&jz0}, "zeta");

  GaussianFieldSampler sampler(tank.mesh, region_nodes(config, tank.mesh), config.field);

  AnglesStudyReport report;
  report.theta_max_deg.resize(config.draws);
  report.err_f.resize(config.draws);

  auto write_report = [&](int completed) {
    std::ofstream out(join(out_dir, "angles.csv"));
    if (!out) throw ResourceError(msg("cannot open ", join(out_dir, "angles.csv")));
    out << "draw,theta_max_deg,err_F\n";
    out.precision(17);
    for (int d = 0; d < completed; ++d)
      out << d << "," << report.theta_max_deg[d] << "," << report.err_f[d] << "\n";
    if (completed > 0) {
      const auto theta = report.theta_max_deg.head(completed);
      const auto err = report.err_f.head(completed);
      auto sample_std = [&](const Eigen::VectorXd& v) {
        if (v.size() < 2) return 0.0;
        const double mean = v.mean();
        return std::sqrt((v.array() - mean).square().sum() / (v.size() - 1));
      };
      out << "max," << theta.maxCoeff() << "," << err.maxCoeff() << "\n";
      out << "mean," << theta.mean() << "," << err.mean() << "\n";
      out << "std," << sample_std(theta) << "," << sample_std(err) << "\n";
    }
    if (!out) throw ResourceError("failed writing angles report");
    json sidecar = provenance(config);
    sidecar["mesh_hash"] = hex64(mesh_hash(tank.mesh));
    sidecar["draws_requested"] = config.draws;
    sidecar["draws_completed"] = completed;
    write_json(join(out_dir, "angles.json"), sidecar);
  };

  for (int d = 0; d < config.draws; ++d) {
    try {
      Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(d)));
      Eigen::VectorXd zeta = draw_contacts(config.contact_law, tank.layout.count(), rng);
      Eigen::VectorXd sigma = sigma0;
      sampler.draw(sigma, rng);
      solver.set_fields(sigma, zeta);
      ForwardSolution fwd = solver.solve(patterns.currents);
      AdjointSet adj = build_adjoints(solver, patterns, &fwd);
      Eigen::MatrixXd jz = jacobian_peaks(solver, fwd, adj);
      ProjectionOperator p = build_projection({&jz}, "zeta");
      report.theta_max_deg[d] = principal_angles(p0, p).back();
      report.err_f[d] = frobenius_discrepancy(jz, jz0);
      report.completed = d + 1;
    } catch (const Error&) {
      write_report(report.completed);  // partial report survives the abort
      throw;
    }
  }
  write_report(report.completed);
  return report;
}

SignalStudyReport run_signal_study(const ExperimentConfig& config, const std::string& out_dir) {
  validate_config(config);
  ensure_dir(out_dir);
  Eigen::VectorXd base, sigma_only, zeta_only, both;
  std::uint64_t data_hash = 0;
  if (config.measurements_dir.empty()) {
    SimulatedData data = simulate_experiment(config);
    base = data.base.reshaped();
    sigma_only = data.sigma_only.reshaped();
    zeta_only = data.zeta_only.reshaped();
    both = data.both.reshaped();
    data_hash = mesh_hash(data.tank.mesh);
  } else {
    base = load_measurements(join(config.measurements_dir, "u_base.csv")).reshaped();
    sigma_only = load_measurements(join(config.measurements_dir, "u_sigma.csv")).reshaped();
    zeta_only = load_measurements(join(config.measurements_dir, "u_zeta.csv")).reshaped();
    both = load_measurements(join(config.measurements_dir, "u_both.csv")).reshaped();
  }

  TankMesh inversion = generate_cylinder_tank(config.tank, config.refinement);
  CurrentPatterns patterns =
      make_patterns(config.tank.electrode_count, config.pattern_kind, config.amplitude);
  ForwardSolver solver(inversion.mesh, inversion.layout);
  solver.set_fields(sigma_field(config, inversion.mesh, false), zeta_peaks(config, false));
  ForwardSolution fwd = solver.solve(patterns.currents);
  ProjectionSet set = build_projections(config, solver, patterns, fwd);
  std::vector<const ProjectionOperator*> ops;
  for (const ProjectionOperator& p : set.operators) ops.push_back(&p);

  SignalStudyReport report;
  report.bundle = signal_bundle(base, sigma_only, zeta_only, both, ops);
  report.projections = set.names;

  {
    std::ofstream out(join(out_dir, "signal_norms.csv"));
    if (!out) throw ResourceError("cannot open signal_norms.csv");
    out << "projection,s_sigma,s_zeta,s_combined\n";
    out.precision(17);
    out << "none," << report.bundle.s_sigma.norm() << "," << report.bundle.s_zeta.norm() << ","
        << report.bundle.s_combined.norm() << "\n";
    for (size_t i = 0; i < set.names.size(); ++i) {
      const auto& p = report.bundle.projected[i];
      out << set.names[i] << "," << p.s_sigma.norm() << "," << p.s_zeta.norm() << ","
          << p.s_combined.norm() << "\n";
    }
    if (!out) throw ResourceError("failed writing signal_norms.csv");
  }
  {
    std::ofstream out(join(out_dir, "signals.csv"));
    if (!out) throw ResourceError("cannot open signals.csv");
    out << "projection,pattern,electrode,s_sigma,s_zeta,s_combined\n";
    out.precision(17);
    const int m = config.tank.electrode_count;
    auto dump = [&](const std::string& label, const Eigen::VectorXd& ss, const Eigen::VectorXd& sz,
                    const Eigen::VectorXd& sc) {
      for (Eigen::Index r = 0; r < ss.size(); ++r)
        out << label << "," << r / m << "," << r % m << "," << ss[r] << "," << sz[r] << ","
            << sc[r] << "\n";
    };
    dump("none", report.bundle.s_sigma, report.bundle.s_zeta, report.bundle.s_combined);
    for (size_t i = 0; i < set.names.size(); ++i)
      dump(set.names[i], report.bundle.projected[i].s_sigma, report.bundle.projected[i].s_zeta,
           report.bundle.projected[i].s_combined);
    if (!out) throw ResourceError("failed writing signals.csv");
  }
  json sidecar = provenance(config);
  if (data_hash) sidecar["data_mesh_hash"] = hex64(data_hash);
  sidecar["projections"] = set.names;
  write_json(join(out_dir, "signal_study.json"), sidecar);
  return report;
}

ReconstructionReport run_reconstruct(const ExperimentConfig& config, const std::string& out_dir) {
  validate_config(config);
  ensure_dir(out_dir);

  Eigen::VectorXd y;
  NoiseModel noise;
  if (config.measurements_dir.empty()) {
    SimulatedData data = simulate_experiment(config);
    Eigen::VectorXd measured = data.both.reshaped();
    if (config.noise_fraction > 0) {
      Rng rng(derive_seed(config.seed, 3));  // the stream the u_both file carries
      measured += data.noise.sample(measured.size(), rng);
      noise = data.noise;
    } else {
      noise = make_noise(data.base, 0.005);  // whitening scale only, no added noise
    }
    y = measured - data.reference.reshaped();
  } else {
    Eigen::MatrixXd both = load_measurements(join(config.measurements_dir, "u_both.csv"));
    Eigen::MatrixXd reference =
        load_measurements(join(config.measurements_dir, "reference.csv"));
    Eigen::MatrixXd base = load_measurements(join(config.measurements_dir, "u_base.csv"));
    if (both.rows() != reference.rows() || both.cols() != reference.cols())
      throw ValidationError("measurement and reference files disagree in shape");
    noise = make_noise(base, config.noise_fraction > 0 ? config.noise_fraction : 0.005);
    y = (both - reference).reshaped();
  }

  ReconstructionReport report;
  report.inversion = generate_cylinder_tank(config.tank, config.refinement);
  report.noise_s = noise.s;
  const Mesh& mesh = report.inversion.mesh;
  CurrentPatterns patterns =
      make_patterns(config.tank.electrode_count, config.pattern_kind, config.amplitude);
  ForwardSolver solver(mesh, report.inversion.layout);
  solver.set_fields(sigma_field(config, mesh, false), zeta_peaks(config, false));
  ForwardSolution fwd = solver.solve(patterns.currents);
  if (y.size() != fwd.electrode_potential.size())
    throw ValidationError(msg("data has ", y.size(), " entries but the model produces ",
                              fwd.electrode_potential.size()));
  AdjointSet adj = build_adjoints(solver, patterns, &fwd);
  const Eigen::MatrixXd js = jacobian_sigma(solver, fwd, adj);
  ProjectionSet set = build_projections(config, solver, patterns, fwd);

  RegularizerState reg{config.T, config.epsilon, config.gamma};
  const std::vector<TetGeometry>& geom = solver.geometry();
  for (const std::string& name : config.projections) {
    const ProjectionOperator* p = name == "none" ? nullptr : set.find(name);
    LinearizedProblem problem = build_problem(mesh, geom, js, y, noise, p, reg);
    ReconstructionResult result = config.algorithm == "one_step"
                                      ? one_step(problem)
                                      : lagged_diffusivity(problem, config.n_iter);
    save_nodal(join(out_dir, "w_" + name + ".csv"), result.w);
    json sidecar = provenance(config);
    sidecar["projection"] = name;
    sidecar["algorithm"] = config.algorithm;
    sidecar["gamma"] = result.gamma;
    sidecar["T"] = result.T;
    sidecar["epsilon"] = result.epsilon;
    sidecar["n_iter"] = config.algorithm == "one_step" ? 1 : config.n_iter;
    sidecar["noise_s"] = noise.s;
    sidecar["mesh_hash"] = hex64(mesh_hash(mesh));
    sidecar["objectives"] = result.objectives;
    write_json(join(out_dir, "w_" + name + ".json"), sidecar);
    for (double z : config.slice_heights) {
      std::ostringstream slice_name;
      slice_name << "slice_" << name << "_z" << std::fixed << std::setprecision(3) << z << ".csv";
      std::vector<SliceSample> samples = slice_values(mesh, result.w, z);
      std::ofstream out(join(out_dir, slice_name.str()));
      if (!out) throw ResourceError(msg("cannot open ", slice_name.str()));
      out << "x,y,value\n";
      out.precision(17);
      for (const SliceSample& s : samples) out << s.x << "," << s.y << "," << s.value << "\n";
      if (!out) throw ResourceError(msg("failed writing ", slice_name.str()));
    }
    report.runs.push_back(std::move(result));
  }
  return report;
}

std::vector<SliceSample> slice_values(const Mesh& mesh, const Eigen::VectorXd& values, double z,
                                      int grid) {
  if (values.size() != mesh.node_count())
    throw ValidationError(msg("field has ", values.size(), " entries for ", mesh.node_count(),
                              " nodes"));
  if (grid < 2) throw DomainError("slice grid must have at least 2 points per axis");

  // candidate tets crossing the plane, with their xy bounding boxes
  struct Candidate {
    int tet;
    double xmin, xmax, ymin, ymax;
  };
  std::vector<Candidate> candidates;
  double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
  bool first = true;
  for (Eigen::Index t = 0; t < mesh.tet_count(); ++t) {
    double zmin = 1e300, zmax = -1e300;
    Candidate c{static_cast<int>(t), 1e300, -1e300, 1e300, -1e300};
    for (int k = 0; k < 4; ++k) {
      const auto p = mesh.nodes.row(mesh.tets(t, k));
      zmin = std::min(zmin, p[2]);
      zmax = std::max(zmax, p[2]);
      c.xmin = std::min(c.xmin, p[0]);
      c.xmax = std::max(c.xmax, p[0]);
      c.ymin = std::min(c.ymin, p[1]);
      c.ymax = std::max(c.ymax, p[1]);
    }
    if (z < zmin - 1e-12 || z > zmax + 1e-12) continue;
    candidates.push_back(c);
    if (first) {
      xlo = c.xmin;
      xhi = c.xmax;
      ylo = c.ymin;
      yhi = c.ymax;
      first = false;
    } else {
      xlo = std::min(xlo, c.xmin);
      xhi = std::max(xhi, c.xmax);
      ylo = std::min(ylo, c.ymin);
      yhi = std::max(yhi, c.ymax);
    }
  }
  if (candidates.empty())
    throw DomainError(msg("slice height ", z, " lies outside the meshed column"));

  std::vector<SliceSample> samples;
  const double bary_slack = -1e-10;
  for (int iy = 0; iy < grid; ++iy) {
    for (int ix = 0; ix < grid; ++ix) {
      const double x = xlo + (xhi - xlo) * ix / (grid - 1);
      const double yy = ylo + (yhi - ylo) * iy / (grid - 1);
      const Eigen::Vector3d p(x, yy, z);
      for (const Candidate& c : candidates) {
        if (x < c.xmin || x > c.xmax || yy < c.ymin || yy > c.ymax) continue;
        const Eigen::Vector3d p0 = mesh.nodes.row(mesh.tets(c.tet, 0));
        Eigen::Matrix3d edges;
        for (int k = 0; k < 3; ++k)
          edges.col(k) = mesh.nodes.row(mesh.tets(c.tet, k + 1)).transpose() - p0;
        const Eigen::Vector3d lambda = edges.colPivHouseholderQr().solve(p - p0);
        const double l0 = 1.0 - lambda.sum();
        if (lambda.minCoeff() < bary_slack || l0 < bary_slack) continue;
        double value = l0 * values[mesh.tets(c.tet, 0)];
        for (int k = 0; k < 3; ++k) value += lambda[k] * values[mesh.tets(c.tet, k + 1)];
        samples.push_back({x, yy, value});
        break;
      }
    }
  }
  return samples;
}

void run_slice(const ExperimentConfig& config, const std::string& values_csv, double z,
               const std::string& out_path) {
  validate_config(config);
  TankMesh tank = generate_cylinder_tank(config.tank, config.refinement);
  Eigen::VectorXd values = load_nodal(values_csv);
  std::vector<SliceSample> samples = slice_values(tank.mesh, values, z);
  std::ofstream out(out_path);
  if (!out) throw ResourceError(msg("cannot open ", out_path, " for writing"));
  out << "x,y,value\n";
  out.precision(17);
  for (const SliceSample& s : samples) out << s.x << "," << s.y << "," << s.value << "\n";
  if (!out) throw ResourceError(msg("failed writing ", out_path));
}

void save_nodal(const std::string& path, const Eigen::VectorXd& values) {
  std::ofstream out(path);
  if (!out) throw ConfigError(msg("cannot open ", path, " for writing"));
  out << "node,value\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < values.size(); ++i) out << i << "," << values[i] << "\n";
  if (!out) throw ConfigError(msg("failed writing ", path));
}

Eigen::VectorXd load_nodal(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(msg("cannot open nodal file ", path));
  std::string line;
  if (!std::getline(in, line) || line.rfind("node,value", 0) != 0)
    throw ValidationError(msg("nodal file ", path, " lacks the expected header"));
  std::vector<double> values;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    long long node = 0;
    double value = 0;
    char comma = 0;
    if (!(ss >> node >> comma >> value) || comma != ',')
      throw ValidationError(msg("nodal file ", path, " line ", lineno, " is malformed"));
    if (node != static_cast<long long>(values.size()))
      throw ValidationError(msg("nodal file ", path, " line ", lineno,
                                " breaks the ascending node order"));
    values.push_back(value);
  }
  if (values.empty()) throw ValidationError(msg("nodal file ", path, " holds no values"));
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace eit
