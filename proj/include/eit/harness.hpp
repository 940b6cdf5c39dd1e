#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eit/forward.hpp"
#include "eit/mesh.hpp"
#include "eit/reconstruct.hpp"
#include "eit/sampling.hpp"

namespace eit {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Vertical cylindrical inclusion; height <= 0 spans the full water column.
struct InclusionSpec {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  double radius = 0.015;
  double height = -1.0;
  double conductivity = 4.73;
};

// Degradation of the measured setup relative to the nominal model: contact
// peak multipliers, electrode radius scaling (covered-area analogue), and a
// per-electrode azimuth placement error drawn uniformly in +-jitter degrees.
// All of it applies to the data mesh only; the inversion model keeps the
// nominal layout and parameters.
struct ContactPerturbation {
  Eigen::VectorXd multipliers;  // size M, or empty for all ones
  Eigen::VectorXd radius_scale;  // size M, or empty for all ones
  double azimuth_jitter_deg = 0.0;
};

// Node selector for the random-field support of the draw studies.
struct RegionSpec {
  bool whole = false;  // true: every node, ignore the cylinder bounds
  double cx = 0.0, cy = 0.0;
  double radius = 0.055;
  double zmin = 0.008, zmax = 0.035;
};

struct ExperimentConfig {
  CylinderSpec tank;
  int refinement = 0;       // inversion mesh level
  int data_refinement = 1;  // extra levels for the simulated data mesh
  double sigma0 = 0.0491;
  double zeta0 = 500.0;
  std::optional<InclusionSpec> inclusion;
  ContactPerturbation contacts;
  std::string pattern_kind = "adjacent";
  double amplitude = 1e-3;
  double noise_fraction = 0.005;
  std::vector<std::string> projections = {"zeta", "zeta_phi"};
  std::string algorithm = "lagged_diffusivity";
  double gamma = kLaggedGamma;
  int n_iter = 10;
  double T = 1e-6;
  double epsilon = 0.0;  // 0 requests the spectral heuristic
  std::uint64_t seed = 1;
  int draws = 100;
  RegionSpec region;
  FieldLaw field;
  ContactDrawLaw contact_law;
  std::vector<double> slice_heights = {0.01, 0.02, 0.025, 0.035};
  std::string measurements_dir;  // input for reconstruct / signal-study; empty: simulate inline
};

// Strict JSON parse: unknown keys, type mismatches and out-of-domain values
// are configuration errors.
ExperimentConfig load_config(const std::string& path);

// FNV-1a over the canonical serialization; stamped into every report.
std::uint64_t config_hash(const ExperimentConfig& config);

// Nodal conductivity for the phantom on a given mesh.
Eigen::VectorXd sigma_field(const ExperimentConfig& config, const Mesh& mesh, bool with_inclusion);

// Contact peaks, optionally with the perturbation multipliers applied.
Eigen::VectorXd zeta_peaks(const ExperimentConfig& config, bool perturbed);

// Simulated experiment. The data tank carries the perturbed contacts and the
// placement error; the reference is the nominal model on the same mesh, so
// differences against it retain modeling error the way measured data would.
struct SimulatedData {
  TankMesh tank;                                      // data mesh, perturbed layout
  Eigen::MatrixXd base, sigma_only, zeta_only, both;  // noiseless, M x N
  Eigen::MatrixXd reference;                          // nominal layout and parameters
  NoiseModel noise;                                   // scaled from the measured baseline
};

SimulatedData simulate_experiment(const ExperimentConfig& config);

void run_mesh_gen(const ExperimentConfig& config, const std::string& out_dir);
void run_simulate(const ExperimentConfig& config, const std::string& out_dir);
void run_jacobian(const ExperimentConfig& config, const std::string& out_dir);
void run_project(const ExperimentConfig& config, const std::string& out_dir);

struct AnglesStudyReport {
  Eigen::VectorXd theta_max_deg;  // one entry per completed draw
  Eigen::VectorXd err_f;
  int completed = 0;
};

// Writes angles.csv (draw,theta_max_deg,err_F plus max/mean/std summary rows).
// A failed draw still writes the partial report before the error propagates.
AnglesStudyReport run_angles_study(const ExperimentConfig& config, const std::string& out_dir);

struct SignalStudyReport {
  SignalBundle bundle;
  std::vector<std::string> projections;  // labels for bundle.projected
};

SignalStudyReport run_signal_study(const ExperimentConfig& config, const std::string& out_dir);

struct ReconstructionReport {
  TankMesh inversion;
  std::vector<ReconstructionResult> runs;  // one per requested projection
  double noise_s = 0.0;
};

ReconstructionReport run_reconstruct(const ExperimentConfig& config, const std::string& out_dir);

// P1 interpolation of a nodal field on the horizontal plane at height z,
// sampled on a regular grid clipped to the tank cross-section.
struct SliceSample {
  double x, y, value;
};

std::vector<SliceSample> slice_values(const Mesh& mesh, const Eigen::VectorXd& values, double z,
                                      int grid = 101);

void run_slice(const ExperimentConfig& config, const std::string& values_csv, double z,
               const std::string& out_path);

// node,value CSV round trip for nodal fields.
void save_nodal(const std::string& path, const Eigen::VectorXd& values);
Eigen::VectorXd load_nodal(const std::string& path);

}  // namespace eit
