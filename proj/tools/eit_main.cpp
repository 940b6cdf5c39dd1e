#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "eit/errors.hpp"
#include "eit/harness.hpp"

namespace {

std::string slice_file_name(double z) {
  std::ostringstream name;
  name << "slice_z" << std::fixed << std::setprecision(3) << z << ".csv";
  return name.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"impedance tomography toolkit: simulation, sensitivity analysis,"
               " nuisance-subspace projection and regularized reconstruction"};
  app.set_version_flag("--version", eit::kToolkitVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "experiment configuration (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "override the configured seed");
  app.add_option("--out-dir", out_dir, "directory for generated files");

  CLI::App* mesh_gen = app.add_subcommand("mesh-gen", "generate and save the tank mesh");
  CLI::App* simulate = app.add_subcommand("simulate", "write synthetic measurement files");
  CLI::App* jacobian = app.add_subcommand("jacobian", "write Jacobian blocks at the background");
  CLI::App* project = app.add_subcommand("project", "write the requested projection matrices");
  CLI::App* angles = app.add_subcommand("angles-study", "projector stability over random draws");
  CLI::App* signal = app.add_subcommand("signal-study", "signal norms with and without projection");
  CLI::App* reconstruct = app.add_subcommand("reconstruct", "linearized reconstruction per projection");
  CLI::App* slice = app.add_subcommand("slice", "sample a nodal field on a horizontal plane");
  for (CLI::App* sub : {mesh_gen, simulate, jacobian, project, angles, signal, reconstruct, slice})
    sub->fallthrough();

  std::string slice_input;
  double slice_z = 0.0;
  slice->add_option("--input", slice_input, "nodal values CSV to sample")->required();
  slice->add_option("--z", slice_z, "slice height in meters")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    eit::ExperimentConfig config = eit::load_config(config_path);
    if (seed_opt->count() > 0) config.seed = seed;

    if (app.got_subcommand(mesh_gen)) {
      eit::run_mesh_gen(config, out_dir);
      std::cout << "wrote mesh.json to " << out_dir << "\n";
    } else if (app.got_subcommand(simulate)) {
      eit::run_simulate(config, out_dir);
      std::cout << "wrote u_base/u_sigma/u_zeta/u_both/reference to " << out_dir << "\n";
    } else if (app.got_subcommand(jacobian)) {
      eit::run_jacobian(config, out_dir);
      std::cout << "wrote jac_sigma/jac_zeta/jac_theta/jac_phi to " << out_dir << "\n";
    } else if (app.got_subcommand(project)) {
      eit::run_project(config, out_dir);
      std::cout << "wrote projection matrices to " << out_dir << "\n";
    } else if (app.got_subcommand(angles)) {
      eit::AnglesStudyReport report = eit::run_angles_study(config, out_dir);
      std::cout << "completed " << report.completed << " draws: max angle "
                << report.theta_max_deg.maxCoeff() << " deg, mean discrepancy "
                << report.err_f.mean() << "\n";
    } else if (app.got_subcommand(signal)) {
      eit::SignalStudyReport report = eit::run_signal_study(config, out_dir);
      std::cout << "signal norms (sigma, zeta, combined): " << report.bundle.s_sigma.norm()
                << ", " << report.bundle.s_zeta.norm() << ", "
                << report.bundle.s_combined.norm() << "; " << report.projections.size()
                << " projected variants in " << out_dir << "\n";
    } else if (app.got_subcommand(reconstruct)) {
      eit::ReconstructionReport report = eit::run_reconstruct(config, out_dir);
      std::cout << "reconstructed " << report.runs.size() << " variants (noise scale "
                << report.noise_s << ") in " << out_dir << "\n";
    } else if (app.got_subcommand(slice)) {
      std::filesystem::create_directories(out_dir);
      const std::string out_path =
          (std::filesystem::path(out_dir) / slice_file_name(slice_z)).string();
      eit::run_slice(config, slice_input, slice_z, out_path);
      std::cout << "wrote " << out_path << "\n";
    }
  } catch (const eit::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const eit::Error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
