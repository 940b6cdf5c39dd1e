#include "eit/forward.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "eit/errors.hpp"

namespace eit {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

// ---- contact profile ---------------------------------------------------------

double ContactProfile::value(double r, double R) const {
  if (!(r < R)) return 0.0;
  const double R2 = R * R;
  return std::exp(tau - tau * R2 / (R2 - r * r));
}

double ContactProfile::slope(double r, double R) const {
  if (!(r < R) || r <= 0.0) return 0.0;
  const double R2 = R * R;
  const double den = R2 - r * r;
  return value(r, R) * (-2.0 * tau * R2 * r / (den * den));
}

// ---- band quadrature -----------------------------------------------------------

BandQuadrature band_quadrature(const Mesh& mesh, const Electrode& e,
                               const ContactProfile& profile) {
  const TriangleRule& rule = face_quadrature_rule();
  BandQuadrature band;
  band.points.reserve(e.band_faces.size() * static_cast<size_t>(rule.bary.rows()));
  for (int fidx : e.band_faces) {
    const double w = face_area(mesh, fidx) / static_cast<double>(rule.bary.rows());
    Eigen::Matrix3d corner;
    for (int k = 0; k < 3; ++k) corner.col(k) = mesh.nodes.row(mesh.boundary_faces(fidx, k));
    for (Eigen::Index q = 0; q < rule.bary.rows(); ++q) {
      BandQuadrature::Point p;
      p.x = corner * rule.bary.row(q).transpose();
      const Eigen::Vector3d d = p.x - e.center;
      const Eigen::Vector3d m = d - d.dot(e.normal) * e.normal;
      p.r = m.norm();
      p.u = p.r > 0.0 ? (m / p.r).eval() : Eigen::Vector3d::Zero();
      p.w = w;
      p.shape = profile.value(p.r, e.radius);
      p.dshape = profile.slope(p.r, e.radius);
      for (int k = 0; k < 3; ++k) {
        p.bary[k] = rule.bary(q, k);
        p.node[k] = mesh.boundary_faces(fidx, k);
      }
      band.shape_integral += p.w * p.shape;
      band.points.push_back(p);
    }
  }
  return band;
}

// ---- current patterns -----------------------------------------------------------

CurrentPatterns make_patterns(int electrode_count, const std::string& kind,
                              double amplitude) {
  const int m = electrode_count;
  if (m < 2) throw ConfigError("current patterns need at least 2 electrodes");
  if (!(amplitude > 0.0)) throw ConfigError("current amplitude must be positive");
  CurrentPatterns out;
  out.kind = kind;
  out.amplitude = amplitude;
  if (kind == "adjacent") {
    if (m % 2 != 0 || m < 4)
      throw ConfigError(msg("adjacent patterns need an even electrode count >= 4, got ", m));
    out.currents = Eigen::MatrixXd::Zero(m, m / 2);
    for (int j = 0; j < m / 2; ++j) {
      out.currents(2 * j, j) = amplitude;
      out.currents((2 * j + 2) % m, j) -= amplitude;
    }
  } else if (kind == "opposite") {
    if (m % 4 != 0)
      throw ConfigError(msg("opposite patterns need an electrode count divisible by 4, got ", m));
    out.currents = Eigen::MatrixXd::Zero(m, m / 4);
    for (int j = 0; j < m / 4; ++j) {
      out.currents(2 * j, j) = amplitude;
      out.currents(2 * j + m / 2, j) = -amplitude;
    }
  } else if (kind == "fourier") {
    if (m % 2 != 0)
      throw ConfigError(msg("fourier patterns need an even electrode count, got ", m));
    out.currents.resize(m, m - 1);
    int col = 0;
    for (int k = 1; k <= m / 2; ++k, ++col)
      for (int i = 0; i < m; ++i)
        out.currents(i, col) = amplitude * std::cos(2.0 * kPi * k * i / m);
    for (int k = 1; k <= m / 2 - 1; ++k, ++col)
      for (int i = 0; i < m; ++i)
        out.currents(i, col) = amplitude * std::sin(2.0 * kPi * k * i / m);
    // enforce a zero column sum exactly rather than up to roundoff
    for (int j = 0; j < out.currents.cols(); ++j)
      out.currents.col(j).array() -= out.currents.col(j).mean();
  } else {
    throw ConfigError(msg("unknown pattern kind '", kind,
                          "' (expected adjacent, opposite, or fourier)"));
  }
  return out;
}

// ---- solver ----------------------------------------------------------------------

ForwardSolver::ForwardSolver(const Mesh& mesh, const ElectrodeLayout& layout,
                             ContactProfile profile)
    : mesh_(mesh), layout_(layout), profile_(profile) {
  validate_layout(mesh, layout);
  geometry_ = compute_tet_geometry(mesh);
  bands_.reserve(static_cast<size_t>(layout_.count()));
  for (const Electrode& e : layout_.electrodes) {
    bands_.push_back(band_quadrature(mesh, e, profile_));
    if (!(bands_.back().shape_integral > 0.0))
      throw NumericError(msg("electrode ", bands_.size() - 1,
                             " carries no contact weight on the mesh surface"));
  }
  meanfree_ = meanfree_basis(layout_.count());
}

void ForwardSolver::set_fields(const Eigen::VectorXd& sigma, const Eigen::VectorXd& peaks) {
  const Eigen::Index n = mesh_.node_count();
  const int m = layout_.count();
  if (sigma.size() != n)
    throw ValidationError(msg("conductivity has ", sigma.size(), " entries for ", n, " nodes"));
  if (peaks.size() != m)
    throw ValidationError(msg("contact peaks have ", peaks.size(), " entries for ", m,
                              " electrodes"));
  if (!(sigma.minCoeff() > 0.0)) throw DomainError("conductivity must be positive everywhere");
  if (!(peaks.minCoeff() > 0.0)) throw DomainError("contact peaks must be positive");
  sigma_ = sigma;
  peaks_ = peaks;

  const Eigen::Index dim = n + m - 1;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(mesh_.tet_count()) * 16 + (m - 1) * (m - 1) + 1024);

  Eigen::SparseMatrix<double> stiff = stiffness_matrix(mesh_, sigma_, geometry_);
  for (int k = 0; k < stiff.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(stiff, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());

  Eigen::MatrixXd gq = Eigen::MatrixXd::Zero(m, m - 1);  // rows of G Q
  for (int el = 0; el < m; ++el) {
    const double peak = peaks_[el];
    std::unordered_map<int, double> c_col;  // node -> integral of shape * phi_i
    for (const auto& p : bands_[static_cast<size_t>(el)].points) {
      const double wz = peak * p.w * p.shape;
      if (wz == 0.0) continue;
      for (int a = 0; a < 3; ++a) {
        c_col[p.node[a]] += wz * p.bary[a];
        for (int b = 0; b < 3; ++b)
          trips.emplace_back(p.node[a], p.node[b], wz * p.bary[a] * p.bary[b]);
      }
    }
    gq.row(el) = peak * bands_[static_cast<size_t>(el)].shape_integral * meanfree_.row(el);
    for (const auto& [node, v] : c_col)
      for (int k = 0; k < m - 1; ++k) {
        const double cq = -v * meanfree_(el, k);
        trips.emplace_back(node, static_cast<int>(n) + k, cq);
        trips.emplace_back(static_cast<int>(n) + k, node, cq);
      }
  }
  const Eigen::MatrixXd qgq = meanfree_.transpose() * gq;
  for (int a = 0; a < m - 1; ++a)
    for (int b = 0; b < m - 1; ++b)
      trips.emplace_back(static_cast<int>(n) + a, static_cast<int>(n) + b, qgq(a, b));

  system_.resize(dim, dim);
  system_.setFromTriplets(trips.begin(), trips.end());
  system_.makeCompressed();

  use_cg_ = dim > 50000;
  if (use_cg_) {
    cg_ = std::make_unique<Eigen::ConjugateGradient<
        Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
        Eigen::IncompleteCholesky<double>>>();
    cg_->setTolerance(1e-13);
    cg_->setMaxIterations(4000);
    cg_->compute(system_);
    if (cg_->info() != Eigen::Success)
      throw NumericError("iterative factorization of the forward system failed");
  } else {
    ldlt_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    ldlt_->compute(system_);
    if (ldlt_->info() != Eigen::Success)
      throw NumericError("factorization of the forward system failed; "
                         "check mesh quality and field positivity");
  }
}

Eigen::VectorXd ForwardSolver::solve_one(const Eigen::VectorXd& rhs) const {
  if (!ldlt_ && !cg_) throw ContractError("solve called before set_fields");
  auto apply = [this](const Eigen::VectorXd& b) {
    return use_cg_ ? cg_->solve(b).eval() : ldlt_->solve(b).eval();
  };
  Eigen::VectorXd x = apply(rhs);
  const double bnorm = rhs.norm();
  for (int pass = 0; pass < 3; ++pass) {
    Eigen::VectorXd r = rhs - system_ * x;
    if (r.norm() <= 1e-14 * bnorm) break;
    x += apply(r);
  }
  const double res = (rhs - system_ * x).norm();
  if (!(res <= 1e-9 * bnorm) || !x.allFinite())
    throw NumericError(msg("forward solve did not converge: residual ", res,
                           " for right-hand side of norm ", bnorm));
  return x;
}

ForwardSolution ForwardSolver::solve(const Eigen::MatrixXd& currents) const {
  const Eigen::Index n = mesh_.node_count();
  const int m = layout_.count();
  if (currents.rows() != m)
    throw ValidationError(msg("current pattern has ", currents.rows(), " rows for ", m,
                              " electrodes"));
  for (Eigen::Index j = 0; j < currents.cols(); ++j) {
    const double scale = currents.col(j).cwiseAbs().maxCoeff();
    if (std::abs(currents.col(j).sum()) > 1e-10 * (scale > 0.0 ? scale : 1.0) * m)
      throw ValidationError(msg("current pattern ", j, " does not sum to zero"));
  }
  ForwardSolution sol;
  sol.potential.resize(n, currents.cols());
  sol.electrode_potential.resize(m, currents.cols());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m - 1);
  for (Eigen::Index j = 0; j < currents.cols(); ++j) {
    rhs.tail(m - 1) = meanfree_.transpose() * currents.col(j);
    const Eigen::VectorXd x = solve_one(rhs);
    sol.potential.col(j) = x.head(n);
    sol.electrode_potential.col(j) = meanfree_ * x.tail(m - 1);
  }
  return sol;
}

Eigen::MatrixXd ForwardSolver::measure(const Eigen::MatrixXd& currents) const {
  return solve(currents).electrode_potential;
}

ForwardSolution ForwardSolver::solve_basis() const {
  return solve(meanfree_);
}

// ---- measurement files --------------------------------------------------------------

void save_measurements(const std::string& path, const Eigen::MatrixXd& data) {
  std::ofstream out(path);
  if (!out) throw ConfigError(msg("cannot open ", path, " for writing"));
  out << "pattern,electrode,voltage\n";
  out.precision(17);
  for (Eigen::Index j = 0; j < data.cols(); ++j)
    for (Eigen::Index i = 0; i < data.rows(); ++i)
      out << j << "," << i << "," << data(i, j) << "\n";
  if (!out) throw ConfigError(msg("failed writing ", path));
}

Eigen::MatrixXd load_measurements(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(msg("cannot open measurement file ", path));
  std::string line;
  if (!std::getline(in, line) || line.rfind("pattern,electrode,voltage", 0) != 0)
    throw ValidationError(msg("measurement file ", path, " lacks the expected header"));
  struct Cell {
    int pattern, electrode;
    double voltage;
  };
  std::vector<Cell> cells;
  int maxp = -1, maxe = -1;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    Cell c;
    char comma1 = 0, comma2 = 0;
    std::istringstream ss(line);
    if (!(ss >> c.pattern >> comma1 >> c.electrode >> comma2 >> c.voltage) ||
        comma1 != ',' || comma2 != ',')
      throw ValidationError(msg("measurement file ", path, " line ", lineno,
                                " is not pattern,electrode,voltage"));
    maxp = std::max(maxp, c.pattern);
    maxe = std::max(maxe, c.electrode);
    cells.push_back(c);
  }
  if (cells.empty()) throw ValidationError(msg("measurement file ", path, " has no data"));
  if (cells.size() != static_cast<size_t>(maxp + 1) * (maxe + 1))
    throw ValidationError(msg("measurement file ", path, " is missing rows"));
  Eigen::MatrixXd data(maxe + 1, maxp + 1);
  for (const Cell& c : cells) data(c.electrode, c.pattern) = c.voltage;
  return data;
}

}  // namespace eit
