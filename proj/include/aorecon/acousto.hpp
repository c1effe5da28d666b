#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aorecon/diffusion.hpp"
#include "aorecon/fields.hpp"
#include "aorecon/phantom.hpp"

namespace aorecon {

// Wave profile w(s) = exp(1 - 1/(1 - s^2)) on ]-1,1[, zero outside.
double bump(double s);
double bump_derivative(double s);
// L1 norm of w over ]-1,1[ and sup |w'|, computed once by quadrature / maximization.
double bump_l1();
double bump_derivative_sup();

struct AcousticConfig {
  Point center{0.5, 0.5};
  double mu = 1.0;
  double r0 = 0.1;
  double R = 1.75;
  double eta = 0.02;

  void validate() const;
  // Also checks that the grid resolves the shell: (n - 1) * eta >= 2.
  void validate_for_grid(const Grid& grid) const;
  Point source(int m, int ny) const;
};

struct Sinogram {
  AcousticConfig config;
  int ny = 0;
  int nr = 0;
  std::vector<double> values;  // row m, column q

  Sinogram() = default;
  Sinogram(const AcousticConfig& c, int ny_, int nr_);
  double dr() const { return config.R / (nr - 1); }
  double radius(int q) const { return q * dr(); }
  Point source(int m) const { return config.source(m, ny); }
  double& at(int m, int q) { return values[static_cast<std::size_t>(m) * nr + q]; }
  double at(int m, int q) const { return values[static_cast<std::size_t>(m) * nr + q]; }
};

void write_sinogram_csv(const std::string& path, const Sinogram& s);
Sinogram read_sinogram_csv(const std::string& path, const AcousticConfig& config);

// Radial displacement V(rho) = eta (r0/r) w((r - rho)/eta) along rays from the source.
double radial_displacement(const AcousticConfig& c, double r, double rho);
double radial_displacement_derivative(const AcousticConfig& c, double r, double rho);
// Solves rho' + V(rho') = rho; rho' = rho outside the shell.
double inverse_radial(const AcousticConfig& c, double r, double rho);

VectorField displacement_v(const AcousticConfig& c, Point y, double r, const Grid& grid);
VectorField displacement_u(const AcousticConfig& c, Point y, double r, const Grid& grid);

enum class MeasurementKind { m_eta, m_tilde };

struct MeasurementOptions {
  double l = 0.1;
  std::optional<BoundaryTrace> g;  // defaults to 1
  int supersample = 8;             // per-axis samples for dual-cell coefficient averages
  int threads = 0;
};

// Forward optical state for one phantom plus the machinery to evaluate the
// acoustically modulated measurements at any (y, r).
class MeasurementContext {
 public:
  MeasurementContext(const Phantom& phantom, const Grid& grid, const AcousticConfig& config,
                     const MeasurementOptions& options = {});
  ~MeasurementContext();

  const Phantom& phantom() const noexcept;
  const Grid& grid() const noexcept;
  const AcousticConfig& config() const noexcept;
  const ScalarField& phi() const noexcept;
  const ScalarField& averaged_coefficient() const noexcept;
  const RobinOperator& op() const noexcept;
  const BoundaryTrace& illumination() const noexcept;

  // True when the shell of (y, r) can meet some inclusion.
  bool shell_hits_inclusions(Point y, double r) const;

  // (1/eta^2) int (a_u - a) Phi Phi_u, integrated along rays from y.
  double M_eta(Point y, double r) const;
  // Same quantity on the grid: (1/eta^2) sum W delta Phi Phi_u, delta the hat projection of a_u - a.
  double M_eta_grid(Point y, double r) const;
  // (1/eta^2) int (a - a0) div(Phi^2 v), integrated along rays from y.
  double M_tilde(Point y, double r) const;
  // (1/eta^2) int_{dOmega} (f dPhi^g_u/dnu - g dPhi^f/dnu).
  double cross_correlation(Point y, double r, const BoundaryTrace& f, const BoundaryTrace& g) const;

  // int |a(P^-1 x) - a(x)| dx and area(A_i sym-diff P(A_i)).
  double perturbation_l1(Point y, double r) const;
  double symmetric_difference_area(std::size_t inclusion, Point y, double r) const;

  // Coefficient used for Phi_u: dual-cell averages of a plus the hat projection of a_u - a.
  ScalarField perturbed_coefficient(Point y, double r) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

double measure_M_eta(const Phantom& phantom, const Grid& grid, const AcousticConfig& config, Point y, double r);
// Ray-integrated (1/eta^2) int (a - a0) div(Phi^2 v) for a given Phi = T[a].
double measure_Mtilde(const Phantom& phantom, const AcousticConfig& config, Point y, double r, const ScalarField& phi);

Sinogram sample_sinogram(const MeasurementContext& ctx, int ny, int nr, MeasurementKind kind, int threads = 0);

}  // namespace aorecon
