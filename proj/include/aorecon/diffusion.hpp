#pragma once

#include <memory>
#include <span>
#include <vector>

#include "aorecon/fields.hpp"

namespace aorecon {

struct RobinProblem {
  ScalarField a;
  BoundaryTrace g;
  double l = 0.1;
};

struct OpticalSolution {
  ScalarField phi;
  BoundaryTrace flux;
  double min_phi = 0.0;
  double max_phi = 0.0;
};

// Weighted (symmetric) discretization of -Lap u + a u with Robin data l du/dn + u = g,
// or Dirichlet data when l = 0. Rows are the ghost-node equations multiplied by the
// trapezoid weights, so K is symmetric and sources enter as W*s.
class RobinOperator {
 public:
  RobinOperator(const ScalarField& a, double l);
  ~RobinOperator();
  RobinOperator(RobinOperator&&) noexcept;
  RobinOperator& operator=(RobinOperator&&) noexcept;

  const Grid& grid() const noexcept;
  double l() const noexcept;
  const ScalarField& a() const noexcept;

  void apply(std::span<const double> x, std::span<double> out) const;
  // K x = rhs via the sparse factorization with iterative refinement.
  std::vector<double> solve(std::span<const double> rhs) const;
  // (K + diag(W*delta_a)) x = rhs by conjugate gradients preconditioned with K.
  std::vector<double> solve_perturbed(std::span<const double> delta_a, std::span<const double> rhs,
                                      std::span<const double> initial = {}) const;

  // Right-hand side contributions of boundary data and of a volume source.
  std::vector<double> boundary_load(const BoundaryTrace& g) const;
  std::vector<double> source_load(const ScalarField& s) const;

  // Outward normal derivative of phi for boundary data g.
  BoundaryTrace flux(const ScalarField& phi, const BoundaryTrace& g) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

OpticalSolution solve_T(const RobinProblem& problem);
OpticalSolution solve_T(const RobinOperator& op, const BoundaryTrace& g);

// Linearized response: -Lap phi + a phi = -h*Phi with homogeneous boundary data.
ScalarField solve_DT(const ScalarField& a, const ScalarField& phi, const ScalarField& h, double l = 0.1);
ScalarField solve_DT(const RobinOperator& op, const ScalarField& phi, const ScalarField& h);

ScalarField solve_adjoint(const ScalarField& a, const ScalarField& source, double l = 0.1);
ScalarField solve_adjoint(const RobinOperator& op, const ScalarField& source);

// min and max of phi over the nodes of D = [m, 1-m]^2.
std::pair<double, double> phi_bounds_on(const ScalarField& phi, double margin);

BoundaryTrace constant_trace(const Grid& g, double value);

}  // namespace aorecon
