#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aorecon/diffusion.hpp"
#include "aorecon/fields.hpp"

namespace aorecon {

// Inclusion masks as used by the reconstruction. region[j] carries the base constant alpha_j;
// the corrections live on the eroded mask domain[j] and vanish on its boundary (interior[j] holds
// the nodes where they may be nonzero).
struct MaskSet {
  Grid grid;
  double a0 = 1.0;
  std::vector<Mask> region;
  std::vector<Mask> domain;
  std::vector<std::vector<std::size_t>> interior;

  std::size_t size() const { return region.size(); }
};

MaskSet make_mask_set(const Grid& grid, const std::vector<Mask>& masks, double a0, int erosion = 3);

// One field per mask, zero outside interior[j].
struct HElement {
  std::vector<ScalarField> parts;
};

HElement zero_element(const MaskSet& m);
double h_inner(const MaskSet& m, const HElement& a, const HElement& b);
double h_norm(const MaskSet& m, const HElement& a);
// H seminorm of an arbitrary field over the edges of each domain (distance to a truth outside H).
double h_norm_field(const MaskSet& m, const ScalarField& f);
HElement axpy(double s, const HElement& x, const HElement& y);  // s x + y

// Functional on H stored by its Riesz representer.
struct HFunctional {
  HElement rep;
};

double h_star_norm(const MaskSet& m, const HFunctional& f);
// Riesz representer of the functional with nodal values dual[j][k] = f(e_k) on interior[j].
HElement riesz(const MaskSet& m, const std::vector<std::vector<double>>& dual);

struct PiecewiseConstantGuess {
  std::vector<double> alpha;
  double misfit = 0.0;  // J at alpha
};

struct Iterate {
  std::vector<double> alpha;
  HElement h;
};

struct KProjectionConfig {
  double lower = 0.5;
  double upper = 2.5;
  double theta = 1.0;  // L4 budget for grad h_j
};

double gradient_l4(const MaskSet& m, const ScalarField& h, std::size_t j);
Iterate project_K(const MaskSet& m, const Iterate& x, const KProjectionConfig& c);

// Forward model state for one coefficient.
struct ForwardState {
  ScalarField a;
  std::shared_ptr<const RobinOperator> op;
  ScalarField phi;
  BoundaryTrace flux;
};

class InversionProblem {
 public:
  InversionProblem(MaskSet masks, double l = 0.1, std::optional<BoundaryTrace> g = std::nullopt);

  const MaskSet& masks() const noexcept { return masks_; }
  const BoundaryTrace& illumination() const noexcept { return g_; }
  double extrapolation_length() const noexcept { return l_; }

  ScalarField coefficient(const std::vector<double>& alpha) const;
  ScalarField coefficient(const Iterate& x) const;
  ForwardState forward(const ScalarField& a) const;

  // v -> sum_j int_{A_j} Phi^2 grad a . grad v_j
  HFunctional F_apply(const ForwardState& s) const;
  // v -> -sum_j int_{A_j} grad psi . grad v_j, i.e. Lap psi paired with v
  HFunctional delta_psi_functional(const ScalarField& psi) const;
  // v -> sum_j int_{A_j} (2 Phi DT(h) grad a + Phi^2 grad h_j) . grad v_j
  HFunctional DF_apply(const ForwardState& s, const HElement& h) const;
  // g with <g, h>_H = DF(h)(rho) for every h
  HElement DF_adjoint(const ForwardState& s, const HFunctional& rho) const;

  // J = 1/2 ||flux - measured||^2 on the boundary, for piecewise constants or a full iterate.
  double misfit(const std::vector<double>& alpha, const BoundaryTrace& measured) const;
  double misfit(const Iterate& x, const BoundaryTrace& measured) const;

 private:
  MaskSet masks_;
  double l_;
  BoundaryTrace g_;
};

struct ExhaustionOptions {
  double lower = 0.5;
  double upper = 2.5;
  double step = 0.125;
  bool coordinate_descent = false;  // cyclic 1-D sweeps, 3 passes; required when more than 3 masks
};

PiecewiseConstantGuess initial_guess_exhaustion(const InversionProblem& p, const BoundaryTrace& measured,
                                                const ExhaustionOptions& o = {});

// Continuous refit of the base constants against the flux with the corrections held fixed:
// cyclic Brent minimization of J over [lower, upper], one mask at a time.
Iterate refit_constants(const InversionProblem& p, const Iterate& x, const BoundaryTrace& measured, double lower,
                        double upper, int passes = 2);

// Best constant C with ||u||_L4 <= C ||grad u||_L2 on H^1_0 of the square, by nonlinear power iteration.
double embedding_constant(const Grid& grid, int iterations = 40);
// theta = 0.5 lambda^2 / (C Lambda^2).
double default_theta(double lambda, double Lambda, double embedding);

struct LandweberConfig {
  KProjectionConfig k;
  std::optional<double> tau;  // default 0.9 / L^2 from power iteration
  int max_iter = 200;
  double stop_tol = 1e-8;
  int power_iterations = 20;
};

// Step-size rule: halve tau after 5 consecutive residual increases, give up at the third halving.
struct StepSizeController {
  enum class Action { proceed, halved, stop };

  double tau = 0.0;
  int increases = 0;
  int halvings = 0;
  std::optional<double> last;

  Action observe(double residual);
};

struct ReconstructionState {
  Iterate iterate;
  double tau = 0.0;
  std::vector<double> residual;  // ||F[P a_n] - Lap psi||_H*, one per iteration
  std::vector<double> distance;  // ||P a_n - a_*||_H when a truth is given
  std::vector<double> taus;
  int halvings = 0;
  std::string diagnostic;
  ScalarField coefficient;  // P applied to the last iterate

  // Fraction of non-increasing-residual steps along which the distance to the truth decreased.
  double monotone_fraction() const;
};

double estimate_DF_norm(const InversionProblem& p, const ForwardState& s, int iterations);

ReconstructionState landweber_run(const InversionProblem& p, const Iterate& start, const HFunctional& target,
                                  const LandweberConfig& c, const ScalarField* truth = nullptr);

struct PipelineOptions {
  ExhaustionOptions exhaustion;
  LandweberConfig landweber;
  std::optional<double> theta;  // default from the optical bounds at the initial guess
  int erosion = 3;
  bool refit = true;
  double d_margin = 0.15;
};

struct PipelineResult {
  PiecewiseConstantGuess guess;
  ReconstructionState state;
  Iterate final_iterate;
  ScalarField coefficient;
  double theta = 0.0;
};

// Exhaustion guess, projected Landweber on psi, then (optionally) refit of the base constants.
PipelineResult reconstruct(const Grid& grid, const std::vector<Mask>& masks, const ScalarField& psi,
                           const BoundaryTrace& flux, double a0, double l, const PipelineOptions& o,
                           const ScalarField* truth = nullptr);

void write_reconstruction_log(const std::string& path, const ReconstructionState& s);

}  // namespace aorecon
