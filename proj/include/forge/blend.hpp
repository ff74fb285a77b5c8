#pragma once

#include <Eigen/Sparse>

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "forge/image.hpp"
#include "forge/morphology.hpp"

namespace forge {

/// Weights and solver controls for gradient-domain blending.
struct BlendConfig {
  double lambda_grad = 1.0;
  double lambda_edge = 2.0;
  /// Relative residual (Poisson) or relative objective decrease over 10
  /// iterations (variational) at which the solver stops.
  double solver_tol = 1e-6;
  /// Unset selects the mode default: 10 * unknowns for Poisson, 500 for
  /// variational descent.
  std::optional<int> max_iters;
  /// Initial descent step, in units of the per-sample gradient. The raw
  /// gradient is multiplied by H*W*C before the step is taken so the value
  /// does not depend on image size.
  double step_size = 0.05;
  /// Radius of the square element used to build the edge band.
  int edge_radius = kDefaultEdgeRadius;

  /// Throws std::invalid_argument on negative weights, non-positive
  /// tolerance/step, max_iters < 1 or edge_radius < 1.
  void validate() const;
};

inline constexpr double kCharbonnierEpsilon = 1e-3;
inline constexpr int kDefaultVariationalIters = 500;
inline constexpr double kMinStepSize = 1e-8;

/// Per-term losses of the blending objective (exact l1, channel averaged).
struct LossBreakdown {
  double l_bg = 0.0;
  double l_grad = 0.0;
  double l_edge = 0.0;
  double total = 0.0;
  std::size_t n_bg = 0;
  std::size_t n_fg = 0;
  std::size_t n_edge = 0;
};

/// 5-point Laplacian per channel; out-of-bounds neighbours replicate the
/// centre pixel, so constants map to zero.
ImageTensor laplacian(const ImageTensor& img);

/// Mean |m - t| over unmasked pixels; 0 when there are none.
double loss_bg(const ImageTensor& candidate, const ImageTensor& target, const BinaryMask& mask);
/// Mean |lap(m) - lap(s)| over masked pixels; 0 when there are none.
double loss_grad(const ImageTensor& candidate, const ImageTensor& source, const BinaryMask& mask);
/// Mean |m - s| over the edge band; 0 when it is empty.
double loss_edge(const ImageTensor& candidate, const ImageTensor& source, const BinaryMask& edge);

LossBreakdown total_objective(const ImageTensor& candidate, const ImageTensor& source, const ImageTensor& target,
                              const BinaryMask& mask, const BinaryMask& edge, const BlendConfig& cfg);

/// Differentiable surrogate of the blending objective: each |x| is replaced
/// by sqrt(x^2 + eps^2) - eps (Charbonnier, zero at zero).
class BlendObjective {
 public:
  BlendObjective(const ImageTensor& source, const ImageTensor& target, const BinaryMask& mask,
                 const BinaryMask& edge, const BlendConfig& cfg, double epsilon = kCharbonnierEpsilon);

  double value(const ImageTensor& candidate) const;
  /// Returns the value and writes d(value)/d(candidate) into `grad`.
  double value_and_gradient(const ImageTensor& candidate, ImageTensor& grad) const;
  LossBreakdown exact(const ImageTensor& candidate) const;

 private:
  double evaluate(const ImageTensor& candidate, ImageTensor* grad) const;

  ImageTensor source_;
  ImageTensor target_;
  BinaryMask mask_;
  BinaryMask edge_;
  BlendConfig cfg_;
  double epsilon_;
  ImageTensor source_laplacian_;
  double w_bg_ = 0.0;
  double w_grad_ = 0.0;
  double w_edge_ = 0.0;
};

/// Thrown when conjugate gradient does not reach the requested tolerance.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual, int iterations)
      : std::runtime_error(what), residual_(residual), iterations_(iterations) {}
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

/// Linear system for the free pixels of a Poisson blend. A masked pixel is
/// free when all four neighbours lie inside the image and inside the mask;
/// every other pixel is pinned to the target.
struct PoissonSystem {
  int height = 0;
  int width = 0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;  // 4 on the diagonal, -1 per free neighbour
  std::vector<int> unknown_of_pixel;                     // -1 for pinned pixels
  std::vector<std::size_t> pixel_of_unknown;

  std::size_t unknowns() const { return pixel_of_unknown.size(); }
};

PoissonSystem assemble_poisson_system(const BinaryMask& mask);

/// Solves the Poisson blend without clamping; pinned pixels equal the target
/// exactly. Throws SolverError on non-convergence.
ImageTensor poisson_solve(const ImageTensor& source, const BinaryMask& mask, const ImageTensor& target,
                          const BlendConfig& cfg = {});

/// poisson_solve clamped to [0,1].
ImageTensor poisson_blend(const ImageTensor& source, const BinaryMask& mask, const ImageTensor& target,
                          const BlendConfig& cfg = {});

struct VariationalResult {
  ImageTensor image;
  LossBreakdown losses;
  int iterations = 0;
  /// Smoothed objective at the start and after every accepted step.
  std::vector<double> objective_history;
};

/// Projected gradient descent on the smoothed objective, starting from the
/// copy-paste composite. Never throws on slow convergence; returns the best
/// iterate.
VariationalResult variational_blend(const ImageTensor& source, const BinaryMask& mask, const ImageTensor& target,
                                    const BlendConfig& cfg = {});

}  // namespace forge
