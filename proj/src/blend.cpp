#include "forge/blend.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "forge/compositor.hpp"

namespace forge {

void BlendConfig::validate() const {
  if (!(lambda_grad >= 0.0) || !(lambda_edge >= 0.0)) throw std::invalid_argument("blend weights must be >= 0");
  if (!(solver_tol > 0.0)) throw std::invalid_argument("solver_tol must be > 0");
  if (max_iters && *max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!(step_size > 0.0)) throw std::invalid_argument("step_size must be > 0");
  if (edge_radius < 1) throw std::invalid_argument("edge_radius must be >= 1");
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

ImageTensor laplacian(const ImageTensor& img) {
  const int h = img.height();
  const int w = img.width();
  const int ch = img.channels();
  ImageTensor out(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        const double center = img.at(y, x, c);
        double s = 0.0;
        if (y > 0) s += img.at(y - 1, x, c) - center;
        if (y + 1 < h) s += img.at(y + 1, x, c) - center;
        if (x > 0) s += img.at(y, x - 1, c) - center;
        if (x + 1 < w) s += img.at(y, x + 1, c) - center;
        out.at(y, x, c) = s;
      }
  return out;
}

namespace {

// Mean over selected pixels (and all channels) of |a - b|.
double masked_l1(const ImageTensor& a, const ImageTensor& b, const BinaryMask& sel, bool want) {
  auto da = a.data();
  auto db = b.data();
  const int ch = a.channels();
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < sel.size(); ++i) {
    if (sel[i] != want) continue;
    ++n;
    for (int c = 0; c < ch; ++c) sum += std::abs(da[i * ch + c] - db[i * ch + c]);
  }
  return n == 0 ? 0.0 : sum / (static_cast<double>(n) * ch);
}

std::size_t count_zero(const BinaryMask& m) { return m.size() - m.count(); }

}  // namespace

double loss_bg(const ImageTensor& candidate, const ImageTensor& target, const BinaryMask& mask) {
  require_same_shape(candidate, target, "loss_bg");
  require_same_shape(candidate, mask, "loss_bg");
  return masked_l1(candidate, target, mask, false);
}

double loss_grad(const ImageTensor& candidate, const ImageTensor& source, const BinaryMask& mask) {
  require_same_shape(candidate, source, "loss_grad");
  require_same_shape(candidate, mask, "loss_grad");
  return masked_l1(laplacian(candidate), laplacian(source), mask, true);
}

double loss_edge(const ImageTensor& candidate, const ImageTensor& source, const BinaryMask& edge) {
  require_same_shape(candidate, source, "loss_edge");
  require_same_shape(candidate, edge, "loss_edge");
  return masked_l1(candidate, source, edge, true);
}

LossBreakdown total_objective(const ImageTensor& candidate, const ImageTensor& source, const ImageTensor& target,
                              const BinaryMask& mask, const BinaryMask& edge, const BlendConfig& cfg) {
  require_same_shape(candidate, source, "total_objective");
  require_same_shape(candidate, target, "total_objective");
  require_same_shape(candidate, mask, "total_objective");
  require_same_shape(mask, edge, "total_objective");
  LossBreakdown out;
  out.l_bg = loss_bg(candidate, target, mask);
  out.l_grad = loss_grad(candidate, source, mask);
  out.l_edge = loss_edge(candidate, source, edge);
  out.total = out.l_bg + cfg.lambda_grad * out.l_grad + cfg.lambda_edge * out.l_edge;
  out.n_fg = mask.count();
  out.n_bg = count_zero(mask);
  out.n_edge = edge.count();
  return out;
}

// ---------------------------------------------------------------------------
// Smoothed objective
// ---------------------------------------------------------------------------

BlendObjective::BlendObjective(const ImageTensor& source, const ImageTensor& target, const BinaryMask& mask,
                               const BinaryMask& edge, const BlendConfig& cfg, double epsilon)
    : source_(source), target_(target), mask_(mask), edge_(edge), cfg_(cfg), epsilon_(epsilon) {
  require_same_shape(source, target, "blend objective");
  require_same_shape(source, mask, "blend objective");
  require_same_shape(mask, edge, "blend objective");
  cfg.validate();
  source_laplacian_ = laplacian(source);
  const double ch = source.channels();
  const std::size_t n_fg = mask.count();
  const std::size_t n_bg = count_zero(mask);
  const std::size_t n_edge = edge.count();
  w_bg_ = n_bg ? 1.0 / (static_cast<double>(n_bg) * ch) : 0.0;
  w_grad_ = n_fg ? cfg.lambda_grad / (static_cast<double>(n_fg) * ch) : 0.0;
  w_edge_ = n_edge ? cfg.lambda_edge / (static_cast<double>(n_edge) * ch) : 0.0;
}

double BlendObjective::value(const ImageTensor& candidate) const { return evaluate(candidate, nullptr); }

double BlendObjective::value_and_gradient(const ImageTensor& candidate, ImageTensor& grad) const {
  return evaluate(candidate, &grad);
}

LossBreakdown BlendObjective::exact(const ImageTensor& candidate) const {
  return total_objective(candidate, source_, target_, mask_, edge_, cfg_);
}

double BlendObjective::evaluate(const ImageTensor& candidate, ImageTensor* grad) const {
  require_same_shape(candidate, source_, "blend objective");
  const int h = candidate.height();
  const int w = candidate.width();
  const int ch = candidate.channels();
  const double eps2 = epsilon_ * epsilon_;
  auto phi = [&](double r) { return std::sqrt(r * r + eps2) - epsilon_; };
  auto dphi = [&](double r) { return r / std::sqrt(r * r + eps2); };

  auto m = candidate.data();
  auto s = source_.data();
  auto t = target_.data();
  const ImageTensor lap_m = laplacian(candidate);
  auto lm = lap_m.data();
  auto ls = source_laplacian_.data();

  // dphi of the Laplacian residual on masked pixels; pulled back through the
  // (symmetric) Laplacian below.
  ImageTensor lap_weight;
  if (grad) {
    *grad = ImageTensor(h, w, ch);
    lap_weight = ImageTensor(h, w, ch);
  }

  double total = 0.0;
  for (std::size_t i = 0; i < mask_.size(); ++i) {
    for (int c = 0; c < ch; ++c) {
      const std::size_t k = i * ch + c;
      if (!mask_[i]) {
        const double r = m[k] - t[k];
        total += w_bg_ * phi(r);
        if (grad) grad->data()[k] += w_bg_ * dphi(r);
      } else if (w_grad_ != 0.0) {
        const double r = lm[k] - ls[k];
        total += w_grad_ * phi(r);
        if (grad) lap_weight.data()[k] = w_grad_ * dphi(r);
      }
      if (edge_[i] && w_edge_ != 0.0) {
        const double r = m[k] - s[k];
        total += w_edge_ * phi(r);
        if (grad) grad->data()[k] += w_edge_ * dphi(r);
      }
    }
  }
  if (grad && w_grad_ != 0.0) {
    const ImageTensor pulled = laplacian(lap_weight);
    auto g = grad->data();
    auto p = pulled.data();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += p[k];
  }
  return total;
}

// ---------------------------------------------------------------------------
// Poisson blending
// ---------------------------------------------------------------------------

PoissonSystem assemble_poisson_system(const BinaryMask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  PoissonSystem sys;
  sys.height = h;
  sys.width = w;
  sys.unknown_of_pixel.assign(mask.size(), -1);

  auto free_pixel = [&](int y, int x) {
    if (y <= 0 || x <= 0 || y >= h - 1 || x >= w - 1) return false;
    return mask.at(y, x) && mask.at(y - 1, x) && mask.at(y + 1, x) && mask.at(y, x - 1) && mask.at(y, x + 1);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (free_pixel(y, x)) {
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        sys.unknown_of_pixel[p] = static_cast<int>(sys.pixel_of_unknown.size());
        sys.pixel_of_unknown.push_back(p);
      }

  const auto n = static_cast<Eigen::Index>(sys.unknowns());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n) * 5);
  constexpr int dy[4] = {-1, 1, 0, 0};
  constexpr int dx[4] = {0, 0, -1, 1};
  for (Eigen::Index row = 0; row < n; ++row) {
    const std::size_t p = sys.pixel_of_unknown[static_cast<std::size_t>(row)];
    const int y = static_cast<int>(p / w);
    const int x = static_cast<int>(p % w);
    triplets.emplace_back(row, row, 4.0);
    for (int k = 0; k < 4; ++k) {
      const int col = sys.unknown_of_pixel[static_cast<std::size_t>(y + dy[k]) * w + (x + dx[k])];
      if (col >= 0) triplets.emplace_back(row, col, -1.0);
    }
  }
  sys.matrix.resize(n, n);
  sys.matrix.setFromTriplets(triplets.begin(), triplets.end());
  sys.matrix.makeCompressed();
  return sys;
}

ImageTensor poisson_solve(const ImageTensor& source, const BinaryMask& mask, const ImageTensor& target,
                          const BlendConfig& cfg) {
  require_same_shape(source, target, "poisson_blend");
  require_same_shape(source, mask, "poisson_blend");
  cfg.validate();

  ImageTensor out = target;
  const PoissonSystem sys = assemble_poisson_system(mask);
  const std::size_t n = sys.unknowns();
  if (n == 0) return out;

  const int w = mask.width();
  const int ch = source.channels();
  const int max_iters = cfg.max_iters.value_or(static_cast<int>(10 * n));

  Eigen::ConjugateGradient<Eigen::SparseMatrix<double, Eigen::RowMajor>, Eigen::Lower | Eigen::Upper,
                           Eigen::DiagonalPreconditioner<double>>
      cg;
  cg.setTolerance(cfg.solver_tol);
  cg.setMaxIterations(max_iters);
  cg.compute(sys.matrix);

  // Solve for the correction delta = b - t. Pinned pixels have delta = 0 and
  // the right-hand side is the Laplacian of d = s - t at each free pixel, so
  // a source equal to the target yields exactly zero correction.
  auto s = source.data();
  auto t = target.data();
  auto o = out.data();
  constexpr int dy[4] = {-1, 1, 0, 0};
  constexpr int dx[4] = {0, 0, -1, 1};
  for (int c = 0; c < ch; ++c) {
    auto diff = [&](std::size_t p) { return s[p * ch + c] - t[p * ch + c]; };
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
    for (std::size_t u = 0; u < n; ++u) {
      const std::size_t p = sys.pixel_of_unknown[u];
      const int y = static_cast<int>(p / w);
      const int x = static_cast<int>(p % w);
      double g = 0.0;
      for (int k = 0; k < 4; ++k) g += diff(p) - diff(static_cast<std::size_t>(y + dy[k]) * w + (x + dx[k]));
      rhs[static_cast<Eigen::Index>(u)] = g;
    }
    const Eigen::VectorXd delta = cg.solve(rhs);
    if (cg.info() != Eigen::Success) {
      std::ostringstream os;
      os << "poisson_blend: conjugate gradient did not converge in " << cg.iterations()
         << " iterations (relative residual " << cg.error() << ", channel " << c << ")";
      throw SolverError(os.str(), cg.error(), static_cast<int>(cg.iterations()));
    }
    for (std::size_t u = 0; u < n; ++u) {
      const std::size_t p = sys.pixel_of_unknown[u];
      o[p * ch + c] = t[p * ch + c] + delta[static_cast<Eigen::Index>(u)];
    }
  }
  return out;
}

ImageTensor poisson_blend(const ImageTensor& source, const BinaryMask& mask, const ImageTensor& target,
                          const BlendConfig& cfg) {
  return poisson_solve(source, mask, target, cfg).clamped();
}

// ---------------------------------------------------------------------------
// Variational blending
// ---------------------------------------------------------------------------

VariationalResult variational_blend(const ImageTensor& source, const BinaryMask& mask, const ImageTensor& target,
                                    const BlendConfig& cfg) {
  cfg.validate();
  const CompositeSample start = compose(source, mask, target, StructuringElement(cfg.edge_radius));
  const BlendObjective objective(source, target, mask, start.edge, cfg);
  const int max_iters = cfg.max_iters.value_or(kDefaultVariationalIters);
  constexpr std::size_t kWindow = 10;

  ImageTensor current = start.image;
  ImageTensor grad;
  double value = objective.value_and_gradient(current, grad);

  VariationalResult result;
  result.objective_history.push_back(value);
  std::vector<double> trace{value};  // objective at every iteration, accepted or not

  const double scale = static_cast<double>(current.data().size());
  double step = cfg.step_size * scale;
  const double min_step = kMinStepSize * scale;

  int iter = 0;
  while (iter < max_iters) {
    ++iter;
    if (value == 0.0) break;

    ImageTensor trial = current;
    auto td = trial.data();
    auto gd = grad.data();
    for (std::size_t k = 0; k < td.size(); ++k) td[k] = std::clamp(td[k] - step * gd[k], 0.0, 1.0);

    ImageTensor trial_grad;
    const double trial_value = objective.value_and_gradient(trial, trial_grad);
    if (trial_value <= value) {
      current = std::move(trial);
      grad = std::move(trial_grad);
      value = trial_value;
      result.objective_history.push_back(value);
    } else {
      step *= 0.5;
      if (step < min_step) break;
    }

    trace.push_back(value);
    if (trace.size() > kWindow) {
      const double before = trace[trace.size() - 1 - kWindow];
      if (before - value <= cfg.solver_tol * before) break;
    }
  }

  result.image = std::move(current);
  result.losses = objective.exact(result.image);
  result.iterations = iter;
  return result;
}

}  // namespace forge
