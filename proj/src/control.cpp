#include "parobs/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "parobs/random.hpp"

namespace parobs {

namespace {

/// Backward solve from `terminal`; fills the observed source
/// w_k 1_ω ϑ^k·scale(k) into `source` and returns ϑ(0).
template <typename SliceScale>
Vector observe(const ControlField& shape, const Vector& terminal, Matrix& source, SliceScale&& scale) {
  const ProblemSetup& setup = *shape.setup;
  const int nt = setup.nt();
  const Eigen::Index lo = shape.omega.begin, len = shape.omega.size();
  source.setZero(setup.nx(), nt + 1);
  Vector v = terminal;
  for (int k = nt; k >= 1; --k) {
    if (shape.weights(k) > 0.0) source.col(k).segment(lo, len) = shape.weights(k) * scale(k, v.segment(lo, len)) * v.segment(lo, len);
    v = setup.adjoint_step(k - 1, v);
  }
  return v;
}

double relative_defect(const ProblemSetup& setup, const Vector& state, double reference) {
  const double n = setup.norm(state);
  return reference > 0.0 ? n / reference : n;
}

}  // namespace

Vector apply_gramian(const ControlField& shape, const Vector& terminal) {
  Matrix source;
  observe(shape, terminal, source, [](int, const auto&) { return 1.0; });
  return propagate_forward(shape.setup, Vector::Zero(shape.setup->nx()), &source);
}

// ---------------------------------------------------------------- kappa

double observation_ratio(const SetupPtr& setup, const ObservationGeometry& geometry,
                         const TimeSet& E, const Vector& terminal) {
  const ControlField shape = make_control(setup, geometry, E);
  Matrix source;
  const Vector initial = observe(shape, terminal, source, [](int, const auto&) { return 1.0; });
  const double observed = setup->dt() * setup->dx() * source.cwiseAbs().sum();
  require(observed > 0.0, "observation_ratio: terminal data unobserved on omega × E");
  return setup->norm(initial) / observed;
}

namespace {

struct KappaModel {
  Matrix initial;     // nx × basis, ϑ(0) of each basis vector
  Matrix observed;    // rows: observed (slice, node) pairs, weighted by dt·w_k·dx
  double dx = 0.0;

  double numerator(const Vector& c) const { return std::sqrt(dx) * (initial * c).norm(); }
  double denominator(const Vector& c) const { return (observed * c).cwiseAbs().sum(); }
  double ratio(const Vector& c) const {
    const double den = denominator(c);
    return den > 0.0 ? numerator(c) / den : 0.0;
  }
};

}  // namespace

KappaEstimate estimate_kappa(const SetupPtr& setup, const ObservationGeometry& geometry,
                             const TimeSet& E, const KappaOptions& options) {
  require(measure(E) > 0.0, "estimate_kappa: E has measure zero");
  require(options.basis >= 1 && options.basis <= setup->nx(), "estimate_kappa: basis size must lie in [1, nx]");
  require(options.samples >= 3 && options.sweeps >= 1, "estimate_kappa: optimizer budget too small");
  int k = options.basis;
  EigenPairs eig = dirichlet_eigs(*setup, k);
  const ControlField shape = make_control(setup, geometry, E);

  std::vector<int> slices;
  for (int s = 1; s <= setup->nt(); ++s)
    if (shape.weights(s) > 0.0) slices.push_back(s);
  const Eigen::Index width = shape.omega.size();
  require(!slices.empty() && width > 0, "estimate_kappa: omega × E contains no grid cells");

  KappaModel model;
  model.dx = setup->dx();
  model.initial.resize(setup->nx(), k);
  model.observed.resize(static_cast<Eigen::Index>(slices.size()) * width, k);
  for (int j = 0; j < k; ++j) {
    Matrix source;
    model.initial.col(j) = observe(shape, eig.vectors.col(j), source, [](int, const auto&) { return 1.0; });
    for (std::size_t s = 0; s < slices.size(); ++s)
      model.observed.col(j).segment(static_cast<Eigen::Index>(s) * width, width) =
          setup->dt() * setup->dx() * source.col(slices[s]).segment(shape.omega.begin, width);
  }
  // Modes whose trace on omega × E is within a few digits of rounding are
  // pure noise there; keep the leading resolved ones.
  const double top = model.observed.col(0).lpNorm<1>();
  int resolved = 1;
  while (resolved < k && model.observed.col(resolved).lpNorm<1>() > 1e-8 * top) ++resolved;
  if (resolved < k) {
    k = resolved;
    eig.values.conservativeResize(k);
    eig.vectors.conservativeResize(Eigen::NoChange, k);
    model.initial.conservativeResize(Eigen::NoChange, k);
    model.observed.conservativeResize(Eigen::NoChange, k);
  }

  std::vector<Vector> starts;
  starts.push_back(Vector::Unit(k, 0));
  for (const Vector& w : options.warm_starts) {
    require(w.size() == setup->nx(), "estimate_kappa: warm start must have nx entries");
    Vector c = setup->dx() * eig.vectors.transpose() * w;
    if (c.norm() > 0.0) starts.push_back(c);
  }
  Rng rng(options.seed);
  while (static_cast<int>(starts.size()) < options.starts) starts.push_back(rng.normal_vector(k));

  KappaEstimate best;
  best.basis = k;
  best.seed = options.seed;
  int evaluations = 0;
  auto eval = [&](const Vector& c) {
    ++evaluations;
    return model.ratio(c);
  };

  for (const Vector& start : starts) {
    Vector c = start.normalized();
    double value = eval(c);
    for (int sweep = 0; sweep < options.sweeps; ++sweep) {
      const double before = value;
      for (int j = 0; j < k && k > 1; ++j) {
        const Vector cn = c.normalized();
        const Vector ej = Vector::Unit(k, j);
        auto at = [&](double theta) { return Vector(std::cos(theta) * cn + std::sin(theta) * ej); };
        double best_theta = 0.0, best_val = value;
        const int n = options.samples;
        for (int i = 0; i < n; ++i) {
          const double theta = -std::numbers::pi / 2 + std::numbers::pi * i / (n - 1);
          const double v = eval(at(theta));
          if (v > best_val) {
            best_val = v;
            best_theta = theta;
          }
        }
        // Golden-section refinement inside the neighbouring sample cells.
        const double h = std::numbers::pi / (n - 1);
        double a = best_theta - h, b = best_theta + h;
        const double g = (std::sqrt(5.0) - 1.0) / 2.0;
        double x1 = b - g * (b - a), x2 = a + g * (b - a);
        double f1 = eval(at(x1)), f2 = eval(at(x2));
        for (int it = 0; it < 30; ++it) {
          if (f1 > f2) {
            b = x2; x2 = x1; f2 = f1; x1 = b - g * (b - a); f1 = eval(at(x1));
          } else {
            a = x1; x1 = x2; f1 = f2; x2 = a + g * (b - a); f2 = eval(at(x2));
          }
        }
        if (f1 > best_val) { best_val = f1; best_theta = x1; }
        if (f2 > best_val) { best_val = f2; best_theta = x2; }
        if (best_val > value) {
          c = at(best_theta);
          value = best_val;
        }
      }
      best.trace.push_back(std::max(value, best.value));
      if (value <= before * (1.0 + 1e-12)) break;
    }
    if (value > best.value) {
      best.value = value;
      best.coefficients = c.normalized();
    }
  }
  if (!(best.value > 0.0)) throw NumericalError("estimate_kappa: observation vanishes for every start");
  best.terminal = eig.vectors * best.coefficients;
  best.evaluations = evaluations;
  return best;
}

// ---------------------------------------------------------------- HUM

HumResult hum_cancel(const SetupPtr& setup, const ObservationGeometry& geometry, const TimeSet& E,
                     const Vector& target, double reference, const HumOptions& options) {
  require(measure(E) > 0.0, "hum: E has measure zero");
  require(options.tol > 0.0 && options.max_iter >= 1, "hum: tolerance and iteration budget must be positive");
  require(target.size() == setup->nx(), "hum: target must have nx entries");
  HumResult result{make_control(setup, geometry, E), {}};
  HumReport& report = result.report;
  report.uncontrolled = relative_defect(*setup, target, reference);

  const auto gram = [&](const Vector& x) { return apply_gramian(result.control, x); };
  Vector x = Vector::Zero(setup->nx());
  Vector r = -target;
  report.history.push_back(relative_defect(*setup, r, reference));
  bool converged = report.history.back() <= options.tol;
  if (!converged) {
    Vector p = r, ar = gram(r), ap = ar;
    double rar = r.dot(ar);
    for (int it = 1; it <= options.max_iter; ++it) {
      const double denom = ap.squaredNorm();
      if (!(denom > 0.0) || !(rar > 0.0))
        throw ConvergenceError("hum: Gramian breakdown; observation set too small", report.history);
      const double alpha = rar / denom;
      x += alpha * p;
      r -= alpha * ap;
      report.history.push_back(relative_defect(*setup, r, reference));
      report.iterations = it;
      if (report.history.back() <= options.tol) {
        converged = true;
        break;
      }
      const int w = options.stagnation_window;
      if (it >= w && report.history[it] > (1.0 - 1e-3) * report.history[it - w])
        throw ConvergenceError("hum: residual stagnated at " + std::to_string(report.history.back()),
                               report.history);
      ar = gram(r);
      const double rar_next = r.dot(ar);
      const double beta = rar_next / rar;
      rar = rar_next;
      p = r + beta * p;
      ap = ar + beta * ap;
    }
  }
  if (!converged)
    throw ConvergenceError("hum: no convergence within " + std::to_string(options.max_iter) + " iterations",
                           report.history);

  Matrix values;
  observe(result.control, x, values, [](int, const auto&) { return 1.0; });
  // observe() stores w_k·ϑ; the control itself is ϑ on the support.
  for (int k = 1; k <= setup->nt(); ++k)
    if (result.control.weights(k) > 0.0) values.col(k) /= result.control.weights(k);
  result.control.values = std::move(values);
  result.control.restrict_to_support();

  const Matrix source = result.control.source();
  const Vector reached = target + propagate_forward(setup, Vector::Zero(setup->nx()), &source);
  report.defect = relative_defect(*setup, reached, reference);
  report.dual_terminal = x;
  const ControlField& v = result.control;
  report.sup_abs = v.values.cwiseAbs().maxCoeff();
  report.sup_slice = v.sup_norm();
  double cost = 0.0;
  for (int k = 1; k <= setup->nt(); ++k) cost += v.weights(k) * setup->dt() * setup->inner(v.values.col(k), v.values.col(k));
  report.l2_cost = std::sqrt(cost);
  if (options.kappa) report.kappa_bound = *options.kappa * reference;
  return result;
}

HumResult hum_null_control(const SetupPtr& setup, const ObservationGeometry& geometry,
                           const TimeSet& E, const Vector& psi0, const HumOptions& options) {
  require(psi0.size() == setup->nx(), "hum: initial state must have nx entries");
  const double reference = setup->norm(psi0);
  if (reference == 0.0) {
    HumResult result{make_control(setup, geometry, E), {}};
    result.report.history.push_back(0.0);
    result.report.dual_terminal = Vector::Zero(setup->nx());
    if (options.kappa) result.report.kappa_bound = 0.0;
    return result;
  }
  return hum_cancel(setup, geometry, E, propagate_forward(setup, psi0), reference, options);
}

// ---------------------------------------------------------------- norm-optimal

namespace {

struct DualState {
  double value = 0.0;
  Vector gradient;       // y(T) + δ x/‖x‖, gradient in the dx inner product
  double P = 0.0;        // Σ c_k s_k
  double linear = 0.0;   // ⟨y0, ϑ(0)⟩
  Vector terminal;       // x = ϑ(T)
  double terminal_norm = 0.0;
  Matrix observed;       // ϑ^k on ω, one column per level
  Vector s;              // smoothed slice norms
};

/// ½P² + ⟨y0, ϑ(0)⟩ + δ‖ϑ(T)‖, the dual of reaching the ball of radius δ
/// around zero with minimal L^∞(L²(ω)) cost.
class NormDual {
 public:
  NormDual(const ControlField& shape, const Vector& y0, double radius)
      : shape_(shape), y0_(y0), radius_(radius) {}

  double radius() const { return radius_; }

  /// Smoothed functional with s_k = sqrt(‖ϑ^k‖² + eps²) and its gradient.
  DualState evaluate(const Vector& x, double eps) const {
    const ProblemSetup& setup = *shape_.setup;
    const double dt = setup.dt(), dx = setup.dx();
    DualState st;
    st.terminal = x;
    st.terminal_norm = setup.norm(x);
    st.s = Vector::Zero(setup.nt() + 1);
    st.observed = Matrix::Zero(shape_.omega.size(), setup.nt() + 1);
    Matrix source;
    const Vector initial = observe(shape_, x, source, [&](int k, const auto& seg) {
      st.observed.col(k) = seg;
      st.s(k) = std::sqrt(dx * seg.squaredNorm() + eps * eps);
      return 1.0 / st.s(k);
    });
    for (int k = 1; k <= setup.nt(); ++k) st.P += dt * shape_.weights(k) * st.s(k);
    st.linear = setup.inner(y0_, initial);
    st.value = 0.5 * st.P * st.P + st.linear + radius_ * st.terminal_norm;
    source *= st.P;
    st.gradient = propagate_forward(shape_.setup, y0_, &source);
    if (st.terminal_norm > 0.0) st.gradient += (radius_ / st.terminal_norm) * x;
    return st;
  }

  /// Hessian of the smoothed functional at `st` applied to v (dx metric).
  Vector hessian(const DualState& st, const Vector& v) const {
    const ProblemSetup& setup = *shape_.setup;
    const double dt = setup.dt(), dx = setup.dx();
    const Eigen::Index lo = shape_.omega.begin, len = shape_.omega.size();
    Matrix dv;
    observe(shape_, v, dv, [](int, const auto&) { return 1.0; });
    // dv holds w_k ϑ_v^k on ω.
    Vector ds = Vector::Zero(setup.nt() + 1);
    double dP = 0.0;
    for (int k = 1; k <= setup.nt(); ++k) {
      const double w = shape_.weights(k);
      if (w <= 0.0) continue;
      ds(k) = dx * st.observed.col(k).dot(dv.col(k).segment(lo, len)) / (w * st.s(k));
      dP += dt * w * ds(k);
    }
    Matrix source = Matrix::Zero(setup.nx(), setup.nt() + 1);
    for (int k = 1; k <= setup.nt(); ++k) {
      const double w = shape_.weights(k);
      if (w <= 0.0) continue;
      const double sk = st.s(k);
      source.col(k).segment(lo, len) = st.P / sk * dv.col(k).segment(lo, len) +
                                       w * (dP / sk - st.P * ds(k) / (sk * sk)) * st.observed.col(k);
    }
    Vector hv = propagate_forward(shape_.setup, Vector::Zero(setup.nx()), &source);
    const double r = st.terminal_norm;
    if (r > 0.0) hv += (radius_ / r) * (v - (setup.inner(st.terminal, v) / (r * r)) * st.terminal);
    return hv;
  }

  /// Nonsmooth P and ⟨y0, ϑ(0)⟩ without the forward solve.
  std::pair<double, double> split(const Vector& x, std::vector<double>* norms = nullptr) const {
    const ProblemSetup& setup = *shape_.setup;
    const double dt = setup.dt(), dx = setup.dx();
    std::vector<double> n(setup.nt() + 1, 0.0);
    Matrix source;
    const Vector initial = observe(shape_, x, source, [&](int k, const auto& seg) {
      n[k] = std::sqrt(dx * seg.squaredNorm());
      return 1.0;
    });
    double P = 0.0;
    for (int k = 1; k <= setup.nt(); ++k) P += dt * shape_.weights(k) * n[k];
    if (norms) *norms = std::move(n);
    return {P, setup.inner(y0_, initial)};
  }

  /// Best point on the line through x. The functional restricted to t·x is
  /// ½t²P² + t⟨y0,ϑ(0)⟩ + |t|δ‖x‖; returns x unchanged when the minimum
  /// is at t = 0.
  Vector rescale(const Vector& x) const {
    const auto [P, linear] = split(x);
    const double gain = std::abs(linear) - radius_ * shape_.setup->norm(x);
    if (!(P > 0.0) || !(gain > 0.0)) return x;
    return (-std::copysign(gain, linear) / (P * P)) * x;
  }

 private:
  const ControlField& shape_;
  const Vector& y0_;
  double radius_;
};

/// Heat-equation model of the dual Hessian in Dirichlet modes, used to
/// precondition the Newton systems. Exact for a = 0, b = 0; otherwise the
/// mean potential shifts the modal decay and the drift is ignored.
class ModalModel {
 public:
  ModalModel(const ControlField& shape, double radius) : shape_(shape), radius_(radius) {
    const ProblemSetup& setup = *shape.setup;
    const int n = setup.nx(), nt = setup.nt();
    const EigenPairs eig = dirichlet_eigs(setup, n);
    basis_ = eig.vectors;
    const Matrix observed = basis_.middleRows(shape.omega.begin, shape.omega.size());
    gram_ = observed.transpose() * observed;
    restricted_ = observed.transpose();
    const double shift = setup.potential().mean(), dt = setup.dt(), th = setup.theta();
    decay_.resize(n, nt + 1);
    for (int j = 0; j < n; ++j) {
      const double lambda = eig.values(j) + shift;
      const double rho = (1.0 - (1.0 - th) * dt * lambda) / (1.0 + th * dt * lambda);
      double power = 1.0;
      for (int k = nt; k >= 0; --k) {
        decay_(j, k) = power;
        power *= rho;
      }
    }
  }

  Vector to_modes(const Vector& x) const { return shape_.setup->dx() * (basis_.transpose() * x); }
  Vector from_modes(const Vector& xi) const { return basis_ * xi; }

  /// Model Hessian in mode coordinates at the state `st`.
  Matrix hessian(const DualState& st) const {
    const ProblemSetup& setup = *shape_.setup;
    const double dt = setup.dt(), dx = setup.dx();
    const int nt = setup.nt();
    const Matrix m = dx * decay_.cwiseProduct(restricted_ * st.observed);
    Vector main_weight = Vector::Zero(nt + 1), curve_weight = Vector::Zero(nt + 1);
    Vector grad_p = Vector::Zero(basis_.cols());
    for (int k = 1; k <= nt; ++k) {
      const double c = dt * shape_.weights(k), s = st.s(k);
      if (c <= 0.0) continue;
      main_weight(k) = st.P * c * dx / s;
      curve_weight(k) = st.P * c / (s * s * s);
      grad_p += (c / s) * m.col(k);
    }
    Matrix h = (decay_ * main_weight.asDiagonal() * decay_.transpose()).cwiseProduct(gram_);
    h -= m * curve_weight.asDiagonal() * m.transpose();
    h += grad_p * grad_p.transpose();
    if (st.terminal_norm > 0.0 && radius_ > 0.0) {
      const Vector u = to_modes(st.terminal) / st.terminal_norm;
      h += (radius_ / st.terminal_norm) * (Matrix::Identity(h.rows(), h.cols()) - u * u.transpose());
    }
    return 0.5 * (h + h.transpose());
  }

 private:
  const ControlField& shape_;
  Matrix basis_;       // dx-orthonormal eigenvectors
  Matrix restricted_;  // basisᵀ restricted to ω rows
  Matrix gram_;        // Σ_{i∈ω} v_j(i) v_l(i)
  Matrix decay_;       // ρ_j^{nt-k}
  double radius_;
};

/// (H + μI)⁻¹ for symmetric H, with eigenvalues floored relative to the
/// largest so that a semidefinite model stays invertible.
class ShiftedInverse {
 public:
  explicit ShiftedInverse(const Matrix& h) : eig_(h) {
    top_ = std::max(eig_.eigenvalues().cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  }
  double top() const { return top_; }
  Vector solve(const Vector& b, double mu) const {
    const double floor = 1e-13 * top_;
    const Vector inverse =
        eig_.eigenvalues().unaryExpr([&](double l) { return 1.0 / (std::max(l, floor) + mu); });
    return eig_.eigenvectors() * inverse.cwiseProduct(eig_.eigenvectors().transpose() * b);
  }

 private:
  Eigen::SelfAdjointEigenSolver<Matrix> eig_;
  double top_ = 1.0;
};

}  // namespace

double norm_dual_functional(const ControlField& shape, const Vector& y0, const Vector& terminal,
                            double radius) {
  const auto [P, linear] = NormDual(shape, y0, radius).split(terminal);
  return 0.5 * P * P + linear + radius * shape.setup->norm(terminal);
}

NormOptimalResult norm_optimal_control(const SetupPtr& setup, const ObservationGeometry& geometry,
                                       double tau, const Vector& y0, const NormOptimalOptions& options) {
  require(tau >= 0.0 && tau < setup->horizon(), "norm-optimal: activation time must lie in [0, T)");
  NormOptimalResult result = norm_optimal_control(
      setup, geometry, TimeSet::window(setup->horizon(), tau, setup->horizon()), y0, options);
  result.control.tau = tau;
  return result;
}

NormOptimalResult norm_optimal_control(const SetupPtr& setup, const ObservationGeometry& geometry,
                                       const TimeSet& support, const Vector& y0,
                                       const NormOptimalOptions& options) {
  require(y0.size() == setup->nx(), "norm-optimal: initial state must have nx entries");
  require(measure(support) > 0.0, "norm-optimal: time support has measure zero");
  require(!options.smoothing.empty(), "norm-optimal: empty smoothing schedule");
  const double y0_norm = setup->norm(y0);
  if (!(y0_norm > 0.0)) throw NumericalError("norm-optimal: initial state is zero, dual minimizer vanishes");

  require(options.radius > 0.0 && options.radius < 1.0, "norm-optimal: radius fraction must lie in (0, 1)");
  const Vector free_state = propagate_forward(setup, y0);
  const double free_norm = setup->norm(free_state);
  if (!(free_norm > 0.0)) throw NumericalError("norm-optimal: free terminal state vanishes");

  NormOptimalResult result;
  result.seed = options.seed;
  result.radius = options.radius * free_norm;
  result.control = make_control(setup, geometry, support, support.intervals().front().lo);
  const ControlField& shape = result.control;
  const NormDual dual(shape, y0, result.radius);
  const ModalModel model(shape, result.radius);
  const double dx = setup->dx();
  const auto dot = [dx](const Vector& a, const Vector& b) { return dx * a.dot(b); };

  Vector x;
  if (options.warm_start) {
    require(options.warm_start->size() == setup->nx(), "norm-optimal: warm start must have nx entries");
    x = *options.warm_start;
  } else if (options.random_start) {
    Rng rng(options.seed);
    x = rng.normal_vector(setup->nx());
  } else {
    x = -free_state;
  }
  if (!(x.norm() > 0.0)) x = -free_state;

  const double window = measure(support);
  for (std::size_t stage = 0; stage < options.smoothing.size(); ++stage) {
    x = dual.rescale(x);
    const auto [P, linear] = dual.split(x);
    const double eps = options.smoothing[stage] * (P > 0.0 ? P / window : free_norm);
    const bool last = stage + 1 == options.smoothing.size();
    const double gtol = (last ? 1.0 : 100.0) * options.gradient_tol * result.radius;

    DualState st = dual.evaluate(x, eps);
    double mu = -1.0;
    for (int it = 0; it < options.max_iter; ++it) {
      const double gnorm = std::sqrt(dot(st.gradient, st.gradient));
      result.trace.push_back(gnorm / result.radius);
      if (gnorm <= gtol) break;
      // Levenberg-Marquardt steps (H + μI)d = -g in mode coordinates,
      // solved by conjugate gradients preconditioned with the modal model.
      const ShiftedInverse precond(model.hessian(st));
      if (mu < 0.0) mu = 1e-6 * precond.top();
      const Vector g = model.to_modes(st.gradient);
      const double forcing = std::min(0.1, std::sqrt(gnorm / result.radius));
      bool accepted = false;
      for (int attempt = 0; attempt < 60 && !accepted; ++attempt) {
        Vector d = Vector::Zero(g.size());
        Vector r = -g, z = precond.solve(r, mu), p = z;
        double rz = r.dot(z);
        for (int cg = 0; cg < options.max_cg; ++cg) {
          const Vector hp = model.to_modes(dual.hessian(st, model.from_modes(p))) + mu * p;
          const double curvature = p.dot(hp);
          if (!(curvature > 0.0)) {
            if (cg == 0) d = z;
            break;
          }
          const double alpha = rz / curvature;
          d += alpha * p;
          r -= alpha * hp;
          if (r.norm() <= forcing * g.norm()) break;
          z = precond.solve(r, mu);
          const double rz_next = r.dot(z);
          p = z + (rz_next / rz) * p;
          rz = rz_next;
        }
        // Decrease predicted by the undamped quadratic model; r = -g - (H+μI)d.
        const double dhd = -d.dot(r + g) - mu * d.squaredNorm();
        const double predicted = -(g.dot(d) + 0.5 * dhd);
        DualState trial = dual.evaluate(x + model.from_modes(d), eps);
        const double ratio = predicted > 0.0 ? (st.value - trial.value) / predicted : -1.0;
        if (ratio > 0.25) {
          accepted = true;
          x += model.from_modes(d);
          st = std::move(trial);
          if (ratio > 0.75) mu = std::max(mu / 4.0, 1e-15 * precond.top());
        } else {
          mu *= 4.0;
        }
      }
      ++result.iterations;
      if (!accepted) break;
    }
  }

  x = dual.rescale(x);
  std::vector<double> norms;
  const auto [P, linear] = dual.split(x, &norms);
  const double x_norm = setup->norm(x);
  const double gain = std::abs(linear) - result.radius * x_norm;
  if (!(P > 0.0) || !(gain > 0.0)) throw NumericalError("norm-optimal: dual minimizer is numerically zero");
  result.M_tilde = gain / P;
  result.dual_terminal = x;
  result.dual_value = 0.5 * P * P + linear + result.radius * x_norm;

  // f^k = M̃ ϑ^k / s_k with the last smoothing. Away from vanishing slices
  // this is M̃ ϑ^k/‖ϑ^k‖; on slices where ϑ^k is (numerically) zero on ω it
  // picks the interior value the smoothed optimality condition selects.
  const double eps = options.smoothing.back() * (P / window);
  Matrix values;
  observe(shape, x, values, [&](int k, const auto&) {
    const double sk = std::hypot(norms[k], eps);
    return sk > 0.0 ? 1.0 / sk : 0.0;
  });
  for (int k = 1; k <= setup->nt(); ++k)
    if (shape.weights(k) > 0.0) values.col(k) *= result.M_tilde / shape.weights(k);
  result.control.values = std::move(values);
  result.control.restrict_to_support();

  const Matrix source = result.control.source();
  result.defect = setup->norm(propagate_forward(setup, y0, &source)) / y0_norm;
  result.stats = bang_bang_diagnostic(result.control);
  result.bang_bang_cv = result.stats.cv;
  if (!(result.defect <= options.tol))
    throw ConvergenceError("norm-optimal: terminal defect " + std::to_string(result.defect) +
                               " above tolerance",
                           result.trace);
  return result;
}

// ---------------------------------------------------------------- improvement

double improvement_delta(double epsilon, double kappa, double y0_norm) {
  require(epsilon > 0.0, "improvement: epsilon must be positive");
  require(kappa > 0.0 && y0_norm >= 0.0, "improvement: kappa must be positive");
  return epsilon / (kappa * y0_norm + epsilon);
}

ImproveResult improve_control(const SetupPtr& setup, const ObservationGeometry& geometry,
                              const ControlField& f, const TimeSet& E, double epsilon,
                              const Vector& y0, const ImproveOptions& options) {
  require(f.setup.get() == setup.get() || (f.setup->nx() == setup->nx() && f.setup->nt() == setup->nt()),
          "improvement: control lives on a different grid");
  require(measure(E) > 0.0, "improvement: E has measure zero");
  require(y0.size() == setup->nx(), "improvement: initial state must have nx entries");

  ImproveResult out;
  const double y0_norm = setup->norm(y0);
  out.sup_before = f.sup_norm();
  out.bound = options.bound.value_or(out.sup_before);
  const Vector wE = cell_fractions(E, setup->nt());
  const Vector norms = f.slice_norms();
  for (int k = 1; k <= setup->nt(); ++k) {
    if (wE(k) > 0.0 && norms(k) > (out.bound - epsilon) * (1.0 + 1e-12) + 1e-300)
      throw PreconditionError("improvement: slice " + std::to_string(k) + " (t = " +
                                  std::to_string(setup->time(k)) + ") has norm " +
                                  std::to_string(norms(k)) + " above M - epsilon",
                              k);
  }
  const Matrix f_source = f.source();
  const auto defect_of = [&](const Matrix& source) {
    const Vector yT = propagate_forward(setup, y0, &source);
    return y0_norm > 0.0 ? setup->norm(yT) / y0_norm : setup->norm(yT);
  };
  out.defect_before = defect_of(f_source);
  out.delta = improvement_delta(epsilon, options.kappa, y0_norm);

  ControlField v = make_control(setup, geometry, E);
  if (y0_norm > 0.0) {
    const Vector scaled = out.delta * y0;
    if (options.correction == CorrectionKind::hum) {
      v = hum_null_control(setup, geometry, E, scaled, options.hum).control;
    } else {
      v = norm_optimal_control(setup, geometry, E, scaled, options.norm).control;
    }
  }
  out.correction_sup = v.sup_norm();
  out.correction_budget = out.delta * options.kappa * y0_norm;
  out.certificate = out.correction_sup <= out.correction_budget * (1.0 + 1e-9);

  std::vector<Interval> pieces = f.support.intervals();
  pieces.insert(pieces.end(), E.intervals().begin(), E.intervals().end());
  ControlField g = make_control(setup, geometry, TimeSet::normalize(pieces, setup->horizon()).set, f.tau);
  const Matrix combined = (1.0 - out.delta) * f_source + v.source();
  for (int k = 1; k <= setup->nt(); ++k)
    if (g.weights(k) > 0.0) g.values.col(k) = combined.col(k) / g.weights(k);
  g.restrict_to_support();
  out.improved = std::move(g);
  out.sup_after = out.improved.sup_norm();
  out.target = (1.0 - out.delta) * out.bound;
  out.defect_after = defect_of(out.improved.source());
  return out;
}

// ---------------------------------------------------------------- time-optimal

TimeOptimalResult time_optimal_control(const SetupPtr& setup, const ObservationGeometry& geometry,
                                       const Vector& y0, const TimeOptimalOptions& options) {
  require(options.M > 0.0, "time-optimal: bound M must be positive");
  const double T = setup->horizon();
  const double tol = options.tol > 0.0 ? options.tol : setup->dt();
  TimeOptimalResult result;

  NormOptimalResult at_zero = norm_optimal_control(setup, geometry, 0.0, y0, options.inner);
  result.cost_at_zero = at_zero.M_tilde;
  if (at_zero.M_tilde > options.M * (1.0 + 1e-9))
    throw EmptyAdmissibleSet("time-optimal: no admissible control, N(0) = " + std::to_string(at_zero.M_tilde) +
                                 " exceeds M = " + std::to_string(options.M),
                             at_zero.M_tilde);

  const int iterations = static_cast<int>(std::ceil(std::log2(T / tol)));
  double lo = 0.0, hi = T;
  NormOptimalResult best = std::move(at_zero);
  Vector warm = best.dual_terminal;
  for (int it = 0; it < iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    NormOptimalOptions inner = options.inner;
    inner.warm_start = warm;
    BisectionStep step{mid, false, std::numeric_limits<double>::infinity()};
    try {
      NormOptimalResult trial = norm_optimal_control(setup, geometry, mid, y0, inner);
      step.cost = trial.M_tilde;
      step.feasible = trial.M_tilde <= options.M;
      warm = trial.dual_terminal;
      if (step.feasible) best = std::move(trial);
    } catch (const ConvergenceError&) {
      // Controls on very short windows are too expensive to resolve.
      step.feasible = false;
    }
    if (step.feasible) lo = mid;
    else hi = mid;
    result.history.push_back(step);
  }
  result.iterations = iterations;
  result.tau_star = lo;
  result.control = std::move(best);
  result.bang_bang_cv = result.control.bang_bang_cv;
  return result;
}

}  // namespace parobs
