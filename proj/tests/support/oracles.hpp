#pragma once

// Independent numeric oracles for the test suite. Everything here is derived
// from first principles (finite differences, quadrature, closed forms) and
// deliberately avoids the library's own derivative / special-function code
// paths, so agreement between the two is evidence, not tautology.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Core>

namespace oracle {

// ---------- central finite differences ----------

// Central-difference gradient with a per-coordinate step scaled to the
// coordinate's magnitude.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h0 = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double h = h0 * (1.0 + std::abs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

// Central differences of a vector-valued gradient function, symmetrized.
inline Eigen::MatrixXd fd_hessian_of_grad(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad_fn,
    const Eigen::VectorXd& x, double h0 = 1e-5) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd h_mat(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double h = h0 * (1.0 + std::abs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    h_mat.col(i) = (grad_fn(xp) - grad_fn(xm)) / (2 * h);
  }
  return 0.5 * (h_mat + h_mat.transpose());
}

inline Eigen::Vector4d fd_gradient4(const std::function<double(const Eigen::Vector4d&)>& f,
                                    const Eigen::Vector4d& x, double h0 = 1e-6) {
  Eigen::Vector4d g;
  for (int i = 0; i < 4; ++i) {
    double h = h0 * (1.0 + std::abs(x[i]));
    Eigen::Vector4d xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

// ---------- Student-t survival probability by quadrature ----------

namespace detail {

// Adaptive Simpson with Richardson correction.
inline double simpson(const std::function<double(double)>& f, double a, double m, double b,
                      double fa, double fm, double fb, double whole, double tol, int depth) {
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6 * (fa + 4 * flm + fm);
  double right = (b - m) / 6 * (fm + 4 * frm + fb);
  double both = left + right;
  if (depth <= 0 || std::abs(both - whole) <= 15 * tol) {
    return both + (both - whole) / 15;
  }
  return simpson(f, a, lm, m, fa, flm, fm, left, tol / 2, depth - 1) +
         simpson(f, m, rm, b, fm, frm, fb, right, tol / 2, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  double m = 0.5 * (a + b);
  double fa = f(a), fm = f(m), fb = f(b);
  double whole = (b - a) / 6 * (fa + 4 * fm + fb);
  return simpson(f, a, m, b, fa, fm, fb, whole, tol, 60);
}

}  // namespace detail

// Two-sided P(|T_df| >= |t|) by integrating the t density over a finite
// interval: the substitution x = sqrt(df) * tan(u) maps the tail [|t|, inf)
// to [atan(|t|/sqrt(df)), pi/2] and turns the integrand into
// C * sqrt(df) * cos(u)^(df-1), which is smooth and bounded.
inline double students_t_sf_quadrature(double t, double df) {
  double at = std::abs(t);
  if (at == 0) return 1.0;
  if (std::isinf(at)) return 0.0;
  double log_c = std::lgamma((df + 1) / 2) - std::lgamma(df / 2) - 0.5 * std::log(df * M_PI);
  double c = std::exp(log_c);
  auto integrand = [&](double u) { return c * std::sqrt(df) * std::pow(std::cos(u), df - 1); };
  double a = std::atan(at / std::sqrt(df));
  return 2 * detail::integrate(integrand, a, M_PI / 2, 1e-14);
}

// ---------- paired t-test from the definition ----------

struct PairedT {
  int n = 0;
  double mean_diff = 0;
  double sd_diff = 0;  // sample standard deviation, n-1 denominator
  double t = 0;
  double cohen_d = 0;
};

inline PairedT paired_t_reference(const std::vector<double>& a, const std::vector<double>& b) {
  PairedT r;
  r.n = static_cast<int>(a.size());
  double sum = 0;
  for (int i = 0; i < r.n; ++i) sum += a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)];
  r.mean_diff = sum / r.n;
  double ss = 0;
  for (int i = 0; i < r.n; ++i) {
    double d = a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)] - r.mean_diff;
    ss += d * d;
  }
  r.sd_diff = std::sqrt(ss / (r.n - 1));
  if (r.sd_diff > 0) {
    r.t = r.mean_diff / (r.sd_diff / std::sqrt(static_cast<double>(r.n)));
    r.cohen_d = r.mean_diff / r.sd_diff;
  } else {
    r.t = r.mean_diff == 0 ? 0 : (r.mean_diff > 0 ? INFINITY : -INFINITY);
    r.cohen_d = r.t;
  }
  return r;
}

// ---------- constant-action kinematics closed forms ----------

// Acceleration control with position advanced by the pre-update velocity:
//   v_N = v_0 + N a dt
//   p_N = p_0 + N dt v_0 + a dt^2 N (N-1) / 2
inline double const_accel_position(double p0, double v0, double a, double dt, int n) {
  return p0 + n * dt * v0 + a * dt * dt * (static_cast<double>(n) * (n - 1)) / 2;
}

inline double const_accel_velocity(double v0, double a, double dt, int n) {
  return v0 + n * a * dt;
}

}  // namespace oracle
