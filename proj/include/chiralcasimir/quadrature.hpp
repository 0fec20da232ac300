// Quadrature rules shared by the engines.
#pragma once

#include <vector>

namespace chiralcasimir::quadrature {

struct Rule {
  std::vector<double> x;
  std::vector<double> w;

  std::size_t size() const { return x.size(); }
  template <class F>
  double integrate(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * f(x[i]);
    return s;
  }
};

/// n-point Gauss-Legendre rule on [a, b].
Rule gauss_legendre(int n, double a = -1.0, double b = 1.0);

/// Semi-infinite rule for (0, inf): x = scale * u / (1 - u) with
/// Gauss-Legendre in u on (0, 1); the Jacobian is folded into the weights.
Rule semi_infinite(int n, double scale);

/// Composite Gauss-Legendre on panels [0, w, 2w, 4w, ...] clipped at
/// `end`, `order` points per panel.  Used for integrands peaked at 0.
Rule graded_half_line(double end, double first_width, int order);

/// The graded rule mirrored onto [-end, end].
Rule graded_symmetric(double end, double first_width, int order);

}  // namespace chiralcasimir::quadrature

namespace chiralcasimir {

/// Accuracy controls shared by the energy/force integrators.  The frequency
/// rule maps (0, inf) with scale xi_scale_factor / z.  The error estimate is
/// the difference to a lower-order rule (homogeneous engine: half orders;
/// lattice engine: 2/3 of xi_order and k_order - 2); all orders double until
/// it meets rel_tol or max_refinements is spent.
struct QuadratureSettings {
  int xi_order = 24;
  int k_order = 6;        // points per graded Brillouin-zone panel
  int radial_order = 32;  // homogeneous-medium |k| integral
  double xi_scale_factor = 1.0;
  double rel_tol = 1e-4;
  int max_refinements = 2;
};

/// A reduced integral with its error estimate.
struct IntegralResult {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;
};

}  // namespace chiralcasimir
