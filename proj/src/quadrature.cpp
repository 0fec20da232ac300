#include "chiralcasimir/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace chiralcasimir::quadrature {

namespace {

// Newton iteration on the Legendre recurrence; nodes cached per order.
const Rule& reference_rule(int n) {
  static std::map<int, Rule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double t = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it2 = 0; it2 < 100; ++it2) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (t * p1 - p0) / (t * t - 1.0);
      const double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) {
        // one more derivative evaluation at the converged node
        p0 = 1.0, p1 = t;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (t * p1 - p0) / (t * t - 1.0);
        break;
      }
    }
    const double w = 2.0 / ((1.0 - t * t) * dp * dp);
    r.x[i] = -t;
    r.x[n - 1 - i] = t;
    r.w[i] = r.w[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.x[n / 2] = 0.0;
  return cache.emplace(n, std::move(r)).first->second;
}

}  // namespace

Rule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
  const Rule& ref = reference_rule(n);
  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  const double h = 0.5 * (b - a), c = 0.5 * (b + a);
  for (int i = 0; i < n; ++i) {
    r.x[i] = c + h * ref.x[i];
    r.w[i] = h * ref.w[i];
  }
  return r;
}

Rule semi_infinite(int n, double scale) {
  const Rule u = gauss_legendre(n, 0.0, 1.0);
  Rule r;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double v = u.x[i];
    r.x.push_back(scale * v / (1.0 - v));
    r.w.push_back(u.w[i] * scale / ((1.0 - v) * (1.0 - v)));
  }
  return r;
}

Rule graded_half_line(double end, double first_width, int order) {
  if (!(end > 0.0) || !(first_width > 0.0))
    throw std::invalid_argument("graded_half_line: end and width must be positive");
  std::vector<double> edges{0.0};
  double w = first_width;
  while (edges.back() + 1.5 * w < end) {
    edges.push_back(edges.back() + w);
    if (edges.size() > 1) w = edges.back();  // panels double after the first
  }
  edges.push_back(end);
  Rule r;
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    const Rule g = gauss_legendre(order, edges[p], edges[p + 1]);
    r.x.insert(r.x.end(), g.x.begin(), g.x.end());
    r.w.insert(r.w.end(), g.w.begin(), g.w.end());
  }
  return r;
}

Rule graded_symmetric(double end, double first_width, int order) {
  const Rule h = graded_half_line(end, first_width, order);
  Rule r;
  for (std::size_t i = h.size(); i-- > 0;) {
    r.x.push_back(-h.x[i]);
    r.w.push_back(h.w[i]);
  }
  r.x.insert(r.x.end(), h.x.begin(), h.x.end());
  r.w.insert(r.w.end(), h.w.begin(), h.w.end());
  return r;
}

}  // namespace chiralcasimir::quadrature
