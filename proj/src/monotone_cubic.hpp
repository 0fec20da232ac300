// Internal: scalar monotone (Fritsch-Butland) cubic Hermite interpolation.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace chiralcasimir::detail {

inline std::vector<double> monotone_slopes(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<double> m(n, 0.0);
  if (n < 2) return m;
  std::vector<double> h(n - 1), d(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    d[i] = (y[i + 1] - y[i]) / h[i];
  }
  if (n == 2) {
    m[0] = m[1] = d[0];
    return m;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double w1 = 2.0 * h[i] + h[i - 1], w2 = h[i] + 2.0 * h[i - 1];
    m[i] = (d[i - 1] * d[i] > 0.0) ? (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]) : 0.0;
  }
  auto end = [](double h0, double h1, double d0, double d1) {
    double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0.0) return 0.0;
    if (d0 * d1 <= 0.0 && std::abs(s) > 3.0 * std::abs(d0)) return 3.0 * d0;
    return s;
  };
  m[0] = end(h[0], h[1], d[0], d[1]);
  m[n - 1] = end(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
  return m;
}

/// Evaluate inside [x.front(), x.back()]; callers handle extrapolation.
inline double monotone_eval(const std::vector<double>& x, const std::vector<double>& y,
                            const std::vector<double>& m, double t) {
  if (x.size() == 1) return y[0];
  std::size_t i = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), t) - x.begin());
  i = std::clamp<std::size_t>(i, 1, x.size() - 1) - 1;
  const double h = x[i + 1] - x[i];
  const double s = (t - x[i]) / h;
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
  return h00 * y[i] + h10 * h * m[i] + h01 * y[i + 1] + h11 * h * m[i + 1];
}

}  // namespace chiralcasimir::detail
