#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

namespace kmono {

//! Composite 8-point Gauss-Legendre rule on [a,b].
//!
//! The interval is split at `breaks` (kinks or support ends of the
//! integrand) and roughly `n_points` nodes are spread over the pieces in
//! proportion to their length. Gauss nodes never touch the piece ends, so
//! integrable endpoint spikes are never evaluated.
class CompositeRule
{
public:
  static constexpr int order = 8;

  CompositeRule(double a, double b, int n_points, std::span<const double> breaks = {})
  {
    std::vector<double> cuts{ a, b };
    for (double c : breaks)
      if (c > a && c < b)
        cuts.push_back(c);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    const int panels_total = std::max(1, n_points / order);
    const double len = b - a;
    using GL = boost::math::quadrature::gauss<double, order>;
    const auto& xs = GL::abscissa();
    const auto& ws = GL::weights();
    for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
      double lo = cuts[p], hi = cuts[p + 1];
      int panels = std::max(1, static_cast<int>(std::ceil(panels_total * (hi - lo) / len)));
      double h = (hi - lo) / panels;
      for (int q = 0; q < panels; ++q) {
        double mid = lo + (q + 0.5) * h;
        double half = 0.5 * h;
        for (std::size_t r = 0; r < xs.size(); ++r) {
          if (xs[r] == 0.0) {
            push(mid, ws[r] * half);
          } else {
            push(mid - half * xs[r], ws[r] * half);
            push(mid + half * xs[r], ws[r] * half);
          }
        }
      }
    }
  }

  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }

  template<class F>
  double integrate(F&& f) const
  {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      s += weights_[i] * f(nodes_[i]);
    return s;
  }

private:
  void push(double x, double w)
  {
    nodes_.push_back(x);
    weights_.push_back(w);
  }

  std::vector<double> nodes_;
  std::vector<double> weights_;
};

} // namespace kmono
