#include "stablab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stablab/parallel.hpp"

namespace stablab {

namespace {
int g_threads = 0;
}

int thread_count() {
  if (g_threads > 0) return g_threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_thread_count(int n) { g_threads = n; }

double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

MeanSe mean_se(std::span<const double> xs) {
  MeanSe r;
  r.count = xs.size();
  if (xs.empty()) return r;
  r.mean = pairwise_sum(xs) / static_cast<double>(xs.size());
  if (xs.size() < 2) return r;
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - r.mean) * (xs[i] - r.mean);
  const double var = pairwise_sum(sq) / static_cast<double>(xs.size() - 1);
  r.se = std::sqrt(var / static_cast<double>(xs.size()));
  return r;
}

LineFit fit_line(std::span<const double> xs, std::span<const double> ys) {
  LineFit f;
  const std::size_t n = std::min(xs.size(), ys.size());
  if (n == 0) return f;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  double rss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = ys[i] - (f.intercept + f.slope * xs[i]);
    rss += e * e;
  }
  f.residual = std::sqrt(rss / static_cast<double>(n));
  return f;
}

double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

double ks_two_sample(std::span<const double> a, std::span<const double> wa,
                     std::span<const double> b, std::span<const double> wb) {
  struct Item {
    double x;
    double w;
    int side;
  };
  std::vector<Item> items;
  items.reserve(a.size() + b.size());
  const double ta = std::accumulate(wa.begin(), wa.end(), 0.0);
  const double tb = std::accumulate(wb.begin(), wb.end(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) items.push_back({a[i], wa[i] / ta, 0});
  for (std::size_t i = 0; i < b.size(); ++i) items.push_back({b[i], wb[i] / tb, 1});
  std::sort(items.begin(), items.end(), [](const Item& p, const Item& q) { return p.x < q.x; });
  double fa = 0, fb = 0, d = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    (items[i].side == 0 ? fa : fb) += items[i].w;
    if (i + 1 == items.size() || items[i + 1].x != items[i].x) d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  std::vector<double> wa(a.size(), 1.0), wb(b.size(), 1.0);
  return ks_two_sample(a, wa, b, wb);
}

}  // namespace stablab
