#pragma once

// Independent reference computations for the test suites. None of these
// call into the code they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace forge::oracle {

/// Entropy in bits by direct summation in long double, natural log / ln 2.
inline long double entropy_bits(const std::vector<double>& p) {
  long double h = 0.0L;
  for (double v : p)
    if (v > 0.0) h -= static_cast<long double>(v) * std::log(static_cast<long double>(v));
  return h / std::log(2.0L);
}

/// Mean signed entropy over rows; probs and labels are row-major [m, n].
inline long double information_accuracy(const std::vector<double>& probs, const std::vector<double>& labels,
                                        std::size_t m, std::size_t n) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> p(probs.begin() + i * n, probs.begin() + (i + 1) * n);
    std::size_t best = 0, hot = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (p[j] > p[best]) best = j;
      if (labels[i * n + j] == 1.0) hot = j;
    }
    const long double e = entropy_bits(p);
    total += best == hot ? e : -e;
  }
  return total / static_cast<long double>(m);
}

/// Exact PageRank by solving the linear system
///   r = (1-d)/N + d (Σ_{u->v} r_u / out(u) + Σ_{dangling u} r_u / N)
/// with Gaussian elimination (partial pivoting).
inline std::vector<double> pagerank_exact(const std::vector<std::vector<std::size_t>>& out, double d) {
  const std::size_t n = out.size();
  std::vector<std::vector<long double>> a(n, std::vector<long double>(n + 1, 0.0L));
  for (std::size_t v = 0; v < n; ++v) {
    a[v][v] += 1.0L;
    a[v][n] = (1.0L - d) / n;
  }
  for (std::size_t u = 0; u < n; ++u) {
    if (out[u].empty()) {
      for (std::size_t v = 0; v < n; ++v) a[v][u] -= static_cast<long double>(d) / n;
    } else {
      for (std::size_t v : out[u]) a[v][u] -= static_cast<long double>(d) / out[u].size();
    }
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const long double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> r(n);
  for (std::size_t v = 0; v < n; ++v) r[v] = static_cast<double>(a[v][n] / a[v][v]);
  return r;
}

/// Ranks with ties given their average rank (1-based).
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = avg;
    i = j + 1;
  }
  return rank;
}

/// Spearman rank correlation (Pearson correlation of average ranks). NaN
/// when either sequence is constant.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nan("");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace forge::oracle
