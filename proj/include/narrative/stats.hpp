#pragma once

// Rank correlation and bivariate Granger causality on daily count series.

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "core.hpp"

namespace narrative {

struct DailySeries {
  std::int64_t start_day = 0;  // days since epoch
  std::vector<double> values;  // zero-filled
};

/// 1-based mid-ranks (ties share the mean of their positions).
inline std::vector<double> mid_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelationError("correlation undefined for a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline bool is_constant(std::span<const double> x) {
  return std::adjacent_find(x.begin(), x.end(), std::not_equal_to<>()) == x.end();
}

struct Correlation {
  double rho = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

/// Two-sided p-value for a rank correlation via the Student-t approximation.
inline double spearman_t_pvalue(double rho, std::size_t n) {
  if (n < 3) return 1.0;
  if (std::abs(rho) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = rho * std::sqrt(df / (1.0 - rho * rho));
  boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

inline Correlation spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("spearman: series lengths differ");
  if (x.size() < 5) throw InsufficientDataError("spearman needs at least 5 paired observations");
  if (is_constant(x) || is_constant(y)) throw UndefinedCorrelationError("spearman undefined for a constant series");
  const auto rx = mid_ranks(x), ry = mid_ranks(y);
  Correlation c;
  c.n = x.size();
  c.rho = pearson(rx, ry);
  c.p = spearman_t_pvalue(c.rho, c.n);
  return c;
}

/// Pairs x[t] with y[t + lag].
inline Correlation lagged_spearman(std::span<const double> x, std::span<const double> y, int lag) {
  if (lag < 0) throw DomainError("lag must be non-negative");
  const std::size_t l = static_cast<std::size_t>(lag);
  const std::size_t n = std::min(x.size(), y.size() > l ? y.size() - l : 0);
  if (n < 5) throw InsufficientDataError("fewer than 5 overlapping observations at lag " + std::to_string(lag));
  return spearman(x.subspan(0, n), y.subspan(l, n));
}

/// Two-sided permutation p-value for spearman's rho: exact enumeration for
/// n <= 9, otherwise `draws` seeded random permutations.
inline double spearman_permutation_p(std::span<const double> x, std::span<const double> y, std::size_t draws = 20000,
                                     std::uint64_t seed = 1) {
  const auto obs = spearman(x, y).rho;
  const auto rx = mid_ranks(x);
  auto ry = mid_ranks(y);
  const double tol = 1e-12;
  std::size_t extreme = 0, total = 0;
  auto count = [&](const std::vector<double>& perm) {
    ++total;
    if (std::abs(pearson(rx, perm)) >= std::abs(obs) - tol) ++extreme;
  };
  if (x.size() <= 9) {
    std::vector<std::size_t> idx(ry.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<double> perm(ry.size());
    do {
      for (std::size_t i = 0; i < idx.size(); ++i) perm[i] = ry[idx[i]];
      count(perm);
    } while (std::next_permutation(idx.begin(), idx.end()));
    return static_cast<double>(extreme) / static_cast<double>(total);
  }
  Rng rng(seed);
  for (std::size_t d = 0; d < draws; ++d) {
    rng.shuffle(ry);
    count(ry);
  }
  return (static_cast<double>(extreme) + 1.0) / (static_cast<double>(total) + 1.0);
}

struct GrangerResult {
  double F = 0.0;
  double p = 1.0;
  std::size_t n = 0;  // rows after lag trimming
  double rss_restricted = 0.0;
  double rss_unrestricted = 0.0;
};

namespace detail {

inline double ols_rss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) throw DegenerateInputError("singular design matrix (collinear lags)");
  const Eigen::VectorXd beta = qr.solve(y);
  return (y - X * beta).squaredNorm();
}

}  // namespace detail

/// Does x Granger-cause y at lag order p? Compares OLS of y_t on its own p
/// lags (plus intercept) against the model that adds p lags of x.
inline GrangerResult granger_test(std::span<const double> x, std::span<const double> y, int order) {
  if (order < 1) throw DomainError("lag order must be at least 1");
  if (x.size() != y.size()) throw DomainError("granger: series lengths differ");
  if (is_constant(x) || is_constant(y)) throw DegenerateInputError("granger test undefined for a constant series");
  const std::size_t p = static_cast<std::size_t>(order);
  if (x.size() <= p) throw InsufficientDataError("series shorter than lag order");
  const std::size_t n = x.size() - p;
  if (n <= 2 * p + 1) throw InsufficientDataError("too few observations for lag order " + std::to_string(order));

  Eigen::MatrixXd R(n, p + 1), U(n, 2 * p + 1);
  Eigen::VectorXd target(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t t = r + p;
    target(static_cast<Eigen::Index>(r)) = y[t];
    R(r, 0) = U(r, 0) = 1.0;
    for (std::size_t k = 1; k <= p; ++k) {
      R(r, k) = U(r, k) = y[t - k];
      U(r, p + k) = x[t - k];
    }
  }
  GrangerResult g;
  g.n = n;
  g.rss_restricted = detail::ols_rss(R, target);
  g.rss_unrestricted = detail::ols_rss(U, target);
  const double df2 = static_cast<double>(n - 2 * p - 1);
  if (g.rss_unrestricted <= 1e-12 * std::max(1.0, g.rss_restricted))
    throw DegenerateInputError("unrestricted model fits exactly");
  g.F = std::max(0.0, ((g.rss_restricted - g.rss_unrestricted) / static_cast<double>(p)) / (g.rss_unrestricted / df2));
  boost::math::fisher_f dist(static_cast<double>(p), df2);
  g.p = std::clamp(boost::math::cdf(boost::math::complement(dist, g.F)), 0.0, 1.0);
  return g;
}

}  // namespace narrative
