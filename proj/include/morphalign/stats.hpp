#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "morphalign/error.hpp"

namespace morphalign::stats {

// 1-based ranks; ties get the mean of the positions they span.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y, bool* degenerate = nullptr) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  if (degenerate) *degenerate = false;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

enum class PValueMethod { t_approximation, exact_permutation };

struct Correlation {
  double rho = 0;
  double p_value = 1;
  bool degenerate = false;  // zero rank variance in x or y: rho reported as 0
  std::size_t n = 0;
};

// Two-sided p for a correlation under the t approximation with n-2 df.
inline double correlation_t_pvalue(double rho, std::size_t n) {
  if (std::abs(rho) >= 1.0) return 0.0;
  const double df = static_cast<double>(n) - 2.0;
  const double t = rho * std::sqrt(df / (1.0 - rho * rho));
  boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

// Fraction of all n! rank permutations of y whose |rho| reaches the observed.
inline double spearman_permutation_pvalue(std::span<const double> rx, std::span<const double> ry, double rho) {
  std::vector<std::size_t> perm(ry.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<double> permuted(ry.size());
  std::size_t hits = 0, total = 0;
  do {
    for (std::size_t i = 0; i < perm.size(); ++i) permuted[i] = ry[perm[i]];
    const double r = pearson(rx, permuted);
    if (std::abs(r) >= std::abs(rho) - 1e-12) ++hits;
    ++total;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(hits) / static_cast<double>(total);
}

inline Correlation spearman(std::span<const double> x, std::span<const double> y,
                            PValueMethod method = PValueMethod::t_approximation) {
  if (x.size() != y.size()) throw DataError("spearman: x and y differ in length");
  if (x.size() < 3) throw DataError("spearman: insufficient data (need at least 3 points, got " +
                                    std::to_string(x.size()) + ")");
  if (method == PValueMethod::exact_permutation && x.size() > 8)
    throw ConfigError("spearman: exact permutation p-value is limited to n <= 8");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  Correlation c;
  c.n = x.size();
  c.rho = pearson(rx, ry, &c.degenerate);
  if (c.degenerate) {
    c.p_value = 1.0;
    return c;
  }
  c.p_value = method == PValueMethod::exact_permutation ? spearman_permutation_pvalue(rx, ry, c.rho)
                                                        : correlation_t_pvalue(c.rho, c.n);
  return c;
}

// ---------------------------------------------------------------------------
// Ordinary least squares.

// Named numeric design columns. Categorical labels expand to drop-first
// dummy columns named `label[level]`; the intercept is implicit.
class Design {
 public:
  void add(std::string name, std::vector<double> values) {
    check_length(values.size(), name);
    for (const auto& existing : names_)
      if (existing == name) throw ConfigError("design: duplicate column '" + name + "'");
    names_.push_back(std::move(name));
    columns_.push_back(std::move(values));
  }

  void add_categorical(const std::string& name, const std::vector<std::string>& labels) {
    check_length(labels.size(), name);
    const std::set<std::string> levels(labels.begin(), labels.end());
    bool first = true;
    for (const auto& level : levels) {
      if (first) {
        first = false;
        continue;
      }
      std::vector<double> col(labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i) col[i] = labels[i] == level ? 1.0 : 0.0;
      add(name + "[" + level + "]", std::move(col));
    }
    if (rows_ == 0) rows_ = labels.size();
  }

  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<std::vector<double>>& columns() const noexcept { return columns_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return columns_.size(); }

 private:
  void check_length(std::size_t n, const std::string& name) {
    if (rows_ == 0 && columns_.empty()) rows_ = n;
    if (n != rows_) throw ConfigError("design: column '" + name + "' has " + std::to_string(n) + " rows, expected " +
                                      std::to_string(rows_));
  }

  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
  std::size_t rows_ = 0;
};

inline constexpr const char* kInterceptName = "(Intercept)";

struct RegressionFit {
  std::map<std::string, double> coefficients;  // includes "(Intercept)"
  std::vector<std::string> predictors;         // design column names, in order
  double r_squared = 0;
  double residual_ss = 0;
  double total_ss = 0;
  std::size_t n = 0;
  std::size_t p = 0;  // predictors, excluding the intercept
  bool degenerate = false;  // total_ss == 0
  std::vector<double> y;
  std::vector<double> residuals;
};

class RankDeficientError : public DataError {
 public:
  RankDeficientError(const std::vector<std::string>& cols)
      : DataError(message(cols)), columns_(cols) {}
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  static std::string message(const std::vector<std::string>& cols) {
    std::string m = "design is rank deficient; collinear columns:";
    for (const auto& c : cols) m += " " + c;
    return m;
  }
  std::vector<std::string> columns_;
};

// Fits y = b0 + X b by column-pivoted Householder QR on standardized
// columns; coefficients are mapped back to original units.
inline RegressionFit ols(const Design& design, std::span<const double> y) {
  const std::size_t n = y.size();
  const std::size_t p = design.cols();
  if (p > 0 && design.rows() != n) throw ConfigError("ols: design rows do not match y");
  if (n < p + 2) throw DataError("ols: need at least " + std::to_string(p + 2) + " observations for " +
                                 std::to_string(p) + " predictors, got " + std::to_string(n));

  const auto mean_sd = [n](std::span<const double> v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::pair{m, std::sqrt(ss / static_cast<double>(n))};
  };

  RegressionFit fit;
  fit.n = n;
  fit.p = p;
  fit.predictors = design.names();
  fit.y.assign(y.begin(), y.end());

  std::vector<double> means(p), sds(p);
  std::vector<std::string> constant;
  for (std::size_t j = 0; j < p; ++j) {
    std::tie(means[j], sds[j]) = mean_sd(design.columns()[j]);
    if (!(sds[j] > 1e-12 * std::max(1.0, std::abs(means[j])))) constant.push_back(design.names()[j]);
  }
  if (!constant.empty()) {
    constant.insert(constant.begin(), kInterceptName);
    throw RankDeficientError(constant);
  }
  const auto [my, sy] = mean_sd(y);

  Eigen::VectorXd beta_std = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  if (p > 0) {
    Eigen::MatrixXd Z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t i = 0; i < n; ++i)
        Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (design.columns()[j][i] - means[j]) / sds[j];
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    qr.setThreshold(1e-10);
    if (qr.rank() < static_cast<Eigen::Index>(p)) {
      std::vector<std::string> bad;
      const auto& perm = qr.colsPermutation().indices();
      for (Eigen::Index k = qr.rank(); k < static_cast<Eigen::Index>(p); ++k)
        bad.push_back(design.names()[static_cast<std::size_t>(perm(k))]);
      std::sort(bad.begin(), bad.end());
      throw RankDeficientError(bad);
    }
    if (sy > 0) {
      Eigen::VectorXd ys(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) ys(static_cast<Eigen::Index>(i)) = (y[i] - my) / sy;
      beta_std = qr.solve(ys);
    }
  }

  double intercept = my;
  for (std::size_t j = 0; j < p; ++j) {
    const double b = sy > 0 ? beta_std(static_cast<Eigen::Index>(j)) * sy / sds[j] : 0.0;
    fit.coefficients[design.names()[j]] = b;
    intercept -= b * means[j];
  }
  fit.coefficients[kInterceptName] = intercept;

  fit.residuals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double pred = intercept;
    for (std::size_t j = 0; j < p; ++j) pred += fit.coefficients[design.names()[j]] * design.columns()[j][i];
    fit.residuals[i] = y[i] - pred;
    fit.residual_ss += fit.residuals[i] * fit.residuals[i];
    fit.total_ss += (y[i] - my) * (y[i] - my);
  }
  if (fit.total_ss <= 0) {
    fit.degenerate = true;
    fit.r_squared = 0;
    fit.residual_ss = 0;
  } else {
    fit.r_squared = std::clamp(1.0 - fit.residual_ss / fit.total_ss, 0.0, 1.0);
  }
  return fit;
}

struct FTest {
  double f = 0;
  double p_value = 1;
  std::size_t df_num = 0;
  std::size_t df_den = 0;
};

// Compares nested fits on the same response: F on (p_big - p_small,
// n - p_big - 1) degrees of freedom.
inline FTest nested_f_test(const RegressionFit& small, const RegressionFit& big) {
  if (small.n != big.n || small.y != big.y) throw ConfigError("nested_f_test: fits use different responses");
  const std::set<std::string> big_names(big.predictors.begin(), big.predictors.end());
  for (const auto& name : small.predictors)
    if (!big_names.count(name)) throw ConfigError("nested_f_test: '" + name + "' is not in the larger model");
  if (big.p <= small.p) throw ConfigError("nested_f_test: larger model adds no predictors");

  FTest t;
  t.df_num = big.p - small.p;
  t.df_den = big.n - big.p - 1;
  const double gain = std::max(0.0, small.residual_ss - big.residual_ss);
  if (big.residual_ss <= 1e-300 * std::max(1.0, small.residual_ss)) {
    t.f = gain > 0 ? std::numeric_limits<double>::infinity() : 0.0;
    t.p_value = gain > 0 ? 0.0 : 1.0;
    return t;
  }
  t.f = (gain / static_cast<double>(t.df_num)) / (big.residual_ss / static_cast<double>(t.df_den));
  boost::math::fisher_f dist(static_cast<double>(t.df_num), static_cast<double>(t.df_den));
  t.p_value = std::clamp(boost::math::cdf(boost::math::complement(dist, t.f)), 0.0, 1.0);
  return t;
}

}  // namespace morphalign::stats
