#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "csmmse/rng.hpp"

namespace csmmse {

// Channel and source scale: measurement rate R = k/n, inverse noise
// variance beta, variance sigma2 of the nonzero signal entries.
struct ModelParams {
  double R = 0.0;
  double beta = 0.0;
  double sigma2 = 0.0;

  void validate() const {
    if (!(std::isfinite(R) && R > 0.0))
      throw std::domain_error("ModelParams: R must be finite and > 0");
    if (!(std::isfinite(beta) && beta > 0.0))
      throw std::domain_error("ModelParams: beta must be finite and > 0");
    if (!(std::isfinite(sigma2) && sigma2 > 0.0))
      throw std::domain_error("ModelParams: sigma2 must be finite and > 0");
  }
};

// Binary entropy in nats, with the 0*log(0)=0 convention.
inline double binary_entropy(double m) {
  if (!(m >= 0.0 && m <= 1.0))
    throw std::domain_error("binary_entropy: argument outside [0,1]");
  double h = 0.0;
  if (m > 0.0) h -= m * std::log(m);
  if (m < 1.0) h -= (1.0 - m) * std::log(1.0 - m);
  return h;
}

// Exchangeable sparsity prior P(s) ~ exp(n f(m_s)). The a-priori
// magnetization m_a (interior maximizer of h2 + f) is computed once at
// construction: a 2001-point grid locates every basin, golden-section
// refines each to 1e-12, and ties within 1e-9 are flagged as ambiguous
// with the smaller maximizer returned.
class SparsityPrior {
 public:
  enum class Kind { IidBernoulli, CurieWeiss, Tabulated };

  static SparsityPrior iid_bernoulli(double p) {
    if (!(p > 0.0 && p < 1.0))
      throw std::domain_error("iid_bernoulli: p must lie in (0,1)");
    SparsityPrior prior;
    prior.kind_ = Kind::IidBernoulli;
    prior.a_ = p;
    prior.compute_m_a();
    return prior;
  }

  static SparsityPrior curie_weiss(double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b))
      throw std::domain_error("curie_weiss: coefficients must be finite");
    SparsityPrior prior;
    prior.kind_ = Kind::CurieWeiss;
    prior.a_ = a;
    prior.b_ = b;
    prior.compute_m_a();
    return prior;
  }

  // Values of f on a uniform grid over [0,1]; f and f' come from the
  // natural cubic spline through them.
  static SparsityPrior tabulated(std::vector<double> values) {
    if (values.size() < 4)
      throw std::domain_error("tabulated: need at least 4 grid values");
    for (double v : values)
      if (!std::isfinite(v))
        throw std::domain_error("tabulated: grid values must be finite");
    SparsityPrior prior;
    prior.kind_ = Kind::Tabulated;
    prior.table_ = std::move(values);
    prior.build_spline();
    prior.compute_m_a();
    return prior;
  }

  Kind kind() const { return kind_; }
  double bernoulli_p() const { return a_; }
  double cw_a() const { return a_; }
  double cw_b() const { return b_; }
  const std::vector<double>& table() const { return table_; }

  double f(double m) const {
    switch (kind_) {
      case Kind::IidBernoulli:
        return m * std::log(a_) + (1.0 - m) * std::log(1.0 - a_);
      case Kind::CurieWeiss:
        return a_ * m + 0.5 * b_ * m * m;
      case Kind::Tabulated:
        return spline_eval(m, false);
    }
    return 0.0;
  }

  double f_prime(double m) const {
    switch (kind_) {
      case Kind::IidBernoulli:
        return std::log(a_ / (1.0 - a_));
      case Kind::CurieWeiss:
        return a_ + b_ * m;
      case Kind::Tabulated:
        return spline_eval(m, true);
    }
    return 0.0;
  }

  double m_a() const { return m_a_; }
  bool m_a_ambiguous() const { return ambiguous_; }

  std::string kind_name() const {
    switch (kind_) {
      case Kind::IidBernoulli:
        return "iid_bernoulli";
      case Kind::CurieWeiss:
        return "curie_weiss";
      case Kind::Tabulated:
        return "tabulated";
    }
    return "?";
  }

 private:
  SparsityPrior() = default;

  double objective(double m) const { return binary_entropy(m) + f(m); }

  void compute_m_a() {
    constexpr int kGrid = 2001;
    std::vector<double> val(kGrid);
    for (int i = 0; i < kGrid; ++i)
      val[i] = objective(static_cast<double>(i) / (kGrid - 1));
    // refine every interior local maximum of the grid
    std::vector<std::pair<double, double>> peaks;  // (value, m)
    for (int i = 1; i + 1 < kGrid; ++i) {
      if (val[i] >= val[i - 1] && val[i] >= val[i + 1]) {
        double lo = static_cast<double>(i - 1) / (kGrid - 1);
        double hi = static_cast<double>(i + 1) / (kGrid - 1);
        double m = golden_max(lo, hi);
        peaks.emplace_back(objective(m), m);
      }
    }
    if (peaks.empty()) peaks.emplace_back(objective(0.5), 0.5);
    // Function-value search flattens out at sqrt(eps); polish each peak on
    // the stationarity equation log((1-m)/m) + f'(m) = 0 instead.
    for (auto& [value, m] : peaks) {
      double lo = std::max(m - 1e-4, 1e-15);
      double hi = std::min(m + 1e-4, 1.0 - 1e-15);
      auto slope = [this](double t) {
        return std::log((1.0 - t) / t) + f_prime(t);
      };
      if (slope(lo) > 0.0 && slope(hi) < 0.0) {
        for (int it = 0; it < 100; ++it) {
          double mid = 0.5 * (lo + hi);
          (slope(mid) > 0.0 ? lo : hi) = mid;
        }
        m = 0.5 * (lo + hi);
        value = objective(m);
      }
    }
    std::sort(peaks.begin(), peaks.end(), [](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first > y.first;
      return x.second < y.second;
    });
    double best_val = peaks[0].first;
    double best_m = peaks[0].second;
    ambiguous_ = false;
    for (std::size_t i = 1; i < peaks.size(); ++i) {
      if (std::abs(peaks[i].second - best_m) < 1e-6) continue;  // same basin
      if (best_val - peaks[i].first < 1e-9) {
        ambiguous_ = true;
        if (peaks[i].second < best_m) best_m = peaks[i].second;
      }
    }
    m_a_ = best_m;
  }

  double golden_max(double lo, double hi) const {
    constexpr double kInvPhi = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    double fc = objective(c), fd = objective(d);
    while (b - a > 1e-12) {
      if (fc > fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - kInvPhi * (b - a);
        fc = objective(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + kInvPhi * (b - a);
        fd = objective(d);
      }
    }
    return 0.5 * (a + b);
  }

  void build_spline() {
    // Natural cubic spline on the uniform grid: interior second
    // derivatives solve M[i-1] + 4 M[i] + M[i+1] = 6 d2y[i] / h^2,
    // with M = 0 at both ends. Thomas algorithm.
    const std::size_t n = table_.size();
    const double h = 1.0 / static_cast<double>(n - 1);
    spline_m2_.assign(n, 0.0);
    const std::size_t m = n - 2;  // interior unknowns
    std::vector<double> c(m, 0.0), d(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      std::size_t i = j + 1;
      double rhs =
          6.0 * (table_[i + 1] - 2.0 * table_[i] + table_[i - 1]) / (h * h);
      double denom = 4.0 - (j > 0 ? c[j - 1] : 0.0);
      c[j] = 1.0 / denom;
      d[j] = (rhs - (j > 0 ? d[j - 1] : 0.0)) / denom;
    }
    for (std::size_t j = m; j-- > 0;)
      spline_m2_[j + 1] =
          d[j] - c[j] * (j + 2 < n ? spline_m2_[j + 2] : 0.0);
  }

  double spline_eval(double m, bool derivative) const {
    const std::size_t n = table_.size();
    const double h = 1.0 / static_cast<double>(n - 1);
    double mm = std::clamp(m, 0.0, 1.0);
    std::size_t i = std::min(static_cast<std::size_t>(mm / h), n - 2);
    double x0 = static_cast<double>(i) * h;
    double t = mm - x0;
    double y0 = table_[i], y1 = table_[i + 1];
    double m0 = spline_m2_[i], m1 = spline_m2_[i + 1];
    if (!derivative) {
      double A = (h - t) / h, B = t / h;
      return A * y0 + B * y1 +
             ((A * A * A - A) * m0 + (B * B * B - B) * m1) * h * h / 6.0;
    }
    double A = (h - t) / h, B = t / h;
    return (y1 - y0) / h - (3.0 * A * A - 1.0) * h * m0 / 6.0 +
           (3.0 * B * B - 1.0) * h * m1 / 6.0;
  }

  Kind kind_ = Kind::IidBernoulli;
  double a_ = 0.5;  // p for IidBernoulli, a for CurieWeiss
  double b_ = 0.0;
  std::vector<double> table_;
  std::vector<double> spline_m2_;
  double m_a_ = 0.5;
  bool ambiguous_ = false;
};

struct SupportPattern {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }
  std::size_t count() const {
    std::size_t c = 0;
    for (auto b : bits) c += b;
    return c;
  }
  double magnetization() const {
    return bits.empty() ? 0.0
                        : static_cast<double>(count()) /
                              static_cast<double>(bits.size());
  }
};

// Two-stage draw from the exchangeable prior: support count c with
// probability ~ C(n,c) exp(n f(c/n)), then a uniform subset of size c.
inline SupportPattern sample_support(const SparsityPrior& prior, std::size_t n,
                                     Philox& rng) {
  if (n == 0) throw std::domain_error("sample_support: n must be >= 1");
  std::vector<double> logw(n + 1);
  double lgn = std::lgamma(static_cast<double>(n) + 1.0);
  double maxw = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c <= n; ++c) {
    double logbinom = lgn - std::lgamma(static_cast<double>(c) + 1.0) -
                      std::lgamma(static_cast<double>(n - c) + 1.0);
    logw[c] = logbinom + static_cast<double>(n) *
                             prior.f(static_cast<double>(c) / n);
    maxw = std::max(maxw, logw[c]);
  }
  double total = 0.0;
  for (auto& w : logw) {
    w = std::exp(w - maxw);
    total += w;
  }
  double u = rng.uniform() * total;
  std::size_t count = n;
  double acc = 0.0;
  for (std::size_t c = 0; c <= n; ++c) {
    acc += logw[c];
    if (u < acc) {
      count = c;
      break;
    }
  }
  // partial Fisher-Yates for a uniform subset of the chosen size
  std::vector<std::uint32_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
  SupportPattern pat;
  pat.bits.assign(n, 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
    pat.bits[idx[i]] = 1;
  }
  return pat;
}

// Exact count distribution mean, used by sampling tests.
inline double support_count_mean(const SparsityPrior& prior, std::size_t n) {
  double lgn = std::lgamma(static_cast<double>(n) + 1.0);
  double maxw = -std::numeric_limits<double>::infinity();
  std::vector<double> logw(n + 1);
  for (std::size_t c = 0; c <= n; ++c) {
    logw[c] = lgn - std::lgamma(static_cast<double>(c) + 1.0) -
              std::lgamma(static_cast<double>(n - c) + 1.0) +
              static_cast<double>(n) * prior.f(static_cast<double>(c) / n);
    maxw = std::max(maxw, logw[c]);
  }
  double z = 0.0, mean = 0.0;
  for (std::size_t c = 0; c <= n; ++c) {
    double w = std::exp(logw[c] - maxw);
    z += w;
    mean += w * static_cast<double>(c);
  }
  return mean / z;
}

}  // namespace csmmse
