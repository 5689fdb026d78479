#pragma once

// Independent reference implementations used as test oracles. None of these
// call into the library.

#include "tactile/types.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace oracle {

using Rng = std::mt19937_64;

inline double relative_error(double a, double b, double floor = 1e-300) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / scale;
}

inline double gauss(Rng& rng, double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng); }
inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

/// Smooth random-walk snippet with noise, L x 3.
inline Eigen::MatrixX3d random_snippet(Rng& rng, Eigen::Index len = 300, double scale = 5.0) {
  Eigen::MatrixX3d s(len, 3);
  for (Eigen::Index c = 0; c < 3; ++c) {
    double level = gauss(rng, scale), drift = gauss(rng, 0.05);
    const double freq = uniform(rng, 1.0, 40.0), amp = uniform(rng, 0.0, scale);
    for (Eigen::Index k = 0; k < len; ++k) {
      level += drift + gauss(rng, 0.05 * scale);
      s(k, c) = level + amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(k) / 500.0) +
                gauss(rng, 0.1);
    }
  }
  return s;
}

/// Gaussian elimination with partial pivoting in extended precision.
inline std::vector<long double> solve(std::vector<std::vector<long double>> a, std::vector<long double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    if (a[piv][col] == 0.0L) throw std::runtime_error("singular system");
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const long double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<long double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    long double acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
    x[i] = acc / a[i][i];
  }
  return x;
}

/// Least-squares polynomial y ~ sum_j c_j x^j by the normal equations.
/// The abscissa is shifted by `center` before forming the system; the result
/// is expanded back to powers of the unshifted x. Returns c_0 .. c_degree.
inline std::vector<double> polyfit(const std::vector<double>& x, const std::vector<double>& y, std::size_t degree) {
  long double center = 0.0L;
  for (double v : x) center += v;
  center /= static_cast<long double>(x.size());
  const std::size_t m = degree + 1;
  std::vector<std::vector<long double>> ata(m, std::vector<long double>(m, 0.0L));
  std::vector<long double> aty(m, 0.0L);
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<long double> p(m);
    p[0] = 1.0L;
    for (std::size_t j = 1; j < m; ++j) p[j] = p[j - 1] * (static_cast<long double>(x[i]) - center);
    for (std::size_t r = 0; r < m; ++r) {
      aty[r] += p[r] * static_cast<long double>(y[i]);
      for (std::size_t c = 0; c < m; ++c) ata[r][c] += p[r] * p[c];
    }
  }
  const std::vector<long double> t = solve(ata, aty);
  // (x - c)^j = sum_i binom(j, i) x^i (-c)^(j - i)
  std::vector<long double> out(m, 0.0L);
  for (std::size_t j = 0; j < m; ++j) {
    long double binom = 1.0L;
    for (std::size_t i = 0; i <= j; ++i) {
      if (i > 0) binom = binom * static_cast<long double>(j - i + 1) / static_cast<long double>(i);
      out[i] += t[j] * binom * std::pow(-center, static_cast<long double>(j - i));
    }
  }
  return {out.begin(), out.end()};
}

inline std::vector<double> index_axis(std::size_t n, double first = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = first + static_cast<double>(i);
  return x;
}

inline std::vector<double> column(const Eigen::MatrixX3d& m, Eigen::Index c) {
  return {m.col(c).data(), m.col(c).data() + m.rows()};
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, sorted descending.
inline std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a) {
  const Eigen::Index n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

/// |X_b| of the direct DFT for b = 0 .. n/2.
inline std::vector<double> dft_magnitudes(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t b = 0; b <= n / 2; ++b) {
    std::complex<long double> acc = 0.0L;
    for (std::size_t k = 0; k < n; ++k) {
      const long double ang = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>(b * k) /
                              static_cast<long double>(n);
      acc += static_cast<long double>(frame[k]) * std::complex<long double>(std::cos(ang), std::sin(ang));
    }
    out[b] = static_cast<double>(std::abs(acc));
  }
  return out;
}

/// Hann-windowed, mean-removed one-sided STFT magnitudes of one channel:
/// result[slice][bin].
inline std::vector<std::vector<double>> stft(const std::vector<double>& x, std::size_t window, std::size_t hop) {
  long double mean = 0.0L;
  for (double v : x) mean += v;
  mean /= static_cast<long double>(x.size());
  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start + window <= x.size(); start += hop) {
    std::vector<double> frame(window);
    for (std::size_t k = 0; k < window; ++k) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(window));
      frame[k] = static_cast<double>(static_cast<long double>(x[start + k]) - mean) * w;
    }
    out.push_back(dft_magnitudes(frame));
  }
  return out;
}

/// Longest run of consecutive |v| > threshold.
inline std::size_t longest_run(const std::vector<double>& v, double threshold) {
  std::size_t best = 0, run = 0;
  for (double x : v) {
    run = std::abs(x) > threshold ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

/// Direct evaluation of the normalized correlation error.
inline double xi(const std::vector<double>& x, const std::vector<double>& w) {
  long double xw = 0, ww = 0, xx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xw += static_cast<long double>(x[i]) * w[i];
    ww += static_cast<long double>(w[i]) * w[i];
    xx += static_cast<long double>(x[i]) * x[i];
  }
  if (xx == 0) return 1.0;
  const long double a = std::fabs(xw / ww);
  long double e = 0;
  for (std::size_t i = 0; i < x.size(); ++i) e += (x[i] - a * w[i]) * (x[i] - a * w[i]);
  return static_cast<double>(e / xx);
}

/// Recording with the given per-sample states and deterministic noise forces.
inline tactile::Recording make_recording(const std::vector<tactile::GestureState>& labels, const std::string& id,
                                         std::uint64_t seed = 1) {
  Rng rng(seed);
  tactile::Recording r;
  r.id = id;
  r.forces.resize(static_cast<Eigen::Index>(labels.size()), 3);
  for (Eigen::Index k = 0; k < r.forces.rows(); ++k)
    for (Eigen::Index c = 0; c < 3; ++c) r.forces(k, c) = gauss(rng, 0.05) + static_cast<double>(labels[static_cast<std::size_t>(k)] != tactile::GestureState::NoContact) * 4.0;
  r.labels = labels;
  return r;
}

}  // namespace oracle
