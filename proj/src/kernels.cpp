// SPDX-License-Identifier: Apache-2.0
#include "bhm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bhm/error.hpp"

namespace bhm::kernels {

namespace {

void check_xy(std::span<const double> x, std::span<const double> y, const char* who) {
  if (x.size() != y.size())
    raise(errc::argument, std::string(who) + ": length mismatch");
}

double trapz(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    acc += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
  return acc;
}

void check_time_axis(std::span<const double> t, const char* who) {
  if (t.size() < 2) raise(errc::argument, std::string(who) + ": needs at least 2 samples");
  for (std::size_t i = 0; i + 1 < t.size(); ++i)
    if (!(t[i] < t[i + 1]))
      raise(errc::argument, std::string(who) + ": time axis not strictly increasing");
}

} // namespace

double integrate_area(std::span<const double> t, std::span<const double> x) {
  check_xy(t, x, "integrate_area");
  check_time_axis(t, "integrate_area");
  return trapz(t, x);
}

double integrate_energy(std::span<const double> t, std::span<const double> x) {
  check_xy(t, x, "integrate_energy");
  check_time_axis(t, "integrate_energy");
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i)
    acc += 0.5 * (x[i] * x[i] + x[i + 1] * x[i + 1]) * (t[i + 1] - t[i]);
  return acc;
}

double line_slope(std::span<const double> x, std::span<const double> y) {
  check_xy(x, y, "line_slope");
  const std::size_t n = x.size();
  if (n < 2) raise(errc::insufficient, "line_slope: needs at least 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) raise(errc::degenerate, "line_slope: x has zero variance");
  return sxy / sxx;
}

std::vector<double> smooth(std::span<const double> y, std::size_t window) {
  if (window == 0 || window % 2 == 0)
    raise(errc::argument, "smooth: window must be odd and positive");
  if (window > y.size())
    raise(errc::argument, "smooth: window larger than signal");
  if (window == 1) return std::vector<double>(y.begin(), y.end());
  const std::size_t n = y.size();
  const std::size_t half = window / 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    double acc = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) acc += y[k];
    out[i] = acc / static_cast<double>(hi - lo + 1);
  }
  return out;
}

Moments moments(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) raise(errc::insufficient, "moments: needs at least 2 samples");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  const double sd = std::sqrt(m2);
  if (sd == 0.0)
    raise(errc::degenerate, "moments: zero standard deviation, skewness/kurtosis undefined");
  Moments out;
  out.mean = mean;
  out.sd = sd;
  out.skewness = m3 / (sd * sd * sd);
  out.kurtosis = m4 / (m2 * m2);
  return out;
}

double sample_entropy(std::span<const double> x, std::size_t m, double r) {
  if (m < 1) raise(errc::argument, "sample_entropy: m must be >= 1");
  if (!(r > 0.0)) raise(errc::argument, "sample_entropy: r must be > 0");
  const std::size_t n = x.size();
  if (n < m + 2) raise(errc::insufficient, "sample_entropy: needs at least m + 2 samples");
  const std::size_t count = n - m;  // template vectors considered at both lengths
  std::uint64_t a = 0, b = 0;
  for (std::size_t i = 0; i + 1 < count; ++i) {
    for (std::size_t j = i + 1; j < count; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < m; ++k)
        d = std::max(d, std::abs(x[i + k] - x[j + k]));
      if (d <= r) {
        ++a;
        if (std::max(d, std::abs(x[i + m] - x[j + m])) <= r) ++b;
      }
    }
  }
  if (a == 0 || b == 0)
    raise(errc::undefined_entropy,
          "sample_entropy: no matching pairs at order " + std::to_string(a == 0 ? m : m + 1));
  return -std::log(static_cast<double>(b) / static_cast<double>(a));
}

ClippedSegment clip_to_interval(std::span<const double> axis,
                                const std::vector<std::span<const double>>& companions,
                                double lower, double upper) {
  if (!(lower < upper)) raise(errc::argument, "clip_to_interval: lower must be < upper");
  for (const auto& c : companions) check_xy(axis, c, "clip_to_interval");
  const std::size_t n = axis.size();
  auto inside = [&](double v) { return v >= lower && v <= upper; };

  // Longest run of in-band samples, earliest on ties.
  std::size_t best_a = 0, best_b = 0;
  bool found = false;
  for (std::size_t i = 0; i < n;) {
    if (!inside(axis[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && inside(axis[j + 1])) ++j;
    if (!found || (j - i) > (best_b - best_a)) {
      best_a = i;
      best_b = j;
      found = true;
    }
    i = j + 1;
  }
  ClippedSegment out;
  out.companions.resize(companions.size());
  if (!found) return out;

  auto emit_interp = [&](std::size_t k0, std::size_t k1, double edge) {
    const double x0 = axis[k0], x1 = axis[k1];
    const double t = (edge - x0) / (x1 - x0);
    out.axis.push_back(edge);
    for (std::size_t c = 0; c < companions.size(); ++c)
      out.companions[c].push_back(companions[c][k0] + t * (companions[c][k1] - companions[c][k0]));
  };
  auto emit_sample = [&](std::size_t k) {
    out.axis.push_back(axis[k]);
    for (std::size_t c = 0; c < companions.size(); ++c)
      out.companions[c].push_back(companions[c][k]);
  };

  if (best_a > 0) {
    const double prev = axis[best_a - 1];
    const double edge = prev < lower ? lower : upper;
    if (axis[best_a] != edge) emit_interp(best_a - 1, best_a, edge);
  }
  for (std::size_t k = best_a; k <= best_b; ++k) emit_sample(k);
  if (best_b + 1 < n) {
    const double next = axis[best_b + 1];
    const double edge = next < lower ? lower : upper;
    if (axis[best_b] != edge) emit_interp(best_b, best_b + 1, edge);
  }
  return out;
}

DifferentialCurve differential_curve(std::span<const double> primary,
                                     std::span<const double> secondary,
                                     CurveKind kind,
                                     double bin_width,
                                     std::size_t smooth_window) {
  check_xy(primary, secondary, "differential_curve");
  if (!(bin_width > 0.0)) raise(errc::argument, "differential_curve: bin_width must be > 0");
  if (primary.size() < 2)
    raise(errc::argument, "differential_curve: needs at least 2 samples");

  // Monotonize: sort by primary, average exact duplicates.
  std::map<double, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < primary.size(); ++i) {
    auto& slot = acc[primary[i]];
    slot.first += secondary[i];
    slot.second += 1;
  }
  std::vector<double> p, s;
  p.reserve(acc.size());
  s.reserve(acc.size());
  for (const auto& [key, val] : acc) {
    p.push_back(key);
    s.push_back(val.first / static_cast<double>(val.second));
  }
  if (p.size() < 2)
    raise(errc::argument, "differential_curve: primary axis collapses to a point");

  const double span = p.back() - p.front();
  if (span < 2.0 * bin_width)
    raise(errc::argument, "differential_curve: primary span shorter than two bins");
  auto nbins = static_cast<std::size_t>(std::llround(span / bin_width));
  if (nbins < 2) nbins = 2;
  const double w = span / static_cast<double>(nbins);

  // Secondary interpolated at the bin edges.
  std::vector<double> edge_s(nbins + 1);
  std::size_t seg = 0;
  for (std::size_t k = 0; k <= nbins; ++k) {
    const double e = (k == nbins) ? p.back() : p.front() + w * static_cast<double>(k);
    while (seg + 2 < p.size() && p[seg + 1] <= e) ++seg;
    const double t = (e - p[seg]) / (p[seg + 1] - p[seg]);
    edge_s[k] = s[seg] + t * (s[seg + 1] - s[seg]);
  }

  DifferentialCurve curve;
  curve.kind = kind;
  curve.bin_width = w;
  curve.abscissa.resize(nbins);
  curve.ordinate.resize(nbins);
  for (std::size_t k = 0; k < nbins; ++k) {
    const double e0 = p.front() + w * static_cast<double>(k);
    curve.abscissa[k] = e0 + 0.5 * w;
    curve.ordinate[k] = (edge_s[k + 1] - edge_s[k]) / w;
  }
  if (smooth_window > 1) curve.ordinate = smooth(curve.ordinate, smooth_window);
  return curve;
}

PeakFeatures peak_features(const DifferentialCurve& curve,
                           double lower, double upper,
                           PeakMode mode) {
  if (!(lower < upper)) raise(errc::argument, "peak_features: lower must be < upper");
  auto clipped = clip_to_interval(curve.abscissa, {curve.ordinate}, lower, upper);
  if (clipped.empty())
    raise(errc::coverage, "peak_features: window misses the curve");
  const auto& ax = clipped.axis;
  const auto& ord = clipped.companions[0];

  std::size_t ext = 0;
  for (std::size_t i = 1; i < ord.size(); ++i) {
    const bool better = mode == PeakMode::peak ? ord[i] > ord[ext] : ord[i] < ord[ext];
    if (better) ext = i;
  }

  PeakFeatures out;
  out.extreme_value = ord[ext];
  out.extreme_location = ax[ext];
  out.area = ax.size() >= 2 ? trapz(ax, ord) : 0.0;

  // Approach flank: window lower edge up to the extreme.
  std::vector<double> fx(ax.begin(), ax.begin() + static_cast<std::ptrdiff_t>(ext) + 1);
  std::vector<double> fy(ord.begin(), ord.begin() + static_cast<std::ptrdiff_t>(ext) + 1);
  bool distinct = false;
  for (std::size_t i = 1; i < fx.size(); ++i)
    if (fx[i] != fx[0]) distinct = true;
  out.slope = (fx.size() >= 2 && distinct) ? line_slope(fx, fy) : 0.0;
  return out;
}

} // namespace bhm::kernels
