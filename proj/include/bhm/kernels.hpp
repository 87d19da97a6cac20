// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bhm/types.hpp"

namespace bhm::kernels {

// ---- basic numeric building blocks ---------------------------------------

// Trapezoidal integral of x(t) dt over the samples. Needs >= 2 samples and
// strictly increasing t (errc::argument otherwise).
double integrate_area(std::span<const double> t, std::span<const double> x);

// Same, of x(t)^2 dt; the square is applied per sample before the trapezoid.
double integrate_energy(std::span<const double> t, std::span<const double> x);

// Ordinary least-squares slope of y against x. errc::insufficient for n < 2,
// errc::degenerate when x has zero variance.
double line_slope(std::span<const double> x, std::span<const double> y);

// Centered moving average with odd window w <= length: element i averages
// the samples in [i - w/2, i + w/2] clamped to the array, so the edges use
// shrunken windows instead of padding. w == 1 is the identity.
std::vector<double> smooth(std::span<const double> y, std::size_t window);

struct Moments {
  double mean = 0.0;
  double sd = 0.0;        // population (divide by n)
  double skewness = 0.0;  // m3 / sd^3
  double kurtosis = 0.0;  // m4 / sd^4, no excess subtraction
};

// Population moments, n >= 2. Zero sd raises errc::degenerate because the
// standardized moments stop being defined; callers that only want mean/sd
// of a constant signal should not come through here.
Moments moments(std::span<const double> x);

// Sample entropy with Chebyshev (max-norm) distance, template length m >= 1,
// tolerance r > 0 in raw signal units. Matches are counted over unordered
// pairs i < j drawn from the first n - m template vectors at both lengths m
// and m + 1, normalized by the shared denominator (n-m)(n-m-1), closeness
// inclusive (<= r); SE = -ln(count_{m+1} / count_m). Requires n >= m + 2
// (errc::insufficient); zero matches at either length raise
// errc::undefined_entropy.
double sample_entropy(std::span<const double> x, std::size_t m, double r);

// ---- interval clipping ----------------------------------------------------

// Result of clipping a traversal to an axis band: the clip axis plus any
// companion channels sampled on the same support, in traversal order, with
// linearly interpolated virtual points exactly at the band edges where the
// axis crossed them. empty() means the band was never entered — a value,
// not an error.
struct ClippedSegment {
  std::vector<double> axis;
  std::vector<std::vector<double>> companions;

  bool empty() const noexcept { return axis.empty(); }
  std::size_t size() const noexcept { return axis.size(); }
};

// Clip to lower <= axis <= upper. The axis may traverse the band in either
// direction; when several disjoint in-band runs exist the one with the most
// samples wins (first on ties), keeping the result contiguous. Every
// companion span must match the axis length.
ClippedSegment clip_to_interval(std::span<const double> axis,
                                const std::vector<std::span<const double>>& companions,
                                double lower, double upper);

// ---- differential curves ---------------------------------------------------

enum class CurveKind : std::uint8_t { ic, dv, dt };

// d(secondary)/d(primary) on a uniform grid over the primary's span.
// The primary axis is cut into round(span / bin_width) bins (minimum 2,
// effective width = span / nbins), the secondary is linearly interpolated
// at every bin edge, and each bin's ordinate is the secondary increment
// over the effective width. With smooth_window == 1 the construction
// telescopes: sum(ordinate) * bin_width == secondary(end) - secondary(start)
// up to rounding. Duplicate primary values are averaged and pairs sorted by
// primary before binning; the ordinate is then mean-smoothed.
struct DifferentialCurve {
  CurveKind kind = CurveKind::ic;
  std::vector<double> abscissa;  // bin centers, strictly increasing
  std::vector<double> ordinate;
  double bin_width = 0.0;        // effective
};

// errc::argument when the primary span is shorter than two bins.
DifferentialCurve differential_curve(std::span<const double> primary,
                                     std::span<const double> secondary,
                                     CurveKind kind,
                                     double bin_width,
                                     std::size_t smooth_window);

enum class PeakMode : std::uint8_t { peak, valley };

struct PeakFeatures {
  double extreme_value = 0.0;     // ordinate at the extreme
  double extreme_location = 0.0;  // abscissa of the extreme
  double area = 0.0;              // trapezoidal area of ordinate over the window
  double slope = 0.0;             // OLS slope of the approach flank
};

// Extreme of the ordinate within [lower, upper] on the abscissa (first
// occurrence wins ties), the window-clipped trapezoidal area, and the OLS
// slope of ordinate vs abscissa from the window's lower edge to the extreme
// location. A flank with fewer than two distinct abscissa points has slope
// 0 by convention (a constant curve reports zero slope, not an error).
// errc::coverage when the window misses the curve entirely.
PeakFeatures peak_features(const DifferentialCurve& curve,
                           double lower, double upper,
                           PeakMode mode);

} // namespace bhm::kernels
