// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lhbvc/eval.hpp"

namespace lhbvc {

double psnr(const Tensor& a, const Tensor& b, double peak) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("psnr: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                                " differ");
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
  const auto va = a.values(), vb = b.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = va[i] - vb[i];
    sum += d * d;
  }
  if (va.empty() || sum == 0.0) return kPsnrCap;
  const double mse = sum / static_cast<double>(va.size());
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double psnr(std::span<const Tensor> a, std::span<const Tensor> b, double peak) {
  if (a.size() != b.size())
    throw std::invalid_argument("psnr: " + std::to_string(a.size()) + " frames against " + std::to_string(b.size()));
  if (a.empty()) throw std::invalid_argument("psnr: empty sequences");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += psnr(a[i], b[i], peak);
  return sum / static_cast<double>(a.size());
}

void RdCurve::normalize() {
  for (const RdPoint& p : points) {
    if (!std::isfinite(p.rate) || !std::isfinite(p.psnr))
      throw std::invalid_argument("curve " + label + ": non-finite point");
    if (p.rate <= 0.0) throw std::invalid_argument("curve " + label + ": rate must be positive");
  }
  std::sort(points.begin(), points.end(), [](const RdPoint& a, const RdPoint& b) { return a.rate < b.rate; });
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i].rate == points[i - 1].rate) throw std::invalid_argument("curve " + label + ": repeated rate");
}

// --- interpolation -----------------------------------------------------------

namespace {

// One-sided slope at an end knot, kept shape-preserving.
double end_slope(double h0, double h1, double m0, double m1) {
  double d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
  if (std::signbit(d) != std::signbit(m0) || d == 0.0) return 0.0;
  if (std::signbit(m0) != std::signbit(m1) && std::abs(d) > 3.0 * std::abs(m0)) d = 3.0 * m0;
  return d;
}

}  // namespace

Pchip::Pchip(std::vector<double> x, std::vector<double> y, bool linear)
    : x_(std::move(x)), y_(std::move(y)), linear_(linear) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw std::invalid_argument("Pchip: need at least 2 knots with matching values");
  for (std::size_t i = 1; i < n; ++i)
    if (!(x_[i] > x_[i - 1])) throw std::invalid_argument("Pchip: knots must be strictly increasing");
  std::vector<double> h(n - 1), m(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    m[i] = (y_[i + 1] - y_[i]) / h[i];
  }
  d_.assign(n, 0.0);
  if (linear_ || n == 2) {
    d_.assign(n, m[0]);
    if (n == 2) linear_ = true;
    return;
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (m[k - 1] == 0.0 || m[k] == 0.0 || std::signbit(m[k - 1]) != std::signbit(m[k])) continue;
    const double w1 = 2.0 * h[k] + h[k - 1], w2 = h[k] + 2.0 * h[k - 1];
    d_[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
  }
  d_[0] = end_slope(h[0], h[1], m[0], m[1]);
  d_[n - 1] = end_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
}

std::size_t Pchip::segment(double x) const {
  const auto it = std::upper_bound(x_.begin() + 1, x_.end() - 1, x);
  return static_cast<std::size_t>(it - x_.begin()) - 1;
}

double Pchip::operator()(double x) const {
  const std::size_t i = segment(x);
  const double h = x_[i + 1] - x_[i], t = (x - x_[i]) / h;
  if (linear_) return y_[i] + t * (y_[i + 1] - y_[i]);
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y_[i] + (t3 - 2 * t2 + t) * h * d_[i] + (-2 * t3 + 3 * t2) * y_[i + 1] +
         (t3 - t2) * h * d_[i + 1];
}

double Pchip::segment_integral(std::size_t i, double a, double b) const {
  const double h = x_[i + 1] - x_[i];
  // Antiderivative in the local coordinate t, scaled by h.
  const auto anti = [&](double x) {
    const double t = (x - x_[i]) / h, t2 = t * t, t3 = t2 * t, t4 = t3 * t;
    if (linear_) return h * (y_[i] * t + 0.5 * (y_[i + 1] - y_[i]) * t2);
    return h * ((t4 / 2 - t3 + t) * y_[i] + (t4 / 4 - 2 * t3 / 3 + t2 / 2) * h * d_[i] + (-t4 / 2 + t3) * y_[i + 1] +
                (t4 / 4 - t3 / 3) * h * d_[i + 1]);
  };
  return anti(b) - anti(a);
}

double Pchip::integral(double a, double b) const {
  if (a > b) return -integral(b, a);
  const std::size_t first = segment(a), last = segment(b);
  if (first == last) return segment_integral(first, a, b);
  double sum = segment_integral(first, a, x_[first + 1]);
  for (std::size_t i = first + 1; i < last; ++i) sum += segment_integral(i, x_[i], x_[i + 1]);
  return sum + segment_integral(last, x_[last], b);
}

// --- Bjontegaard delta -------------------------------------------------------

namespace {

// log10(rate) over PSNR, knots sorted by PSNR.
Pchip log_rate_fit(const RdCurve& curve, bool linear) {
  std::vector<RdPoint> p = curve.points;
  for (const RdPoint& q : p)
    if (!(q.rate > 0.0) || !std::isfinite(q.rate) || !std::isfinite(q.psnr))
      throw BdRateError("curve " + curve.label + ": rates must be positive and points finite");
  std::sort(p.begin(), p.end(), [](const RdPoint& a, const RdPoint& b) { return a.psnr < b.psnr; });
  std::vector<double> x, y;
  for (const RdPoint& q : p) {
    if (!x.empty() && q.psnr == x.back()) throw BdRateError("curve " + curve.label + ": repeated PSNR");
    x.push_back(q.psnr);
    y.push_back(std::log10(q.rate));
  }
  return Pchip(std::move(x), std::move(y), linear);
}

}  // namespace

BdRate bd_rate(const RdCurve& anchor, const RdCurve& test) {
  if (anchor.points.size() < 2 || test.points.size() < 2)
    throw BdRateError("bd_rate: curves need at least 2 points");
  BdRate r;
  r.linear = anchor.points.size() < 4 || test.points.size() < 4;
  const Pchip fa = log_rate_fit(anchor, r.linear), ft = log_rate_fit(test, r.linear);
  r.psnr_low = std::max(fa.min_x(), ft.min_x());
  r.psnr_high = std::min(fa.max_x(), ft.max_x());
  if (!(r.psnr_high > r.psnr_low)) throw BdRateError("no overlap");
  r.log_rate_delta = (ft.integral(r.psnr_low, r.psnr_high) - fa.integral(r.psnr_low, r.psnr_high)) /
                     (r.psnr_high - r.psnr_low);
  r.percent = (std::pow(10.0, r.log_rate_delta) - 1.0) * 100.0;
  return r;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length samples of at least 2 values");
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size()), mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// --- curve files -------------------------------------------------------------

void write_curve_csv(const std::filesystem::path& path, const RdCurve& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "rate,psnr\n";
  for (const RdPoint& p : curve.points) out << p.rate << ',' << p.psnr << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

RdCurve read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error(path.string() + ": no '" + name + "' column");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t rc = column(header.end() != std::find(header.begin(), header.end(), "bpp") ? "bpp" : "rate");
  const std::size_t pc = column("psnr");
  RdCurve curve;
  curve.label = path.stem().string();
  for (int row = 2; std::getline(in, line); ++row) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() <= std::max(rc, pc))
      throw std::runtime_error(path.string() + ":" + std::to_string(row) + ": missing columns");
    try {
      curve.points.push_back({std::stod(cells[rc]), std::stod(cells[pc])});
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(row) + ": not a number");
    }
  }
  return curve;
}

}  // namespace lhbvc
