// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#include "exdn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace exdn {

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("psnr: image shapes differ");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double psnr_masked(const ImageBuffer& a, const ImageBuffer& b, const ImageBuffer& region) {
  if (!a.same_shape(b)) throw ShapeMismatch("psnr_masked: image shapes differ");
  if (region.width != a.width || region.height != a.height)
    throw ShapeMismatch("psnr_masked: region shape differs");
  double mse = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (region.at(x, y) <= 0.5f) continue;
      for (int c = 0; c < a.channels; ++c) {
        const double d = static_cast<double>(a.at(x, y, c)) - b.at(x, y, c);
        mse += d * d;
      }
      count += a.channels;
    }
  if (count == 0 || mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(count) / mse);
}

namespace {

constexpr int kSsimRadius = 5;  // 11x11 window
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> ssim_kernel() {
  std::vector<double> k(2 * kSsimRadius + 1);
  double sum = 0.0;
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
    k[i + kSsimRadius] = std::exp(-0.5 * i * i / (kSsimSigma * kSsimSigma));
    sum += k[i + kSsimRadius];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable Gaussian filter over the valid interior (no padding), matching
// the usual valid-window SSIM mean.
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h,
                                 const std::vector<double>& kernel) {
  const int r = kSsimRadius;
  const int ow = w - 2 * r, oh = h - 2 * r;
  std::vector<double> mid(static_cast<std::size_t>(ow) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < 2 * r + 1; ++i) acc += kernel[i] * img[y * w + x + i];
      mid[y * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < 2 * r + 1; ++i) acc += kernel[i] * mid[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("ssim: image shapes differ");
  if (a.width < 2 * kSsimRadius + 1 || a.height < 2 * kSsimRadius + 1)
    throw TooSmall("ssim: images smaller than the 11x11 window");

  const std::vector<double> kernel = ssim_kernel();
  const int w = a.width, h = a.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;

  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> xa(n), xb(n), xaa(n), xbb(n), xab(n);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double va = a.at(x, y, c), vb = b.at(x, y, c);
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        xa[i] = va;
        xb[i] = vb;
        xaa[i] = va * va;
        xbb[i] = vb * vb;
        xab[i] = va * vb;
      }
    const auto mu_a = filter_valid(xa, w, h, kernel);
    const auto mu_b = filter_valid(xb, w, h, kernel);
    const auto m_aa = filter_valid(xaa, w, h, kernel);
    const auto m_bb = filter_valid(xbb, w, h, kernel);
    const auto m_ab = filter_valid(xab, w, h, kernel);

    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = m_aa[i] - mu_a[i] * mu_a[i];
      const double vb = m_bb[i] - mu_b[i] * mu_b[i];
      const double cov = m_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
      acc += num / den;
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / a.channels;
}

namespace {

struct Vec3f {
  float r, g, b;
};

Vec3f ramp(double t) {
  static const double stops[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
  static const float colors[5][3] = {
      {0.0f, 0.0f, 0.25f}, {0.0f, 0.0f, 1.0f}, {0.0f, 1.0f, 1.0f},
      {1.0f, 1.0f, 0.0f}, {1.0f, 0.0f, 0.0f}};
  t = std::clamp(t, 0.0, 1.0);
  int k = 0;
  while (k < 3 && t > stops[k + 1]) ++k;
  const double u = (t - stops[k]) / (stops[k + 1] - stops[k]);
  return {static_cast<float>(colors[k][0] + u * (colors[k + 1][0] - colors[k][0])),
          static_cast<float>(colors[k][1] + u * (colors[k + 1][1] - colors[k][1])),
          static_cast<float>(colors[k][2] + u * (colors[k + 1][2] - colors[k][2]))};
}

}  // namespace

ImageBuffer error_heatmap(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("error_heatmap: image shapes differ");
  std::vector<double> err(static_cast<std::size_t>(a.width) * a.height, 0.0);
  double max_err = 0.0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      double e = 0.0;
      for (int c = 0; c < a.channels; ++c) {
        const double d = static_cast<double>(a.at(x, y, c)) - b.at(x, y, c);
        e += d * d;
      }
      err[static_cast<std::size_t>(y) * a.width + x] = e;
      max_err = std::max(max_err, e);
    }
  ImageBuffer out(a.width, a.height, 3);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      const double e = err[static_cast<std::size_t>(y) * a.width + x];
      const Vec3f c = ramp(max_err > 0.0 ? e / max_err : 0.0);
      out.at(x, y, 0) = c.r;
      out.at(x, y, 1) = c.g;
      out.at(x, y, 2) = c.b;
    }
  return out;
}

void MetricReport::finalize() {
  mean_psnr = 0.0;
  mean_ssim = 0.0;
  if (views.empty()) return;
  for (const ViewMetric& v : views) {
    mean_psnr += v.psnr;
    mean_ssim += v.ssim;
  }
  mean_psnr /= static_cast<double>(views.size());
  mean_ssim /= static_cast<double>(views.size());
}

void print_table(const MetricReport& report, std::ostream& os) {
  os << "view            psnr(dB)    ssim\n";
  for (const ViewMetric& v : report.views) {
    os << std::left << std::setw(14) << v.view_id << "  " << std::right << std::setw(8)
       << std::fixed << std::setprecision(3) << v.psnr << "  " << std::setw(7)
       << std::setprecision(4) << v.ssim << "\n";
  }
  os << std::left << std::setw(14) << "mean" << "  " << std::right << std::setw(8)
     << std::setprecision(3) << report.mean_psnr << "  " << std::setw(7) << std::setprecision(4)
     << report.mean_ssim;
  if (!report.tag.empty()) os << "  [" << report.tag << "]";
  os << "\n";
}

void write_csv(const MetricReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_csv: cannot open " + path);
  out << "tag,view,psnr,ssim\n";
  out << std::setprecision(17);
  for (const ViewMetric& v : report.views)
    out << report.tag << "," << v.view_id << "," << v.psnr << "," << v.ssim << "\n";
  out << report.tag << ",mean," << report.mean_psnr << "," << report.mean_ssim << "\n";
  if (!out) throw IoError("write_csv: write failed " + path);
}

}  // namespace exdn
