#pragma once

#include <cmath>
#include <cstdio>
#include <limits>

#include "bmaptk/core.hpp"

namespace bmaptk::metrics {

// Overlap of thresholded masks; both-empty counts as perfect agreement.
inline double dice(const std::vector<double>& pred, const std::vector<double>& gt,
                   double threshold = 0.5) {
    if (pred.size() != gt.size()) throw invalid_argument_error("dice: size mismatch");
    size_t a = 0, b = 0, both = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        bool pa = pred[i] > threshold, pb = gt[i] > threshold;
        a += pa;
        b += pb;
        both += pa && pb;
    }
    if (a + b == 0) return 1.0;
    return 2.0 * double(both) / double(a + b);
}

// 10 log10(peak^2 / MSE); +inf when the inputs agree exactly.
inline double psnr(const std::vector<double>& pred, const std::vector<double>& gt,
                   double peak = 1.0) {
    if (pred.size() != gt.size()) throw invalid_argument_error("psnr: size mismatch");
    double mse = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - gt[i];
        mse += d * d;
    }
    mse /= double(pred.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

// Mean local SSIM with a 7x7 Gaussian window (sigma 1.5), k1=0.01 k2=0.03,
// dynamic range 1. Averaged over window centers fully inside the image.
inline double ssim(const grid<double>& pred, const grid<double>& gt) {
    constexpr int half = 3;
    constexpr double sigma = 1.5, k1 = 0.01, k2 = 0.03, L = 1.0;
    const double c1 = (k1 * L) * (k1 * L), c2 = (k2 * L) * (k2 * L);
    if (pred.nx != gt.nx || pred.ny != gt.ny) throw invalid_argument_error("ssim: size mismatch");
    if (pred.nx < 2 * half + 1 || pred.ny < 2 * half + 1)
        throw invalid_argument_error("ssim: image smaller than the 7x7 window");

    double w[2 * half + 1][2 * half + 1], wsum = 0;
    for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
            w[dy + half][dx + half] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            wsum += w[dy + half][dx + half];
        }
    for (auto& row : w)
        for (auto& x : row) x /= wsum;

    double total = 0;
    size_t count = 0;
    for (int y = half; y < pred.ny - half; ++y)
        for (int x = half; x < pred.nx - half; ++x) {
            double m1 = 0, m2 = 0, s1 = 0, s2 = 0, s12 = 0;
            for (int dy = -half; dy <= half; ++dy)
                for (int dx = -half; dx <= half; ++dx) {
                    double wij = w[dy + half][dx + half];
                    double p = pred(y + dy, x + dx), g = gt(y + dy, x + dx);
                    m1 += wij * p;
                    m2 += wij * g;
                    s1 += wij * p * p;
                    s2 += wij * g * g;
                    s12 += wij * p * g;
                }
            s1 -= m1 * m1;
            s2 -= m2 * m2;
            s12 -= m1 * m2;
            total += ((2 * m1 * m2 + c1) * (2 * s12 + c2)) /
                     ((m1 * m1 + m2 * m2 + c1) * (s1 + s2 + c2));
            ++count;
        }
    return total / double(count);
}

inline double ssim(const std::vector<double>& pred, const std::vector<double>& gt, int nx,
                   int ny) {
    grid<double> a(nx, ny), b(nx, ny);
    a.v = pred;
    b.v = gt;
    return ssim(a, b);
}

struct MetricRow {
    std::string tissue; // csf|gm|wm
    double dice = 0, psnr = 0, ssim = 0;
};

struct AggregateCell {
    double mean = 0, std = 0; // population std

    std::string format() const {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.2f±%.2f", mean, std);
        return buf;
    }
};

// mean +/- population std of one metric across subjects.
inline AggregateCell aggregate(const std::vector<double>& values) {
    if (values.empty()) throw invalid_argument_error("aggregate: need at least one subject");
    double m = 0;
    for (double v : values) m += v;
    m /= double(values.size());
    double var = 0;
    for (double v : values) var += (v - m) * (v - m);
    var /= double(values.size());
    return {m, std::sqrt(var)};
}

} // namespace bmaptk::metrics
