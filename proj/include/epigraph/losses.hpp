// Image similarity losses and the weighted training total: windowed NCC,
// Laplacian pyramid L1, L1 + SSIM + volume regularization. Multi-channel
// images are handled per channel and averaged. Evaluation only; no gradients.

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "epigraph/error.hpp"
#include "epigraph/image.hpp"

namespace epigraph {

struct LossWeights {
    double lambda_ssim = 0.2;
    double lambda_vol = 0.001;
    double lambda_laplacian = 1.0;
    double lambda_ncc = 0.01;

    void validate() const {
        if (lambda_ssim < 0.0 || lambda_vol < 0.0 || lambda_laplacian < 0.0 || lambda_ncc < 0.0) {
            throw Error(ErrorCode::invalid_config, "loss weights must be non-negative");
        }
    }
};

struct LossReport {
    double l1 = 0.0;
    double ssim_loss = 0.0;  // 1 - SSIM
    double vol = 0.0;
    double pixel = 0.0;
    double ncc = 0.0;
    double laplacian = 0.0;
    double total = 0.0;
};

// 1 - mean windowed normalized cross-correlation over all valid window
// placements (no padding). Denominator stabilized by eps added to sigma1*sigma2.
inline double ncc_loss(const Image& i1, const Image& i2, int window = 11) {
    i1.validate();
    i2.validate();
    require_same_shape(i1, i2);
    if (window < 1 || window % 2 == 0 || window > std::min(i1.height, i1.width)) {
        throw Error(ErrorCode::contract_violation,
                    "NCC window must be odd and fit the image, got " + std::to_string(window));
    }

    constexpr double eps = 1e-8;
    const double inv_count = 1.0 / static_cast<double>(window * window);
    double ncc_sum = 0.0;
    std::size_t windows = 0;

    for (int c = 0; c < i1.channels; ++c) {
        for (int y = 0; y + window <= i1.height; ++y) {
            for (int x = 0; x + window <= i1.width; ++x) {
                double sum1 = 0.0, sum2 = 0.0;
                for (int dy = 0; dy < window; ++dy) {
                    for (int dx = 0; dx < window; ++dx) {
                        sum1 += i1.at(y + dy, x + dx, c);
                        sum2 += i2.at(y + dy, x + dx, c);
                    }
                }
                const double mu1 = sum1 * inv_count;
                const double mu2 = sum2 * inv_count;

                double var1 = 0.0, var2 = 0.0, cov = 0.0;
                for (int dy = 0; dy < window; ++dy) {
                    for (int dx = 0; dx < window; ++dx) {
                        const double a = i1.at(y + dy, x + dx, c) - mu1;
                        const double b = i2.at(y + dy, x + dx, c) - mu2;
                        var1 += a * a;
                        var2 += b * b;
                        cov += a * b;
                    }
                }
                const double sigma1 = std::sqrt(var1 * inv_count);
                const double sigma2 = std::sqrt(var2 * inv_count);
                ncc_sum += (cov * inv_count) / (sigma1 * sigma2 + eps);
                ++windows;
            }
        }
    }
    return 1.0 - ncc_sum / static_cast<double>(windows);
}

namespace detail {

// Reflect-101 border indexing: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
inline int reflect101(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

// Separable 5-tap binomial blur [1 4 6 4 1] / 16 with reflect-101 borders.
// `gain` scales the kernel per axis (2 for the pyrUp pass).
inline Image binomial_blur(const Image& src, double gain = 1.0) {
    static constexpr double taps[5] = {1.0, 4.0, 6.0, 4.0, 1.0};
    const double norm = gain / 16.0;

    Image horizontal = Image::zeros(src.height, src.width, src.channels);
    for (int c = 0; c < src.channels; ++c) {
        for (int y = 0; y < src.height; ++y) {
            for (int x = 0; x < src.width; ++x) {
                double acc = 0.0;
                for (int t = -2; t <= 2; ++t) {
                    acc += taps[t + 2] * src.at(y, reflect101(x + t, src.width), c);
                }
                horizontal.at(y, x, c) = acc * norm;
            }
        }
    }

    Image out = Image::zeros(src.height, src.width, src.channels);
    for (int c = 0; c < src.channels; ++c) {
        for (int y = 0; y < src.height; ++y) {
            for (int x = 0; x < src.width; ++x) {
                double acc = 0.0;
                for (int t = -2; t <= 2; ++t) {
                    acc += taps[t + 2] * horizontal.at(reflect101(y + t, src.height), x, c);
                }
                out.at(y, x, c) = acc * norm;
            }
        }
    }
    return out;
}

inline Image downsample_even(const Image& src) {
    Image out = Image::zeros((src.height + 1) / 2, (src.width + 1) / 2, src.channels);
    for (int c = 0; c < src.channels; ++c) {
        for (int y = 0; y < out.height; ++y) {
            for (int x = 0; x < out.width; ++x) {
                out.at(y, x, c) = src.at(2 * y, 2 * x, c);
            }
        }
    }
    return out;
}

// Zero-stuff to the target size, then blur with the kernel doubled per axis
// to restore the DC gain lost to the inserted zeros.
inline Image upsample_to(const Image& src, int target_height, int target_width) {
    Image stuffed = Image::zeros(target_height, target_width, src.channels);
    for (int c = 0; c < src.channels; ++c) {
        for (int y = 0; y < src.height && 2 * y < target_height; ++y) {
            for (int x = 0; x < src.width && 2 * x < target_width; ++x) {
                stuffed.at(2 * y, 2 * x, c) = src.at(y, x, c);
            }
        }
    }
    return binomial_blur(stuffed, 2.0);
}

// Raw difference images fall outside [0, 1]; skip Image::validate for them.
struct RawImage {
    static void subtract_into(Image& a, const Image& b) {
        for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] -= b.data[i];
    }
};

}  // namespace detail

struct Pyramid {
    std::vector<Image> levels;  // 0..L-2 detail bands, L-1 the coarsest Gaussian
};

inline Pyramid laplacian_pyramid(const Image& image, int levels) {
    image.validate();
    if (levels < 1) {
        throw Error(ErrorCode::contract_violation, "pyramid needs at least one level");
    }
    const int min_dim = std::min(image.height, image.width);
    if (min_dim < (1 << (levels - 1))) {
        throw Error(ErrorCode::contract_violation,
                    "image too small for " + std::to_string(levels) + " pyramid levels");
    }

    std::vector<Image> gaussian;
    gaussian.push_back(image);
    for (int l = 1; l < levels; ++l) {
        gaussian.push_back(detail::downsample_even(detail::binomial_blur(gaussian.back())));
    }

    Pyramid pyramid;
    pyramid.levels.reserve(levels);
    for (int l = 0; l + 1 < levels; ++l) {
        Image band = gaussian[l];
        const Image up = detail::upsample_to(gaussian[l + 1], band.height, band.width);
        detail::RawImage::subtract_into(band, up);
        pyramid.levels.push_back(std::move(band));
    }
    pyramid.levels.push_back(gaussian.back());
    return pyramid;
}

// Per-level mean absolute difference, summed over levels. The per-level mean
// keeps the loss independent of resolution.
inline double laplacian_loss(const Image& i1, const Image& i2, int levels = 4) {
    require_same_shape(i1, i2);
    const Pyramid p1 = laplacian_pyramid(i1, levels);
    const Pyramid p2 = laplacian_pyramid(i2, levels);

    double loss = 0.0;
    for (int l = 0; l < levels; ++l) {
        const Image& a = p1.levels[l];
        const Image& b = p2.levels[l];
        double abs_sum = 0.0;
        for (std::size_t idx = 0; idx < a.data.size(); ++idx) {
            abs_sum += std::abs(a.data[idx] - b.data[idx]);
        }
        loss += abs_sum / static_cast<double>(a.data.size());
    }
    return loss;
}

// Mean SSIM with the standard 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
// C2 = 0.03^2 for unit dynamic range; valid window placements only.
inline double ssim(const Image& i1, const Image& i2) {
    i1.validate();
    i2.validate();
    require_same_shape(i1, i2);
    constexpr int window = 11;
    if (std::min(i1.height, i1.width) < window) {
        throw Error(ErrorCode::contract_violation, "SSIM needs images of at least 11x11");
    }

    double taps[window];
    double tap_sum = 0.0;
    for (int t = 0; t < window; ++t) {
        const double d = static_cast<double>(t - window / 2);
        taps[t] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        tap_sum += taps[t];
    }
    for (double& t : taps) t /= tap_sum;

    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;

    double ssim_sum = 0.0;
    std::size_t windows = 0;
    for (int c = 0; c < i1.channels; ++c) {
        for (int y = 0; y + window <= i1.height; ++y) {
            for (int x = 0; x + window <= i1.width; ++x) {
                double mu1 = 0.0, mu2 = 0.0, e11 = 0.0, e22 = 0.0, e12 = 0.0;
                for (int dy = 0; dy < window; ++dy) {
                    for (int dx = 0; dx < window; ++dx) {
                        const double w = taps[dy] * taps[dx];
                        const double a = i1.at(y + dy, x + dx, c);
                        const double b = i2.at(y + dy, x + dx, c);
                        mu1 += w * a;
                        mu2 += w * b;
                        e11 += w * a * a;
                        e22 += w * b * b;
                        e12 += w * a * b;
                    }
                }
                const double var1 = e11 - mu1 * mu1;
                const double var2 = e22 - mu2 * mu2;
                const double cov = e12 - mu1 * mu2;
                ssim_sum += ((2.0 * mu1 * mu2 + c1) * (2.0 * cov + c2)) /
                            ((mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2));
                ++windows;
            }
        }
    }
    return ssim_sum / static_cast<double>(windows);
}

// Sum over anchors of the product of the per-axis scales.
inline double volume_regularization(std::span<const Eigen::Vector3d> scales) {
    double total = 0.0;
    for (const Eigen::Vector3d& s : scales) {
        if (!(s.x() > 0.0) || !(s.y() > 0.0) || !(s.z() > 0.0)) {
            throw Error(ErrorCode::contract_violation, "scales must be strictly positive");
        }
        total += s.x() * s.y() * s.z();
    }
    return total;
}

inline double mean_absolute_error(const Image& i1, const Image& i2) {
    i1.validate();
    i2.validate();
    require_same_shape(i1, i2);
    double sum = 0.0;
    for (std::size_t idx = 0; idx < i1.data.size(); ++idx) {
        sum += std::abs(i1.data[idx] - i2.data[idx]);
    }
    return sum / static_cast<double>(i1.data.size());
}

inline double pixel_loss(const Image& i1, const Image& i2, std::span<const Eigen::Vector3d> scales,
                         const LossWeights& weights) {
    weights.validate();
    return mean_absolute_error(i1, i2) + weights.lambda_ssim * (1.0 - ssim(i1, i2)) +
           weights.lambda_vol * volume_regularization(scales);
}

inline LossReport total_loss(const Image& i1, const Image& i2,
                             std::span<const Eigen::Vector3d> scales, const LossWeights& weights,
                             int ncc_window = 11, int pyramid_levels = 4) {
    weights.validate();
    LossReport report;
    report.l1 = mean_absolute_error(i1, i2);
    report.ssim_loss = 1.0 - ssim(i1, i2);
    report.vol = volume_regularization(scales);
    report.pixel = report.l1 + weights.lambda_ssim * report.ssim_loss + weights.lambda_vol * report.vol;
    report.ncc = ncc_loss(i1, i2, ncc_window);
    report.laplacian = laplacian_loss(i1, i2, pyramid_levels);
    report.total =
        report.pixel + weights.lambda_laplacian * report.laplacian + weights.lambda_ncc * report.ncc;
    return report;
}

}  // namespace epigraph
