#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "epigraph/error.hpp"

namespace epigraph {

// Row-major intensity image with values in [0, 1], 1 or 3 channels.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<double> data;  // [(y * width + x) * channels + c]

    static Image zeros(int height, int width, int channels = 1) {
        Image img;
        img.height = height;
        img.width = width;
        img.channels = channels;
        img.data.assign(static_cast<std::size_t>(height) * width * channels, 0.0);
        return img;
    }

    double at(int y, int x, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double& at(int y, int x, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    void validate() const {
        if (height < 1 || width < 1 || (channels != 1 && channels != 3)) {
            throw Error(ErrorCode::contract_violation,
                        "image must be non-empty with 1 or 3 channels, got " + std::to_string(height) +
                            "x" + std::to_string(width) + "x" + std::to_string(channels));
        }
        if (data.size() != static_cast<std::size_t>(height) * width * channels) {
            throw Error(ErrorCode::contract_violation, "image buffer size does not match dimensions");
        }
        for (double v : data) {
            if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
                throw Error(ErrorCode::contract_violation,
                            "image values must be finite and within [0, 1]");
            }
        }
    }
};

inline void require_same_shape(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
        throw Error(ErrorCode::contract_violation,
                    "image dimensions differ: " + std::to_string(a.height) + "x" +
                        std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                        std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                        std::to_string(b.channels));
    }
}

}  // namespace epigraph
