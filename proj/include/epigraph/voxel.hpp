// Voxel-grid reduction of a triangulated point cloud into anchors: one anchor
// per occupied voxel, placed at the voxel center, carrying a seeded feature
// vector and an initial per-axis scale of half the voxel size.

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "epigraph/detail/random.hpp"
#include "epigraph/epipolar.hpp"
#include "epigraph/error.hpp"

namespace epigraph {

struct VoxelConfig {
    double voxel_size = 1.0;                            // world units, > 0
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();

    void validate() const {
        if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
            throw Error(ErrorCode::invalid_config, "voxel_size must be positive and finite");
        }
    }
};

struct Anchor {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();  // voxel center, world units
    Eigen::VectorXd feature;                             // dimensionless
    Eigen::Vector3d scale = Eigen::Vector3d::Ones();     // world units, positive
};

namespace detail {

inline std::array<std::int64_t, 3> voxel_coords(const Eigen::Vector3d& p, const VoxelConfig& config) {
    std::array<std::int64_t, 3> c;
    for (int axis = 0; axis < 3; ++axis) {
        c[axis] = static_cast<std::int64_t>(
            std::floor((p(axis) - config.origin(axis)) / config.voxel_size));
    }
    return c;
}

}  // namespace detail

// One anchor per occupied voxel; inlier points only. Output is sorted by
// voxel integer coordinates lexicographically, and anchor features are drawn
// from a seeded uniform in [-0.1, 0.1] in that order.
inline std::vector<Anchor> voxelize(std::span<const TriangulatedPoint> points,
                                    const VoxelConfig& config, int feature_dim,
                                    std::uint64_t seed) {
    config.validate();
    if (feature_dim < 1) {
        throw Error(ErrorCode::contract_violation, "feature_dim must be >= 1");
    }

    std::map<std::array<std::int64_t, 3>, int> occupied;  // voxel -> member count
    for (const TriangulatedPoint& point : points) {
        if (!point.inlier) continue;
        ++occupied[detail::voxel_coords(point.position, config)];
    }
    if (occupied.empty()) {
        throw Error(ErrorCode::empty_cloud, "no inlier points to voxelize");
    }

    std::mt19937_64 rng(seed);
    std::vector<Anchor> anchors;
    anchors.reserve(occupied.size());
    for (const auto& [coords, count] : occupied) {
        Anchor anchor;
        for (int axis = 0; axis < 3; ++axis) {
            anchor.position(axis) =
                config.origin(axis) + (static_cast<double>(coords[axis]) + 0.5) * config.voxel_size;
        }
        anchor.feature.resize(feature_dim);
        for (int c = 0; c < feature_dim; ++c) {
            anchor.feature(c) = detail::uniform_symmetric(rng, 0.1);
        }
        anchor.scale = Eigen::Vector3d::Constant(config.voxel_size / 2.0);
        anchors.push_back(std::move(anchor));
    }
    return anchors;
}

// 4x the median nearest-neighbor spacing of the inlier points; the default
// voxel size when none is configured.
inline double auto_voxel_size(std::span<const TriangulatedPoint> points) {
    std::vector<Eigen::Vector3d> positions;
    for (const TriangulatedPoint& point : points) {
        if (point.inlier) positions.push_back(point.position);
    }
    if (positions.size() < 2) {
        throw Error(ErrorCode::contract_violation,
                    "auto voxel size needs at least 2 inlier points, got " +
                        std::to_string(positions.size()));
    }

    std::vector<double> nn;
    nn.reserve(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < positions.size(); ++j) {
            if (j == i) continue;
            best = std::min(best, (positions[i] - positions[j]).norm());
        }
        nn.push_back(best);
    }
    std::sort(nn.begin(), nn.end());
    const std::size_t n = nn.size();
    const double median = (n % 2 == 1) ? nn[n / 2] : 0.5 * (nn[n / 2 - 1] + nn[n / 2]);
    return 4.0 * median;
}

}  // namespace epigraph
