// Anchor neighborhood graph: exact k-nearest-neighbor indices, neighbor
// feature aggregation (concat of self features and neighbor deltas), and the
// sinusoidal encoding of angles between neighbor directions.

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "epigraph/error.hpp"
#include "epigraph/voxel.hpp"

namespace epigraph {

using IndexTable = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;  // M x k
using AngleTable = Eigen::MatrixXd;                                     // M x k, radians

namespace detail {

inline void require_valid_index(const IndexTable& index, Eigen::Index m) {
    for (Eigen::Index i = 0; i < index.rows(); ++i) {
        for (Eigen::Index j = 0; j < index.cols(); ++j) {
            const int v = index(i, j);
            if (v < 0 || v >= m) {
                throw Error(ErrorCode::contract_violation,
                            "neighbor index " + std::to_string(v) + " out of range [0, " +
                                std::to_string(m) + ")");
            }
            if (v == static_cast<int>(i)) {
                throw Error(ErrorCode::contract_violation,
                            "anchor " + std::to_string(i) + " lists itself as a neighbor");
            }
        }
    }
}

}  // namespace detail

// Row i holds the k nearest anchors to anchor i by Euclidean distance, self
// excluded, sorted ascending with ties broken by ascending index. Exact brute
// force; anchor counts here never justify a spatial index.
inline IndexTable knn_indices(std::span<const Anchor> anchors, int k) {
    const int m = static_cast<int>(anchors.size());
    if (k < 1 || m <= k) {
        throw Error(ErrorCode::insufficient_anchors,
                    "need more anchors than neighbors: M=" + std::to_string(m) +
                        ", k=" + std::to_string(k));
    }

    IndexTable index(m, k);
    std::vector<std::pair<double, int>> candidates;
    candidates.reserve(m - 1);
    for (int i = 0; i < m; ++i) {
        candidates.clear();
        for (int j = 0; j < m; ++j) {
            if (j == i) continue;
            candidates.emplace_back((anchors[i].position - anchors[j].position).squaredNorm(), j);
        }
        std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end());
        for (int j = 0; j < k; ++j) index(i, j) = candidates[j].second;
    }
    return index;
}

// M x k x 2F tensor: [i][j][0..F) holds anchor i's feature, [i][j][F..2F) the
// neighbor-minus-self difference.
struct AggregatedFeatures {
    std::vector<double> values;
    int m = 0;
    int k = 0;
    int feature_dim = 0;  // F; the token width is 2F

    int token_dim() const { return 2 * feature_dim; }
    double& at(int i, int j, int c) {
        return values[(static_cast<std::size_t>(i) * k + j) * token_dim() + c];
    }
    double at(int i, int j, int c) const {
        return values[(static_cast<std::size_t>(i) * k + j) * token_dim() + c];
    }
};

inline AggregatedFeatures aggregate_features(const Eigen::MatrixXd& features, const IndexTable& index) {
    if (features.rows() != index.rows()) {
        throw Error(ErrorCode::contract_violation,
                    "feature rows (" + std::to_string(features.rows()) + ") != index rows (" +
                        std::to_string(index.rows()) + ")");
    }
    detail::require_valid_index(index, features.rows());

    AggregatedFeatures agg;
    agg.m = static_cast<int>(index.rows());
    agg.k = static_cast<int>(index.cols());
    agg.feature_dim = static_cast<int>(features.cols());
    agg.values.resize(static_cast<std::size_t>(agg.m) * agg.k * agg.token_dim());

    const int f = agg.feature_dim;
    for (int i = 0; i < agg.m; ++i) {
        for (int j = 0; j < agg.k; ++j) {
            const int n = index(i, j);
            for (int c = 0; c < f; ++c) {
                agg.at(i, j, c) = features(i, c);
                agg.at(i, j, f + c) = features(n, c) - features(i, c);
            }
        }
    }
    return agg;
}

// Angle between each neighbor direction and the direction to the nearest
// neighbor (row position 0), via arccos of the clamped cosine. The reference
// neighbor's own angle is 0 by definition.
inline AngleTable neighbor_angles(std::span<const Anchor> anchors, const IndexTable& index) {
    detail::require_valid_index(index, static_cast<Eigen::Index>(anchors.size()));

    AngleTable angles(index.rows(), index.cols());
    for (Eigen::Index i = 0; i < index.rows(); ++i) {
        const Eigen::Vector3d& center = anchors[i].position;
        const Eigen::Vector3d ref = anchors[index(i, 0)].position - center;
        const double ref_norm = ref.norm();
        if (ref_norm == 0.0) {
            throw Error(ErrorCode::degenerate_edge,
                        "anchor " + std::to_string(i) + " coincides with its reference neighbor");
        }
        angles(i, 0) = 0.0;
        for (Eigen::Index j = 1; j < index.cols(); ++j) {
            const Eigen::Vector3d edge = anchors[index(i, j)].position - center;
            const double edge_norm = edge.norm();
            if (edge_norm == 0.0) {
                throw Error(ErrorCode::degenerate_edge,
                            "anchor " + std::to_string(i) + " coincides with neighbor " +
                                std::to_string(index(i, j)));
            }
            const double cosine = std::clamp(edge.dot(ref) / (edge_norm * ref_norm), -1.0, 1.0);
            angles(i, j) = std::acos(cosine);
        }
    }
    return angles;
}

// M x k x 2L tensor of [sin(2^l pi theta), cos(2^l pi theta)] pairs.
struct EncodedAngles {
    std::vector<double> values;
    int m = 0;
    int k = 0;
    int frequencies = 0;  // L; the encoding width is 2L

    int encoding_dim() const { return 2 * frequencies; }
    double& at(int i, int j, int c) {
        return values[(static_cast<std::size_t>(i) * k + j) * encoding_dim() + c];
    }
    double at(int i, int j, int c) const {
        return values[(static_cast<std::size_t>(i) * k + j) * encoding_dim() + c];
    }
};

inline EncodedAngles encode_angles(const AngleTable& angles, int frequencies) {
    if (frequencies < 1) {
        throw Error(ErrorCode::contract_violation, "encoding needs at least one frequency");
    }

    EncodedAngles enc;
    enc.m = static_cast<int>(angles.rows());
    enc.k = static_cast<int>(angles.cols());
    enc.frequencies = frequencies;
    enc.values.resize(static_cast<std::size_t>(enc.m) * enc.k * enc.encoding_dim());

    for (int i = 0; i < enc.m; ++i) {
        for (int j = 0; j < enc.k; ++j) {
            double scale = std::numbers::pi;  // 2^l pi, starting at l = 0
            for (int l = 0; l < frequencies; ++l) {
                enc.at(i, j, 2 * l) = std::sin(scale * angles(i, j));
                enc.at(i, j, 2 * l + 1) = std::cos(scale * angles(i, j));
                scale *= 2.0;
            }
        }
    }
    return enc;
}

struct AnchorGraph {
    std::vector<Anchor> anchors;
    IndexTable neighbor_index;  // M x k
    AngleTable angles;          // M x k
    int k = 0;
};

inline Eigen::MatrixXd anchor_features(std::span<const Anchor> anchors) {
    if (anchors.empty()) return {};
    Eigen::MatrixXd features(anchors.size(), anchors[0].feature.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (anchors[i].feature.size() != features.cols()) {
            throw Error(ErrorCode::contract_violation, "anchors carry mixed feature dimensions");
        }
        features.row(i) = anchors[i].feature;
    }
    return features;
}

inline AnchorGraph build_anchor_graph(std::vector<Anchor> anchors, int k) {
    AnchorGraph graph;
    graph.neighbor_index = knn_indices(anchors, k);
    graph.angles = neighbor_angles(anchors, graph.neighbor_index);
    graph.anchors = std::move(anchors);
    graph.k = k;
    return graph;
}

}  // namespace epigraph
