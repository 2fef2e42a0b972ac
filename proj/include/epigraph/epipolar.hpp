// Two-view epipolar geometry and multi-view triangulation: fundamental
// matrices from calibrated pairs, Sampson residuals for correspondence
// validation, DLT initialization and Gauss-Newton reprojection refinement.

#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "epigraph/camera.hpp"
#include "epigraph/error.hpp"

namespace epigraph {

inline Eigen::Matrix3d skew_symmetric(const Eigen::Vector3d& v) {
    Eigen::Matrix3d s;
    s <<    0.0, -v.z(),  v.y(),
          v.z(),    0.0, -v.x(),
         -v.y(),  v.x(),    0.0;
    return s;
}

// F = K2^-T [t_rel]x R_rel K1^-1 with the relative pose R_rel = R2 R1',
// t_rel = t2 - R_rel t1. Rank 2 by construction ([t]x is rank 2).
inline Eigen::Matrix3d fundamental_matrix(const CameraView& view1, const CameraView& view2) {
    view1.validate();
    view2.validate();

    const Eigen::Matrix3d r_rel = view2.pose.rotation * view1.pose.rotation.transpose();
    const Eigen::Vector3d t_rel = view2.pose.translation - r_rel * view1.pose.translation;

    if (t_rel.norm() < 1e-12) {
        throw Error(ErrorCode::degenerate_pair,
                    "views '" + view1.id + "' and '" + view2.id +
                        "' share an optical center; no epipolar geometry exists");
    }

    const Eigen::Matrix3d k1 = view1.intrinsics.matrix();
    const Eigen::Matrix3d k2 = view2.intrinsics.matrix();
    // K is upper-triangular with unit bottom-right entry, so det(K) = fx*fy.
    // validate() already rejects fx,fy <= 0; keep an explicit singularity gate
    // for programmatically constructed intrinsics.
    if (std::abs(k1.determinant()) < 1e-15 || std::abs(k2.determinant()) < 1e-15) {
        throw Error(ErrorCode::invalid_camera, "singular intrinsics matrix");
    }

    const Eigen::Matrix3d essential = skew_symmetric(t_rel) * r_rel;
    return k2.inverse().transpose() * essential * k1.inverse();
}

struct EpipolarResiduals {
    double algebraic = 0.0;   // x2' F x1
    double sampson = 0.0;     // algebraic^2 / sum of the four line-gradient terms
    bool degenerate = false;  // all four denominator terms vanished
};

inline EpipolarResiduals epipolar_residuals(const Eigen::Matrix3d& f, const Correspondence& c) {
    const Eigen::Vector3d x1(c.x1.x(), c.x1.y(), 1.0);
    const Eigen::Vector3d x2(c.x2.x(), c.x2.y(), 1.0);

    const Eigen::Vector3d fx1 = f * x1;
    const Eigen::Vector3d ftx2 = f.transpose() * x2;
    const double algebraic = x2.dot(fx1);
    const double denom = fx1.x() * fx1.x() + fx1.y() * fx1.y() + ftx2.x() * ftx2.x() + ftx2.y() * ftx2.y();

    EpipolarResiduals out;
    out.algebraic = algebraic;
    if (denom == 0.0) {
        out.sampson = std::numeric_limits<double>::infinity();
        out.degenerate = true;
    } else {
        out.sampson = algebraic * algebraic / denom;
    }
    return out;
}

namespace detail {

inline void require_views_and_pixels(std::span<const CameraView> views,
                                     std::span<const Eigen::Vector2d> pixels) {
    if (views.size() < 2) {
        throw Error(ErrorCode::contract_violation, "triangulation needs at least 2 views, got " +
                                                       std::to_string(views.size()));
    }
    if (views.size() != pixels.size()) {
        throw Error(ErrorCode::contract_violation,
                    "view/pixel count mismatch: " + std::to_string(views.size()) + " vs " +
                        std::to_string(pixels.size()));
    }
}

}  // namespace detail

// Homogeneous least-squares solution of the stacked cross-product system;
// each view contributes rows u*P3 - P1 and v*P3 - P2.
inline Eigen::Vector3d triangulate_dlt(std::span<const CameraView> views,
                                       std::span<const Eigen::Vector2d> pixels) {
    detail::require_views_and_pixels(views, pixels);

    // All optical centers coincident means the rays cannot intersect at a
    // finite depth regardless of the algebra below.
    double max_center_sep = 0.0;
    for (std::size_t i = 0; i < views.size(); ++i) {
        for (std::size_t j = i + 1; j < views.size(); ++j) {
            max_center_sep = std::max(max_center_sep,
                                      (views[i].pose.center() - views[j].pose.center()).norm());
        }
    }
    if (max_center_sep < 1e-12) {
        throw Error(ErrorCode::degenerate_geometry,
                    "all views share one optical center; depth is unobservable");
    }

    Eigen::MatrixXd a(2 * views.size(), 4);
    for (std::size_t i = 0; i < views.size(); ++i) {
        const Eigen::Matrix<double, 3, 4> p = views[i].projection_matrix();
        a.row(2 * i) = pixels[i].x() * p.row(2) - p.row(0);
        a.row(2 * i + 1) = pixels[i].y() * p.row(2) - p.row(1);
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const Eigen::VectorXd& sigma = svd.singularValues();
    if (sigma(2) < 1e-12 * sigma(0)) {
        throw Error(ErrorCode::degenerate_geometry, "triangulation system is rank deficient");
    }

    const Eigen::Vector4d h = svd.matrixV().col(3);
    if (std::abs(h(3)) < 1e-12 * h.norm()) {
        throw Error(ErrorCode::at_infinity, "triangulated point lies at infinity");
    }
    return h.head<3>() / h(3);
}

// Sum of squared pixel reprojection errors after perspective division.
inline double reprojection_objective(const Eigen::Vector3d& point, std::span<const CameraView> views,
                                     std::span<const Eigen::Vector2d> pixels) {
    double total = 0.0;
    for (std::size_t i = 0; i < views.size(); ++i) {
        const Eigen::Vector2d r = views[i].project(point) - pixels[i];
        total += r.squaredNorm();
    }
    return total;
}

struct RefineOptions {
    int max_iterations = 50;
    int max_step_halvings = 10;
    double step_tolerance = 1e-10;       // stop when |alpha * delta| drops below
    double objective_tolerance = 1e-14;  // stop when the accepted decrease drops below
};

struct RefineTrace {
    std::vector<double> objectives;  // objective at x0 followed by each accepted iterate
    int iterations = 0;
    bool converged = false;
};

struct TriangulatedPoint {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    double reprojection_rmse = std::numeric_limits<double>::quiet_NaN();  // pixels
    double sampson_residual = std::numeric_limits<double>::quiet_NaN();   // pixels
    bool inlier = false;
    Correspondence source;
};

// Gauss-Newton on the geometric reprojection error with step-halving line
// search. The objective never increases across accepted iterates.
inline TriangulatedPoint refine_reprojection(const Eigen::Vector3d& x0,
                                             std::span<const CameraView> views,
                                             std::span<const Eigen::Vector2d> pixels,
                                             const RefineOptions& options = {},
                                             RefineTrace* trace = nullptr) {
    detail::require_views_and_pixels(views, pixels);

    const std::size_t n = views.size();
    Eigen::Vector3d x = x0;
    double objective = reprojection_objective(x, views, pixels);
    if (!std::isfinite(objective)) {
        throw NumericalFailure("reprojection objective non-finite at the initial point", x0);
    }
    if (trace != nullptr) {
        trace->objectives.clear();
        trace->objectives.push_back(objective);
        trace->iterations = 0;
        trace->converged = false;
    }

    Eigen::MatrixXd jacobian(2 * n, 3);
    Eigen::VectorXd residual(2 * n);
    bool converged = false;
    int iteration = 0;

    for (; iteration < options.max_iterations; ++iteration) {
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::Matrix<double, 3, 4> p = views[i].projection_matrix();
            const Eigen::Vector3d h = p.leftCols<3>() * x + p.col(3);
            const double inv_w = 1.0 / h.z();
            const double u = h.x() * inv_w;
            const double v = h.y() * inv_w;
            residual(2 * i) = u - pixels[i].x();
            residual(2 * i + 1) = v - pixels[i].y();
            // d(u)/dX = (M1 - u*M3)/w with M the left 3x3 block of P.
            jacobian.row(2 * i) = (p.row(0).head<3>() - u * p.row(2).head<3>()) * inv_w;
            jacobian.row(2 * i + 1) = (p.row(1).head<3>() - v * p.row(2).head<3>()) * inv_w;
        }
        if (!residual.allFinite() || !jacobian.allFinite()) {
            throw NumericalFailure("reprojection residual became non-finite", x);
        }

        const Eigen::Matrix3d jtj = jacobian.transpose() * jacobian;
        const Eigen::Vector3d jtr = jacobian.transpose() * residual;
        const Eigen::Vector3d delta = jtj.ldlt().solve(-jtr);
        if (!delta.allFinite()) {
            throw NumericalFailure("Gauss-Newton step solve failed", x);
        }

        double alpha = 1.0;
        bool accepted = false;
        for (int h = 0; h <= options.max_step_halvings; ++h) {
            const Eigen::Vector3d candidate = x + alpha * delta;
            const double trial = reprojection_objective(candidate, views, pixels);
            if (std::isfinite(trial) && trial < objective) {
                const double decrease = objective - trial;
                const double step_norm = alpha * delta.norm();
                x = candidate;
                objective = trial;
                accepted = true;
                if (trace != nullptr) trace->objectives.push_back(objective);
                if (step_norm < options.step_tolerance || decrease < options.objective_tolerance) {
                    converged = true;
                }
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            // No descent direction at line-search resolution: at a minimum.
            converged = true;
        }
        if (converged) {
            ++iteration;
            break;
        }
    }

    if (trace != nullptr) {
        trace->iterations = iteration;
        trace->converged = converged;
    }

    TriangulatedPoint out;
    out.position = x;
    out.reprojection_rmse = std::sqrt(objective / static_cast<double>(n));
    return out;
}

// Per correspondence: fundamental matrix, Sampson residual, DLT, refinement,
// and cheirality. Outliers are retained with inlier=false. Output order
// matches input order.
inline std::vector<TriangulatedPoint> build_point_cloud(std::span<const Correspondence> correspondences,
                                                        std::span<const CameraView> views,
                                                        double sampson_threshold) {
    std::unordered_map<std::string, const CameraView*> by_id;
    for (const CameraView& view : views) by_id.emplace(view.id, &view);

    const auto lookup = [&](const std::string& id, std::size_t index) -> const CameraView& {
        const auto it = by_id.find(id);
        if (it == by_id.end()) {
            throw Error(ErrorCode::unknown_view, "correspondence " + std::to_string(index) +
                                                     " references unknown view '" + id + "'");
        }
        return *it->second;
    };

    // Fundamental matrices are per view pair, not per correspondence.
    std::unordered_map<std::string, Eigen::Matrix3d> f_cache;

    std::vector<TriangulatedPoint> cloud;
    cloud.reserve(correspondences.size());
    for (std::size_t idx = 0; idx < correspondences.size(); ++idx) {
        const Correspondence& c = correspondences[idx];
        const CameraView& va = lookup(c.view_a, idx);
        const CameraView& vb = lookup(c.view_b, idx);
        if (!va.contains(c.x1) || !vb.contains(c.x2)) {
            throw Error(ErrorCode::contract_violation,
                        "correspondence " + std::to_string(idx) + " has pixels outside image bounds");
        }

        try {
            const std::string key = c.view_a + "\x1f" + c.view_b;
            auto it = f_cache.find(key);
            if (it == f_cache.end()) {
                it = f_cache.emplace(key, fundamental_matrix(va, vb)).first;
            }
            const EpipolarResiduals residuals = epipolar_residuals(it->second, c);

            const CameraView view_pair[2] = {va, vb};
            const Eigen::Vector2d pixel_pair[2] = {c.x1, c.x2};
            const Eigen::Vector3d x0 = triangulate_dlt(view_pair, pixel_pair);
            TriangulatedPoint point = refine_reprojection(x0, view_pair, pixel_pair);

            const bool in_front = va.to_camera(point.position).z() > 0.0 &&
                                  vb.to_camera(point.position).z() > 0.0;
            point.sampson_residual = residuals.sampson;
            point.inlier = !residuals.degenerate && residuals.sampson <= sampson_threshold && in_front;
            point.source = c;
            cloud.push_back(std::move(point));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::unknown_view) throw;
            throw Error(e.code(),
                        "correspondence " + std::to_string(idx) + ": " + std::string(e.what()));
        }
    }
    return cloud;
}

}  // namespace epigraph
