// Calibrated camera model: intrinsics, world-to-camera pose, and pixel
// correspondences between views. Convention throughout: x_cam = R * x_world + t.

#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "epigraph/error.hpp"

namespace epigraph {

struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    double skew = 0.0;

    Eigen::Matrix3d matrix() const {
        Eigen::Matrix3d k;
        k << fx, skew, cx,
             0.0, fy, cy,
             0.0, 0.0, 1.0;
        return k;
    }

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0)) {
            throw Error(ErrorCode::invalid_camera, "focal lengths must be positive (fx=" +
                                                       std::to_string(fx) + ", fy=" + std::to_string(fy) + ")");
        }
        if (!std::isfinite(fx) || !std::isfinite(fy) || !std::isfinite(cx) ||
            !std::isfinite(cy) || !std::isfinite(skew)) {
            throw Error(ErrorCode::invalid_camera, "intrinsics contain non-finite entries");
        }
    }
};

struct CameraPose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();     // world-to-camera
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();      // world units

    // Orthonormality gate: R'R = I within 1e-9 per entry, det(R) = 1 within 1e-9.
    void validate() const {
        const Eigen::Matrix3d gram = rotation.transpose() * rotation;
        const double max_dev = (gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
        if (!(max_dev <= 1e-9)) {
            throw Error(ErrorCode::invalid_camera,
                        "rotation is not orthonormal (max |R'R - I| = " + std::to_string(max_dev) + ")");
        }
        const double det = rotation.determinant();
        if (!(std::abs(det - 1.0) <= 1e-9)) {
            throw Error(ErrorCode::invalid_camera,
                        "rotation determinant is " + std::to_string(det) + ", expected 1");
        }
        if (!translation.allFinite()) {
            throw Error(ErrorCode::invalid_camera, "translation contains non-finite entries");
        }
    }

    Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
        return rotation * world + translation;
    }

    // Optical center in world coordinates.
    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
};

struct CameraView {
    std::string id;
    CameraIntrinsics intrinsics;
    CameraPose pose;
    int width = 0;
    int height = 0;

    Eigen::Matrix<double, 3, 4> projection_matrix() const {
        Eigen::Matrix<double, 3, 4> rt;
        rt.leftCols<3>() = pose.rotation;
        rt.col(3) = pose.translation;
        return intrinsics.matrix() * rt;
    }

    void validate() const {
        intrinsics.validate();
        pose.validate();
        if (width <= 0 || height <= 0) {
            throw Error(ErrorCode::invalid_camera,
                        "view '" + id + "' has non-positive image size " + std::to_string(width) + "x" +
                            std::to_string(height));
        }
        // K upper-triangular with positive diagonal and R orthonormal imply
        // rank(K [R|t]) = 3; nothing further to check numerically.
    }

    Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return pose.to_camera(world); }

    // Perspective projection into pixel coordinates. Depth handling is the
    // caller's concern; a point at z = 0 yields non-finite output.
    Eigen::Vector2d project(const Eigen::Vector3d& world) const {
        const Eigen::Vector3d cam = to_camera(world);
        const Eigen::Matrix3d k = intrinsics.matrix();
        const Eigen::Vector3d h = k * cam;
        return {h.x() / h.z(), h.y() / h.z()};
    }

    bool contains(const Eigen::Vector2d& pixel) const {
        return pixel.x() >= 0.0 && pixel.x() <= static_cast<double>(width) && pixel.y() >= 0.0 &&
               pixel.y() <= static_cast<double>(height);
    }
};

// A matched pixel pair across two views. Homogeneous lifts append 1.
struct Correspondence {
    std::string view_a;
    std::string view_b;
    Eigen::Vector2d x1 = Eigen::Vector2d::Zero();
    Eigen::Vector2d x2 = Eigen::Vector2d::Zero();
};

}  // namespace epigraph
