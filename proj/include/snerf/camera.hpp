#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "snerf/common.hpp"

namespace snerf {

struct CameraError : std::runtime_error {
    explicit CameraError(const std::string& msg) : std::runtime_error(msg) {}
};

// Pinhole model, pixel units.
struct CameraIntrinsics {
    int width = 0, height = 0;
    double fx = 0, fy = 0, cx = 0, cy = 0;

    static CameraIntrinsics make_default(int w, int h) {
        CameraIntrinsics in;
        in.width = w;
        in.height = h;
        in.fx = in.fy = 1.2 * w;
        in.cx = 0.5 * w;
        in.cy = 0.5 * h;
        return in;
    }

    void validate() const {
        if (width <= 0 || height <= 0) throw CameraError("CameraIntrinsics: non-positive dims");
        if (!(fx > 0) || !(fy > 0)) throw CameraError("CameraIntrinsics: focal length must be positive");
        if (cx < 0 || cx >= width || cy < 0 || cy >= height)
            throw CameraError("CameraIntrinsics: principal point outside image");
    }
};

// Rigid camera-to-world transform. Camera looks along -z with +y up.
struct CameraPose {
    Eigen::Matrix4d transform = Eigen::Matrix4d::Identity();

    Eigen::Vector3d position() const { return transform.block<3, 1>(0, 3); }
    Eigen::Matrix3d rotation() const { return transform.block<3, 3>(0, 0); }

    // World-space viewing direction of the optical axis.
    Eigen::Vector3d forward() const { return -rotation().col(2); }

    void validate(double tol = 1e-6) const {
        const Eigen::Matrix3d R = rotation();
        if (((R.transpose() * R) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol)
            throw CameraError("CameraPose: rotation block not orthonormal");
        if (R.determinant() < 0) throw CameraError("CameraPose: rotation determinant must be +1");
        if ((transform.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > tol)
            throw CameraError("CameraPose: last row must be (0,0,0,1)");
    }
};

// World-space ray through the center of pixel (px, py).
inline void pixel_ray(const CameraPose& pose, const CameraIntrinsics& intr, double px, double py,
                      Eigen::Vector3d& origin, Eigen::Vector3d& dir) {
    const Eigen::Vector3d d_cam((px + 0.5 - intr.cx) / intr.fx, -(py + 0.5 - intr.cy) / intr.fy, -1.0);
    dir = (pose.rotation() * d_cam).normalized();
    origin = pose.position();
}

// Camera at `eye` looking at `target`, rolled about the optical axis.
inline CameraPose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, double roll_rad = 0.0) {
    Eigen::Vector3d f = target - eye;
    const double n = f.norm();
    if (n < 1e-12) throw CameraError("look_at: eye equals target");
    f /= n;
    Eigen::Vector3d up_hint = std::fabs(f.z()) > 0.9 ? Eigen::Vector3d(0, 1, 0) : Eigen::Vector3d(0, 0, 1);
    Eigen::Vector3d z = -f;  // camera looks along -z
    Eigen::Vector3d x = up_hint.cross(z).normalized();
    Eigen::Vector3d y = z.cross(x);
    Eigen::Matrix3d R;
    R.col(0) = x;
    R.col(1) = y;
    R.col(2) = z;
    if (roll_rad != 0.0) R = R * Eigen::AngleAxisd(roll_rad, Eigen::Vector3d(0, 0, 1)).toRotationMatrix();
    CameraPose pose;
    pose.transform.block<3, 3>(0, 0) = R;
    pose.transform.block<3, 1>(0, 3) = eye;
    return pose;
}

// Craniotomy region of interest: camera sampling is constrained to a cone
// about its outward normal.
struct RoiSpec {
    Eigen::Vector3d center_mm = Eigen::Vector3d::Zero();
    double diameter_mm = 50.0;
    Eigen::Vector3d outward_normal = Eigen::Vector3d(0, 0, 1);

    void validate() const {
        if (!(diameter_mm > 0)) throw CameraError("RoiSpec: diameter must be positive");
        if (std::fabs(outward_normal.norm() - 1.0) > 1e-6)
            throw CameraError("RoiSpec: outward_normal must be unit length");
    }
};

}  // namespace snerf
