#pragma once

#include <rearrange/camera.hpp>
#include <rearrange/image.hpp>
#include <rearrange/scene.hpp>

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <string>

namespace rearrange {

using DepthMap = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rasters are indexed (row v, column u). Depth in metres, 0 = invalid.
struct RgbdFrame {
    Image color;
    DepthMap depth;
    CameraIntrinsics intrinsics;
    /// Camera-to-world transform of the optical frame (x right, y down, z forward).
    Eigen::Matrix4d camera_pose = Eigen::Matrix4d::Identity();
    std::map<std::string, Mask> masks;
    std::map<std::string, std::string> labels;

    void validate() const;
};

struct OutlierOptions {
    int k = 16;
    double std_ratio = 2.0;
};

struct LiftOptions {
    OutlierOptions outliers;
    bool remove_outliers = true;
};

/// Image point (u, v) with depth d maps to ((u - cx) d / fx, (v - cy) d / fy, d).
/// lift_rgbd samples pixel (i, j) at its centre (i + 0.5, j + 0.5).
Vec3 back_project(double u, double v, double depth, const CameraIntrinsics& intrinsics);

/// One point-cloud object per mask, in world coordinates.
SceneState lift_rgbd(const RgbdFrame& frame, const LiftOptions& options = {});

/// Statistical outlier removal over k-nearest-neighbour mean distances.
/// Drops points whose mean distance exceeds mean + std_ratio * stddev over
/// the cloud; returns the input unchanged if that would drop everything.
Points remove_outliers(const Points& points, int k = 16, double std_ratio = 2.0);

/// Indices kept by remove_outliers, ascending.
std::vector<Eigen::Index> inlier_indices(const Points& points, int k = 16, double std_ratio = 2.0);

/// Mean distance from every point to its k nearest neighbours (grid search).
std::vector<double> knn_mean_distances(const Points& points, int k);

/// Bundle directory: color.png, depth.png (16-bit), intrinsics.json,
/// masks/<id>.png, labels.json.
RgbdFrame load_rgbd_bundle(const std::filesystem::path& dir);
void save_rgbd_bundle(const RgbdFrame& frame, const std::filesystem::path& dir, double depth_scale = 0.001);

}  // namespace rearrange
