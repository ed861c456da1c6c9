#pragma once

#include <rearrange/geometry.hpp>

#include <vector>

namespace rearrange {

struct SceneState;

/// Pinhole intrinsics. Pixel (i, j) covers [i, i+1) x [j, j+1); its centre
/// is at (i + 0.5, j + 0.5).
struct CameraIntrinsics {
    double fx = 0;
    double fy = 0;
    double cx = 0;
    double cy = 0;
    int width = 0;
    int height = 0;

    /// Square pixels, principal point at the image centre.
    static CameraIntrinsics from_hfov(int width, int height, double hfov_deg);

    void validate() const;
    bool operator==(const CameraIntrinsics&) const = default;
};

/// View frame follows the usual computer-vision convention: x right, y down,
/// z along the viewing direction.
struct CameraPose {
    Vec3 position = Vec3::Zero();
    Vec3 look_at = Vec3::UnitX();
    Vec3 up = Vec3::UnitZ();

    /// Rows are the camera's right, down and forward axes in world coordinates.
    RotMat3 world_to_camera_rotation() const;
    Vec3 to_camera(const Vec3& world) const;
    void validate() const;
    bool operator==(const CameraPose&) const = default;
};

struct Camera {
    CameraIntrinsics intrinsics;
    CameraPose pose;

    bool operator==(const Camera&) const = default;
};

struct Projection {
    double u = 0;
    double v = 0;
    double depth = 0;

    bool in_front() const { return depth > 0; }
};

/// Pinhole projection; depth is view-space z. Points behind the camera are
/// reported with depth <= 0 and u, v left at the principal point.
Projection project(const Vec3& point, const Camera& camera);

/// Pinhole projection from camera-frame coordinates.
Projection project_camera_point(const Vec3& point_cam, const CameraIntrinsics& intrinsics);

struct CameraRig {
    std::vector<Camera> cameras;
    Vec3 center = Vec3::Zero();
    double radius = 0;
    double elevation_deg = 0;

    std::size_t size() const { return cameras.size(); }
    bool operator==(const CameraRig&) const = default;
};

struct RigOptions {
    int views = 4;
    double elevation_deg = 30.0;
    double margin = 0.9;
};

/// Azimuth of view k (0-based), degrees, counter-clockwise about +z from +x.
double view_azimuth_deg(int k, int views);

/// K cameras on a circle around the box centre, all looking at it, at the
/// smallest radius that keeps the box's bounding sphere within
/// margin * (distance from principal point to nearest image border).
CameraRig frame_aabb(const Aabb& box, const CameraIntrinsics& intrinsics, const RigOptions& options = {});

/// Same framing over the AABB of every object in the scene.
CameraRig scene_overview_rig(const SceneState& scene, const CameraIntrinsics& intrinsics, const RigOptions& options = {});

/// True when the point projects strictly inside the image and in front of the camera.
bool projects_inside(const Vec3& point, const Camera& camera);

}  // namespace rearrange
