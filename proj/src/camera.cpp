#include <rearrange/camera.hpp>

#include <rearrange/scene.hpp>

#include <fmt/format.h>

#include <cmath>
#include <numbers>

namespace rearrange {

CameraIntrinsics CameraIntrinsics::from_hfov(int width, int height, double hfov_deg)
{
    const double f = (width / 2.0) / std::tan(hfov_deg * std::numbers::pi / 360.0);
    return {f, f, width / 2.0, height / 2.0, width, height};
}

void CameraIntrinsics::validate() const
{
    if (!(fx > 0) || !(fy > 0)) throw Error(ErrorCode::InvalidArgument, "focal lengths must be positive");
    if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
    if (!(cx >= 0 && cx < width && cy >= 0 && cy < height)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("principal point ({}, {}) outside {}x{}", cx, cy, width, height));
    }
}

RotMat3 CameraPose::world_to_camera_rotation() const
{
    const Vec3 forward = (look_at - position).normalized();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    RotMat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    return r;
}

Vec3 CameraPose::to_camera(const Vec3& world) const
{
    return world_to_camera_rotation() * (world - position);
}

void CameraPose::validate() const
{
    const Vec3 dir = look_at - position;
    if (!(dir.norm() > 0)) throw Error(ErrorCode::InvalidArgument, "camera position equals look-at point");
    if (!(dir.normalized().cross(up).norm() > 1e-9)) {
        throw Error(ErrorCode::InvalidArgument, "camera up vector is parallel to the view direction");
    }
}

Projection project_camera_point(const Vec3& p, const CameraIntrinsics& k)
{
    if (!(p.z() > 0)) return {k.cx, k.cy, p.z()};
    return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy, p.z()};
}

Projection project(const Vec3& point, const Camera& camera)
{
    return project_camera_point(camera.pose.to_camera(point), camera.intrinsics);
}

bool projects_inside(const Vec3& point, const Camera& camera)
{
    const auto p = project(point, camera);
    return p.in_front() && p.u > 0 && p.u < camera.intrinsics.width && p.v > 0 && p.v < camera.intrinsics.height;
}

double view_azimuth_deg(int k, int views)
{
    return 360.0 * k / views;
}

CameraRig frame_aabb(const Aabb& box, const CameraIntrinsics& intrinsics, const RigOptions& options)
{
    intrinsics.validate();
    if (options.views < 1) throw Error(ErrorCode::InvalidArgument, "rig needs at least one view");
    if (!(options.margin > 0 && options.margin <= 1)) throw Error(ErrorCode::InvalidArgument, "margin must lie in (0, 1]");
    if (!(std::abs(options.elevation_deg) < 89.0)) {
        throw Error(ErrorCode::InvalidArgument, "elevation must lie strictly within (-89, 89) degrees");
    }
    if (!(intrinsics.cx > 0 && intrinsics.cy > 0)) {
        throw Error(ErrorCode::InvalidArgument, "principal point on the image border cannot frame anything");
    }

    // Allowed image-plane radius (pixels) around the principal point, then the
    // tightest camera distance for which the bounding sphere's silhouette fits.
    const double border = std::min({intrinsics.cx, intrinsics.width - intrinsics.cx, intrinsics.cy,
                                    intrinsics.height - intrinsics.cy});
    const double allowed_px = options.margin * border;
    const double tan_half = allowed_px / std::max(intrinsics.fx, intrinsics.fy);
    const double sphere = std::max(box.diagonal() / 2.0, 1e-6);
    double radius = sphere * std::sqrt(1.0 + 1.0 / (tan_half * tan_half));

    CameraRig rig;
    rig.center = box.center();
    rig.elevation_deg = options.elevation_deg;

    const auto place = [&](double r) {
        rig.radius = r;
        rig.cameras.clear();
        const double el = options.elevation_deg * std::numbers::pi / 180.0;
        for (int k = 0; k < options.views; ++k) {
            const double az = view_azimuth_deg(k, options.views) * std::numbers::pi / 180.0;
            const Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
            rig.cameras.push_back({intrinsics, {rig.center + r * dir, rig.center, Vec3::UnitZ()}});
        }
    };
    const auto all_corners_inside = [&] {
        const auto corners = box.corners();
        for (const auto& cam : rig.cameras) {
            for (int i = 0; i < 8; ++i) {
                if (!projects_inside(corners.col(i), cam)) return false;
            }
        }
        return true;
    };

    place(radius);
    if (!all_corners_inside()) {
        place(2.0 * radius);
    }
    return rig;
}

CameraRig scene_overview_rig(const SceneState& scene, const CameraIntrinsics& intrinsics, const RigOptions& options)
{
    return frame_aabb(scene.bounds(), intrinsics, options);
}

}  // namespace rearrange
