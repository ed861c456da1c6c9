#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace rearrange;
using namespace rearrange::testing;

namespace {

CameraIntrinsics small_intrinsics()
{
    CameraIntrinsics k;
    k.fx = k.fy = 100;
    k.cx = k.cy = 50;
    k.width = k.height = 100;
    return k;
}

Vec3 rotz(const Vec3& p, double deg) { return single_axis_rotation(RotationAxis::Z, deg) * p; }

}  // namespace

TEST(Project, HandExample)
{
    Camera cam{small_intrinsics(), {Vec3(2, 0, 0), Vec3::Zero(), Vec3::UnitZ()}};
    const Projection p = project(Vec3::Zero(), cam);
    EXPECT_NEAR(p.u, 50, 1e-12);
    EXPECT_NEAR(p.v, 50, 1e-12);
    EXPECT_NEAR(p.depth, 2, 1e-12);
}

TEST(Project, AxesConvention)
{
    // Camera on +x looking back at the origin: world +y appears to the right, +z up.
    Camera cam{small_intrinsics(), {Vec3(2, 0, 0), Vec3::Zero(), Vec3::UnitZ()}};
    EXPECT_GT(project(Vec3(0, 0.1, 0), cam).u, 50);
    EXPECT_LT(project(Vec3(0, 0, 0.1), cam).v, 50);
}

TEST(Project, BehindCameraFlagged)
{
    Camera cam{small_intrinsics(), {Vec3(2, 0, 0), Vec3::Zero(), Vec3::UnitZ()}};
    EXPECT_FALSE(project(Vec3(3, 0, 0), cam).in_front());
    EXPECT_FALSE(projects_inside(Vec3(3, 0, 0), cam));
}

TEST(Project, AgreesWithIndependentPinhole)
{
    std::mt19937_64 rng(21);
    for (int i = 0; i < 200; ++i) {
        Camera cam{small_intrinsics(), {random_vec(rng, -3, 3), random_vec(rng, -0.5, 0.5), Vec3::UnitZ()}};
        if ((cam.pose.position - cam.pose.look_at).head<2>().norm() < 0.1) continue;
        const Vec3 p = random_vec(rng, -1, 1);
        // Build the view frame from scratch.
        const Vec3 f = (cam.pose.look_at - cam.pose.position).normalized();
        const Vec3 r = f.cross(Vec3::UnitZ()).normalized();
        const Vec3 d = f.cross(r);
        const Vec3 q = p - cam.pose.position;
        const double z = q.dot(f);
        const Projection pr = project(p, cam);
        EXPECT_NEAR(pr.depth, z, 1e-9);
        if (z > 1e-3) {
            EXPECT_NEAR(pr.u, 100 * q.dot(r) / z + 50, 1e-7);
            EXPECT_NEAR(pr.v, 100 * q.dot(d) / z + 50, 1e-7);
        }
    }
}

TEST(Intrinsics, Validation)
{
    CameraIntrinsics k = small_intrinsics();
    k.fx = 0;
    EXPECT_EQ(error_code_of([&] { k.validate(); }), ErrorCode::InvalidArgument);
    k = small_intrinsics();
    k.cx = 100;
    EXPECT_EQ(error_code_of([&] { k.validate(); }), ErrorCode::InvalidArgument);
    const auto h = CameraIntrinsics::from_hfov(640, 480, 60);
    EXPECT_NEAR(h.fx, 320 / std::tan(std::numbers::pi / 6), 1e-9);
    EXPECT_EQ(h.cx, 320);
    EXPECT_EQ(h.cy, 240);
}

TEST(Rig, AzimuthsEquallySpaced)
{
    EXPECT_EQ(view_azimuth_deg(0, 4), 0);
    EXPECT_EQ(view_azimuth_deg(1, 4), 90);
    EXPECT_EQ(view_azimuth_deg(2, 4), 180);
    EXPECT_EQ(view_azimuth_deg(3, 4), 270);
    const Aabb box{Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5)};
    const CameraRig rig = frame_aabb(box, small_intrinsics(), {4, 30.0, 0.9});
    ASSERT_EQ(rig.size(), 4u);
    for (int k = 0; k < 4; ++k) {
        const Vec3 d = rig.cameras[k].pose.position - rig.center;
        EXPECT_NEAR(std::atan2(d.y(), d.x()) * 180 / std::numbers::pi, wrap_degrees(90.0 * k), 1e-9);
        EXPECT_NEAR(d.norm(), rig.radius, 1e-9);
        EXPECT_EQ(rig.cameras[k].pose.look_at, box.center());
    }
}

TEST(Rig, FrontCameraOnPlusX)
{
    const Aabb box{Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5)};
    const CameraRig rig = frame_aabb(box, small_intrinsics(), {4, 0.0, 0.9});
    const auto& pose = rig.cameras[0].pose;
    EXPECT_NEAR(pose.position.x(), rig.radius, 1e-12);
    EXPECT_NEAR(pose.position.y(), 0, 1e-12);
    EXPECT_NEAR(pose.position.z(), 0, 1e-12);
    EXPECT_EQ(pose.up, Vec3::UnitZ());
}

TEST(Rig, CornersInsideOverRandomBoxes)
{
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const Vec3 lo = random_vec(rng, -2, 2);
        const Aabb box{lo, lo + random_vec(rng, 0.01, 1.5)};
        const int w = 64 + static_cast<int>(uniform(rng, 0, 600));
        const int h = 64 + static_cast<int>(uniform(rng, 0, 400));
        const auto k = CameraIntrinsics::from_hfov(w, h, uniform(rng, 30, 100));
        const CameraRig rig = frame_aabb(box, k, {1 + trial % 6, uniform(rng, -60, 60), uniform(rng, 0.5, 1.0)});
        const auto corners = box.corners();
        for (const auto& cam : rig.cameras) {
            for (int c = 0; c < 8; ++c) EXPECT_TRUE(projects_inside(corners.col(c), cam)) << trial;
        }
    }
}

TEST(Rig, DeterministicAndMonotone)
{
    const auto k = CameraIntrinsics::from_hfov(320, 240, 60);
    Aabb box{Vec3(-0.1, -0.2, 0), Vec3(0.3, 0.1, 0.2)};
    EXPECT_EQ(frame_aabb(box, k), frame_aabb(box, k));
    double last = 0;
    for (int i = 0; i < 20; ++i) {
        const double r = frame_aabb(box, k).radius;
        EXPECT_GE(r, last);
        last = r;
        box.max += Vec3(0.05, 0.01, 0.02);
    }
    // A tighter margin pushes the cameras back.
    EXPECT_GT(frame_aabb(box, k, {4, 30, 0.5}).radius, frame_aabb(box, k, {4, 30, 0.9}).radius);
}

TEST(Rig, EquivariantUnderQuarterTurns)
{
    const auto k = CameraIntrinsics::from_hfov(320, 240, 60);
    const Aabb box{Vec3(-0.3, -0.1, -0.05), Vec3(0.3, 0.1, 0.05)};
    const Aabb turned{Vec3(-0.1, -0.3, -0.05), Vec3(0.1, 0.3, 0.05)};
    const CameraRig a = frame_aabb(box, k);
    const CameraRig b = frame_aabb(turned, k);
    EXPECT_NEAR(a.radius, b.radius, 1e-12);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 100; ++i) {
        const Vec3 p = random_vec(rng, -0.3, 0.3);
        for (int view = 0; view < 4; ++view) {
            const Projection pa = project(p, a.cameras[view]);
            const Projection pb = project(rotz(p, 90), b.cameras[(view + 1) % 4]);
            EXPECT_NEAR(pa.u, pb.u, 1e-9);
            EXPECT_NEAR(pa.v, pb.v, 1e-9);
            EXPECT_NEAR(pa.depth, pb.depth, 1e-9);
        }
    }
}

TEST(Rig, OverviewOfSingleObjectMatchesFrame)
{
    SceneState s;
    s.objects.push_back(box_object("a", {0, 0, 0}, {0.2, 0.3, 0.1}));
    const auto k = CameraIntrinsics::from_hfov(320, 240, 60);
    EXPECT_EQ(scene_overview_rig(s, k), frame_aabb(s.objects[0].bounds(), k));
    const CameraRig one = scene_overview_rig(s, k, {1, 30, 0.9});
    ASSERT_EQ(one.size(), 1u);
    EXPECT_GT(one.cameras[0].pose.position.x(), one.center.x());
}

TEST(Rig, OverviewSpansSeparatedObjects)
{
    const SceneState s = two_box_scene();
    const auto k = CameraIntrinsics::from_hfov(320, 240, 60);
    const CameraRig rig = scene_overview_rig(s, k);
    for (const auto& obj : s.objects) {
        const auto corners = obj.bounds().corners();
        for (const auto& cam : rig.cameras) {
            for (int c = 0; c < 8; ++c) EXPECT_TRUE(projects_inside(corners.col(c), cam));
        }
    }
}

TEST(Rig, InvalidOptions)
{
    const auto k = CameraIntrinsics::from_hfov(320, 240, 60);
    const Aabb box{Vec3::Zero(), Vec3::Ones()};
    EXPECT_EQ(error_code_of([&] { frame_aabb(box, k, {0, 30, 0.9}); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(error_code_of([&] { frame_aabb(box, k, {4, 30, 1.5}); }), ErrorCode::InvalidArgument);
}
