#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace rearrange;
using namespace rearrange::testing;

TEST(Aabb, BoundsOfPoints)
{
    Points p(3, 3);
    p << 0, 1, -2,
         3, -1, 0,
         0.5, 0.5, 2;
    const Aabb box = aabb_of_points(p);
    EXPECT_EQ(box.min, Vec3(-2, -1, 0.5));
    EXPECT_EQ(box.max, Vec3(1, 3, 2));
    EXPECT_EQ(box.center(), Vec3(-0.5, 1, 1.25));
}

TEST(Aabb, EmptyAndNonFinite)
{
    try {
        aabb_of_points(Points(3, 0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyPointSet);
    }
    Points p = Points::Zero(3, 2);
    p(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(aabb_of_points(p), Error);
}

TEST(AxisLength, Examples)
{
    EXPECT_EQ(axis_length(Vec3(1, 2, 4)), 1.0);
    EXPECT_EQ(axis_length(Vec3(2, 2, 2)), 1.0);
    EXPECT_EQ(axis_length(Vec3(1, 1, 2)), 1.0);
    EXPECT_EQ(axis_length(Vec3(0.2, 0.1, 0.3)), 0.1);
    EXPECT_EQ(axis_length(Vec3(0.3, 0.2, 0.3)), 0.1);
}

TEST(AxisLength, ScaleEquivariant)
{
    std::mt19937_64 rng(5);
    for (int i = 0; i < 500; ++i) {
        const Vec3 e = random_vec(rng, 0.01, 1.0);
        const double s = uniform(rng, 0.1, 10);
        EXPECT_NEAR(axis_length(Vec3(s * e)), s * axis_length(e), 1e-12 * s);
    }
}

TEST(AxisLength, DegenerateRejected)
{
    try {
        axis_length(Vec3(0.1, 0.0, 0.2));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateAabb);
    }
}

TEST(AxisLength, PositiveAndBoundedByShortestEdge)
{
    std::mt19937_64 rng(7);
    for (int i = 0; i < 2000; ++i) {
        const Vec3 e = random_vec(rng, 1e-3, 2.0);
        const double l = axis_length(e);
        EXPECT_GT(l, 0);
        EXPECT_LE(l, e.minCoeff());
        EXPECT_GE(l, e.minCoeff() / 2);
    }
}

TEST(Rotation, QuarterTurnsExact)
{
    const RotMat3 rz = single_axis_rotation(RotationAxis::Z, 90.0);
    EXPECT_EQ(rz * Vec3::UnitX(), Vec3::UnitY());
    const RotMat3 rx = single_axis_rotation(RotationAxis::X, 90.0);
    EXPECT_EQ(rx * Vec3::UnitY(), Vec3::UnitZ());
    const RotMat3 ry = single_axis_rotation(RotationAxis::Y, 90.0);
    EXPECT_EQ(ry * Vec3::UnitZ(), Vec3::UnitX());
    EXPECT_EQ(single_axis_rotation(RotationAxis::Z, 360.0), RotMat3::Identity());
    EXPECT_EQ(single_axis_rotation(RotationAxis::Z, -270.0), rz);
}

TEST(Rotation, MatchesRodrigues)
{
    std::mt19937_64 rng(11);
    for (auto axis : {RotationAxis::X, RotationAxis::Y, RotationAxis::Z}) {
        const Vec3 unit = Vec3::Unit(static_cast<int>(axis));
        for (int i = 0; i < 200; ++i) {
            const double deg = uniform(rng, -720, 720);
            const RotMat3 ref = rodrigues(unit, deg * std::numbers::pi / 180);
            EXPECT_LT((single_axis_rotation(axis, deg) - ref).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(Rotation, GeodesicExamples)
{
    const RotMat3 i = RotMat3::Identity();
    EXPECT_EQ(relative_rotation_error(i, i), 0.0);
    EXPECT_EQ(relative_rotation_error(i, single_axis_rotation(RotationAxis::Z, 90.0)), 90.0);
    EXPECT_EQ(relative_rotation_error(i, single_axis_rotation(RotationAxis::X, 180.0)), 180.0);
    EXPECT_NEAR(relative_rotation_error(single_axis_rotation(RotationAxis::Y, 30.0), single_axis_rotation(RotationAxis::Y, -20.0)),
                50.0, 1e-9);
}

TEST(Rotation, EulerComposition)
{
    const Vec3 a(10, -20, 30);
    const RotMat3 expect = rodrigues(Vec3::UnitZ(), 30 * std::numbers::pi / 180) *
                           rodrigues(Vec3::UnitY(), -20 * std::numbers::pi / 180) *
                           rodrigues(Vec3::UnitX(), 10 * std::numbers::pi / 180);
    EXPECT_LT((euler_xyz_rotation(a) - expect).norm(), 1e-12);
}

TEST(Rotation, OrthonormalizeProjectsToSo3)
{
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        const RotMat3 r = random_rotation(rng);
        RotMat3 noisy = r;
        noisy(0, 1) += 1e-4;
        const RotMat3 fixed = orthonormalize(noisy);
        EXPECT_TRUE(is_rotation(fixed));
        EXPECT_LT((fixed - r).norm(), 1e-3);
    }
}

TEST(WrapDegrees, HalfOpenInterval)
{
    EXPECT_EQ(wrap_degrees(180.0), 180.0);
    EXPECT_EQ(wrap_degrees(-180.0), 180.0);
    EXPECT_EQ(wrap_degrees(270.0), -90.0);
    EXPECT_EQ(wrap_degrees(540.0), 180.0);
    EXPECT_EQ(wrap_degrees(-45.0), -45.0);
}

TEST(Sanitize, ClampsAndWraps)
{
    PoseUpdate u;
    u.translation_units = Vec3(4, -5, 1);
    u.angle_deg = 450;
    EXPECT_TRUE(sanitize_update(u));
    EXPECT_EQ(u.translation_units, Vec3(3, -3, 1));
    EXPECT_EQ(u.angle_deg, 90);
    EXPECT_FALSE(sanitize_update(u));
}

TEST(ApplyUpdate, RotateInPlaceAboutCentre)
{
    SceneObject box = box_object("b", {0, 0, 0}, {2, 1, 1});
    PoseUpdate u;
    u.axis = RotationAxis::Z;
    u.angle_deg = 90;
    const auto out = apply_update(RigidPose{}, box.vertices, u, 0.5);
    const Aabb after = aabb_of_points(out.vertices);
    EXPECT_LT((after.center() - Vec3(1, 0.5, 0.5)).norm(), 1e-12);
    EXPECT_LT((after.extents() - Vec3(1, 2, 1)).norm(), 1e-12);
}

TEST(ApplyUpdate, TranslationInAxisUnits)
{
    SceneObject box = box_object("b", {0, 0, 0}, {0.1, 0.1, 0.1});
    PoseUpdate u;
    u.translation_units = Vec3(2, 0, -1);
    const auto out = apply_update(RigidPose{}, box.vertices, u, 0.05);
    EXPECT_LT((aabb_of_points(out.vertices).center() - Vec3(0.15, 0.05, 0.0)).norm(), 1e-12);
    EXPECT_LT((out.pose.translation - Vec3(0.1, 0, -0.05)).norm(), 1e-12);
}

TEST(ApplyUpdate, MatchesReferenceAndPoseIsConsistent)
{
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        Points canonical(3, 12);
        for (int i = 0; i < canonical.cols(); ++i) canonical.col(i) = random_vec(rng, -0.3, 0.3);
        RigidPose pose{random_rotation(rng), random_vec(rng, -1, 1)};
        const Points world = pose.apply(canonical);
        PoseUpdate u;
        u.axis = static_cast<RotationAxis>(trial % 3);
        u.angle_deg = uniform(rng, -180, 180);
        u.translation_units = random_vec(rng, -3, 3);
        const double l = uniform(rng, 0.01, 0.2);
        const auto out = apply_update(pose, world, u, l);
        const Points ref = reference_update(world, rodrigues(Vec3::Unit(trial % 3), u.angle_deg * std::numbers::pi / 180),
                                            l * u.translation_units);
        EXPECT_LT((out.vertices - ref).cwiseAbs().maxCoeff(), 1e-9);
        // The pose places canonical points where the vertices went.
        EXPECT_LT((out.pose.apply(canonical) - out.vertices).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_TRUE(is_rotation(out.pose.rotation));
    }
}

TEST(ApplyUpdate, RejectsNonPositiveAxisLength)
{
    SceneObject box = box_object("b", {0, 0, 0}, {1, 1, 1});
    EXPECT_THROW(apply_update(RigidPose{}, box.vertices, PoseUpdate{}, 0.0), Error);
}

TEST(ApplyUpdate, FourQuarterTurnsReturnHome)
{
    SceneObject box = box_object("b", {0.1, 0.2, 0}, {0.4, 0.3, 0.2});
    RigidPose pose;
    Points v = box.vertices;
    PoseUpdate u;
    u.axis = RotationAxis::X;
    u.angle_deg = 90;
    for (int i = 0; i < 4; ++i) {
        auto out = apply_update(pose, v, u, 0.05);
        pose = out.pose;
        v = out.vertices;
    }
    EXPECT_LT((v - box.vertices).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((pose.rotation - RotMat3::Identity()).norm(), 1e-12);
}

TEST(ApplyUpdate, SpecExamples)
{
    SceneObject cube = box_object("c", {0.5, -0.5, -0.5}, {1.5, 0.5, 0.5});
    cube.vertices.col(0) << 1.5, 0, 0;  // replace a corner by an interior probe; the AABB is unchanged
    cube.vertices.conservativeResize(3, 9);
    cube.vertices.col(8) << 0.5, -0.5, -0.5;
    PoseUpdate u;
    u.axis = RotationAxis::Z;
    u.angle_deg = 90;
    auto out = apply_update(RigidPose{}, cube.vertices, u, 1.0);
    EXPECT_LT((out.vertices.col(0) - Vec3(1, 0.5, 0)).norm(), 1e-12);
    u.translation_units = Vec3(1, 0, 0);
    out = apply_update(RigidPose{}, cube.vertices, u, 0.5);
    EXPECT_LT((out.vertices.col(0) - Vec3(1.5, 0.5, 0)).norm(), 1e-12);

    const auto same = apply_update(RigidPose{}, cube.vertices, PoseUpdate{}, 0.3);
    EXPECT_EQ(same.vertices, cube.vertices);
}

TEST(ApplyUpdate, InverseMotionRestores)
{
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        SceneObject box = box_object("b", random_vec(rng, -1, 0), random_vec(rng, 0.1, 1));
        PoseUpdate u;
        u.axis = static_cast<RotationAxis>(trial % 3);
        u.angle_deg = uniform(rng, -180, 180);
        u.translation_units = random_vec(rng, -3, 3);
        const double l = uniform(rng, 0.01, 0.5);
        const auto fwd = apply_update(RigidPose{}, box.vertices, u, l);
        PoseUpdate back;
        back.axis = u.axis;
        back.angle_deg = -u.angle_deg;
        const auto rotated_back = apply_update(fwd.pose, fwd.vertices, back, l);
        PoseUpdate shift;
        shift.translation_units = -u.translation_units;
        const auto home = apply_update(rotated_back.pose, rotated_back.vertices, shift, l);
        EXPECT_LT((home.vertices - box.vertices).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(ApplyUpdate, LongChainsStayOrthonormal)
{
    std::mt19937_64 rng(9);
    SceneObject box = box_object("b", {0, 0, 0}, {0.2, 0.1, 0.05});
    RigidPose pose;
    Points v = box.vertices;
    for (int i = 0; i < 10000; ++i) {
        PoseUpdate u;
        u.axis = static_cast<RotationAxis>(i % 3);
        u.angle_deg = uniform(rng, -180, 180);
        auto out = apply_update(pose, v, u, 0.05);
        pose = out.pose;
        v = out.vertices;
    }
    EXPECT_TRUE(is_rotation(pose.rotation, 1e-9));
}

TEST(Rotation, SameAxisAnglesAdd)
{
    std::mt19937_64 rng(10);
    for (int i = 0; i < 300; ++i) {
        const auto axis = static_cast<RotationAxis>(i % 3);
        const double a = uniform(rng, -180, 180), b = uniform(rng, -180, 180);
        EXPECT_LT((single_axis_rotation(axis, a) * single_axis_rotation(axis, b) - single_axis_rotation(axis, wrap_degrees(a + b))).norm(),
                  1e-9);
    }
}

TEST(Rotation, SpecMatrices)
{
    RotMat3 z90;
    z90 << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    EXPECT_EQ(single_axis_rotation(RotationAxis::Z, 90.0), z90);
    EXPECT_EQ(single_axis_rotation(RotationAxis::X, 180.0), Vec3(1, -1, -1).asDiagonal().toDenseMatrix());
    EXPECT_EQ(single_axis_rotation(RotationAxis::Z, 0.0), RotMat3::Identity());
}
