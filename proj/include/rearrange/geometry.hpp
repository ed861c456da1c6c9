#pragma once

// Rigid-transform algebra for the rearrangement loop: bounding boxes, the
// axis-length rule, single-axis rotations and the pivoted scene update.
// Everything here is templated on the scalar type; the double aliases at the
// bottom are what the rest of the library uses.

#include <rearrange/error.hpp>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

namespace rearrange {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
/// Point sets are stored column-wise, one point per column.
template <typename Scalar>
using Points3 = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

enum class RotationAxis { X = 0, Y = 1, Z = 2 };

constexpr std::string_view axis_name(RotationAxis axis)
{
    switch (axis) {
    case RotationAxis::X: return "x";
    case RotationAxis::Y: return "y";
    case RotationAxis::Z: return "z";
    }
    return "?";
}

inline std::optional<RotationAxis> parse_axis(std::string_view text)
{
    if (text == "x" || text == "X") return RotationAxis::X;
    if (text == "y" || text == "Y") return RotationAxis::Y;
    if (text == "z" || text == "Z") return RotationAxis::Z;
    return std::nullopt;
}

template <typename Scalar>
struct RigidPoseT {
    Matrix3<Scalar> rotation = Matrix3<Scalar>::Identity();
    Vector3<Scalar> translation = Vector3<Scalar>::Zero();

    static RigidPoseT identity() { return {}; }

    /// World placement of canonical points: R * p + t.
    template <typename Derived>
    Points3<Scalar> apply(const Eigen::MatrixBase<Derived>& canonical) const
    {
        return (rotation * canonical).colwise() + translation;
    }
};

template <typename Scalar>
struct AabbT {
    Vector3<Scalar> min = Vector3<Scalar>::Zero();
    Vector3<Scalar> max = Vector3<Scalar>::Zero();

    Vector3<Scalar> center() const { return (min + max) / Scalar(2); }
    Vector3<Scalar> extents() const { return max - min; }
    Scalar volume() const { return extents().prod(); }
    Scalar diagonal() const { return extents().norm(); }

    bool contains(const Vector3<Scalar>& p) const
    {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }

    AabbT merged(const AabbT& other) const { return {min.cwiseMin(other.min), max.cwiseMax(other.max)}; }

    Scalar intersection_volume(const AabbT& other) const
    {
        const Vector3<Scalar> lo = min.cwiseMax(other.min);
        const Vector3<Scalar> hi = max.cwiseMin(other.max);
        return (hi - lo).cwiseMax(Scalar(0)).prod();
    }

    /// Corner i has bit 0 -> x, bit 1 -> y, bit 2 -> z selecting max over min.
    Eigen::Matrix<Scalar, 3, 8> corners() const
    {
        Eigen::Matrix<Scalar, 3, 8> out;
        for (int i = 0; i < 8; ++i) {
            out(0, i) = (i & 1) ? max.x() : min.x();
            out(1, i) = (i & 2) ? max.y() : min.y();
            out(2, i) = (i & 4) ? max.z() : min.z();
        }
        return out;
    }
};

template <typename Derived>
AabbT<typename Derived::Scalar> aabb_of_points(const Eigen::MatrixBase<Derived>& points)
{
    static_assert(Derived::RowsAtCompileTime == 3, "points must be 3xN");
    if (points.cols() == 0) {
        throw Error(ErrorCode::EmptyPointSet, "cannot bound an empty point set");
    }
    if (!points.allFinite()) {
        throw Error(ErrorCode::InvalidArgument, "point set contains non-finite coordinates");
    }
    return {points.rowwise().minCoeff(), points.rowwise().maxCoeff()};
}

/// Axis length L for the object-centred axes overlay; also the unit in which
/// proposer translations are expressed. Takes the shortest box edge, halved
/// when the box is not elongated (2 * min > max).
template <typename Scalar>
Scalar axis_length(const Vector3<Scalar>& extents)
{
    if (!(extents.array() > Scalar(0)).all()) {
        throw Error(ErrorCode::DegenerateAabb, "axis length needs strictly positive AABB extents");
    }
    const Scalar shortest = extents.minCoeff();
    const Scalar longest = extents.maxCoeff();
    return Scalar(2) * shortest <= longest ? shortest : shortest / Scalar(2);
}

/// Wraps into (-180, 180].
template <typename Scalar>
Scalar wrap_degrees(Scalar deg)
{
    Scalar wrapped = std::fmod(deg, Scalar(360));
    if (wrapped > Scalar(180)) wrapped -= Scalar(360);
    if (wrapped <= Scalar(-180)) wrapped += Scalar(360);
    return wrapped;
}

namespace detail {

// Quarter turns come out exact so that 90/180 degree proposals compose
// without round-off.
template <typename Scalar>
void sincos_degrees(Scalar deg, Scalar& s, Scalar& c)
{
    const Scalar wrapped = wrap_degrees(deg);
    if (wrapped == Scalar(0)) {
        s = 0, c = 1;
    } else if (wrapped == Scalar(90)) {
        s = 1, c = 0;
    } else if (wrapped == Scalar(180)) {
        s = 0, c = -1;
    } else if (wrapped == Scalar(-90)) {
        s = -1, c = 0;
    } else {
        const Scalar rad = wrapped * std::numbers::pi_v<Scalar> / Scalar(180);
        s = std::sin(rad);
        c = std::cos(rad);
    }
}

}  // namespace detail

/// Right-hand-rule rotation about a world axis; angle in degrees.
template <typename Scalar = double>
Matrix3<Scalar> single_axis_rotation(RotationAxis axis, Scalar angle_deg)
{
    Scalar s, c;
    detail::sincos_degrees(angle_deg, s, c);
    Matrix3<Scalar> r;
    switch (axis) {
    case RotationAxis::X:
        r << 1, 0, 0,
             0, c, -s,
             0, s, c;
        break;
    case RotationAxis::Y:
        r << c, 0, s,
             0, 1, 0,
             -s, 0, c;
        break;
    case RotationAxis::Z:
        r << c, -s, 0,
             s, c, 0,
             0, 0, 1;
        break;
    }
    return r;
}

/// Extrinsic x, then y, then z rotation: Rz * Ry * Rx.
template <typename Scalar>
Matrix3<Scalar> euler_xyz_rotation(const Vector3<Scalar>& angles_deg)
{
    return single_axis_rotation(RotationAxis::Z, angles_deg.z()) *
           single_axis_rotation(RotationAxis::Y, angles_deg.y()) *
           single_axis_rotation(RotationAxis::X, angles_deg.x());
}

/// Nearest rotation in the Frobenius sense (polar factor), det forced to +1.
template <typename Scalar>
Matrix3<Scalar> orthonormalize(const Matrix3<Scalar>& m)
{
    Eigen::JacobiSVD<Matrix3<Scalar>> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Matrix3<Scalar> u = svd.matrixU();
    const Matrix3<Scalar> v = svd.matrixV();
    if ((u * v.transpose()).determinant() < Scalar(0)) {
        u.col(2) = -u.col(2);
    }
    return u * v.transpose();
}

template <typename Scalar>
bool is_rotation(const Matrix3<Scalar>& m, Scalar tol = Scalar(1e-9))
{
    return (m.transpose() * m - Matrix3<Scalar>::Identity()).norm() < tol &&
           std::abs(m.determinant() - Scalar(1)) <= tol;
}

/// Geodesic angle between two rotations, in degrees, within [0, 180].
template <typename Scalar>
Scalar relative_rotation_error(const Matrix3<Scalar>& a, const Matrix3<Scalar>& b)
{
    const Scalar cosine = std::clamp(((a.transpose() * b).trace() - Scalar(1)) / Scalar(2), Scalar(-1), Scalar(1));
    return std::acos(cosine) * Scalar(180) / std::numbers::pi_v<Scalar>;
}

/// Incremental update (t_hat, axis, angle). Translation is in axis-length
/// units. When euler_xyz_deg is set the update is a general rotation (the
/// Euler ablation) and axis/angle are ignored.
template <typename Scalar>
struct PoseUpdateT {
    Vector3<Scalar> translation_units = Vector3<Scalar>::Zero();
    RotationAxis axis = RotationAxis::Z;
    Scalar angle_deg = 0;
    std::optional<Vector3<Scalar>> euler_xyz_deg;

    Matrix3<Scalar> rotation() const
    {
        return euler_xyz_deg ? euler_xyz_rotation(*euler_xyz_deg) : single_axis_rotation(axis, angle_deg);
    }
};

/// Brings an update inside its invariants: angles wrapped into (-180, 180],
/// translation components clamped to [-clamp, clamp]. Returns true when
/// anything changed.
template <typename Scalar>
bool sanitize_update(PoseUpdateT<Scalar>& update, Scalar clamp = Scalar(3))
{
    bool changed = false;
    const auto fix_angle = [&](Scalar& a) {
        const Scalar w = wrap_degrees(a);
        if (w != a && !(a == Scalar(-180) && w == Scalar(180))) changed = true;
        a = w;
    };
    fix_angle(update.angle_deg);
    if (update.euler_xyz_deg) {
        for (int i = 0; i < 3; ++i) fix_angle((*update.euler_xyz_deg)(i));
    }
    const Vector3<Scalar> clamped = update.translation_units.cwiseMax(-clamp).cwiseMin(clamp);
    if (clamped != update.translation_units) changed = true;
    update.translation_units = clamped;
    return changed;
}

template <typename Scalar>
struct UpdatedTarget {
    RigidPoseT<Scalar> pose;
    Points3<Scalar> vertices;
};

/// The scene-state update. With b the AABB centre of the current world
/// vertices, R the update rotation and t = axis_len * t_hat:
///   R' = R * R_old,  t' = R (t_old - b) + b + t,  p' = R (p - b) + b + t.
/// The new rotation is re-projected onto SO(3) to keep long chains from
/// drifting.
template <typename Scalar, typename Derived>
UpdatedTarget<Scalar> apply_update(const RigidPoseT<Scalar>& pose, const Eigen::MatrixBase<Derived>& vertices,
                                   const PoseUpdateT<Scalar>& update, Scalar axis_len)
{
    if (!(axis_len > Scalar(0))) {
        throw Error(ErrorCode::InvalidArgument, "axis length must be positive");
    }
    const Vector3<Scalar> pivot = aabb_of_points(vertices).center();
    const Matrix3<Scalar> r = update.rotation();
    const Vector3<Scalar> offset = pivot + axis_len * update.translation_units;

    UpdatedTarget<Scalar> out;
    out.pose.rotation = orthonormalize<Scalar>(r * pose.rotation);
    out.pose.translation = r * (pose.translation - pivot) + offset;
    out.vertices = (r * (vertices.colwise() - pivot)).colwise() + offset;
    return out;
}

using Vec3 = Vector3<double>;
using RotMat3 = Matrix3<double>;
using Points = Points3<double>;
using RigidPose = RigidPoseT<double>;
using Aabb = AabbT<double>;
using PoseUpdate = PoseUpdateT<double>;

}  // namespace rearrange
