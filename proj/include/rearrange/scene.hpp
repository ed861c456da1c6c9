#pragma once

#include <rearrange/geometry.hpp>
#include <rearrange/image.hpp>

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rearrange {

enum class ObjectRole { Unassigned, Target, Related, Other };

std::string_view role_name(ObjectRole role);

using Faces = Eigen::Matrix<int, 3, Eigen::Dynamic>;

struct SceneObject {
    std::string id;
    std::string label;
    Points vertices;  ///< world coordinates
    Faces faces;      ///< empty for point clouds
    ObjectRole role = ObjectRole::Unassigned;
    Rgb color{180, 180, 180};

    bool is_point_cloud() const { return faces.cols() == 0; }
    Aabb bounds() const { return aabb_of_points(vertices); }
};

/// Scene state: the target is stored both in canonical coordinates and as the
/// world-space copy inside `objects`; the two are kept consistent through
/// `target_pose`. Non-target objects never move.
struct SceneState {
    std::vector<SceneObject> objects;
    RigidPose target_pose;
    Points target_canonical;
    int iteration = 0;
    std::string units = "m";

    std::optional<std::size_t> find(std::string_view id) const;
    const SceneObject& object(std::string_view id) const;

    std::optional<std::size_t> target_index() const;
    const SceneObject& target() const;
    std::vector<std::size_t> indices_with_role(ObjectRole role) const;
    bool roles_assigned() const { return target_index().has_value(); }

    Aabb bounds() const;
    /// AABB of the target's current world vertices together with all related objects.
    Aabb focus_bounds() const;
    /// Axis length derived from the canonical target AABB; fixed for a whole loop.
    double target_axis_length() const;

    /// Replaces the target pose and re-derives its world vertices from the canonical copy.
    void set_target_pose(const RigidPose& pose);
};

/// Validates ids, face indices and vertex counts.
void validate_scene(const SceneState& scene);

struct ObjMesh {
    Points vertices;
    Faces faces;
};

ObjMesh load_obj(const std::filesystem::path& path);
void save_obj(const ObjMesh& mesh, const std::filesystem::path& path);

/// Manifest JSON: {"units": "m", "objects": [{"id", "label", "mesh", "color": [r,g,b]}]}.
/// Mesh paths resolve relative to the manifest directory.
SceneState load_scene_manifest(const std::filesystem::path& path);

/// Writes one OBJ per object next to the manifest (meshes/<id>.obj) with
/// round-trip precision. Point-cloud objects are written as vertex-only OBJ.
void save_scene_manifest(const SceneState& scene, const std::filesystem::path& path);

/// Assigns roles and canonicalises the target: its current world vertices
/// become the canonical vertices and the pose resets to identity.
SceneState assign_roles(const SceneState& scene, std::string_view target_id,
                        const std::vector<std::string>& related_ids);

/// Applies a pose update to the target and returns the next state
/// (iteration + 1). Non-target objects are copied untouched.
SceneState apply_target_update(const SceneState& scene, const PoseUpdate& update, double axis_len);

}  // namespace rearrange
