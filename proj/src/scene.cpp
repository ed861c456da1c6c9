#include <rearrange/scene.hpp>

#include <fmt/format.h>
#include <json.hpp>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace rearrange {

using nlohmann::json;

std::string_view role_name(ObjectRole role)
{
    switch (role) {
    case ObjectRole::Unassigned: return "unassigned";
    case ObjectRole::Target: return "target";
    case ObjectRole::Related: return "related";
    case ObjectRole::Other: return "other";
    }
    return "?";
}

std::optional<std::size_t> SceneState::find(std::string_view id) const
{
    for (std::size_t i = 0; i < objects.size(); ++i) {
        if (objects[i].id == id) return i;
    }
    return std::nullopt;
}

const SceneObject& SceneState::object(std::string_view id) const
{
    const auto idx = find(id);
    if (!idx) throw Error(ErrorCode::UnknownObjectId, std::string(id));
    return objects[*idx];
}

std::optional<std::size_t> SceneState::target_index() const
{
    for (std::size_t i = 0; i < objects.size(); ++i) {
        if (objects[i].role == ObjectRole::Target) return i;
    }
    return std::nullopt;
}

const SceneObject& SceneState::target() const
{
    const auto idx = target_index();
    if (!idx) throw Error(ErrorCode::RolesUnassigned, "scene has no target object");
    return objects[*idx];
}

std::vector<std::size_t> SceneState::indices_with_role(ObjectRole role) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        if (objects[i].role == role) out.push_back(i);
    }
    return out;
}

Aabb SceneState::bounds() const
{
    if (objects.empty()) throw Error(ErrorCode::EmptyPointSet, "scene has no objects");
    Aabb box = objects.front().bounds();
    for (std::size_t i = 1; i < objects.size(); ++i) box = box.merged(objects[i].bounds());
    return box;
}

Aabb SceneState::focus_bounds() const
{
    Aabb box = target().bounds();
    for (const auto idx : indices_with_role(ObjectRole::Related)) box = box.merged(objects[idx].bounds());
    return box;
}

double SceneState::target_axis_length() const
{
    if (!roles_assigned()) throw Error(ErrorCode::RolesUnassigned, "axis length needs a target");
    return axis_length(aabb_of_points(target_canonical).extents());
}

void SceneState::set_target_pose(const RigidPose& pose)
{
    const auto idx = target_index();
    if (!idx) throw Error(ErrorCode::RolesUnassigned, "scene has no target object");
    target_pose = pose;
    objects[*idx].vertices = pose.apply(target_canonical);
}

void validate_scene(const SceneState& scene)
{
    std::set<std::string> ids;
    for (const auto& obj : scene.objects) {
        if (obj.id.empty()) throw Error(ErrorCode::MalformedManifest, "object with empty id");
        if (!ids.insert(obj.id).second) {
            throw Error(ErrorCode::MalformedManifest, fmt::format("duplicate object id '{}'", obj.id));
        }
        if (obj.vertices.cols() == 0) {
            throw Error(ErrorCode::EmptyObject, obj.id);
        }
        if (obj.faces.cols() > 0 &&
            (obj.faces.minCoeff() < 0 || obj.faces.maxCoeff() >= obj.vertices.cols())) {
            throw Error(ErrorCode::MalformedManifest, fmt::format("object '{}' has out-of-range face indices", obj.id));
        }
    }
}

namespace {

bool parse_double(std::string_view token, double& out)
{
    const auto* end = token.data() + token.size();
    const auto result = std::from_chars(token.data(), end, out);
    return result.ec == std::errc{} && result.ptr == end;
}

bool parse_index(std::string_view token, long& out)
{
    // "v", "v/vt", "v//vn", "v/vt/vn": only the position index matters.
    token = token.substr(0, token.find('/'));
    const auto* end = token.data() + token.size();
    const auto result = std::from_chars(token.data(), end, out);
    return !token.empty() && result.ec == std::errc{} && result.ptr == end;
}

std::vector<std::string_view> split_ws(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

}  // namespace

ObjMesh load_obj(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingAsset, path.string());

    std::vector<Vec3> vertices;
    std::vector<Eigen::Vector3i> faces;
    std::string line;
    int line_no = 0;
    const auto fail = [&](const std::string& why) {
        throw Error(ErrorCode::MeshParseError, fmt::format("{}:{}: {}", path.string(), line_no, why));
    };

    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find('#');
        const auto tokens = split_ws(std::string_view(line).substr(0, comment));
        if (tokens.empty()) continue;
        if (tokens[0] == "v") {
            if (tokens.size() < 4) fail("vertex record needs 3 coordinates");
            Vec3 v;
            for (int k = 0; k < 3; ++k) {
                if (!parse_double(tokens[k + 1], v(k)) || !std::isfinite(v(k))) fail("bad vertex coordinate");
            }
            vertices.push_back(v);
        } else if (tokens[0] == "f") {
            if (tokens.size() < 4) fail("face record needs at least 3 indices");
            std::vector<int> poly;
            for (std::size_t k = 1; k < tokens.size(); ++k) {
                long idx = 0;
                if (!parse_index(tokens[k], idx) || idx == 0) fail("bad face index");
                const long resolved = idx > 0 ? idx - 1 : static_cast<long>(vertices.size()) + idx;
                if (resolved < 0 || resolved >= static_cast<long>(vertices.size())) fail("face index out of range");
                poly.push_back(static_cast<int>(resolved));
            }
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) faces.emplace_back(poly[0], poly[k], poly[k + 1]);
        }
        // other record types (vt, vn, o, g, usemtl, ...) are ignored
    }
    if (vertices.empty()) {
        line_no = 0;
        fail("mesh has no vertices");
    }

    ObjMesh mesh;
    mesh.vertices.resize(3, static_cast<Eigen::Index>(vertices.size()));
    for (std::size_t i = 0; i < vertices.size(); ++i) mesh.vertices.col(static_cast<Eigen::Index>(i)) = vertices[i];
    mesh.faces.resize(3, static_cast<Eigen::Index>(faces.size()));
    for (std::size_t i = 0; i < faces.size(); ++i) mesh.faces.col(static_cast<Eigen::Index>(i)) = faces[i];
    return mesh;
}

void save_obj(const ObjMesh& mesh, const std::filesystem::path& path)
{
    std::string out;
    for (Eigen::Index i = 0; i < mesh.vertices.cols(); ++i) {
        out += fmt::format("v {} {} {}\n", mesh.vertices(0, i), mesh.vertices(1, i), mesh.vertices(2, i));
    }
    for (Eigen::Index i = 0; i < mesh.faces.cols(); ++i) {
        out += fmt::format("f {} {} {}\n", mesh.faces(0, i) + 1, mesh.faces(1, i) + 1, mesh.faces(2, i) + 1);
    }
    write_text_file(path, out);
}

SceneState load_scene_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingAsset, path.string());

    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedManifest, fmt::format("{}: {}", path.string(), e.what()));
    }

    const auto base = path.parent_path();
    SceneState scene;
    try {
        if (!doc.is_object() || !doc.contains("objects") || !doc["objects"].is_array()) {
            throw Error(ErrorCode::MalformedManifest, fmt::format("{}: missing 'objects' array", path.string()));
        }
        scene.units = doc.value("units", std::string("m"));
        for (const auto& entry : doc["objects"]) {
            SceneObject obj;
            obj.id = entry.at("id").get<std::string>();
            obj.label = entry.value("label", obj.id);
            const auto mesh_path = base / entry.at("mesh").get<std::string>();
            if (!std::filesystem::exists(mesh_path)) throw Error(ErrorCode::MissingAsset, mesh_path.string());
            auto mesh = load_obj(mesh_path);
            obj.vertices = std::move(mesh.vertices);
            obj.faces = std::move(mesh.faces);
            if (entry.contains("color")) {
                const auto c = entry.at("color").get<std::vector<int>>();
                if (c.size() != 3) throw Error(ErrorCode::MalformedManifest, fmt::format("object '{}': color needs 3 components", obj.id));
                for (int k = 0; k < 3; ++k) obj.color[k] = static_cast<std::uint8_t>(std::clamp(c[k], 0, 255));
            }
            scene.objects.push_back(std::move(obj));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedManifest, fmt::format("{}: {}", path.string(), e.what()));
    }
    validate_scene(scene);
    return scene;
}

void save_scene_manifest(const SceneState& scene, const std::filesystem::path& path)
{
    json doc;
    doc["units"] = scene.units;
    doc["objects"] = json::array();
    for (const auto& obj : scene.objects) {
        const std::string mesh_rel = fmt::format("meshes/{}.obj", obj.id);
        save_obj({obj.vertices, obj.faces}, path.parent_path() / mesh_rel);
        doc["objects"].push_back({{"id", obj.id},
                                  {"label", obj.label},
                                  {"mesh", mesh_rel},
                                  {"color", {obj.color[0], obj.color[1], obj.color[2]}}});
    }
    write_text_file(path, doc.dump(2) + "\n");
}

SceneState assign_roles(const SceneState& scene, std::string_view target_id, const std::vector<std::string>& related_ids)
{
    for (const auto& rel : related_ids) {
        if (rel == target_id) {
            throw Error(ErrorCode::RoleConflict, fmt::format("'{}' cannot be both target and related", rel));
        }
    }
    std::set<std::string> related(related_ids.begin(), related_ids.end());
    if (related.size() != related_ids.size()) throw Error(ErrorCode::RoleConflict, "duplicate related ids");

    SceneState out = scene;
    const auto target = out.find(target_id);
    if (!target) throw Error(ErrorCode::UnknownObjectId, std::string(target_id));
    for (const auto& rel : related_ids) {
        if (!out.find(rel)) throw Error(ErrorCode::UnknownObjectId, rel);
    }

    for (auto& obj : out.objects) {
        obj.role = related.contains(obj.id) ? ObjectRole::Related : ObjectRole::Other;
    }
    out.objects[*target].role = ObjectRole::Target;
    out.target_canonical = out.objects[*target].vertices;
    out.target_pose = RigidPose::identity();
    return out;
}

SceneState apply_target_update(const SceneState& scene, const PoseUpdate& update, double axis_len)
{
    const auto idx = scene.target_index();
    if (!idx) throw Error(ErrorCode::RolesUnassigned, "cannot update a scene without a target");
    SceneState next = scene;
    auto updated = apply_update(scene.target_pose, scene.objects[*idx].vertices, update, axis_len);
    next.target_pose = updated.pose;
    next.objects[*idx].vertices = std::move(updated.vertices);
    next.iteration = scene.iteration + 1;
    return next;
}

}  // namespace rearrange
