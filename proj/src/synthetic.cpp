// Procedural tabletop suite. Everything is drawn from one mt19937_64 stream
// through hand-rolled uniform helpers, whose output (unlike <random>'s
// distributions) is identical across standard libraries.

#include <rearrange/eval.hpp>

#include <fmt/format.h>

#include <array>
#include <cmath>
#include <random>

namespace rearrange {

namespace {

class PortableRng {
public:
    explicit PortableRng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t index(std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n))); }

private:
    std::mt19937_64 engine_;
};

enum class Primitive { Box, Cylinder, Wedge };

constexpr std::array kPrimitiveNames{"box", "cylinder", "wedge"};

struct Swatch {
    const char* name;
    Rgb rgb;
};

constexpr std::array<Swatch, 6> kSwatches{{{"red", {200, 50, 45}},
                                          {"green", {60, 165, 75}},
                                          {"blue", {55, 95, 200}},
                                          {"yellow", {225, 195, 50}},
                                          {"orange", {235, 130, 40}},
                                          {"purple", {135, 75, 170}}}};

constexpr double kTableHalf = 0.6;
constexpr double kPlacementHalf = 0.3;
constexpr double kGoalHalf = 0.5;
constexpr double kGap = 0.02;

SceneObject make_mesh(std::string id, std::string label, Rgb color, const std::vector<Vec3>& verts,
                      const std::vector<std::array<int, 3>>& tris)
{
    SceneObject obj;
    obj.id = std::move(id);
    obj.label = std::move(label);
    obj.color = color;
    obj.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
    for (std::size_t i = 0; i < verts.size(); ++i) obj.vertices.col(static_cast<Eigen::Index>(i)) = verts[i];
    obj.faces.resize(3, static_cast<Eigen::Index>(tris.size()));
    for (std::size_t i = 0; i < tris.size(); ++i) {
        obj.faces.col(static_cast<Eigen::Index>(i)) << tris[i][0], tris[i][1], tris[i][2];
    }
    return obj;
}

// Primitive resting on z = 0, centred at (cx, cy) with extents e.
SceneObject make_primitive(Primitive kind, const Vec3& e, double cx, double cy, std::string id, std::string label, Rgb color)
{
    const double hx = e.x() / 2, hy = e.y() / 2, h = e.z();
    std::vector<Vec3> v;
    std::vector<std::array<int, 3>> f;
    switch (kind) {
    case Primitive::Box:
        for (int i = 0; i < 8; ++i) v.emplace_back(cx + ((i & 1) ? hx : -hx), cy + ((i & 2) ? hy : -hy), (i & 4) ? h : 0.0);
        f = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
             {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
        break;
    case Primitive::Cylinder: {
        // 16 segments keep the footprint AABB symmetric about the axis.
        constexpr int n = 16;
        for (int ring = 0; ring < 2; ++ring) {
            for (int k = 0; k < n; ++k) {
                double s = 0, c = 0;
                detail::sincos_degrees(360.0 * k / n, s, c);
                v.emplace_back(cx + hx * c, cy + hy * s, ring ? h : 0.0);
            }
        }
        v.emplace_back(cx, cy, 0.0);
        v.emplace_back(cx, cy, h);
        for (int k = 0; k < n; ++k) {
            const int k1 = (k + 1) % n;
            f.push_back({k, k1, n + k1});
            f.push_back({k, n + k1, n + k});
            f.push_back({2 * n, k1, k});
            f.push_back({2 * n + 1, n + k, n + k1});
        }
        break;
    }
    case Primitive::Wedge:
        // Triangular prism: full-height face at -x sloping down to +x.
        v = {{cx - hx, cy - hy, 0}, {cx + hx, cy - hy, 0}, {cx + hx, cy + hy, 0}, {cx - hx, cy + hy, 0},
             {cx - hx, cy - hy, h}, {cx - hx, cy + hy, h}};
        f = {{0, 2, 1}, {0, 3, 2}, {0, 4, 3}, {3, 4, 5}, {1, 2, 5}, {1, 5, 4}, {0, 1, 4}, {3, 5, 2}};
        break;
    }
    return make_mesh(std::move(id), std::move(label), color, v, f);
}

SceneObject make_table()
{
    const double s = kTableHalf;
    return make_mesh("table", "table", {165, 125, 85}, {{-s, -s, 0}, {s, -s, 0}, {s, s, 0}, {-s, s, 0}}, {{{0, 1, 2}}, {{0, 2, 3}}});
}

bool separated(const Aabb& a, const Aabb& b, double gap)
{
    for (int i = 0; i < 3; ++i) {
        if (a.max(i) + gap <= b.min(i) || b.max(i) + gap <= a.min(i)) return true;
    }
    return false;
}

std::string axis_phrase(RotationAxis axis)
{
    switch (axis) {
    case RotationAxis::X: return "the front-back axis";
    case RotationAxis::Y: return "the left-right axis";
    case RotationAxis::Z: return "the vertical axis";
    }
    return {};
}

std::string relation_phrase(const Vec3& goal, const Vec3& reference)
{
    const Vec3 d = goal - reference;
    if (std::abs(d.y()) >= std::abs(d.x())) return d.y() > 0 ? "to the right of" : "to the left of";
    return d.x() > 0 ? "in front of" : "behind";
}

struct Layout {
    SceneState scene;
    std::vector<Primitive> kinds;
};

Layout sample_layout(PortableRng& rng, int primitives)
{
    Layout out;
    out.scene.objects.push_back(make_table());
    std::array<std::size_t, kSwatches.size()> order{};
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);

    for (int p = 0; p < primitives; ++p) {
        const auto kind = static_cast<Primitive>(rng.index(3));
        const Vec3 extents(rng.uniform(0.06, 0.15), rng.uniform(0.06, 0.15), rng.uniform(0.06, 0.15));
        const Vec3 e = kind == Primitive::Cylinder ? Vec3(extents.x(), extents.x(), extents.z()) : extents;
        const auto& swatch = kSwatches[order[static_cast<std::size_t>(p)]];
        const std::string label = fmt::format("{} {}", swatch.name, kPrimitiveNames[static_cast<std::size_t>(kind)]);
        const std::string id = fmt::format("{}_{}", swatch.name, kPrimitiveNames[static_cast<std::size_t>(kind)]);
        for (int attempt = 0; attempt < 100; ++attempt) {
            SceneObject obj = make_primitive(kind, e, rng.uniform(-kPlacementHalf, kPlacementHalf),
                                             rng.uniform(-kPlacementHalf, kPlacementHalf), id, label, swatch.rgb);
            const Aabb box = obj.bounds();
            bool clear = true;
            for (std::size_t i = 1; i < out.scene.objects.size(); ++i) clear = clear && separated(box, out.scene.objects[i].bounds(), 2 * kGap);
            if (clear) {
                out.scene.objects.push_back(std::move(obj));
                out.kinds.push_back(kind);
                break;
            }
        }
    }
    return out;
}

}  // namespace

std::vector<TaskSpec> generate_synthetic_suite(int n, std::uint64_t seed, const std::filesystem::path& out_dir,
                                               const SyntheticOptions& options)
{
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "suite size must be >= 1");
    PortableRng rng(seed);
    std::vector<TaskSpec> tasks;
    constexpr std::array kTracks{Track::SixDoF, Track::Position, Track::Rotation};
    constexpr std::array kAngles{90.0, -90.0, 180.0};

    for (int t = 0; t < n; ++t) {
        TaskSpec task;
        task.id = fmt::format("task_{:03d}", t);
        task.track = kTracks[static_cast<std::size_t>(t) % kTracks.size()];
        task.level = (t / 3) % 3;
        task.goal.position_tol = options.position_tol;
        task.goal.rotation_tol_deg = options.rotation_tol_deg;

        for (bool done = false; !done;) {
            Layout layout = sample_layout(rng, 2 + *task.level);
            if (static_cast<int>(layout.kinds.size()) != 2 + *task.level) continue;
            SceneState& scene = layout.scene;
            const SceneObject& target = scene.objects[1];
            const SceneObject& reference = scene.objects[2];
            const Aabb start = target.bounds();
            const Vec3 c0 = start.center();
            const double L = axis_length(start.extents());

            for (int attempt = 0; attempt < 200 && !done; ++attempt) {
                RotationAxis axis = RotationAxis::Z;
                double angle = 0;
                RotMat3 R = RotMat3::Identity();
                if (task.track != Track::Position) {
                    axis = static_cast<RotationAxis>(rng.index(3));
                    angle = kAngles[rng.index(kAngles.size())];
                    R = single_axis_rotation(axis, angle);
                }
                Vec3 d = Vec3::Zero();
                if (task.track != Track::Rotation) {
                    const double reach = options.max_translation_units * L;
                    d.x() = rng.uniform(-reach, reach);
                    d.y() = rng.uniform(-reach, reach);
                    if (d.head<2>().norm() < std::min(0.08, reach)) continue;
                }
                // Keep the rotated target resting on the table.
                const Points rotated = (R * (target.vertices.colwise() - c0)).colwise() + c0;
                d.z() = -aabb_of_points(rotated).min.z();
                if ((d / L).cwiseAbs().maxCoeff() > options.max_translation_units) continue;

                const Points placed = rotated.colwise() + d;
                const Aabb goal_box = aabb_of_points(placed);
                bool clear = goal_box.min.x() > -kGoalHalf && goal_box.max.x() < kGoalHalf && goal_box.min.y() > -kGoalHalf &&
                             goal_box.max.y() < kGoalHalf;
                for (std::size_t i = 2; i < scene.objects.size() && clear; ++i) clear = separated(goal_box, scene.objects[i].bounds(), kGap);
                if (!clear) continue;

                task.goal.position = goal_box.center();
                task.goal.rotation = R;
                task.oracle_goal_pose = RigidPose{R, c0 - R * c0 + d};
                task.roles = GroundTruthRoles{target.id, {reference.id}};
                const std::string where = fmt::format("{} the {}", relation_phrase(goal_box.center(), reference.bounds().center()),
                                                      reference.label);
                const std::string turn = fmt::format("{:g} degrees about {}", std::abs(angle), axis_phrase(axis));
                switch (task.track) {
                case Track::Position: task.instruction = fmt::format("Move the {} so that it sits {}.", target.label, where); break;
                case Track::Rotation:
                    task.instruction = fmt::format("Turn the {} {} without moving it away from the {}.", target.label, turn, reference.label);
                    break;
                case Track::SixDoF:
                    task.instruction = fmt::format("Place the {} {} and turn it {}.", target.label, where, turn);
                    break;
                }
                const auto rel = std::filesystem::path("scenes") / task.id / "scene.json";
                save_scene_manifest(scene, out_dir / rel);
                task.scene = rel;
                done = true;
            }
        }
        tasks.push_back(std::move(task));
    }
    save_suite(tasks, out_dir / "suite.json");
    for (auto& task : tasks) task.scene = out_dir / task.scene;
    return tasks;
}

}  // namespace rearrange
