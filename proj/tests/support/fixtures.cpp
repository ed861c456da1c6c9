#include "fixtures.hpp"

#include <cstdlib>
#include <limits>
#include <mutex>

namespace rearrange::testing {

std::filesystem::path scratch_dir(const std::string& name)
{
    const char* root = std::getenv("REARRANGE_TEST_TMP");
    const auto base = root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "rearrange_tests";
    const auto dir = base / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

double uniform(std::mt19937_64& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 random_vec(std::mt19937_64& rng, double lo, double hi)
{
    return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

RotMat3 random_rotation(std::mt19937_64& rng)
{
    std::normal_distribution<double> n;
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized().toRotationMatrix();
}

SceneObject box_object(const std::string& id, const Vec3& lo, const Vec3& hi, Rgb color)
{
    SceneObject obj;
    obj.id = id;
    obj.label = id;
    obj.color = color;
    obj.vertices.resize(3, 8);
    for (int i = 0; i < 8; ++i) {
        obj.vertices.col(i) << ((i & 1) ? hi.x() : lo.x()), ((i & 2) ? hi.y() : lo.y()), ((i & 4) ? hi.z() : lo.z());
    }
    obj.faces.resize(3, 12);
    obj.faces << 0, 1, 4, 5, 0, 1, 2, 3, 0, 2, 1, 3,
                 2, 2, 5, 7, 1, 5, 6, 6, 4, 4, 3, 7,
                 1, 3, 6, 6, 4, 4, 3, 7, 2, 6, 5, 5;
    return obj;
}

SceneObject quad_x(const std::string& id, double x, double y0, double y1, double z0, double z1, Rgb color)
{
    SceneObject obj;
    obj.id = id;
    obj.label = id;
    obj.color = color;
    obj.vertices.resize(3, 4);
    obj.vertices << x, x, x, x,
                    y0, y1, y1, y0,
                    z0, z0, z1, z1;
    obj.faces.resize(3, 2);
    obj.faces << 0, 0,
                 1, 2,
                 2, 3;
    return obj;
}

SceneState two_box_scene()
{
    SceneState s;
    SceneObject table;
    table.id = "table";
    table.label = "table";
    table.color = {160, 120, 80};
    table.vertices.resize(3, 4);
    table.vertices << -0.5, 0.5, 0.5, -0.5,
                      -0.5, -0.5, 0.5, 0.5,
                      0, 0, 0, 0;
    table.faces.resize(3, 2);
    table.faces << 0, 0,
                   1, 2,
                   2, 3;
    s.objects.push_back(table);
    s.objects.push_back(box_object("red_box", {-0.2, -0.1, 0}, {-0.1, 0.05, 0.08}, {200, 40, 40}));
    s.objects.push_back(box_object("blue_box", {0.1, 0.0, 0}, {0.2, 0.1, 0.12}, {40, 60, 200}));
    s.objects[1].label = "red box";
    s.objects[2].label = "blue box";
    return s;
}

SceneState random_box_scene(std::mt19937_64& rng, int boxes)
{
    SceneState s;
    for (int i = 0; i < boxes; ++i) {
        const Vec3 lo = random_vec(rng, -1.0, 0.8);
        const Vec3 hi = lo + random_vec(rng, 0.02, 0.4);
        s.objects.push_back(box_object("box_" + std::to_string(i), lo, hi,
                                       {static_cast<std::uint8_t>(40 + 50 * i % 200), 120, static_cast<std::uint8_t>(200 - 30 * i % 150)}));
    }
    return s;
}

RotMat3 rodrigues(const Vec3& axis, double angle_rad)
{
    const Vec3 k = axis.normalized();
    RotMat3 K;
    K << 0, -k.z(), k.y(),
         k.z(), 0, -k.x(),
         -k.y(), k.x(), 0;
    return RotMat3::Identity() + std::sin(angle_rad) * K + (1 - std::cos(angle_rad)) * K * K;
}

Points reference_update(const Points& vertices, const RotMat3& r, const Vec3& t)
{
    Vec3 lo = vertices.col(0), hi = vertices.col(0);
    for (Eigen::Index i = 1; i < vertices.cols(); ++i) {
        for (int a = 0; a < 3; ++a) {
            lo(a) = std::min(lo(a), vertices(a, i));
            hi(a) = std::max(hi(a), vertices(a, i));
        }
    }
    const Vec3 b = 0.5 * (lo + hi);
    Points out(3, vertices.cols());
    for (Eigen::Index i = 0; i < vertices.cols(); ++i) {
        const Vec3 p = vertices.col(i);
        Vec3 q;
        for (int row = 0; row < 3; ++row) {
            double acc = 0;
            for (int c = 0; c < 3; ++c) acc += r(row, c) * (p(c) - b(c));
            q(row) = acc + b(row) + t(row);
        }
        out.col(i) = q;
    }
    return out;
}

RayHit raycast_pixel(const SceneState& scene, const Camera& camera, int x, int y, double edge_eps)
{
    const auto& k = camera.intrinsics;
    const RotMat3 rot = camera.pose.world_to_camera_rotation();
    const Vec3 dir_cam((x + 0.5 - k.cx) / k.fx, (y + 0.5 - k.cy) / k.fy, 1.0);
    const Vec3 dir = rot.transpose() * dir_cam;
    const Vec3 origin = camera.pose.position;

    RayHit best;
    double second = std::numeric_limits<double>::infinity();
    int second_object = kBackgroundId;
    bool best_edge = false;
    for (std::size_t oi = 0; oi < scene.objects.size(); ++oi) {
        const auto& obj = scene.objects[oi];
        for (Eigen::Index f = 0; f < obj.faces.cols(); ++f) {
            const Vec3 a = obj.vertices.col(obj.faces(0, f));
            const Vec3 e1 = Vec3(obj.vertices.col(obj.faces(1, f))) - a;
            const Vec3 e2 = Vec3(obj.vertices.col(obj.faces(2, f))) - a;
            const Vec3 pvec = dir.cross(e2);
            const double det = e1.dot(pvec);
            if (std::abs(det) < 1e-15) continue;
            const Vec3 tvec = origin - a;
            const double bu = tvec.dot(pvec) / det;
            const Vec3 qvec = tvec.cross(e1);
            const double bv = dir.dot(qvec) / det;
            const double t = e2.dot(qvec) / det;
            const double bw = 1 - bu - bv;
            if (bu < -edge_eps || bv < -edge_eps || bw < -edge_eps || t <= 0) continue;
            const bool near_edge = bu < edge_eps || bv < edge_eps || bw < edge_eps;
            if (t < best.depth) {
                if (best.object != static_cast<int>(oi)) {
                    second = best.depth;
                    second_object = best.object;
                }
                best.depth = t;
                best.object = static_cast<int>(oi);
                best_edge = near_edge;
            } else if (t < second && static_cast<int>(oi) != best.object) {
                second = t;
                second_object = static_cast<int>(oi);
            }
            if (near_edge && std::abs(t - best.depth) < 1e-9) best_edge = true;
        }
    }
    best.ambiguous = best_edge || (second_object != kBackgroundId && second - best.depth < 1e-4 * best.depth);
    return best;
}

std::vector<double> brute_knn_mean(const Points& points, int k)
{
    const auto n = points.cols();
    std::vector<double> out(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<double> d;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i) d.push_back((points.col(i) - points.col(j)).norm());
        }
        std::sort(d.begin(), d.end());
        const auto m = std::min<std::size_t>(static_cast<std::size_t>(k), d.size());
        double sum = 0;
        for (std::size_t q = 0; q < m; ++q) sum += d[q];
        out[static_cast<std::size_t>(i)] = m ? sum / static_cast<double>(m) : 0.0;
    }
    return out;
}

RgbdFrame render_rgbd(const SceneState& scene, const Camera& camera)
{
    const RenderOutput r = render(scene, camera);
    RgbdFrame f;
    f.color = r.rgb;
    f.intrinsics = camera.intrinsics;
    f.depth = DepthMap::Zero(r.height(), r.width());
    for (int y = 0; y < r.height(); ++y) {
        for (int x = 0; x < r.width(); ++x) {
            if (r.object_id(y, x) != kBackgroundId) f.depth(y, x) = r.depth(y, x);
        }
    }
    const RotMat3 rot = camera.pose.world_to_camera_rotation();
    f.camera_pose.topLeftCorner<3, 3>() = rot.transpose();
    f.camera_pose.topRightCorner<3, 1>() = camera.pose.position;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        if (r.pixel_count(static_cast<int>(i)) == 0) continue;
        Mask m = (r.object_id.array() == static_cast<int>(i)).matrix();
        f.masks.emplace(scene.objects[i].id, std::move(m));
        f.labels[scene.objects[i].id] = scene.objects[i].label;
    }
    return f;
}

std::string ScriptedBackend::complete(const AgentRequest& request)
{
    requests_.push_back(request);
    auto& q = queues_[request.role];
    if (q.empty()) throw Error(ErrorCode::BackendUnavailable, "scripted backend has no response queued");
    std::string out = q.front();
    if (q.size() > 1) q.pop_front();
    return out;
}

std::string FailingBackend::complete(const AgentRequest&)
{
    throw Error(code_, "scripted failure");
}

const std::vector<TaskSpec>& cached_suite(int n, std::uint64_t seed, const SyntheticOptions& options, const std::string& name)
{
    static std::mutex mutex;
    static std::map<std::string, std::vector<TaskSpec>> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(name);
    if (it == cache.end()) it = cache.emplace(name, generate_synthetic_suite(n, seed, scratch_dir(name), options)).first;
    return it->second;
}

BackendFactory oracle_factory(std::uint64_t seed, double noise_prob, bool adversarial)
{
    return [=](const TaskSpec& task, const SceneState& scene) -> std::unique_ptr<AgentBackend> {
        OracleConfig c = oracle_config_for(task, scene, seed, noise_prob);
        c.adversarial = adversarial;
        return std::make_unique<OracleBackend>(c);
    };
}

}  // namespace rearrange::testing
