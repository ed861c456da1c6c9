#include <rearrange/rgbd.hpp>

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <unordered_map>

namespace rearrange {

using nlohmann::json;

void RgbdFrame::validate() const
{
    intrinsics.validate();
    const auto h = static_cast<Eigen::Index>(intrinsics.height);
    const auto w = static_cast<Eigen::Index>(intrinsics.width);
    if (depth.rows() != h || depth.cols() != w) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("depth is {}x{}, intrinsics say {}x{}", depth.cols(), depth.rows(), w, h));
    }
    if (color.width != 0 && (color.width != w || color.height != h)) {
        throw Error(ErrorCode::InvalidArgument, "color and depth sizes differ");
    }
    if ((depth.array() < 0).any() || !depth.allFinite()) {
        throw Error(ErrorCode::InvalidArgument, "depth must be finite and non-negative");
    }
    for (const auto& [id, mask] : masks) {
        if (mask.rows() != h || mask.cols() != w) throw Error(ErrorCode::InvalidArgument, fmt::format("mask '{}' has wrong size", id));
    }
}

Vec3 back_project(double u, double v, double depth, const CameraIntrinsics& k)
{
    return {(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth};
}

namespace {

// Uniform hash grid for exact k-nearest-neighbour queries: cells are searched
// in growing Chebyshev rings until no unvisited cell can hold a closer point.
class PointGrid {
public:
    PointGrid(const Points& points, int k) : points_(points)
    {
        const Aabb box = aabb_of_points(points);
        origin_ = box.min;
        const double extent = box.extents().maxCoeff();
        const double n = static_cast<double>(points.cols());
        // Aim for roughly k points per occupied cell on a surface-like cloud.
        cell_ = extent > 0 ? extent / std::max(1.0, std::sqrt(n / std::max(k, 1))) : 1.0;
        for (Eigen::Index i = 0; i < points.cols(); ++i) cells_[key(cell_of(points.col(i)))].push_back(i);
    }

    /// Sorted distances from point i to its k nearest other points.
    std::vector<double> nearest(Eigen::Index i, int k) const
    {
        const Eigen::Vector3i c = cell_of(points_.col(i));
        std::priority_queue<double> best;
        const Eigen::Index total = points_.cols() - 1;
        Eigen::Index visited = 0;
        for (int ring = 0;; ++ring) {
            for (int dx = -ring; dx <= ring; ++dx) {
                for (int dy = -ring; dy <= ring; ++dy) {
                    for (int dz = -ring; dz <= ring; ++dz) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
                        const auto it = cells_.find(key(c + Eigen::Vector3i(dx, dy, dz)));
                        if (it == cells_.end()) continue;
                        for (const Eigen::Index j : it->second) {
                            if (j == i) continue;
                            ++visited;
                            const double d = (points_.col(j) - points_.col(i)).norm();
                            if (static_cast<int>(best.size()) < k) {
                                best.push(d);
                            } else if (d < best.top()) {
                                best.pop();
                                best.push(d);
                            }
                        }
                    }
                }
            }
            const bool full = static_cast<int>(best.size()) == k;
            if (visited >= total || (full && best.top() <= ring * cell_)) break;
        }
        std::vector<double> out;
        while (!best.empty()) {
            out.push_back(best.top());
            best.pop();
        }
        std::reverse(out.begin(), out.end());
        return out;
    }

private:
    Eigen::Vector3i cell_of(const Vec3& p) const
    {
        return ((p - origin_) / cell_).array().floor().cast<int>();
    }

    // Exact packing, 21 bits per axis around a centred offset.
    static std::uint64_t key(const Eigen::Vector3i& c)
    {
        constexpr std::int64_t offset = 1 << 20;
        const auto pack = [](int v) { return static_cast<std::uint64_t>(std::clamp<std::int64_t>(v + offset, 0, 2 * offset - 1)); };
        return (pack(c.x()) << 42) | (pack(c.y()) << 21) | pack(c.z());
    }

    const Points& points_;
    Vec3 origin_;
    double cell_ = 1;
    std::unordered_map<std::uint64_t, std::vector<Eigen::Index>> cells_;
};

}  // namespace

std::vector<double> knn_mean_distances(const Points& points, int k)
{
    const Eigen::Index n = points.cols();
    std::vector<double> means(static_cast<std::size_t>(n), 0.0);
    const int kk = static_cast<int>(std::min<Eigen::Index>(k, n - 1));
    if (kk <= 0) return means;
    const PointGrid grid(points, kk);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto d = grid.nearest(i, kk);
        means[static_cast<std::size_t>(i)] = std::accumulate(d.begin(), d.end(), 0.0) / kk;
    }
    return means;
}

std::vector<Eigen::Index> inlier_indices(const Points& points, int k, double std_ratio)
{
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
    const Eigen::Index n = points.cols();
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    if (n <= 1) return all;

    const auto means = knn_mean_distances(points, k);
    // Summing in sorted order keeps the statistics independent of point order.
    std::vector<double> sorted = means;
    std::sort(sorted.begin(), sorted.end());
    const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
    double var = 0;
    for (const double m : sorted) var += (m - mean) * (m - mean);
    const double stddev = std::sqrt(var / static_cast<double>(n));
    const double threshold = mean + std_ratio * stddev;

    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (means[static_cast<std::size_t>(i)] <= threshold) kept.push_back(i);
    }
    return kept.empty() ? all : kept;
}

Points remove_outliers(const Points& points, int k, double std_ratio)
{
    if (points.cols() == 0) throw Error(ErrorCode::EmptyPointSet, "outlier removal on an empty cloud");
    const auto kept = inlier_indices(points, k, std_ratio);
    Points out(3, static_cast<Eigen::Index>(kept.size()));
    for (std::size_t i = 0; i < kept.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = points.col(kept[i]);
    return out;
}

SceneState lift_rgbd(const RgbdFrame& frame, const LiftOptions& options)
{
    frame.validate();
    if (frame.masks.empty()) throw Error(ErrorCode::InvalidArgument, "RGB-D frame has no object masks");

    const RotMat3 rotation = frame.camera_pose.topLeftCorner<3, 3>();
    const Vec3 translation = frame.camera_pose.topRightCorner<3, 1>();

    SceneState scene;
    for (const auto& [id, mask] : frame.masks) {
        std::vector<Vec3> pts;
        Eigen::Vector3d color_sum = Eigen::Vector3d::Zero();
        for (Eigen::Index v = 0; v < mask.rows(); ++v) {
            for (Eigen::Index u = 0; u < mask.cols(); ++u) {
                const double d = frame.depth(v, u);
                if (!mask(v, u) || !(d > 0)) continue;
                // Depth is sampled at the pixel centre, as the renderer does.
                pts.push_back(rotation * back_project(u + 0.5, v + 0.5, d, frame.intrinsics) + translation);
                if (frame.color.width > 0) {
                    const Rgb c = frame.color.at(static_cast<int>(u), static_cast<int>(v));
                    color_sum += Eigen::Vector3d(c[0], c[1], c[2]);
                }
            }
        }
        if (pts.empty()) throw Error(ErrorCode::EmptyObject, id);

        SceneObject obj;
        obj.id = id;
        const auto label = frame.labels.find(id);
        obj.label = label != frame.labels.end() ? label->second : id;
        obj.vertices.resize(3, static_cast<Eigen::Index>(pts.size()));
        for (std::size_t i = 0; i < pts.size(); ++i) obj.vertices.col(static_cast<Eigen::Index>(i)) = pts[i];
        if (frame.color.width > 0) {
            const Eigen::Vector3d mean = color_sum / static_cast<double>(pts.size());
            for (int c = 0; c < 3; ++c) obj.color[c] = static_cast<std::uint8_t>(std::lround(mean(c)));
        }
        if (options.remove_outliers) {
            obj.vertices = remove_outliers(obj.vertices, options.outliers.k, options.outliers.std_ratio);
        }
        scene.objects.push_back(std::move(obj));
    }
    validate_scene(scene);
    return scene;
}

namespace {

json read_json_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingAsset, path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedManifest, fmt::format("{}: {}", path.string(), e.what()));
    }
}

}  // namespace

RgbdFrame load_rgbd_bundle(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::MissingAsset, dir.string());
    RgbdFrame frame;
    double depth_scale = 0.001;
    try {
        const json intr = read_json_file(dir / "intrinsics.json");
        frame.intrinsics = {intr.at("fx").get<double>(), intr.at("fy").get<double>(), intr.at("cx").get<double>(),
                            intr.at("cy").get<double>(), intr.at("width").get<int>(),  intr.at("height").get<int>()};
        if (intr.contains("camera_pose")) {
            const auto rows = intr.at("camera_pose").get<std::vector<std::vector<double>>>();
            if (rows.size() != 4) throw Error(ErrorCode::MalformedManifest, "camera_pose must be 4x4");
            for (int r = 0; r < 4; ++r) {
                if (rows[r].size() != 4) throw Error(ErrorCode::MalformedManifest, "camera_pose must be 4x4");
                for (int c = 0; c < 4; ++c) frame.camera_pose(r, c) = rows[r][c];
            }
        }
        depth_scale = intr.value("depth_scale", 0.001);
        if (std::filesystem::exists(dir / "labels.json")) {
            frame.labels = read_json_file(dir / "labels.json").get<std::map<std::string, std::string>>();
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedManifest, fmt::format("{}: {}", dir.string(), e.what()));
    }

    if (std::filesystem::exists(dir / "color.png")) frame.color = read_png_rgb(dir / "color.png");

    const GrayImage depth = read_png_gray(dir / "depth.png");
    frame.depth.resize(depth.height, depth.width);
    for (int v = 0; v < depth.height; ++v) {
        for (int u = 0; u < depth.width; ++u) frame.depth(v, u) = depth.at(u, v) * depth_scale;
    }

    const auto mask_dir = dir / "masks";
    if (!std::filesystem::is_directory(mask_dir)) throw Error(ErrorCode::MissingAsset, mask_dir.string());
    std::vector<std::filesystem::path> mask_files;
    for (const auto& entry : std::filesystem::directory_iterator(mask_dir)) {
        if (entry.path().extension() == ".png") mask_files.push_back(entry.path());
    }
    std::sort(mask_files.begin(), mask_files.end());
    for (const auto& file : mask_files) {
        const GrayImage m = read_png_gray(file);
        Mask mask(m.height, m.width);
        for (int v = 0; v < m.height; ++v) {
            for (int u = 0; u < m.width; ++u) mask(v, u) = m.at(u, v) != 0;
        }
        frame.masks.emplace(file.stem().string(), std::move(mask));
    }
    frame.validate();
    return frame;
}

void save_rgbd_bundle(const RgbdFrame& frame, const std::filesystem::path& dir, double depth_scale)
{
    std::filesystem::create_directories(dir / "masks");
    json intr = {{"fx", frame.intrinsics.fx},       {"fy", frame.intrinsics.fy},         {"cx", frame.intrinsics.cx},
                 {"cy", frame.intrinsics.cy},       {"width", frame.intrinsics.width},   {"height", frame.intrinsics.height},
                 {"depth_scale", depth_scale}};
    json pose = json::array();
    for (int r = 0; r < 4; ++r) {
        pose.push_back({frame.camera_pose(r, 0), frame.camera_pose(r, 1), frame.camera_pose(r, 2), frame.camera_pose(r, 3)});
    }
    intr["camera_pose"] = pose;
    write_text_file(dir / "intrinsics.json", intr.dump(2) + "\n");
    write_text_file(dir / "labels.json", json(frame.labels).dump(2) + "\n");
    if (frame.color.width > 0) write_png(frame.color, dir / "color.png");

    GrayImage depth{static_cast<int>(frame.depth.cols()), static_cast<int>(frame.depth.rows()), 16, {}};
    depth.data.resize(static_cast<std::size_t>(depth.width) * depth.height);
    for (int v = 0; v < depth.height; ++v) {
        for (int u = 0; u < depth.width; ++u) {
            const double raw = std::round(frame.depth(v, u) / depth_scale);
            depth.data[static_cast<std::size_t>(v) * depth.width + u] = static_cast<std::uint16_t>(std::clamp(raw, 0.0, 65535.0));
        }
    }
    write_gray_png(depth, dir / "depth.png");
    for (const auto& [id, mask] : frame.masks) {
        GrayImage m{static_cast<int>(mask.cols()), static_cast<int>(mask.rows()), 8, {}};
        m.data.resize(static_cast<std::size_t>(m.width) * m.height);
        for (int v = 0; v < m.height; ++v) {
            for (int u = 0; u < m.width; ++u) m.data[static_cast<std::size_t>(v) * m.width + u] = mask(v, u) ? 255 : 0;
        }
        write_gray_png(m, dir / "masks" / (id + ".png"));
    }
}

}  // namespace rearrange
