#include <rearrange/backend.hpp>

#include <fmt/format.h>
#include <json.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>

namespace rearrange {

using nlohmann::json;

Vec3 rotation_vector_deg(const RotMat3& r)
{
    const Eigen::AngleAxisd aa(Eigen::Quaterniond(r).normalized());
    return aa.axis() * (aa.angle() * 180.0 / std::numbers::pi);
}

Vec3 euler_xyz_deg(const RotMat3& r)
{
    constexpr double to_deg = 180.0 / std::numbers::pi;
    const double sy = std::clamp(-r(2, 0), -1.0, 1.0);
    const double pitch = std::asin(sy);
    double roll = 0, yaw = 0;
    if (std::abs(sy) < 1.0 - 1e-12) {
        roll = std::atan2(r(2, 1), r(2, 2));
        yaw = std::atan2(r(1, 0), r(0, 0));
    } else {
        yaw = std::atan2(-r(0, 1), r(1, 1));
    }
    return {roll * to_deg, pitch * to_deg, yaw * to_deg};
}

double snap_degrees(double deg, double step)
{
    const double snapped = std::round(deg / step) * step;
    return std::clamp(snapped, -180.0, 180.0) + 0.0;
}

void OracleConfig::validate() const
{
    if (!(position_tol > 0) || !(rotation_tol_deg > 0)) throw Error(ErrorCode::InvalidArgument, "oracle tolerances must be positive");
    if (!(noise_prob >= 0 && noise_prob < 1)) throw Error(ErrorCode::InvalidArgument, "noise_prob must lie in [0, 1)");
    if (!is_rotation(goal_pose.rotation)) throw Error(ErrorCode::InvalidArgument, "oracle goal rotation is not orthonormal");
}

OracleBackend::OracleBackend(OracleConfig config) : config_(std::move(config))
{
    config_.validate();
}

void OracleBackend::observe(std::shared_ptr<const Observation> observation)
{
    std::lock_guard lock(mutex_);
    observation_ = std::move(observation);
}

std::string OracleBackend::complete(const AgentRequest& request)
{
    std::shared_ptr<const Observation> obs;
    {
        std::lock_guard lock(mutex_);
        obs = observation_;
    }
    if (!obs) throw Error(ErrorCode::ProtocolViolation, "oracle backend queried before any observation");
    switch (request.role) {
    case AgentRole::Selection: return select(request, *obs);
    case AgentRole::Evaluator: return evaluate(*obs);
    case AgentRole::Proposer: return propose(request, *obs);
    }
    throw Error(ErrorCode::ProtocolViolation, "unknown agent role");
}

namespace {

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

int argmax_view(const std::vector<std::vector<std::size_t>>& pixels, const auto& score)
{
    int best = 0;
    for (int v = 1; v < static_cast<int>(pixels.size()); ++v) {
        if (score(pixels[v]) > score(pixels[best])) best = v;
    }
    return best + 1;
}

// Per-request generator derived from (seed, task, iteration) only, so the
// answer does not depend on request order. Single-axis and Euler proposals
// share a stream so the two modes see the same corruption events.
std::mt19937_64 keyed_rng(std::uint64_t seed, const RequestMetadata& meta)
{
    const auto digest = sha256_hex(fmt::format("{}|{}|{}|proposer", seed, meta.task_id, meta.iteration));
    return std::mt19937_64(std::stoull(digest.substr(0, 16), nullptr, 16));
}

double unit_uniform(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

std::string OracleBackend::select(const AgentRequest& request, const Observation& obs) const
{
    if (request.metadata.step == "view") {
        // Most objects visible first, then most total coverage.
        const auto score = [](const std::vector<std::size_t>& counts) {
            const auto visible = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
            std::size_t total = 0;
            for (const auto c : counts) total += c;
            return std::pair<long, std::size_t>(visible, total);
        };
        const int view = obs.pixels.empty() ? 1 : argmax_view(obs.pixels, score);
        return json{{"best_view", view}, {"rationale", fmt::format("view {} shows the most objects with the largest coverage", view)}}
            .dump();
    }

    std::string target;
    std::vector<std::string> related;
    if (config_.target_id) {
        target = *config_.target_id;
        related = config_.related_ids;
    } else {
        // Objects named in the instruction, in order of first mention.
        const std::string text = lower(obs.instruction);
        std::vector<std::pair<std::size_t, std::string>> mentioned;
        for (const auto& obj : obs.scene.objects) {
            for (const auto& name : {lower(obj.label), lower(obj.id)}) {
                if (const auto pos = text.find(name); !name.empty() && pos != std::string::npos) {
                    mentioned.emplace_back(pos, obj.id);
                    break;
                }
            }
        }
        std::stable_sort(mentioned.begin(), mentioned.end());
        if (mentioned.empty()) {
            target = obs.scene.objects.empty() ? std::string() : obs.scene.objects.front().id;
        } else {
            target = mentioned.front().second;
            for (std::size_t i = 1; i < mentioned.size(); ++i) related.push_back(mentioned[i].second);
        }
    }
    return json{{"target", target}, {"related", related}, {"rationale", "objects named in the instruction"}}.dump();
}

std::string OracleBackend::evaluate(const Observation& obs) const
{
    const auto& scene = obs.scene;
    const auto target_idx = scene.target_index();
    if (!target_idx) throw Error(ErrorCode::RolesUnassigned, "oracle evaluator needs a target");

    const double pos_err = (scene.target_pose.translation - config_.goal_pose.translation).norm();
    const double rot_err = relative_rotation_error(scene.target_pose.rotation, config_.goal_pose.rotation);

    const Aabb target_box = scene.objects[*target_idx].bounds();
    const double limit = config_.overlap_ratio * target_box.volume();
    std::string colliding;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        if (i == *target_idx) continue;
        if (target_box.intersection_volume(scene.objects[i].bounds()) > limit) {
            colliding = scene.objects[i].id;
            break;
        }
    }

    const auto target_pixels = [&](const std::vector<std::size_t>& counts) { return counts[*target_idx]; };
    const int view = obs.pixels.empty() ? 1 : argmax_view(obs.pixels, target_pixels);

    const bool faithful = !config_.adversarial && pos_err <= config_.position_tol &&
                          rot_err <= config_.rotation_tol_deg && colliding.empty();
    std::string rationale = fmt::format("position error {:.4f}, rotation error {:.2f} deg", pos_err, rot_err);
    if (!colliding.empty()) rationale += fmt::format("; target interpenetrates {}", colliding);
    return json{{"faithful", faithful}, {"best_view", view}, {"rationale", rationale}}.dump();
}

std::string OracleBackend::propose(const AgentRequest& request, const Observation& obs) const
{
    const auto& scene = obs.scene;
    const auto target_idx = scene.target_index();
    if (!target_idx || !(obs.axis_length > 0)) throw Error(ErrorCode::RolesUnassigned, "oracle proposer needs a target");
    const bool euler = request.metadata.step == "euler";

    const RotMat3 relative = config_.goal_pose.rotation * scene.target_pose.rotation.transpose();
    PoseUpdate update;
    if (euler) {
        Vec3 angles = euler_xyz_deg(relative);
        for (int i = 0; i < 3; ++i) angles(i) = snap_degrees(angles(i), config_.angle_snap_deg);
        update.euler_xyz_deg = angles;
    } else {
        const Vec3 rotvec = rotation_vector_deg(relative);
        Eigen::Index axis = 0;
        rotvec.cwiseAbs().maxCoeff(&axis);
        update.axis = static_cast<RotationAxis>(axis);
        update.angle_deg = snap_degrees(rotvec(axis), config_.angle_snap_deg);
    }

    auto rng = keyed_rng(config_.seed, request.metadata);
    bool corrupt_rotation = false;
    bool corrupt_translation = false;
    int corrupt_axis = 0;
    double corrupt_sign = 1;
    if (config_.noise_prob > 0 && unit_uniform(rng) < config_.noise_prob) {
        corrupt_rotation = unit_uniform(rng) < 0.5;
        corrupt_translation = !corrupt_rotation;
        corrupt_axis = static_cast<int>(rng() % 3);
        corrupt_sign = unit_uniform(rng) < 0.5 ? -1.0 : 1.0;
    }
    if (corrupt_rotation) {
        if (euler) {
            (*update.euler_xyz_deg)(corrupt_axis) = wrap_degrees((*update.euler_xyz_deg)(corrupt_axis) + 45.0 * corrupt_sign);
        } else {
            update.angle_deg = wrap_degrees(update.angle_deg + 45.0 * corrupt_sign);
        }
    }

    // Translation that lands on the goal once the (possibly corrupted)
    // rotation has been applied about the current AABB centre.
    const Vec3 pivot = scene.objects[*target_idx].bounds().center();
    const Vec3 rotated = update.rotation() * (scene.target_pose.translation - pivot) + pivot;
    update.translation_units =
        ((config_.goal_pose.translation - rotated) / obs.axis_length).cwiseMax(-config_.translation_clamp).cwiseMin(config_.translation_clamp);
    if (corrupt_translation) update.translation_units(corrupt_axis) += corrupt_sign;

    const auto& t = update.translation_units;
    json out = {{"translation", {t.x(), t.y(), t.z()}}};
    if (euler) {
        const auto& e = *update.euler_xyz_deg;
        out["euler_xyz_deg"] = {e.x(), e.y(), e.z()};
    } else {
        out["rotation_axis"] = std::string(axis_name(update.axis));
        out["rotation_angle_deg"] = update.angle_deg;
    }
    out["rationale"] = "greedy step toward the goal pose";
    return out.dump();
}

}  // namespace rearrange
