#pragma once

// Shared builders and independent reference routines for the tests. The
// references are deliberately written differently from the library code
// (Rodrigues' formula, ray casting, exhaustive neighbour search).

#include <rearrange/backend.hpp>
#include <rearrange/eval.hpp>
#include <rearrange/loop.hpp>
#include <rearrange/render.hpp>
#include <rearrange/rgbd.hpp>

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace rearrange::testing {

/// Code of the library Error thrown by f, if any.
template <typename F>
std::optional<ErrorCode> error_code_of(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

/// Fresh, empty scratch directory unique to `name`.
std::filesystem::path scratch_dir(const std::string& name);

double uniform(std::mt19937_64& rng, double lo, double hi);
Vec3 random_vec(std::mt19937_64& rng, double lo, double hi);
RotMat3 random_rotation(std::mt19937_64& rng);

SceneObject box_object(const std::string& id, const Vec3& lo, const Vec3& hi, Rgb color = {180, 180, 180});
/// Axis-aligned quad at depth x = `x` spanning [y0, y1] x [z0, z1].
SceneObject quad_x(const std::string& id, double x, double y0, double y1, double z0, double z1, Rgb color);

/// Table plane plus a red box ("red_box") and a blue box ("blue_box").
SceneState two_box_scene();
/// Random boxes in a 2 m cube; ids box_0, box_1, ...
SceneState random_box_scene(std::mt19937_64& rng, int boxes);

// Reference routines --------------------------------------------------------

RotMat3 rodrigues(const Vec3& axis, double angle_rad);
/// Per-vertex p' = R (p - b) + b + t with b computed from scratch.
Points reference_update(const Points& vertices, const RotMat3& r, const Vec3& t);

struct RayHit {
    int object = kBackgroundId;
    double depth = std::numeric_limits<double>::infinity();
    /// True when the pixel centre sits within `edge_eps` of a triangle edge or
    /// two surfaces are nearly tied; such pixels are skipped in comparisons.
    bool ambiguous = false;
};

/// Casts the ray through pixel centre (x + 0.5, y + 0.5) against every triangle.
RayHit raycast_pixel(const SceneState& scene, const Camera& camera, int x, int y, double edge_eps = 1e-3);

/// Mean distance to the k nearest other points by exhaustive search.
std::vector<double> brute_knn_mean(const Points& points, int k);

/// RGB-D frame produced by rendering `scene` from `camera` (depth from the
/// z-buffer, one mask per visible object).
RgbdFrame render_rgbd(const SceneState& scene, const Camera& camera);

// Backends ------------------------------------------------------------------

/// Serves queued responses per role; an exhausted queue repeats its last entry.
class ScriptedBackend : public AgentBackend {
public:
    void push(AgentRole role, std::string response) { queues_[role].push_back(std::move(response)); }
    std::string complete(const AgentRequest& request) override;

    const std::vector<AgentRequest>& requests() const { return requests_; }

private:
    std::map<AgentRole, std::deque<std::string>> queues_;
    std::vector<AgentRequest> requests_;
};

/// Always fails with the given code.
class FailingBackend : public AgentBackend {
public:
    explicit FailingBackend(ErrorCode code) : code_(code) {}
    std::string complete(const AgentRequest&) override;

private:
    ErrorCode code_;
};

/// Synthetic suite generated once per process into a scratch directory.
const std::vector<TaskSpec>& cached_suite(int n, std::uint64_t seed, const SyntheticOptions& options, const std::string& name);

BackendFactory oracle_factory(std::uint64_t seed, double noise_prob, bool adversarial = false);

}  // namespace rearrange::testing
