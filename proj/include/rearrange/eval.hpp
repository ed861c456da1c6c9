#pragma once

#include <rearrange/backend.hpp>
#include <rearrange/loop.hpp>
#include <rearrange/scene.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace rearrange {

enum class Track { Position, Rotation, SixDoF };

std::string_view track_name(Track track);
std::optional<Track> parse_track(std::string_view text);

struct TaskGoal {
    std::optional<Vec3> position;  ///< target AABB centre
    double position_tol = 0.05;
    std::optional<RotMat3> rotation;
    double rotation_tol_deg = 45.0;
};

struct GroundTruthRoles {
    std::string target;
    std::vector<std::string> related;
};

struct TaskSpec {
    std::string id;
    /// Scene manifest (.json) or RGB-D bundle directory; relative paths
    /// resolve against the suite file.
    std::filesystem::path scene;
    std::string instruction;
    Track track = Track::SixDoF;
    TaskGoal goal;
    std::optional<GroundTruthRoles> roles;
    std::optional<int> level;
    /// Full goal pose of the target relative to its loaded placement.
    std::optional<RigidPose> oracle_goal_pose;

    void validate() const;
};

nlohmann::json task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const nlohmann::json& j);

/// Suite file: a JSON array of tasks.
std::vector<TaskSpec> load_suite(const std::filesystem::path& path);
void save_suite(const std::vector<TaskSpec>& tasks, const std::filesystem::path& path);

/// Scene of a task: manifest, or lifted RGB-D bundle.
SceneState load_task_scene(const TaskSpec& task);

struct JudgeResult {
    std::optional<bool> position_success;
    std::optional<bool> rotation_success;
    bool overall = false;
    std::optional<double> position_error;
    std::optional<double> rotation_error_deg;
};

/// Success from the final state alone; the target pose is judged against the
/// goal relative to the placement the scene was loaded with.
JudgeResult judge(const SceneState& final_scene, const TaskSpec& task);

/// Goal pose for the oracle: taken from the task, or derived from the goal
/// position/rotation with the target's loaded vertices.
RigidPose oracle_goal_pose(const TaskSpec& task, const SceneState& scene);
OracleConfig oracle_config_for(const TaskSpec& task, const SceneState& scene, std::uint64_t seed, double noise_prob);

struct TaskRow {
    std::string id;
    Track track = Track::SixDoF;
    std::optional<int> level;
    JudgeResult judged;
    int iterations = 0;
    std::string termination;  ///< faithful, max_iterations or error
    std::string error_class;
    std::string error_message;
    std::optional<RigidPose> final_pose;
    double wall_time_s = 0;
};

nlohmann::json row_to_json(const TaskRow& row, bool include_timing = true);

struct RateCell {
    std::size_t tasks = 0;
    std::size_t successes = 0;
    double rate() const { return tasks == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(tasks); }
};

struct Aggregate {
    RateCell overall;
    std::map<std::string, RateCell> by_track;
    std::map<std::string, RateCell> by_level;
    std::size_t errors = 0;
    double mean_iterations = 0;
};

Aggregate aggregate_rows(const std::vector<TaskRow>& rows);
nlohmann::json aggregate_to_json(const Aggregate& aggregate);

using BackendFactory = std::function<std::unique_ptr<AgentBackend>(const TaskSpec&, const SceneState&)>;

struct SuiteOptions {
    LoopConfig loop;
    int jobs = 1;
    /// Per-task iteration frames under <out>/tasks/<id>.
    bool write_task_artifacts = false;
};

struct SuiteReport {
    std::vector<TaskRow> rows;  ///< sorted by id
    Aggregate aggregate;
};

/// Runs every task; task failures become error rows. Writes rows.jsonl,
/// aggregate.json and report.md into out_dir when given.
SuiteReport run_suite(const std::vector<TaskSpec>& tasks, const BackendFactory& factory, const SuiteOptions& options,
                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct SweepPoint {
    int max_iterations = 0;
    Aggregate aggregate;
};

/// run_suite once per max_iterations in [first, last]; writes
/// <out>/max_iters_<m>/ bundles plus sweep.json and sweep.md.
std::vector<SweepPoint> run_max_iter_sweep(const std::vector<TaskSpec>& tasks, const BackendFactory& factory,
                                           const SuiteOptions& options, int first, int last,
                                           const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string report_markdown(const SuiteReport& report);

struct SyntheticOptions {
    double position_tol = 0.05;
    double rotation_tol_deg = 45.0;
    /// Largest goal translation per axis in axis units.
    double max_translation_units = 3.0;
};

/// Tabletop scenes (plane + 2-4 boxes/cylinders/wedges) with single-axis goal
/// rotations of +-90 or 180 degrees and translations within 3 axis units.
/// Writes <out>/suite.json and <out>/scenes/<id>/; identical per seed.
std::vector<TaskSpec> generate_synthetic_suite(int n, std::uint64_t seed, const std::filesystem::path& out_dir,
                                               const SyntheticOptions& options = {});

}  // namespace rearrange
