#include <rearrange/eval.hpp>
#include <rearrange/rgbd.hpp>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

namespace rearrange {

using nlohmann::json;

std::string_view track_name(Track track)
{
    switch (track) {
    case Track::Position: return "position";
    case Track::Rotation: return "rotation";
    case Track::SixDoF: return "6dof";
    }
    return "?";
}

std::optional<Track> parse_track(std::string_view text)
{
    if (text == "position") return Track::Position;
    if (text == "rotation") return Track::Rotation;
    if (text == "6dof" || text == "sixdof") return Track::SixDoF;
    return std::nullopt;
}

void TaskSpec::validate() const
{
    const auto bad = [&](std::string_view why) { throw Error(ErrorCode::MalformedManifest, fmt::format("task '{}': {}", id, why)); };
    if (id.empty()) bad("empty id");
    if (instruction.empty()) bad("empty instruction");
    if (scene.empty()) bad("no scene");
    const bool needs_position = track != Track::Rotation;
    const bool needs_rotation = track != Track::Position;
    if (needs_position && !goal.position) bad("track needs goal.position");
    if (needs_rotation && !goal.rotation) bad("track needs goal.rotation");
    if (!(goal.position_tol > 0) || !(goal.rotation_tol_deg > 0)) bad("tolerances must be positive");
    if (goal.rotation && !is_rotation(*goal.rotation, 1e-6)) bad("goal.rotation is not a rotation matrix");
    if (oracle_goal_pose && !is_rotation(oracle_goal_pose->rotation, 1e-6)) bad("oracle_goal_pose rotation is not a rotation matrix");
}

namespace {

json vec_json(const Vec3& v)
{
    return {v.x(), v.y(), v.z()};
}

json mat_json(const RotMat3& m)
{
    json rows = json::array();
    for (int i = 0; i < 3; ++i) rows.push_back({m(i, 0), m(i, 1), m(i, 2)});
    return rows;
}

Vec3 vec_from(const json& j)
{
    if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::MalformedManifest, "expected an array of 3 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

RotMat3 mat_from(const json& j)
{
    if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::MalformedManifest, "expected a 3x3 matrix");
    RotMat3 m;
    for (int i = 0; i < 3; ++i) m.row(i) = vec_from(j[static_cast<std::size_t>(i)]).transpose();
    return m;
}

json pose_json(const RigidPose& p)
{
    return {{"rotation", mat_json(p.rotation)}, {"translation", vec_json(p.translation)}};
}

}  // namespace

json task_to_json(const TaskSpec& task)
{
    json goal = json::object();
    if (task.goal.position) goal["position"] = vec_json(*task.goal.position);
    goal["position_tol"] = task.goal.position_tol;
    if (task.goal.rotation) goal["rotation"] = mat_json(*task.goal.rotation);
    goal["rotation_tol_deg"] = task.goal.rotation_tol_deg;
    json j = {{"id", task.id},
              {"scene", task.scene.generic_string()},
              {"instruction", task.instruction},
              {"track", std::string(track_name(task.track))},
              {"goal", goal}};
    if (task.level) j["level"] = *task.level;
    if (task.roles) j["roles"] = {{"target", task.roles->target}, {"related", task.roles->related}};
    if (task.oracle_goal_pose) j["oracle_goal_pose"] = pose_json(*task.oracle_goal_pose);
    return j;
}

TaskSpec task_from_json(const json& j)
{
    TaskSpec t;
    try {
        t.id = j.at("id").get<std::string>();
        t.scene = j.at("scene").get<std::string>();
        t.instruction = j.at("instruction").get<std::string>();
        const auto track = parse_track(j.at("track").get<std::string>());
        if (!track) throw Error(ErrorCode::MalformedManifest, fmt::format("task '{}': unknown track", t.id));
        t.track = *track;
        const json& goal = j.at("goal");
        if (goal.contains("position")) t.goal.position = vec_from(goal["position"]);
        t.goal.position_tol = goal.value("position_tol", t.goal.position_tol);
        if (goal.contains("rotation")) t.goal.rotation = mat_from(goal["rotation"]);
        t.goal.rotation_tol_deg = goal.value("rotation_tol_deg", t.goal.rotation_tol_deg);
        if (j.contains("level")) t.level = j["level"].get<int>();
        if (j.contains("roles")) {
            t.roles = GroundTruthRoles{j["roles"].at("target").get<std::string>(),
                                       j["roles"].value("related", std::vector<std::string>{})};
        }
        if (j.contains("oracle_goal_pose")) {
            t.oracle_goal_pose = RigidPose{mat_from(j["oracle_goal_pose"].at("rotation")),
                                           vec_from(j["oracle_goal_pose"].at("translation"))};
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedManifest, fmt::format("task '{}': {}", t.id, e.what()));
    }
    t.validate();
    return t;
}

std::vector<TaskSpec> load_suite(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingAsset, path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedManifest, fmt::format("{}: {}", path.string(), e.what()));
    }
    if (!doc.is_array()) throw Error(ErrorCode::MalformedManifest, fmt::format("{}: suite must be a JSON array", path.string()));
    std::vector<TaskSpec> tasks;
    std::set<std::string> ids;
    for (const auto& entry : doc) {
        TaskSpec t = task_from_json(entry);
        if (t.scene.is_relative()) t.scene = path.parent_path() / t.scene;
        if (!ids.insert(t.id).second) throw Error(ErrorCode::MalformedManifest, fmt::format("duplicate task id '{}'", t.id));
        tasks.push_back(std::move(t));
    }
    return tasks;
}

void save_suite(const std::vector<TaskSpec>& tasks, const std::filesystem::path& path)
{
    json doc = json::array();
    for (const auto& t : tasks) doc.push_back(task_to_json(t));
    write_text_file(path, doc.dump(2) + "\n");
}

SceneState load_task_scene(const TaskSpec& task)
{
    if (std::filesystem::is_directory(task.scene)) return lift_rgbd(load_rgbd_bundle(task.scene));
    return load_scene_manifest(task.scene);
}

// ---------------------------------------------------------------------------
// Judging

JudgeResult judge(const SceneState& final_scene, const TaskSpec& task)
{
    JudgeResult r;
    const auto& target = final_scene.target();
    if (task.goal.position) {
        r.position_error = (target.bounds().center() - *task.goal.position).norm();
        r.position_success = *r.position_error <= task.goal.position_tol;
    }
    if (task.goal.rotation) {
        r.rotation_error_deg = relative_rotation_error(final_scene.target_pose.rotation, *task.goal.rotation);
        r.rotation_success = *r.rotation_error_deg <= task.goal.rotation_tol_deg;
    }
    switch (task.track) {
    case Track::Position: r.overall = r.position_success.value_or(false); break;
    case Track::Rotation: r.overall = r.rotation_success.value_or(false); break;
    case Track::SixDoF: r.overall = r.position_success.value_or(false) && r.rotation_success.value_or(false); break;
    }
    return r;
}

RigidPose oracle_goal_pose(const TaskSpec& task, const SceneState& scene)
{
    if (task.oracle_goal_pose) return *task.oracle_goal_pose;
    const std::string target_id = task.roles ? task.roles->target : scene.target().id;
    const Points& vertices = scene.object(target_id).vertices;
    RigidPose goal;
    goal.rotation = task.goal.rotation.value_or(RotMat3::Identity());
    const Vec3 rotated_center = aabb_of_points(Points(goal.rotation * vertices)).center();
    goal.translation = task.goal.position.value_or(aabb_of_points(vertices).center()) - rotated_center;
    return goal;
}

OracleConfig oracle_config_for(const TaskSpec& task, const SceneState& scene, std::uint64_t seed, double noise_prob)
{
    OracleConfig c;
    c.goal_pose = oracle_goal_pose(task, scene);
    c.position_tol = task.goal.position_tol;
    c.rotation_tol_deg = task.goal.rotation_tol_deg;
    c.seed = seed;
    c.noise_prob = noise_prob;
    if (task.roles) {
        c.target_id = task.roles->target;
        c.related_ids = task.roles->related;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Rows and aggregates

json row_to_json(const TaskRow& row, bool include_timing)
{
    const auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
    json j = {{"id", row.id},
              {"track", std::string(track_name(row.track))},
              {"level", opt(row.level)},
              {"position_success", opt(row.judged.position_success)},
              {"rotation_success", opt(row.judged.rotation_success)},
              {"overall_success", row.judged.overall},
              {"position_error", opt(row.judged.position_error)},
              {"rotation_error_deg", opt(row.judged.rotation_error_deg)},
              {"iterations", row.iterations},
              {"termination", row.termination}};
    if (!row.error_class.empty()) {
        j["error_class"] = row.error_class;
        j["error_message"] = row.error_message;
    }
    if (row.final_pose) j["final_pose"] = pose_json(*row.final_pose);
    if (include_timing) j["wall_time_s"] = row.wall_time_s;
    return j;
}

Aggregate aggregate_rows(const std::vector<TaskRow>& rows)
{
    Aggregate a;
    std::size_t iterations = 0;
    for (const auto& row : rows) {
        const auto add = [&](RateCell& cell) {
            ++cell.tasks;
            if (row.judged.overall) ++cell.successes;
        };
        add(a.overall);
        add(a.by_track[std::string(track_name(row.track))]);
        add(a.by_level[row.level ? fmt::format("level{}", *row.level) : std::string("unlevelled")]);
        if (row.termination == "error") ++a.errors;
        iterations += static_cast<std::size_t>(row.iterations);
    }
    a.mean_iterations = rows.empty() ? 0.0 : static_cast<double>(iterations) / static_cast<double>(rows.size());
    return a;
}

json aggregate_to_json(const Aggregate& a)
{
    const auto cell = [](const RateCell& c) { return json{{"tasks", c.tasks}, {"successes", c.successes}, {"rate", c.rate()}}; };
    json tracks = json::object();
    for (const auto& [k, v] : a.by_track) tracks[k] = cell(v);
    json levels = json::object();
    for (const auto& [k, v] : a.by_level) levels[k] = cell(v);
    return {{"overall", cell(a.overall)},
            {"by_track", tracks},
            {"by_level", levels},
            {"errors", a.errors},
            {"mean_iterations", a.mean_iterations}};
}

std::string report_markdown(const SuiteReport& report)
{
    const auto& a = report.aggregate;
    std::string md = "# Suite report\n\n| Group | Tasks | Successes | Rate |\n|---|---|---|---|\n";
    const auto line = [&](const std::string& name, const RateCell& c) {
        md += fmt::format("| {} | {} | {} | {:.1f}% |\n", name, c.tasks, c.successes, 100.0 * c.rate());
    };
    line("overall", a.overall);
    for (const auto& [k, v] : a.by_track) line("track " + k, v);
    for (const auto& [k, v] : a.by_level) line(k, v);
    md += fmt::format("\nErrors: {}. Mean iterations: {:.2f}.\n\n", a.errors, a.mean_iterations);
    md += "| Task | Track | Position | Rotation | Overall | Iterations | Termination |\n|---|---|---|---|---|---|---|\n";
    const auto mark = [](const std::optional<bool>& b) { return b ? (*b ? "pass" : "fail") : "-"; };
    for (const auto& r : report.rows) {
        md += fmt::format("| {} | {} | {} | {} | {} | {} | {} |\n", r.id, track_name(r.track), mark(r.judged.position_success),
                          mark(r.judged.rotation_success), r.judged.overall ? "pass" : "fail", r.iterations,
                          r.error_class.empty() ? r.termination : r.termination + " (" + r.error_class + ")");
    }
    return md;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

TaskRow run_task(const TaskSpec& task, const BackendFactory& factory, const SuiteOptions& options,
                 const std::optional<std::filesystem::path>& out_dir)
{
    TaskRow row;
    row.id = task.id;
    row.track = task.track;
    row.level = task.level;
    const auto start = std::chrono::steady_clock::now();
    const auto fail = [&](std::string cls, std::string message) {
        row.termination = "error";
        row.error_class = std::move(cls);
        row.error_message = std::move(message);
        row.judged = JudgeResult{};
    };
    try {
        SceneState scene = load_task_scene(task);
        auto backend = factory(task, scene);
        LoopConfig config = options.loop;
        config.task_id = task.id;
        if (options.write_task_artifacts && out_dir) config.artifact_dir = *out_dir / "tasks" / task.id;
        try {
            const LoopResult result = run_loop(scene, Instruction(task.instruction), *backend, config);
            row.iterations = static_cast<int>(result.memory.size());
            row.termination = std::string(termination_name(result.terminated_by));
            row.final_pose = result.final_scene.target_pose;
            row.judged = judge(result.final_scene, task);
        } catch (const LoopError& e) {
            row.iterations = static_cast<int>(e.memory().size());
            throw;
        }
    } catch (const Error& e) {
        fail(std::string(error_code_name(e.code())), e.what());
    } catch (const std::exception& e) {
        fail("Internal", e.what());
    }
    row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!row.error_class.empty()) spdlog::warn("task {} failed: {}", row.id, row.error_message);
    return row;
}

}  // namespace

SuiteReport run_suite(const std::vector<TaskSpec>& tasks, const BackendFactory& factory, const SuiteOptions& options,
                      const std::optional<std::filesystem::path>& out_dir)
{
    if (tasks.empty()) throw Error(ErrorCode::EmptySuite, "suite has no tasks");
    options.loop.validate();

    std::vector<TaskRow> rows(tasks.size());
    const int jobs = std::clamp(options.jobs, 1, static_cast<int>(tasks.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) rows[i] = run_task(tasks[i], factory, options, out_dir);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        for (int w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < tasks.size(); i = next++) rows[i] = run_task(tasks[i], factory, options, out_dir);
            });
        }
        for (auto& t : workers) t.join();
    }
    std::sort(rows.begin(), rows.end(), [](const TaskRow& a, const TaskRow& b) { return a.id < b.id; });

    SuiteReport report{std::move(rows), {}};
    report.aggregate = aggregate_rows(report.rows);
    if (out_dir) {
        std::string lines;
        for (const auto& r : report.rows) lines += row_to_json(r).dump() + "\n";
        write_text_file(*out_dir / "rows.jsonl", lines);
        write_text_file(*out_dir / "aggregate.json", aggregate_to_json(report.aggregate).dump(2) + "\n");
        write_text_file(*out_dir / "report.md", report_markdown(report));
    }
    return report;
}

std::vector<SweepPoint> run_max_iter_sweep(const std::vector<TaskSpec>& tasks, const BackendFactory& factory,
                                           const SuiteOptions& options, int first, int last,
                                           const std::optional<std::filesystem::path>& out_dir)
{
    if (first < 1 || last < first) throw Error(ErrorCode::InvalidArgument, fmt::format("bad sweep range {}..{}", first, last));
    std::vector<SweepPoint> points;
    json doc = json::array();
    std::string md = "# Max-iteration sweep\n\n| Max iterations | Tasks | Successes | Rate |\n|---|---|---|---|\n";
    for (int m = first; m <= last; ++m) {
        SuiteOptions opts = options;
        opts.loop.max_iterations = m;
        std::optional<std::filesystem::path> dir;
        if (out_dir) dir = *out_dir / fmt::format("max_iters_{}", m);
        const SuiteReport report = run_suite(tasks, factory, opts, dir);
        points.push_back({m, report.aggregate});
        json entry = aggregate_to_json(report.aggregate);
        entry["max_iterations"] = m;
        doc.push_back(std::move(entry));
        const auto& c = report.aggregate.overall;
        md += fmt::format("| {} | {} | {} | {:.1f}% |\n", m, c.tasks, c.successes, 100.0 * c.rate());
    }
    if (out_dir) {
        write_text_file(*out_dir / "sweep.json", doc.dump(2) + "\n");
        write_text_file(*out_dir / "sweep.md", md);
    }
    return points;
}

}  // namespace rearrange
