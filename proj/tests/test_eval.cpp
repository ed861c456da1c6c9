#include "fixtures.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <fstream>
#include <sstream>

using namespace rearrange;
using namespace rearrange::testing;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// red_box moved so its AABB centre is `shift` from the start, then rotated by `r` in place.
SceneState moved_scene(const Vec3& shift, const RotMat3& r = RotMat3::Identity())
{
    SceneState s = assign_roles(two_box_scene(), "red_box", {"blue_box"});
    RigidPose pose;
    const Vec3 c = s.target().bounds().center();
    pose.rotation = r;
    pose.translation = c - r * c + shift;
    s.set_target_pose(pose);
    return s;
}

TaskSpec judged_task(Track track)
{
    TaskSpec t;
    t.id = "j";
    t.scene = "unused.json";
    t.instruction = "x";
    t.track = track;
    const SceneState s = assign_roles(two_box_scene(), "red_box", {"blue_box"});
    t.goal.position = s.target().bounds().center();
    t.goal.rotation = RotMat3::Identity();
    t.goal.position_tol = 0.05;
    t.goal.rotation_tol_deg = 45;
    return t;
}

}  // namespace

TEST(Judge, PositionWithinTolerance)
{
    const auto r = judge(moved_scene(Vec3(0.02, 0, 0)), judged_task(Track::Position));
    EXPECT_TRUE(r.position_success.value());
    EXPECT_NEAR(*r.position_error, 0.02, 1e-12);
    EXPECT_TRUE(r.overall);
    EXPECT_FALSE(judge(moved_scene(Vec3(0, 0.06, 0)), judged_task(Track::Position)).overall);
}

TEST(Judge, RotationBeyondTolerance)
{
    const auto r = judge(moved_scene(Vec3::Zero(), single_axis_rotation(RotationAxis::Z, 50.0)), judged_task(Track::Rotation));
    EXPECT_FALSE(r.rotation_success.value());
    EXPECT_NEAR(*r.rotation_error_deg, 50, 1e-9);
    EXPECT_FALSE(r.overall);
    EXPECT_TRUE(judge(moved_scene(Vec3::Zero(), single_axis_rotation(RotationAxis::Z, 40.0)), judged_task(Track::Rotation)).overall);
}

TEST(Judge, SixDofNeedsBoth)
{
    const auto r = judge(moved_scene(Vec3(0.01, 0, 0), single_axis_rotation(RotationAxis::X, 90.0)), judged_task(Track::SixDoF));
    EXPECT_TRUE(r.position_success.value());
    EXPECT_FALSE(r.rotation_success.value());
    EXPECT_FALSE(r.overall);
}

TEST(Task, JsonRoundTripAndValidation)
{
    TaskSpec t = judged_task(Track::SixDoF);
    t.roles = GroundTruthRoles{"red_box", {"blue_box"}};
    t.level = 2;
    t.oracle_goal_pose = RigidPose{single_axis_rotation(RotationAxis::Y, 90.0), Vec3(0.1, 0.2, 0.3)};
    const TaskSpec back = task_from_json(task_to_json(t));
    EXPECT_EQ(back.id, t.id);
    EXPECT_EQ(back.track, t.track);
    EXPECT_EQ(back.level, t.level);
    EXPECT_EQ(*back.goal.position, *t.goal.position);
    EXPECT_EQ(back.roles->related, t.roles->related);
    EXPECT_EQ(back.oracle_goal_pose->rotation, t.oracle_goal_pose->rotation);

    json bad = task_to_json(t);
    bad["track"] = "5dof";
    EXPECT_EQ(error_code_of([&] { task_from_json(bad); }), ErrorCode::MalformedManifest);
    bad = task_to_json(t);
    bad.erase("instruction");
    EXPECT_EQ(error_code_of([&] { task_from_json(bad); }), ErrorCode::MalformedManifest);
    TaskSpec no_goal = t;
    no_goal.goal.position.reset();
    EXPECT_EQ(error_code_of([&] { no_goal.validate(); }), ErrorCode::MalformedManifest);
}

TEST(Suite, LoadResolvesPathsAndRejectsDuplicates)
{
    const auto dir = scratch_dir("suite_load");
    TaskSpec t = judged_task(Track::Position);
    t.scene = "scenes/a/scene.json";
    save_suite({t}, dir / "suite.json");
    const auto loaded = load_suite(dir / "suite.json");
    ASSERT_EQ(loaded.size(), 1u);
    EXPECT_EQ(loaded[0].scene, dir / "scenes/a/scene.json");
    save_suite({t, t}, dir / "dup.json");
    EXPECT_EQ(error_code_of([&] { load_suite(dir / "dup.json"); }), ErrorCode::MalformedManifest);
    std::ofstream(dir / "obj.json") << "{}";
    EXPECT_EQ(error_code_of([&] { load_suite(dir / "obj.json"); }), ErrorCode::MalformedManifest);
    EXPECT_EQ(error_code_of([&] { load_suite(dir / "missing.json"); }), ErrorCode::MissingAsset);
}

TEST(Generator, DeterministicBytes)
{
    const auto a = scratch_dir("gen_a");
    const auto b = scratch_dir("gen_b");
    generate_synthetic_suite(6, 123, a);
    generate_synthetic_suite(6, 123, b);
    EXPECT_EQ(slurp(a / "suite.json"), slurp(b / "suite.json"));
    for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(entry.path(), a);
        EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
    }
    const auto c = scratch_dir("gen_c");
    generate_synthetic_suite(6, 124, c);
    EXPECT_NE(slurp(a / "suite.json"), slurp(c / "suite.json"));
}

TEST(Generator, GoalsWithinBoundsAndSelfJudged)
{
    const auto& tasks = cached_suite(30, 5, {}, "gen_bounds");
    ASSERT_EQ(tasks.size(), 30u);
    std::map<std::string, int> tracks;
    for (const auto& task : tasks) {
        ++tracks[std::string(track_name(task.track))];
        const SceneState scene = load_task_scene(task);
        ASSERT_TRUE(task.roles);
        ASSERT_TRUE(task.oracle_goal_pose);
        EXPECT_EQ(scene.objects.size(), 3u + static_cast<std::size_t>(*task.level));
        const SceneState assigned = assign_roles(scene, task.roles->target, task.roles->related);
        const double l = assigned.target_axis_length();
        const Vec3 c0 = assigned.target().bounds().center();
        const RotMat3 r = task.oracle_goal_pose->rotation;
        // Translation of the AABB centre, in axis units.
        const Vec3 d = task.oracle_goal_pose->translation - (c0 - r * c0);
        EXPECT_LE((d / l).cwiseAbs().maxCoeff(), 3.0 + 1e-9) << task.id;
        const double angle = relative_rotation_error<double>(r, RotMat3::Identity());
        if (task.track == Track::Position) {
            EXPECT_EQ(angle, 0.0);
        } else {
            EXPECT_TRUE(std::abs(angle - 90) < 1e-9 || std::abs(angle - 180) < 1e-9) << angle;
        }
        SceneState at_goal = assigned;
        at_goal.set_target_pose(*task.oracle_goal_pose);
        EXPECT_TRUE(judge(at_goal, task).overall) << task.id;
        EXPECT_FALSE(judge(assigned, task).overall) << task.id;
        EXPECT_NE(task.instruction.find(assigned.target().label), std::string::npos);
    }
    EXPECT_EQ(tracks.size(), 3u);
}

TEST(Runner, NoiselessOracleSolvesSuite)
{
    const auto& tasks = cached_suite(9, 8, {}, "runner_small");
    const auto dir = scratch_dir("runner_out");
    SuiteOptions opt;
    opt.loop.intrinsics = CameraIntrinsics::from_hfov(160, 120, 60);
    const SuiteReport report = run_suite(tasks, oracle_factory(1, 0.0), opt, dir);
    EXPECT_EQ(report.aggregate.overall.successes, 9u);
    EXPECT_EQ(report.aggregate.errors, 0u);
    EXPECT_TRUE(std::is_sorted(report.rows.begin(), report.rows.end(), [](auto& a, auto& b) { return a.id < b.id; }));
    EXPECT_TRUE(std::filesystem::exists(dir / "rows.jsonl"));
    EXPECT_TRUE(std::filesystem::exists(dir / "report.md"));
    const json agg = json::parse(slurp(dir / "aggregate.json"));
    EXPECT_EQ(agg["overall"]["successes"], 9);
    EXPECT_EQ(agg["by_track"].size(), 3u);
    EXPECT_FALSE(agg.contains("wall_time_s"));
}

TEST(Runner, ParallelMatchesSerial)
{
    const auto& tasks = cached_suite(9, 8, {}, "runner_small");
    SuiteOptions opt;
    opt.loop.intrinsics = CameraIntrinsics::from_hfov(160, 120, 60);
    const auto serial = run_suite(tasks, oracle_factory(4, 0.3), opt);
    opt.jobs = 3;
    const auto parallel = run_suite(tasks, oracle_factory(4, 0.3), opt);
    EXPECT_EQ(aggregate_to_json(serial.aggregate), aggregate_to_json(parallel.aggregate));
    for (std::size_t i = 0; i < serial.rows.size(); ++i) {
        EXPECT_EQ(row_to_json(serial.rows[i], false), row_to_json(parallel.rows[i], false));
    }
}

TEST(Runner, ErrorsBecomeRows)
{
    auto tasks = cached_suite(3, 8, {}, "runner_err");
    tasks[1].scene = "/nonexistent/scene.json";
    const BackendFactory factory = [](const TaskSpec& task, const SceneState&) -> std::unique_ptr<AgentBackend> {
        if (task.id == "task_002") return std::make_unique<FailingBackend>(ErrorCode::BackendUnavailable);
        return std::make_unique<FailingBackend>(ErrorCode::ReplayMiss);
    };
    SuiteOptions opt;
    opt.loop.intrinsics = CameraIntrinsics::from_hfov(96, 72, 60);
    const SuiteReport report = run_suite(tasks, factory, opt);
    ASSERT_EQ(report.rows.size(), 3u);
    EXPECT_EQ(report.rows[0].error_class, "ReplayMiss");
    EXPECT_EQ(report.rows[1].error_class, "MissingAsset");
    EXPECT_EQ(report.rows[2].error_class, "BackendUnavailable");
    for (const auto& r : report.rows) {
        EXPECT_EQ(r.termination, "error");
        EXPECT_FALSE(r.judged.overall);
    }
    EXPECT_EQ(report.aggregate.errors, 3u);
    const json row = row_to_json(report.rows[2]);
    EXPECT_EQ(row["error_class"], "BackendUnavailable");
    EXPECT_TRUE(row["position_success"].is_null());
    EXPECT_NE(report_markdown(report).find("error (BackendUnavailable)"), std::string::npos);
}

TEST(Runner, EmptySuite)
{
    EXPECT_EQ(error_code_of([] { run_suite({}, oracle_factory(0, 0), SuiteOptions{}); }), ErrorCode::EmptySuite);
}

TEST(Sweep, OneBundlePerSetting)
{
    const auto& tasks = cached_suite(6, 9, {}, "sweep_tasks");
    const auto dir = scratch_dir("sweep_out");
    SuiteOptions opt;
    opt.loop.intrinsics = CameraIntrinsics::from_hfov(96, 72, 60);
    const auto points = run_max_iter_sweep(tasks, oracle_factory(2, 0.3), opt, 1, 5, dir);
    ASSERT_EQ(points.size(), 5u);
    for (int m = 1; m <= 5; ++m) {
        EXPECT_EQ(points[m - 1].max_iterations, m);
        EXPECT_TRUE(std::filesystem::exists(dir / ("max_iters_" + std::to_string(m)) / "aggregate.json"));
        EXPECT_LE(points[m - 1].aggregate.mean_iterations, m);
    }
    const json sweep = json::parse(slurp(dir / "sweep.json"));
    ASSERT_EQ(sweep.size(), 5u);
    EXPECT_EQ(sweep[4]["max_iterations"], 5);
    EXPECT_TRUE(std::filesystem::exists(dir / "sweep.md"));
    EXPECT_EQ(error_code_of([&] { run_max_iter_sweep(tasks, oracle_factory(2, 0.3), opt, 3, 2); }), ErrorCode::InvalidArgument);
}

TEST(Aggregate, Cells)
{
    std::vector<TaskRow> rows(4);
    rows[0].track = Track::Position;
    rows[0].judged.overall = true;
    rows[0].iterations = 2;
    rows[1].track = Track::Position;
    rows[1].level = 1;
    rows[1].iterations = 4;
    rows[2].track = Track::Rotation;
    rows[2].judged.overall = true;
    rows[3].termination = "error";
    const Aggregate a = aggregate_rows(rows);
    EXPECT_EQ(a.overall.tasks, 4u);
    EXPECT_EQ(a.overall.successes, 2u);
    EXPECT_DOUBLE_EQ(a.by_track.at("position").rate(), 0.5);
    EXPECT_EQ(a.by_level.at("level1").tasks, 1u);
    EXPECT_EQ(a.errors, 1u);
    EXPECT_DOUBLE_EQ(a.mean_iterations, 1.5);
}

TEST(OracleGoal, DerivedFromGoalWhenAbsent)
{
    TaskSpec t = judged_task(Track::SixDoF);
    t.roles = GroundTruthRoles{"red_box", {"blue_box"}};
    t.goal.rotation = single_axis_rotation(RotationAxis::Z, 90.0);
    *t.goal.position += Vec3(0.03, 0, 0);
    const SceneState s = two_box_scene();
    const RigidPose g = oracle_goal_pose(t, s);
    SceneState placed = assign_roles(s, "red_box", {"blue_box"});
    placed.set_target_pose(g);
    EXPECT_TRUE(judge(placed, t).overall);
    EXPECT_LT(*judge(placed, t).position_error, 1e-12);
    const OracleConfig c = oracle_config_for(t, s, 9, 0.25);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.noise_prob, 0.25);
    EXPECT_EQ(c.target_id, "red_box");
}
