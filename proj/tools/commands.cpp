#include "commands.hpp"

#include <rearrange/rgbd.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <ostream>

namespace rearrange::cli {

using nlohmann::json;

namespace {

enum Sub : unsigned { kRun = 1, kSuite = 2, kRender = 4, kGenerate = 8, kAll = 15 };

struct FlagSpec {
    const char* key;
    const char* names;
    const char* type;
    const char* help;
    unsigned subcommands;
    bool boolean = false;
};

const std::vector<FlagSpec>& flag_table()
{
    static const std::vector<FlagSpec> table{
        {"scene", "--scene", "PATH", "Scene manifest (JSON listing OBJ meshes)", kRun | kRender},
        {"rgbd", "--rgbd", "DIR", "RGB-D bundle directory (color.png, depth.png, intrinsics.json, masks/, labels.json)", kRun | kRender},
        {"task-file", "--task-file,--suite", "PATH", "Suite file (JSON array of tasks)", kRun | kSuite},
        {"task-id", "--task-id", "ID", "Task to run from --task-file", kRun},
        {"instruction", "--instruction", "TEXT", "Rearrangement instruction", kRun},
        {"backend", "--backend", "http|oracle|replay", "Agent backend (default oracle)", kRun | kSuite},
        {"endpoint", "--endpoint", "URL", "Chat-completions URL for --backend http", kRun | kSuite},
        {"model", "--model", "NAME", "Model name sent to the endpoint", kRun | kSuite},
        {"api-key-env", "--api-key-env", "VAR", "Environment variable holding the API key (default OPENAI_API_KEY)", kRun | kSuite},
        {"transcript", "--transcript", "PATH", "Transcript read by --backend replay", kRun | kSuite},
        {"record", "--record", "PATH", "Append every request/response to this transcript", kRun | kSuite},
        {"k-views", "--k-views,--views", "K", "Rendered views per iteration (default 4)", kRun | kSuite | kRender},
        {"elevation", "--elevation", "DEG", "Camera elevation (default 30)", kRun | kSuite | kRender},
        {"margin", "--margin", "M", "Framing margin in (0, 1] (default 0.9)", kRun | kSuite | kRender},
        {"width", "--width", "PX", "Image width (default 640)", kRun | kSuite | kRender},
        {"height", "--height", "PX", "Image height (default 480)", kRun | kSuite | kRender},
        {"hfov", "--hfov", "DEG", "Horizontal field of view (default 60)", kRun | kSuite | kRender},
        {"max-iters", "--max-iters", "N", "Maximum loop iterations (default 5)", kRun | kSuite},
        {"seed", "--seed", "N", "Seed for all randomness (oracle noise, generator)", kRun | kSuite | kGenerate},
        {"out", "--out", "DIR", "Output directory (default ./out)", kAll},
        {"ablate", "--ablate", "NAME", "Ablation: single-view, no-coord-vis, euler-rot or no-memory (repeatable)", kRun | kSuite},
        {"max-iter-sweep", "--max-iter-sweep", "A..B", "Run the suite once per max-iteration value in A..B", kSuite},
        {"evaluator-axes", "--evaluator-axes", "never|auto|always",
         "Axes overlay on evaluator images; auto draws them for directional instructions (default auto)", kRun | kSuite},
        {"jobs", "--jobs", "N", "Tasks run in parallel (default 1)", kSuite},
        {"prompts", "--prompts", "DIR", "Prompt template directory overriding the built-in set", kRun | kSuite},
        {"oracle-mode", "--oracle-mode", "greedy|adversarial", "Oracle behaviour; adversarial never accepts (default greedy)", kRun | kSuite},
        {"noise-prob", "--noise-prob", "P", "Probability that an oracle proposal is corrupted (default 0)", kRun | kSuite},
        {"goal-translation", "--goal-translation", "X,Y,Z", "Oracle goal translation of the target (run without a task)", kRun},
        {"goal-rotation", "--goal-rotation", "AXIS:DEG", "Oracle goal rotation about the target's box centre (needs --target)", kRun},
        {"target", "--target", "ID", "Target object id; skips the selection agent", kRun | kRender},
        {"related", "--related", "ID[,ID]", "Related object ids (repeatable)", kRun | kRender},
        {"axes", "--axes", "", "Draw the object-centred axes (needs --target)", kRender, true},
        {"annotate", "--annotate", "", "Outline and label every visible object", kRender, true},
        {"n", "--n", "N", "Number of tasks to generate (default 10)", kGenerate},
    };
    return table;
}

SceneState load_scene_arg(const CliConfig& c)
{
    if (c.scene) return load_scene_manifest(*c.scene);
    if (c.rgbd) return lift_rgbd(load_rgbd_bundle(*c.rgbd));
    throw UsageError("one of --scene or --rgbd is required");
}

json pose_json(const RigidPose& p)
{
    json rot = json::array();
    for (int i = 0; i < 3; ++i) rot.push_back({p.rotation(i, 0), p.rotation(i, 1), p.rotation(i, 2)});
    return {{"rotation", rot}, {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

struct BackendResources {
    std::shared_ptr<TranscriptWriter> writer;
    std::shared_ptr<TranscriptStore> store;
};

BackendResources prepare_backend(const CliConfig& c)
{
    BackendResources r;
    if (c.backend == BackendKind::Replay) {
        if (!c.transcript) throw UsageError("--backend replay needs --transcript");
        r.store = TranscriptStore::load(*c.transcript);
    }
    if (c.backend == BackendKind::Http && c.endpoint.empty()) throw UsageError("--backend http needs --endpoint");
    if (c.record) r.writer = std::make_shared<TranscriptWriter>(*c.record);
    return r;
}

std::unique_ptr<AgentBackend> make_backend(const CliConfig& c, const BackendResources& res, const OracleConfig& oracle)
{
    std::unique_ptr<AgentBackend> backend;
    switch (c.backend) {
    case BackendKind::Oracle: backend = std::make_unique<OracleBackend>(oracle); break;
    case BackendKind::Http: {
        HttpBackendConfig hc;
        hc.endpoint = c.endpoint;
        hc.model = c.model;
        hc.api_key_env = c.api_key_env;
        backend = std::make_unique<HttpBackend>(hc);
        break;
    }
    case BackendKind::Replay: backend = std::make_unique<ReplayBackend>(res.store); break;
    }
    if (res.writer) backend = std::make_unique<RecordBackend>(std::move(backend), res.writer);
    return backend;
}

OracleConfig finish_oracle(OracleConfig oc, const CliConfig& c)
{
    oc.adversarial = c.adversarial;
    oc.noise_prob = c.noise_prob;
    oc.seed = c.seed;
    return oc;
}

}  // namespace

void write_artifact_manifest(const std::filesystem::path& dir)
{
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().filename() != "artifacts.json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    json list = json::array();
    for (const auto& f : files) {
        list.push_back({{"path", std::filesystem::relative(f, dir).generic_string()}, {"sha256", sha256_file(f)}});
    }
    write_text_file(dir / "artifacts.json", json{{"files", list}}.dump(2) + "\n");
}

int cmd_run(const CliConfig& c, std::ostream& out)
{
    SceneState scene;
    std::optional<TaskSpec> task;
    std::string instruction;
    OracleConfig oracle;

    if (c.task_file) {
        const auto tasks = load_suite(*c.task_file);
        if (tasks.empty()) throw Error(ErrorCode::EmptySuite, "task file has no tasks");
        if (!c.task_id && tasks.size() > 1) throw UsageError("--task-id is required when the task file holds several tasks");
        const auto it = std::find_if(tasks.begin(), tasks.end(), [&](const TaskSpec& t) { return !c.task_id || t.id == *c.task_id; });
        if (it == tasks.end()) throw UsageError(fmt::format("no task '{}' in {}", *c.task_id, c.task_file->string()));
        task = *it;
        scene = load_task_scene(*task);
        instruction = c.instruction.value_or(task->instruction);
        oracle = oracle_config_for(*task, scene, c.seed, c.noise_prob);
    } else {
        scene = load_scene_arg(c);
        if (!c.instruction) throw UsageError("--instruction is required");
        instruction = *c.instruction;
        const RotMat3 R = c.goal_rotation ? single_axis_rotation(c.goal_rotation->first, c.goal_rotation->second) : RotMat3::Identity();
        if (c.goal_rotation && !c.target) throw UsageError("--goal-rotation needs --target");
        const Vec3 pivot = c.target ? scene.object(*c.target).bounds().center() : Vec3::Zero();
        oracle.goal_pose = {R, pivot - R * pivot + c.goal_translation.value_or(Vec3::Zero())};
    }
    if (c.target) {
        oracle.target_id = c.target;
        oracle.related_ids = c.related;
        scene = assign_roles(scene, *c.target, c.related);
    }
    oracle = finish_oracle(oracle, c);

    const auto resources = prepare_backend(c);
    auto backend = make_backend(c, resources, oracle);

    LoopConfig loop = c.loop;
    loop.task_id = task ? task->id : "run";
    loop.artifact_dir = c.out / "frames";
    std::filesystem::create_directories(c.out);

    LoopResult result;
    try {
        result = run_loop(scene, Instruction(instruction), *backend, loop);
    } catch (const LoopError& e) {
        write_text_file(c.out / "memory.json", memory_to_json(e.memory()).dump(2) + "\n");
        write_text_file(c.out / "result.json",
                        json{{"termination", "error"}, {"error_class", error_code_name(e.code())}, {"error", e.what()}}.dump(2) + "\n");
        write_artifact_manifest(c.out);
        throw;
    }

    json res = {{"termination", std::string(termination_name(result.terminated_by))},
                {"iterations", result.memory.size()},
                {"target", result.selection.target_id},
                {"related", result.selection.related_ids},
                {"axis_length", result.axis_length},
                {"final_pose", pose_json(result.final_scene.target_pose)},
                {"prompt_version", loop.prompts.version}};
    if (task) {
        const JudgeResult j = judge(result.final_scene, *task);
        res["judge"] = {{"overall_success", j.overall},
                        {"position_success", j.position_success ? json(*j.position_success) : json(nullptr)},
                        {"rotation_success", j.rotation_success ? json(*j.rotation_success) : json(nullptr)}};
    }
    write_text_file(c.out / "memory.json", memory_to_json(result.memory).dump(2) + "\n");
    write_text_file(c.out / "result.json", res.dump(2) + "\n");
    save_scene_manifest(result.final_scene, c.out / "final_scene" / "scene.json");
    write_artifact_manifest(c.out);

    fmt::print(out, "{} after {} iteration(s); target {}; outputs in {}\n", termination_name(result.terminated_by),
               result.memory.size(), result.selection.target_id, c.out.string());
    return result.terminated_by == Termination::Faithful ? kExitOk : kExitMaxIterations;
}

int cmd_suite(const CliConfig& c, std::ostream& out)
{
    if (!c.task_file) throw UsageError("--suite is required");
    const auto tasks = load_suite(*c.task_file);
    const auto resources = prepare_backend(c);
    const BackendFactory factory = [&](const TaskSpec& task, const SceneState& scene) {
        return make_backend(c, resources, finish_oracle(oracle_config_for(task, scene, c.seed, c.noise_prob), c));
    };
    SuiteOptions options;
    options.loop = c.loop;
    options.jobs = c.jobs;
    std::filesystem::create_directories(c.out);

    if (c.max_iter_sweep) {
        const auto points = run_max_iter_sweep(tasks, factory, options, c.max_iter_sweep->first, c.max_iter_sweep->second, c.out);
        for (const auto& p : points) {
            fmt::print(out, "max_iters {}: {}/{} ({:.1f}%)\n", p.max_iterations, p.aggregate.overall.successes,
                       p.aggregate.overall.tasks, 100.0 * p.aggregate.overall.rate());
        }
    } else {
        const auto report = run_suite(tasks, factory, options, c.out);
        const auto& o = report.aggregate.overall;
        fmt::print(out, "{}/{} tasks succeeded ({:.1f}%), {} error(s)\n", o.successes, o.tasks, 100.0 * o.rate(),
                   report.aggregate.errors);
    }
    write_artifact_manifest(c.out);
    return kExitOk;
}

int cmd_render(const CliConfig& c, std::ostream& out)
{
    SceneState scene = load_scene_arg(c);
    if (c.target) scene = assign_roles(scene, *c.target, c.related);
    if (c.axes && !scene.roles_assigned()) throw Error(ErrorCode::RolesUnassigned, "--axes needs a target (--target ID)");

    const CameraRig rig = scene.roles_assigned()
                              ? frame_aabb(scene.focus_bounds(), c.loop.intrinsics, {c.loop.k_views, c.loop.elevation_deg, c.loop.margin})
                              : scene_overview_rig(scene, c.loop.intrinsics, {c.loop.k_views, c.loop.elevation_deg, c.loop.margin});
    std::map<int, std::string> labels;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) labels[static_cast<int>(i)] = scene.objects[i].id;

    for (std::size_t k = 0; k < rig.size(); ++k) {
        RenderOutput r = render(scene, rig.cameras[k], c.loop.render);
        const auto mask = id_mask_indices(r);
        if (c.axes) {
            const auto& target = scene.target();
            r.rgb = overlay_axes(r, rig.cameras[k], {target.bounds().center(), scene.target_axis_length(), c.loop.face_anchored_axes},
                                 target.bounds());
        }
        const Image img = c.annotate ? annotate_objects(r, labels) : r.rgb;
        write_png(img, c.out / fmt::format("view_{}.png", k + 1));
        write_indexed_png(mask, r.rgb.width, r.rgb.height, id_mask_palette(scene.objects.size()),
                          c.out / fmt::format("mask_{}.png", k + 1));
    }
    write_artifact_manifest(c.out);
    fmt::print(out, "wrote {} view(s) and mask(s) to {}\n", rig.size(), c.out.string());
    return kExitOk;
}

int cmd_generate(const CliConfig& c, std::ostream& out)
{
    const auto tasks = generate_synthetic_suite(c.suite_size, c.seed, c.out);
    fmt::print(out, "generated {} task(s) in {}\n", tasks.size(), (c.out / "suite.json").string());
    return kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env)
{
    CLI::App app{"Closed-loop, text-guided 6D object rearrangement.\n"
                 "Settings resolve as flag > --config file > REARRANGE_<FLAG> environment variable > default.\n"
                 "Exit codes: 0 faithful/success, 1 error, 2 max iterations reached, 64 usage error.",
                 "rearrange"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    std::map<std::string, SettingValues> flags;
    std::string config_path;
    const std::vector<std::pair<Sub, std::pair<const char*, const char*>>> subs{
        {kRun, {"run", "Run the evaluator/proposer loop on one scene"}},
        {kSuite, {"suite", "Run a task suite and write rows.jsonl, aggregate.json and report.md"}},
        {kRender, {"render", "Render K views and id masks without any backend"}},
        {kGenerate, {"generate", "Write a procedural tabletop suite"}}};
    std::map<std::string, CLI::App*> apps;
    for (const auto& [bit, meta] : subs) {
        CLI::App* sc = app.add_subcommand(meta.first, meta.second);
        apps[meta.first] = sc;
        sc->add_option("--config", config_path, "JSON file of settings keyed by flag name")->type_name("PATH");
        for (const auto& spec : flag_table()) {
            if (!(spec.subcommands & bit)) continue;
            const std::string key = spec.key;
            if (spec.boolean) {
                sc->add_flag_callback(spec.names, [&flags, key] { flags[key] = {"true"}; }, spec.help);
            } else {
                sc->add_option(spec.names, flags[key], spec.help)->type_name(spec.type);
            }
        }
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        json file = config_path.empty() ? json::object() : load_config_file(config_path);
        const CliConfig config = resolve_config(SettingSources(flags, std::move(file), env));
        if (apps["run"]->parsed()) return cmd_run(config, out);
        if (apps["suite"]->parsed()) return cmd_suite(config, out);
        if (apps["render"]->parsed()) return cmd_render(config, out);
        return cmd_generate(config, out);
    } catch (const UsageError& e) {
        fmt::print(err, "usage error: {}\nRun with --help for the list of flags.\n", e.what());
        return kExitUsage;
    } catch (const Error& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitError;
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitError;
    }
}

}  // namespace rearrange::cli
