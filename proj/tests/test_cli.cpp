#include "fixtures.hpp"

#include "cli_options.hpp"
#include "commands.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace rearrange;
using namespace rearrange::cli;
using namespace rearrange::testing;
using nlohmann::json;

namespace {

EnvLookup fake_env(std::map<std::string, std::string> vars)
{
    return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
        const auto it = vars.find(name);
        if (it == vars.end()) return std::nullopt;
        return it->second;
    };
}

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun run(const std::vector<std::string>& args, std::map<std::string, std::string> env = {})
{
    std::ostringstream out, err;
    const int code = run_cli(args, out, err, fake_env(std::move(env)));
    return {code, out.str(), err.str()};
}

}  // namespace

TEST(Settings, PrecedenceFlagConfigEnvDefault)
{
    const EnvLookup env = fake_env({{"REARRANGE_MAX_ITERS", "7"}, {"REARRANGE_K_VIEWS", "3"}, {"REARRANGE_SEED", "11"}});
    const json file = {{"k-views", 2}, {"seed", 12}};
    const SettingSources src({{"seed", {"13"}}}, file, env);

    EXPECT_EQ(src.origin("seed"), "flag");
    EXPECT_EQ(src.origin("k-views"), "config");
    EXPECT_EQ(src.origin("max-iters"), "env");
    EXPECT_EQ(src.origin("elevation"), "default");

    const CliConfig c = resolve_config(src);
    EXPECT_EQ(c.seed, 13u);
    EXPECT_EQ(c.loop.k_views, 2);
    EXPECT_EQ(c.loop.max_iterations, 7);
    EXPECT_EQ(c.loop.elevation_deg, LoopConfig{}.elevation_deg);
}

TEST(Settings, EmptyFlagFallsThrough)
{
    const SettingSources src({{"seed", {}}}, json::object(), fake_env({{"REARRANGE_SEED", "5"}}));
    EXPECT_EQ(src.origin("seed"), "env");
    EXPECT_EQ(resolve_config(src).seed, 5u);
}

TEST(Settings, EnvName)
{
    EXPECT_EQ(SettingSources::env_name("max-iter-sweep"), "REARRANGE_MAX_ITER_SWEEP");
    EXPECT_EQ(SettingSources::env_name("k-views"), "REARRANGE_K_VIEWS");
}

TEST(Settings, ConfigFileKeys)
{
    const auto dir = scratch_dir("cli_config");
    std::ofstream(dir / "good.json") << R"({"k-views": 2, "axes": true, "ablate": ["no-memory", "single-view"]})";
    const json good = load_config_file(dir / "good.json");
    const CliConfig c = resolve_config(SettingSources({}, good, fake_env({})));
    EXPECT_EQ(c.loop.k_views, 2);
    EXPECT_TRUE(c.axes);
    EXPECT_TRUE(c.loop.ablations.no_memory);
    EXPECT_TRUE(c.loop.ablations.single_view);

    std::ofstream(dir / "bad.json") << R"({"k-veiws": 2})";
    EXPECT_THROW(load_config_file(dir / "bad.json"), UsageError);
    std::ofstream(dir / "array.json") << "[1]";
    EXPECT_EQ(error_code_of([&] { load_config_file(dir / "array.json"); }), ErrorCode::MalformedManifest);
    EXPECT_EQ(error_code_of([&] { load_config_file(dir / "nope.json"); }), ErrorCode::MissingAsset);
}

TEST(Settings, ValidationIsUsageError)
{
    const auto bad = [](std::map<std::string, SettingValues> flags) {
        EXPECT_THROW(resolve_config(SettingSources(std::move(flags), json::object(), fake_env({}))), UsageError);
    };
    bad({{"k-views", {"0"}}});
    bad({{"k-views", {"2x"}}});
    bad({{"max-iters", {"0"}}});
    bad({{"margin", {"1.5"}}});
    bad({{"noise-prob", {"1"}}});
    bad({{"backend", {"grpc"}}});
    bad({{"oracle-mode", {"lazy"}}});
    bad({{"evaluator-axes", {"sometimes"}}});
    bad({{"hfov", {"180"}}});
    bad({{"scene", {"a.json"}}, {"rgbd", {"b"}}});
    bad({{"axes", {"maybe"}}});
}

TEST(Parsers, Ablations)
{
    const Ablations a = parse_ablations({"single-view,euler-rot", "no-coord-vis"});
    EXPECT_TRUE(a.single_view);
    EXPECT_TRUE(a.euler_rotation);
    EXPECT_TRUE(a.no_coord_vis);
    EXPECT_FALSE(a.no_memory);
    EXPECT_THROW(parse_ablations({"no-vision"}), UsageError);
}

TEST(Parsers, RangeVecAxisAngle)
{
    EXPECT_EQ(parse_range("1..5"), std::make_pair(1, 5));
    EXPECT_EQ(parse_range("3..3"), std::make_pair(3, 3));
    EXPECT_THROW(parse_range("5..1"), UsageError);
    EXPECT_THROW(parse_range("0..2"), UsageError);
    EXPECT_THROW(parse_range("1-5"), UsageError);
    EXPECT_EQ(parse_vec3("1,-0.5,2"), Vec3(1, -0.5, 2));
    EXPECT_THROW(parse_vec3("1,2"), UsageError);
    EXPECT_THROW(parse_vec3("1,2,nan"), UsageError);
    const auto [axis, deg] = parse_axis_angle("y:-90");
    EXPECT_EQ(axis, RotationAxis::Y);
    EXPECT_EQ(deg, -90);
    EXPECT_THROW(parse_axis_angle("w:90"), UsageError);
    EXPECT_THROW(parse_axis_angle("z90"), UsageError);
}

TEST(RunCli, HelpAndUsage)
{
    const CliRun help = run({"--help"});
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("Exit codes"), std::string::npos);
    EXPECT_EQ(run({}).code, kExitUsage);
    EXPECT_EQ(run({"fly"}).code, kExitUsage);
    EXPECT_EQ(run({"run", "--no-such-flag"}).code, kExitUsage);
    const CliRun missing = run({"run", "--instruction", "x"});
    EXPECT_EQ(missing.code, kExitUsage);
    EXPECT_NE(missing.err.find("--scene"), std::string::npos);
}

TEST(RunCli, ExitCodesFollowOutcome)
{
    const auto dir = scratch_dir("cli_run");
    const std::string suite = (dir / "suite" / "suite.json").string();
    ASSERT_EQ(run({"generate", "--n", "2", "--seed", "4", "--out", (dir / "suite").string()}).code, kExitOk);
    ASSERT_TRUE(std::filesystem::exists(suite));

    const CliRun ok = run({"run", "--task-file", suite, "--task-id", "task_000", "--out", (dir / "ok").string(),
                           "--width", "160", "--height", "120"});
    EXPECT_EQ(ok.code, kExitOk) << ok.err;
    EXPECT_TRUE(std::filesystem::exists(dir / "ok" / "artifacts.json"));

    const CliRun adv = run({"run", "--task-file", suite, "--task-id", "task_000", "--oracle-mode", "adversarial",
                            "--max-iters", "2", "--out", (dir / "adv").string(), "--width", "160", "--height", "120"});
    EXPECT_EQ(adv.code, kExitMaxIterations) << adv.err;

    // Environment supplies the mode when no flag does.
    const CliRun env = run({"run", "--task-file", suite, "--task-id", "task_000", "--max-iters", "1", "--out",
                            (dir / "env").string(), "--width", "160", "--height", "120"},
                           {{"REARRANGE_ORACLE_MODE", "adversarial"}});
    EXPECT_EQ(env.code, kExitMaxIterations) << env.err;

    EXPECT_EQ(run({"run", "--scene", (dir / "none.json").string(), "--instruction", "move", "--out", (dir / "x").string()}).code,
              kExitError);
    EXPECT_EQ(run({"run", "--task-file", suite, "--task-id", "task_999"}).code, kExitUsage);
    EXPECT_EQ(run({"suite", "--suite", suite, "--ablate", "bogus"}).code, kExitUsage);
}

TEST(RunCli, SuiteWritesBundle)
{
    const auto dir = scratch_dir("cli_suite");
    ASSERT_EQ(run({"generate", "--n", "3", "--seed", "6", "--out", (dir / "suite").string()}).code, kExitOk);
    const CliRun r = run({"suite", "--suite", (dir / "suite" / "suite.json").string(), "--out", (dir / "out").string(),
                          "--width", "96", "--height", "72"});
    EXPECT_EQ(r.code, kExitOk) << r.err;
    for (const char* f : {"rows.jsonl", "aggregate.json", "report.md", "artifacts.json"}) {
        EXPECT_TRUE(std::filesystem::exists(dir / "out" / f)) << f;
    }
}
