#include "cli_options.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>

namespace rearrange::cli {

using nlohmann::json;

SettingSources::SettingSources(std::map<std::string, SettingValues> flags, json file, EnvLookup env)
    : flags_(std::move(flags)), file_(std::move(file)), env_(std::move(env))
{
    if (file_.is_null()) file_ = json::object();
}

namespace {

std::string json_scalar(const json& v)
{
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
}

}  // namespace

std::optional<SettingValues> SettingSources::lookup(const std::string& key) const
{
    if (const auto it = flags_.find(key); it != flags_.end() && !it->second.empty()) return it->second;
    if (file_.contains(key)) {
        const json& v = file_.at(key);
        SettingValues values;
        if (v.is_array()) {
            for (const auto& e : v) values.push_back(json_scalar(e));
        } else {
            values.push_back(json_scalar(v));
        }
        return values;
    }
    if (env_) {
        if (auto v = env_(env_name(key))) {
            // Repeatable settings take a comma-separated list from the environment.
            SettingValues values;
            std::string item;
            for (const char c : *v + ",") {
                if (c == ',') {
                    if (!item.empty()) values.push_back(item);
                    item.clear();
                } else {
                    item += c;
                }
            }
            return values.empty() ? SettingValues{*v} : values;
        }
    }
    return std::nullopt;
}

std::optional<std::string> SettingSources::scalar(const std::string& key) const
{
    if (const auto it = flags_.find(key); it != flags_.end() && !it->second.empty()) return it->second.back();
    if (file_.contains(key)) return json_scalar(file_.at(key));
    if (env_) return env_(env_name(key));
    return std::nullopt;
}

std::string SettingSources::origin(const std::string& key) const
{
    if (const auto it = flags_.find(key); it != flags_.end() && !it->second.empty()) return "flag";
    if (file_.contains(key)) return "config";
    if (env_ && env_(env_name(key))) return "env";
    return "default";
}

std::string SettingSources::env_name(const std::string& key)
{
    std::string name = "REARRANGE_";
    for (const char c : key) name += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return name;
}

EnvLookup SettingSources::process_env()
{
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (!v) return std::nullopt;
        return std::string(v);
    };
}

json load_config_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingAsset, fmt::format("config file {}", path.string()));
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedManifest, fmt::format("{}: {}", path.string(), e.what()));
    }
    if (!doc.is_object()) throw Error(ErrorCode::MalformedManifest, fmt::format("{}: config must be a JSON object", path.string()));
    for (const auto& [key, value] : doc.items()) {
        if (std::find(setting_keys().begin(), setting_keys().end(), key) == setting_keys().end()) {
            throw UsageError(fmt::format("{}: unknown setting '{}'", path.string(), key));
        }
    }
    return doc;
}

std::optional<BackendKind> parse_backend_kind(std::string_view text)
{
    if (text == "oracle") return BackendKind::Oracle;
    if (text == "http") return BackendKind::Http;
    if (text == "replay") return BackendKind::Replay;
    return std::nullopt;
}

const std::vector<std::string>& setting_keys()
{
    static const std::vector<std::string> keys{
        "scene",      "rgbd",        "task-file",      "task-id",     "instruction",      "backend",     "endpoint",
        "model",      "api-key-env", "transcript",     "record",      "k-views",          "elevation",   "margin",
        "width",      "height",      "hfov",           "max-iters",   "seed",             "out",         "ablate",
        "max-iter-sweep", "evaluator-axes", "jobs",    "prompts",     "oracle-mode",      "noise-prob",  "goal-translation",
        "goal-rotation", "target",   "related",        "axes",        "annotate",         "n"};
    return keys;
}

namespace {

template <typename T>
T parse_number(const std::string& key, std::string_view text)
{
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw UsageError(fmt::format("--{}: '{}' is not a valid number", key, text));
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(value)) throw UsageError(fmt::format("--{}: '{}' is not finite", key, text));
    }
    return value;
}

bool parse_bool(const std::string& key, std::string_view text)
{
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw UsageError(fmt::format("--{}: '{}' is not a boolean", key, text));
}

std::vector<std::string> split(std::string_view text, char sep)
{
    std::vector<std::string> parts;
    std::string item;
    for (const char c : text) {
        if (c == sep) {
            parts.push_back(item);
            item.clear();
        } else {
            item += c;
        }
    }
    parts.push_back(item);
    return parts;
}

}  // namespace

Ablations parse_ablations(const std::vector<std::string>& names)
{
    Ablations a;
    for (const auto& raw : names) {
        for (const auto& name : split(raw, ',')) {
            if (name == "single-view") {
                a.single_view = true;
            } else if (name == "no-coord-vis") {
                a.no_coord_vis = true;
            } else if (name == "euler-rot") {
                a.euler_rotation = true;
            } else if (name == "no-memory") {
                a.no_memory = true;
            } else {
                throw UsageError(fmt::format("--ablate: unknown ablation '{}' (single-view, no-coord-vis, euler-rot, no-memory)", name));
            }
        }
    }
    return a;
}

std::pair<int, int> parse_range(std::string_view text)
{
    const auto dots = text.find("..");
    if (dots == std::string_view::npos) throw UsageError(fmt::format("--max-iter-sweep: expected A..B, got '{}'", text));
    const int a = parse_number<int>("max-iter-sweep", text.substr(0, dots));
    const int b = parse_number<int>("max-iter-sweep", text.substr(dots + 2));
    if (a < 1 || b < a) throw UsageError(fmt::format("--max-iter-sweep: need 1 <= A <= B, got '{}'", text));
    return {a, b};
}

Vec3 parse_vec3(std::string_view text)
{
    const auto parts = split(text, ',');
    if (parts.size() != 3) throw UsageError(fmt::format("expected x,y,z, got '{}'", text));
    return {parse_number<double>("goal-translation", parts[0]), parse_number<double>("goal-translation", parts[1]),
            parse_number<double>("goal-translation", parts[2])};
}

std::pair<RotationAxis, double> parse_axis_angle(std::string_view text)
{
    const auto colon = text.find(':');
    const auto axis = colon == std::string_view::npos ? std::nullopt : parse_axis(text.substr(0, colon));
    if (!axis) throw UsageError(fmt::format("--goal-rotation: expected AXIS:DEGREES, got '{}'", text));
    return {*axis, parse_number<double>("goal-rotation", text.substr(colon + 1))};
}

CliConfig resolve_config(const SettingSources& src)
{
    CliConfig c;
    const auto str = [&](const char* key) { return src.scalar(key); };
    const auto num = [&]<typename T>(const char* key, T& dst) {
        if (const auto v = src.scalar(key)) dst = parse_number<T>(key, *v);
    };
    const auto flag = [&](const char* key, bool& dst) {
        if (const auto v = src.scalar(key)) dst = parse_bool(key, *v);
    };

    if (auto v = str("scene")) c.scene = *v;
    if (auto v = str("rgbd")) c.rgbd = *v;
    if (auto v = str("task-file")) c.task_file = *v;
    if (auto v = str("task-id")) c.task_id = *v;
    if (auto v = str("instruction")) c.instruction = *v;
    if (auto v = str("backend")) {
        const auto kind = parse_backend_kind(*v);
        if (!kind) throw UsageError(fmt::format("--backend: unknown backend '{}' (http, oracle, replay)", *v));
        c.backend = *kind;
    }
    if (auto v = str("endpoint")) c.endpoint = *v;
    if (auto v = str("model")) c.model = *v;
    if (auto v = str("api-key-env")) c.api_key_env = *v;
    if (auto v = str("transcript")) c.transcript = *v;
    if (auto v = str("record")) c.record = *v;

    num("k-views", c.loop.k_views);
    num("elevation", c.loop.elevation_deg);
    num("margin", c.loop.margin);
    int width = c.loop.intrinsics.width, height = c.loop.intrinsics.height;
    double hfov = 60.0;
    num("width", width);
    num("height", height);
    num("hfov", hfov);
    if (width < 1 || height < 1 || !(hfov > 0 && hfov < 180)) throw UsageError("image size must be positive and --hfov in (0, 180)");
    c.loop.intrinsics = CameraIntrinsics::from_hfov(width, height, hfov);
    num("max-iters", c.loop.max_iterations);
    num("seed", c.seed);
    if (auto v = str("out")) c.out = *v;
    if (auto v = src.lookup("ablate")) c.loop.ablations = parse_ablations(*v);
    if (auto v = str("max-iter-sweep")) c.max_iter_sweep = parse_range(*v);
    if (auto v = str("evaluator-axes")) {
        const auto policy = parse_axes_policy(*v);
        if (!policy) throw UsageError(fmt::format("--evaluator-axes: expected never, auto or always, got '{}'", *v));
        c.loop.evaluator_axes = *policy;
    }
    num("jobs", c.jobs);
    if (auto v = str("prompts")) c.loop.prompts = PromptSet::load(*v);
    if (auto v = str("oracle-mode")) {
        if (*v != "greedy" && *v != "adversarial") throw UsageError(fmt::format("--oracle-mode: expected greedy or adversarial, got '{}'", *v));
        c.adversarial = *v == "adversarial";
    }
    num("noise-prob", c.noise_prob);
    if (auto v = str("goal-translation")) c.goal_translation = parse_vec3(*v);
    if (auto v = str("goal-rotation")) c.goal_rotation = parse_axis_angle(*v);
    if (auto v = str("target")) c.target = *v;
    if (auto v = src.lookup("related")) {
        for (const auto& item : *v) {
            for (auto& id : split(item, ',')) {
                if (!id.empty()) c.related.push_back(id);
            }
        }
    }
    flag("axes", c.axes);
    flag("annotate", c.annotate);
    num("n", c.suite_size);

    if (c.loop.k_views < 1) throw UsageError("--k-views must be >= 1");
    if (c.loop.max_iterations < 1) throw UsageError("--max-iters must be >= 1");
    if (!(c.loop.elevation_deg > -89 && c.loop.elevation_deg < 89)) throw UsageError("--elevation must lie in (-89, 89)");
    if (!(c.loop.margin > 0 && c.loop.margin <= 1)) throw UsageError("--margin must lie in (0, 1]");
    if (c.jobs < 1) throw UsageError("--jobs must be >= 1");
    if (!(c.noise_prob >= 0 && c.noise_prob < 1)) throw UsageError("--noise-prob must lie in [0, 1)");
    if (c.suite_size < 1) throw UsageError("--n must be >= 1");
    if (c.scene && c.rgbd) throw UsageError("--scene and --rgbd are mutually exclusive");
    return c;
}

}  // namespace rearrange::cli
