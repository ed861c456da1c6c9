#pragma once

#include <rearrange/eval.hpp>
#include <rearrange/loop.hpp>

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rearrange::cli {

/// Bad flag values or combinations; maps to exit code 64.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitMaxIterations = 2;
inline constexpr int kExitUsage = 64;

/// Raw values for one setting from the three layers. Repeatable settings keep
/// every value; scalar settings use the last.
using SettingValues = std::vector<std::string>;
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Flag > config file > environment (REARRANGE_<KEY>) > default.
class SettingSources {
public:
    SettingSources(std::map<std::string, SettingValues> flags, nlohmann::json file, EnvLookup env);

    std::optional<SettingValues> lookup(const std::string& key) const;
    std::optional<std::string> scalar(const std::string& key) const;
    /// Which layer supplied the value: "flag", "config", "env" or "default".
    std::string origin(const std::string& key) const;

    static std::string env_name(const std::string& key);
    static EnvLookup process_env();

private:
    std::map<std::string, SettingValues> flags_;
    nlohmann::json file_;
    EnvLookup env_;
};

/// Reads a JSON config file; keys are flag names without dashes prefix.
nlohmann::json load_config_file(const std::filesystem::path& path);

enum class BackendKind { Oracle, Http, Replay };

std::optional<BackendKind> parse_backend_kind(std::string_view text);

struct CliConfig {
    std::optional<std::filesystem::path> scene;
    std::optional<std::filesystem::path> rgbd;
    std::optional<std::filesystem::path> task_file;
    std::optional<std::string> task_id;
    std::optional<std::string> instruction;

    BackendKind backend = BackendKind::Oracle;
    std::string endpoint;
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    std::optional<std::filesystem::path> transcript;  ///< replay source
    std::optional<std::filesystem::path> record;      ///< record destination

    LoopConfig loop;
    std::uint64_t seed = 0;
    std::filesystem::path out = "out";
    std::optional<std::pair<int, int>> max_iter_sweep;
    int jobs = 1;

    // Oracle
    bool adversarial = false;
    double noise_prob = 0.0;
    std::optional<Vec3> goal_translation;
    std::optional<std::pair<RotationAxis, double>> goal_rotation;

    // Roles given up front instead of asking the selection agent.
    std::optional<std::string> target;
    std::vector<std::string> related;

    // render
    bool axes = false;
    bool annotate = false;

    // generate
    int suite_size = 10;
};

/// Keys understood by resolve_config, in --help order.
const std::vector<std::string>& setting_keys();

/// Typed, validated view of the merged sources. Throws UsageError.
CliConfig resolve_config(const SettingSources& sources);

Ablations parse_ablations(const std::vector<std::string>& names);
std::pair<int, int> parse_range(std::string_view text);
Vec3 parse_vec3(std::string_view text);
std::pair<RotationAxis, double> parse_axis_angle(std::string_view text);

}  // namespace rearrange::cli
