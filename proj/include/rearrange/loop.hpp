#pragma once

#include <rearrange/backend.hpp>
#include <rearrange/camera.hpp>
#include <rearrange/render.hpp>
#include <rearrange/scene.hpp>

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rearrange {

struct Instruction {
    std::string text;

    explicit Instruction(std::string t);
};

struct EvaluatorVerdict {
    bool faithful = false;
    int supporting_view = 1;  ///< 1-based
    std::string rationale;
};

enum class ProposalMode { SingleAxis, EulerXyz };

struct PoseProposal {
    PoseUpdate update;
    std::string rationale;
};

struct IterationRecord {
    int iteration = 0;
    EvaluatorVerdict verdict;
    std::optional<PoseProposal> proposal;  ///< absent iff the verdict was faithful
    RigidPose pose_after;
};

class ContextMemory {
public:
    /// Enforces iterations 1, 2, 3, ... and proposal-iff-unfaithful.
    void append(IterationRecord record);

    const std::vector<IterationRecord>& records() const { return records_; }
    bool empty() const { return records_.empty(); }
    std::size_t size() const { return records_.size(); }

private:
    std::vector<IterationRecord> records_;
};

inline constexpr std::size_t kRationaleLimit = 400;
inline constexpr std::string_view kEmptyMemory = "(no previous iterations)";
inline constexpr std::string_view kMemoryHeader = "Context memory from previous iterations:";

/// Deterministic plain-text rendering; rationales truncated to 400 characters.
std::string serialize_memory(const ContextMemory& memory);
nlohmann::json memory_to_json(const ContextMemory& memory);

enum class EvaluatorAxesPolicy { Never, Auto, Always };

std::optional<EvaluatorAxesPolicy> parse_axes_policy(std::string_view text);
bool has_directional_vocabulary(std::string_view instruction);

struct Ablations {
    bool single_view = false;
    bool no_coord_vis = false;
    bool euler_rotation = false;
    bool no_memory = false;
};

struct PromptSet {
    std::string version;
    std::string selection_view;
    std::string selection_objects;
    std::string evaluator;
    std::string proposer;
    std::string proposer_euler;

    static PromptSet builtin();
    /// Loads <dir>/{selection_view,selection_objects,evaluator,proposer,proposer_euler}.txt
    static PromptSet load(const std::filesystem::path& dir);
};

/// Replaces {name} placeholders; unknown braces are left alone.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

struct LoopConfig {
    int k_views = 4;
    int max_iterations = 5;
    Ablations ablations;
    EvaluatorAxesPolicy evaluator_axes = EvaluatorAxesPolicy::Auto;
    double elevation_deg = 30.0;
    double margin = 0.9;
    CameraIntrinsics intrinsics = CameraIntrinsics::from_hfov(640, 480, 60.0);
    RenderOptions render;
    double translation_clamp = 3.0;
    bool face_anchored_axes = true;
    std::string task_id;
    std::optional<std::filesystem::path> artifact_dir;
    PromptSet prompts = PromptSet::builtin();

    void validate() const;
};

enum class Termination { Faithful, MaxIterations };

std::string_view termination_name(Termination t);

/// Structural facts about what was sent each iteration.
struct IterationArtifacts {
    int iteration = 0;
    std::size_t evaluator_images = 0;
    bool evaluator_axes = false;
    bool memory_block_sent = false;
    /// Pixels where the proposer image differs from the raw supporting view.
    std::optional<std::size_t> proposer_overlay_pixels;
    std::vector<std::filesystem::path> files;
};

struct ObjectSelection {
    std::string target_id;
    std::vector<std::string> related_ids;
    int view = 1;
};

struct LoopResult {
    SceneState final_scene;
    ContextMemory memory;
    Termination terminated_by = Termination::MaxIterations;
    ObjectSelection selection;
    double axis_length = 0;
    std::vector<IterationArtifacts> artifacts;
};

/// Propagated loop failure; carries the memory accumulated before it.
class LoopError : public Error {
public:
    LoopError(const Error& cause, ContextMemory memory)
        : Error(cause.code(), std::string(cause.what()).substr(error_code_name(cause.code()).size() + 2)),
          memory_(std::move(memory))
    {
    }

    const ContextMemory& memory() const { return memory_; }

private:
    ContextMemory memory_;
};

// Response parsing ----------------------------------------------------------

/// First balanced {...} in the text that parses as JSON (code fences and
/// surrounding prose are skipped).
std::optional<nlohmann::json> extract_first_json_object(std::string_view text);

EvaluatorVerdict parse_evaluator_response(std::string_view text);
PoseProposal parse_proposer_response(std::string_view text, ProposalMode mode);
int parse_view_choice(std::string_view text);
ObjectSelection parse_object_choice(std::string_view text);

// Loop stages ---------------------------------------------------------------

ObjectSelection select_objects(const SceneState& scene, const Instruction& instruction, AgentBackend& backend,
                               const LoopConfig& config);

EvaluatorVerdict run_evaluator(const SceneState& scene, const CameraRig& rig, const Instruction& instruction,
                               const ContextMemory& memory, const LoopConfig& config, AgentBackend& backend,
                               IterationArtifacts* artifacts = nullptr);

PoseProposal run_proposer(const SceneState& scene, const CameraRig& rig, const EvaluatorVerdict& verdict,
                          const Instruction& instruction, const ContextMemory& memory, const LoopConfig& config,
                          AgentBackend& backend, IterationArtifacts* artifacts = nullptr);

/// Rig for one loop iteration: K views (1 under the single-view ablation)
/// framing the target and related objects.
CameraRig iteration_rig(const SceneState& scene, const LoopConfig& config);

LoopResult run_loop(const SceneState& scene, const Instruction& instruction, AgentBackend& backend, const LoopConfig& config);

}  // namespace rearrange
