#include <rearrange/loop.hpp>

#include "prompt_templates.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace rearrange {

using nlohmann::json;

Instruction::Instruction(std::string t) : text(std::move(t))
{
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) {
        throw Error(ErrorCode::InvalidArgument, "instruction must not be empty");
    }
}

// ---------------------------------------------------------------------------
// Context memory

void ContextMemory::append(IterationRecord record)
{
    const int expected = static_cast<int>(records_.size()) + 1;
    if (record.iteration != expected) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("memory expects iteration {}, got {}", expected, record.iteration));
    }
    if (record.verdict.faithful == record.proposal.has_value()) {
        throw Error(ErrorCode::InvalidArgument, "a record carries a proposal exactly when the verdict is not faithful");
    }
    records_.push_back(std::move(record));
}

namespace {

// Truncates to `limit` code points (UTF-8) and flattens newlines.
std::string clip_rationale(std::string_view text, std::size_t limit)
{
    std::string out;
    std::size_t code_points = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const auto byte = static_cast<unsigned char>(text[i]);
        const bool continuation = (byte & 0xC0) == 0x80;
        if (!continuation) {
            if (code_points == limit) {
                out += "\xE2\x80\xA6";  // ellipsis
                return out;
            }
            ++code_points;
        }
        out += (text[i] == '\n' || text[i] == '\r') ? ' ' : text[i];
    }
    return out;
}

std::string format_vec(const Vec3& v)
{
    return fmt::format("[{:.6g}, {:.6g}, {:.6g}]", v.x(), v.y(), v.z());
}

}  // namespace

std::string serialize_memory(const ContextMemory& memory)
{
    if (memory.empty()) return std::string(kEmptyMemory);
    std::string out(kMemoryHeader);
    for (const auto& rec : memory.records()) {
        out += fmt::format("\nIteration {}: evaluator judged the scene {} (supporting view {}). Evaluator rationale: {}",
                           rec.iteration, rec.verdict.faithful ? "FAITHFUL" : "NOT faithful", rec.verdict.supporting_view,
                           clip_rationale(rec.verdict.rationale, kRationaleLimit));
        if (rec.proposal) {
            const auto& u = rec.proposal->update;
            const std::string rotation =
                u.euler_xyz_deg ? fmt::format("Euler x-y-z angles {} deg", format_vec(*u.euler_xyz_deg))
                                : fmt::format("{:.6g} deg about {}", u.angle_deg, axis_name(u.axis));
            out += fmt::format("\n  Proposed update: translation {} axis units, rotation {}. Proposer rationale: {}",
                               format_vec(u.translation_units), rotation,
                               clip_rationale(rec.proposal->rationale, kRationaleLimit));
        }
        out += fmt::format("\n  Target position after iteration: {}", format_vec(rec.pose_after.translation));
    }
    return out;
}

json memory_to_json(const ContextMemory& memory)
{
    json records = json::array();
    for (const auto& rec : memory.records()) {
        json r = {{"iteration", rec.iteration},
                  {"faithful", rec.verdict.faithful},
                  {"supporting_view", rec.verdict.supporting_view},
                  {"evaluator_rationale", rec.verdict.rationale}};
        if (rec.proposal) {
            const auto& u = rec.proposal->update;
            json p = {{"translation_units", {u.translation_units.x(), u.translation_units.y(), u.translation_units.z()}},
                      {"rationale", rec.proposal->rationale}};
            if (u.euler_xyz_deg) {
                p["euler_xyz_deg"] = {u.euler_xyz_deg->x(), u.euler_xyz_deg->y(), u.euler_xyz_deg->z()};
            } else {
                p["rotation_axis"] = std::string(axis_name(u.axis));
                p["rotation_angle_deg"] = u.angle_deg;
            }
            r["proposal"] = p;
        }
        json rot = json::array();
        for (int i = 0; i < 3; ++i) rot.push_back({rec.pose_after.rotation(i, 0), rec.pose_after.rotation(i, 1), rec.pose_after.rotation(i, 2)});
        r["pose_after"] = {{"rotation", rot},
                           {"translation", {rec.pose_after.translation.x(), rec.pose_after.translation.y(), rec.pose_after.translation.z()}}};
        records.push_back(std::move(r));
    }
    return {{"records", records}};
}

// ---------------------------------------------------------------------------
// Config, prompts

std::optional<EvaluatorAxesPolicy> parse_axes_policy(std::string_view text)
{
    if (text == "never") return EvaluatorAxesPolicy::Never;
    if (text == "auto") return EvaluatorAxesPolicy::Auto;
    if (text == "always") return EvaluatorAxesPolicy::Always;
    return std::nullopt;
}

bool has_directional_vocabulary(std::string_view instruction)
{
    static const std::set<std::string> keywords{"left",   "right",   "front",    "back",      "behind",
                                                "forward", "forwards", "backward", "backwards"};
    std::string word;
    const auto flush = [&] {
        const bool hit = keywords.contains(word);
        word.clear();
        return hit;
    };
    for (const char c : instruction) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (flush()) {
            return true;
        }
    }
    return flush();
}

PromptSet PromptSet::builtin()
{
    return {std::string(prompts::kVersion),   std::string(prompts::k_selection_view), std::string(prompts::k_selection_objects),
            std::string(prompts::k_evaluator), std::string(prompts::k_proposer),       std::string(prompts::k_proposer_euler)};
}

PromptSet PromptSet::load(const std::filesystem::path& dir)
{
    const auto read = [&](const char* name) {
        const auto path = dir / (std::string(name) + ".txt");
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::MissingAsset, path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    return {dir.filename().string(), read("selection_view"), read("selection_objects"), read("evaluator"), read("proposer"),
            read("proposer_euler")};
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values)
{
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                const auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += tmpl[i++];
    }
    return out;
}

void LoopConfig::validate() const
{
    if (k_views < 1) throw Error(ErrorCode::InvalidArgument, "k_views must be >= 1");
    if (max_iterations < 1) throw Error(ErrorCode::InvalidArgument, "max_iterations must be >= 1");
    if (!(translation_clamp > 0)) throw Error(ErrorCode::InvalidArgument, "translation clamp must be positive");
    intrinsics.validate();
}

std::string_view termination_name(Termination t)
{
    return t == Termination::Faithful ? "faithful" : "max_iterations";
}

// ---------------------------------------------------------------------------
// Parsing

std::optional<json> extract_first_json_object(std::string_view text)
{
    for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t j = start; j < text.size(); ++j) {
            const char c = text[j];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}' && --depth == 0) {
                auto parsed = json::parse(text.substr(start, j - start + 1), nullptr, false);
                if (!parsed.is_discarded() && parsed.is_object()) return parsed;
                break;
            }
        }
    }
    return std::nullopt;
}

namespace {

json require_object(std::string_view text)
{
    auto obj = extract_first_json_object(text);
    if (!obj) throw ParseFailure("no JSON object found in response", std::string(text));
    return *obj;
}

const json& require_field(const json& obj, const char* name, std::string_view raw)
{
    if (!obj.contains(name)) throw ParseFailure(fmt::format("missing field '{}'", name), std::string(raw));
    return obj.at(name);
}

std::string require_string(const json& obj, const char* name, std::string_view raw)
{
    const auto& v = require_field(obj, name, raw);
    if (!v.is_string()) throw ParseFailure(fmt::format("field '{}' must be a string", name), std::string(raw));
    return v.get<std::string>();
}

int require_positive_int(const json& obj, const char* name, std::string_view raw)
{
    const auto& v = require_field(obj, name, raw);
    if (!v.is_number_integer()) throw ParseFailure(fmt::format("field '{}' must be an integer", name), std::string(raw));
    const auto n = v.get<long long>();
    if (n < 1 || n > 1'000'000) throw ParseFailure(fmt::format("field '{}' must be a positive view index", name), std::string(raw));
    return static_cast<int>(n);
}

double require_number(const json& v, const std::string& what, std::string_view raw)
{
    if (!v.is_number()) throw ParseFailure(fmt::format("{} must be a number", what), std::string(raw));
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ParseFailure(fmt::format("{} must be finite", what), std::string(raw));
    return d;
}

Vec3 require_vec3(const json& obj, const char* name, std::string_view raw)
{
    const auto& v = require_field(obj, name, raw);
    if (!v.is_array() || v.size() != 3) throw ParseFailure(fmt::format("field '{}' must be an array of 3 numbers", name), std::string(raw));
    return {require_number(v[0], name, raw), require_number(v[1], name, raw), require_number(v[2], name, raw)};
}

}  // namespace

EvaluatorVerdict parse_evaluator_response(std::string_view text)
{
    const json obj = require_object(text);
    const auto& faithful = require_field(obj, "faithful", text);
    if (!faithful.is_boolean()) throw ParseFailure("field 'faithful' must be a boolean", std::string(text));
    EvaluatorVerdict v;
    v.faithful = faithful.get<bool>();
    v.supporting_view = require_positive_int(obj, "best_view", text);
    v.rationale = require_string(obj, "rationale", text);
    return v;
}

PoseProposal parse_proposer_response(std::string_view text, ProposalMode mode)
{
    const json obj = require_object(text);
    PoseProposal p;
    p.update.translation_units = require_vec3(obj, "translation", text);
    if (mode == ProposalMode::EulerXyz) {
        p.update.euler_xyz_deg = require_vec3(obj, "euler_xyz_deg", text);
    } else {
        const auto axis = parse_axis(require_string(obj, "rotation_axis", text));
        if (!axis) throw ParseFailure("field 'rotation_axis' must be one of x, y, z", std::string(text));
        p.update.axis = *axis;
        p.update.angle_deg = require_number(require_field(obj, "rotation_angle_deg", text), "rotation_angle_deg", text);
    }
    p.rationale = require_string(obj, "rationale", text);
    return p;
}

int parse_view_choice(std::string_view text)
{
    return require_positive_int(require_object(text), "best_view", text);
}

ObjectSelection parse_object_choice(std::string_view text)
{
    const json obj = require_object(text);
    ObjectSelection s;
    s.target_id = require_string(obj, "target", text);
    const auto& related = require_field(obj, "related", text);
    if (!related.is_array()) throw ParseFailure("field 'related' must be an array of ids", std::string(text));
    for (const auto& r : related) {
        if (!r.is_string()) throw ParseFailure("field 'related' must contain strings", std::string(text));
        s.related_ids.push_back(r.get<std::string>());
    }
    return s;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

constexpr std::string_view kEvaluatorSchema =
    R"({"faithful": true|false, "best_view": <integer>, "rationale": "<string>"})";
constexpr std::string_view kProposerSchema =
    R"({"translation": [tx, ty, tz], "rotation_axis": "x"|"y"|"z", "rotation_angle_deg": <number>, "rationale": "<string>"})";
constexpr std::string_view kEulerSchema = R"({"translation": [tx, ty, tz], "euler_xyz_deg": [rx, ry, rz], "rationale": "<string>"})";
constexpr std::string_view kViewSchema = R"({"best_view": <integer>, "rationale": "<string>"})";
constexpr std::string_view kObjectsSchema = R"({"target": "<id>", "related": ["<id>", ...], "rationale": "<string>"})";

// One repair reprompt on a parse failure, then ProtocolViolation.
template <typename Parser>
auto query_with_repair(AgentBackend& backend, const AgentRequest& request, Parser parse, std::string_view schema)
{
    const std::string first = backend.complete(request);
    try {
        return parse(first);
    } catch (const ParseFailure& failure) {
        spdlog::warn("{} response unparseable ({}); sending repair prompt", agent_role_name(request.role), failure.what());
        AgentRequest repair = request;
        repair.metadata.attempt = 1;
        repair.prompt += fmt::format(
            "\n\nYour previous reply could not be used: {}\nReply again with exactly one JSON object of the form:\n{}\n",
            failure.what(), schema);
        const std::string second = backend.complete(repair);
        try {
            return parse(second);
        } catch (const ParseFailure& again) {
            throw Error(ErrorCode::ProtocolViolation,
                        fmt::format("{} response unparseable after a repair prompt: {}", agent_role_name(request.role), again.what()));
        }
    }
}

std::vector<RenderOutput> render_rig(const SceneState& scene, const CameraRig& rig, const LoopConfig& config)
{
    std::vector<RenderOutput> out;
    out.reserve(rig.size());
    for (const auto& cam : rig.cameras) out.push_back(render(scene, cam, config.render));
    return out;
}

std::vector<std::vector<std::size_t>> pixel_counts(const std::vector<RenderOutput>& renders, std::size_t objects)
{
    std::vector<std::vector<std::size_t>> counts;
    for (const auto& r : renders) {
        std::vector<std::size_t> per(objects, 0);
        for (Eigen::Index i = 0; i < r.object_id.size(); ++i) {
            const int id = r.object_id.data()[i];
            if (id >= 0 && static_cast<std::size_t>(id) < objects) ++per[static_cast<std::size_t>(id)];
        }
        counts.push_back(std::move(per));
    }
    return counts;
}

void publish(AgentBackend& backend, const SceneState& scene, const CameraRig& rig, std::vector<std::vector<std::size_t>> pixels,
             double axis_len, const Instruction& instruction)
{
    auto obs = std::make_shared<Observation>();
    obs->scene = scene;
    obs->rig = rig;
    obs->pixels = std::move(pixels);
    obs->axis_length = axis_len;
    obs->instruction = instruction.text;
    backend.observe(std::move(obs));
}

std::string id_list(const SceneState& scene, ObjectRole role)
{
    std::string out;
    for (const auto idx : scene.indices_with_role(role)) {
        if (!out.empty()) out += ", ";
        out += scene.objects[idx].id;
    }
    return out.empty() ? std::string("(none)") : out;
}

std::string axis_semantics(bool drawn, bool for_proposer)
{
    std::string text =
        drawn ? "An object-centred coordinate frame is drawn on the target: the red arrow is +x (front), the green arrow is +y "
                "(right) and the blue arrow is +z (up). The frame shares its directions with the world."
              : "Coordinate frame (not drawn): +x points to the front of the scene, +y to the right and +z up. The frame is "
                "centred on the target and shares its directions with the world.";
    text += " Rotations follow the right-hand rule: a positive angle turns counter-clockwise when viewed from the tip of the "
            "axis looking back toward the object.";
    if (for_proposer && !drawn) {
        text += " One axis unit is comparable to the smallest dimension of the target.";
    }
    return text;
}

std::string memory_block(const ContextMemory& memory, const LoopConfig& config)
{
    if (config.ablations.no_memory) return {};
    if (memory.empty()) return fmt::format("{}\n{}", kMemoryHeader, kEmptyMemory);
    return serialize_memory(memory);
}

AxesOverlaySpec axes_spec(const SceneState& scene, const LoopConfig& config)
{
    return {scene.target().bounds().center(), scene.target_axis_length(), config.face_anchored_axes};
}

std::filesystem::path iteration_dir(const LoopConfig& config, int iteration)
{
    return *config.artifact_dir / fmt::format("iter_{:02d}", iteration);
}

void save_artifact(const Image& img, const std::filesystem::path& path, IterationArtifacts* artifacts)
{
    write_png(img, path);
    if (artifacts) artifacts->files.push_back(path);
}

std::size_t differing_pixels(const Image& a, const Image& b)
{
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.data.size(); i += 3) {
        if (a.data[i] != b.data[i] || a.data[i + 1] != b.data[i + 1] || a.data[i + 2] != b.data[i + 2]) ++n;
    }
    return n;
}

}  // namespace

CameraRig iteration_rig(const SceneState& scene, const LoopConfig& config)
{
    const int views = config.ablations.single_view ? 1 : config.k_views;
    return frame_aabb(scene.focus_bounds(), config.intrinsics, {views, config.elevation_deg, config.margin});
}

ObjectSelection select_objects(const SceneState& scene, const Instruction& instruction, AgentBackend& backend,
                               const LoopConfig& config)
{
    if (scene.objects.empty()) throw Error(ErrorCode::InvalidArgument, "object selection needs at least one object");
    const CameraRig rig = scene_overview_rig(scene, config.intrinsics, {config.k_views, config.elevation_deg, config.margin});
    const auto renders = render_rig(scene, rig, config);
    publish(backend, scene, rig, pixel_counts(renders, scene.objects.size()), 0.0, instruction);

    AgentRequest view_req;
    view_req.role = AgentRole::Selection;
    view_req.metadata = {config.task_id, 0, "view", 0};
    view_req.prompt = fill_template(config.prompts.selection_view,
                                    {{"instruction", instruction.text}, {"num_views", std::to_string(rig.size())}});
    for (const auto& r : renders) view_req.images.push_back(EncodedImage::jpeg(r.rgb));

    ObjectSelection selection;
    selection.view = std::clamp(query_with_repair(backend, view_req, parse_view_choice, kViewSchema), 1, static_cast<int>(rig.size()));

    std::map<int, std::string> tags;
    std::string object_list;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const auto& obj = scene.objects[i];
        tags[static_cast<int>(i)] = obj.id;
        object_list += fmt::format("- {}: {}\n", obj.id, obj.label);
    }
    const Image annotated = annotate_objects(renders[static_cast<std::size_t>(selection.view - 1)], tags);
    if (config.artifact_dir) {
        const auto dir = *config.artifact_dir / "selection";
        for (std::size_t k = 0; k < renders.size(); ++k) write_png(renders[k].rgb, dir / fmt::format("overview_{}.png", k + 1));
        write_png(annotated, dir / "annotated.png");
    }

    AgentRequest obj_req;
    obj_req.role = AgentRole::Selection;
    obj_req.metadata = {config.task_id, 0, "objects", 0};
    obj_req.prompt = fill_template(config.prompts.selection_objects, {{"instruction", instruction.text}, {"object_list", object_list}});
    obj_req.images.push_back(EncodedImage::jpeg(annotated));

    const auto unknown_ids = [&](const ObjectSelection& s) {
        std::vector<std::string> bad;
        if (!scene.find(s.target_id)) bad.push_back(s.target_id);
        for (const auto& r : s.related_ids) {
            if (!scene.find(r)) bad.push_back(r);
        }
        return bad;
    };

    ObjectSelection choice = query_with_repair(backend, obj_req, parse_object_choice, kObjectsSchema);
    if (auto bad = unknown_ids(choice); !bad.empty()) {
        std::string valid;
        for (const auto& obj : scene.objects) valid += (valid.empty() ? "" : ", ") + obj.id;
        AgentRequest retry = obj_req;
        retry.metadata.attempt = 1;
        retry.prompt += fmt::format("\n\nThese ids do not exist: {}. Valid ids are: {}. Answer again using only valid ids.\n",
                                    fmt::join(bad, ", "), valid);
        choice = query_with_repair(backend, retry, parse_object_choice, kObjectsSchema);
        if (bad = unknown_ids(choice); !bad.empty()) {
            throw Error(ErrorCode::UnknownObjectId, fmt::format("backend named unknown object id(s): {}", fmt::join(bad, ", ")));
        }
    }

    selection.target_id = choice.target_id;
    std::set<std::string> seen;
    for (const auto& r : choice.related_ids) {
        if (r == choice.target_id) {
            spdlog::warn("dropping target '{}' from its own related list", r);
            continue;
        }
        if (seen.insert(r).second) selection.related_ids.push_back(r);
    }
    return selection;
}

EvaluatorVerdict run_evaluator(const SceneState& scene, const CameraRig& rig, const Instruction& instruction,
                               const ContextMemory& memory, const LoopConfig& config, AgentBackend& backend,
                               IterationArtifacts* artifacts)
{
    if (!scene.roles_assigned()) throw Error(ErrorCode::RolesUnassigned, "evaluator needs target and related roles");
    const auto renders = render_rig(scene, rig, config);
    const double axis_len = scene.target_axis_length();
    publish(backend, scene, rig, pixel_counts(renders, scene.objects.size()), axis_len, instruction);

    bool axes = false;
    if (!config.ablations.no_coord_vis) {
        axes = config.evaluator_axes == EvaluatorAxesPolicy::Always ||
               (config.evaluator_axes == EvaluatorAxesPolicy::Auto && has_directional_vocabulary(instruction.text));
    }
    const std::string memory_text = memory_block(memory, config);
    const int iteration = static_cast<int>(memory.size()) + 1;

    AgentRequest req;
    req.role = AgentRole::Evaluator;
    req.metadata = {config.task_id, iteration, "evaluate", 0};
    req.prompt = fill_template(config.prompts.evaluator, {{"instruction", instruction.text},
                                                          {"num_views", std::to_string(rig.size())},
                                                          {"target", scene.target().id},
                                                          {"related", id_list(scene, ObjectRole::Related)},
                                                          {"axis_semantics", axis_semantics(axes, false)},
                                                          {"memory", memory_text}});
    const AxesOverlaySpec spec = axes_spec(scene, config);
    const Aabb target_box = scene.target().bounds();
    for (std::size_t k = 0; k < renders.size(); ++k) {
        const Image sent = axes ? overlay_axes(renders[k], rig.cameras[k], spec, target_box) : renders[k].rgb;
        req.images.push_back(EncodedImage::jpeg(sent));
        if (config.artifact_dir) {
            const auto dir = iteration_dir(config, iteration);
            save_artifact(renders[k].rgb, dir / fmt::format("eval_view_{}.png", k + 1), artifacts);
            if (axes) save_artifact(sent, dir / fmt::format("eval_view_{}_axes.png", k + 1), artifacts);
        }
    }
    if (artifacts) {
        artifacts->evaluator_images = req.images.size();
        artifacts->evaluator_axes = axes;
        artifacts->memory_block_sent = !memory_text.empty();
    }

    EvaluatorVerdict verdict = query_with_repair(backend, req, parse_evaluator_response, kEvaluatorSchema);
    const int clamped = std::clamp(verdict.supporting_view, 1, static_cast<int>(rig.size()));
    if (clamped != verdict.supporting_view) {
        spdlog::warn("supporting view {} outside 1..{}; using {}", verdict.supporting_view, rig.size(), clamped);
        verdict.supporting_view = clamped;
    }
    return verdict;
}

PoseProposal run_proposer(const SceneState& scene, const CameraRig& rig, const EvaluatorVerdict& verdict,
                          const Instruction& instruction, const ContextMemory& memory, const LoopConfig& config,
                          AgentBackend& backend, IterationArtifacts* artifacts)
{
    if (verdict.faithful) throw Error(ErrorCode::InvalidArgument, "proposer runs only on unfaithful verdicts");
    if (!scene.roles_assigned()) throw Error(ErrorCode::RolesUnassigned, "proposer needs target and related roles");
    const int view = std::clamp(verdict.supporting_view, 1, static_cast<int>(rig.size()));
    const Camera& camera = rig.cameras[static_cast<std::size_t>(view - 1)];
    const RenderOutput raw = render(scene, camera, config.render);
    const double axis_len = scene.target_axis_length();
    publish(backend, scene, rig, {}, axis_len, instruction);

    const bool drawn = !config.ablations.no_coord_vis;
    const Image sent = drawn ? overlay_axes(raw, camera, axes_spec(scene, config), scene.target().bounds()) : raw.rgb;
    const bool euler = config.ablations.euler_rotation;
    const int iteration = static_cast<int>(memory.size()) + 1;

    AgentRequest req;
    req.role = AgentRole::Proposer;
    req.metadata = {config.task_id, iteration, euler ? "euler" : "single-axis", 0};
    req.prompt = fill_template(euler ? config.prompts.proposer_euler : config.prompts.proposer,
                               {{"instruction", instruction.text},
                                {"target", scene.target().id},
                                {"related", id_list(scene, ObjectRole::Related)},
                                {"evaluator_feedback", clip_rationale(verdict.rationale, kRationaleLimit)},
                                {"axis_semantics", axis_semantics(drawn, true)},
                                {"memory", memory_block(memory, config)}});
    req.images.push_back(EncodedImage::jpeg(sent));
    if (artifacts) artifacts->proposer_overlay_pixels = differing_pixels(raw.rgb, sent);
    if (config.artifact_dir) save_artifact(sent, iteration_dir(config, iteration) / fmt::format("proposer_view_{}.png", view), artifacts);

    const auto parse = [euler](std::string_view text) {
        return parse_proposer_response(text, euler ? ProposalMode::EulerXyz : ProposalMode::SingleAxis);
    };
    PoseProposal proposal = query_with_repair(backend, req, parse, euler ? kEulerSchema : kProposerSchema);
    if (sanitize_update(proposal.update, config.translation_clamp)) {
        spdlog::warn("proposal outside its range; clamped translation to +/-{} units and wrapped angles", config.translation_clamp);
    }
    return proposal;
}

LoopResult run_loop(const SceneState& scene, const Instruction& instruction, AgentBackend& backend, const LoopConfig& config)
{
    config.validate();
    LoopResult result;
    ContextMemory memory;
    try {
        SceneState current = scene;
        if (current.roles_assigned()) {
            result.selection.target_id = current.target().id;
            for (const auto idx : current.indices_with_role(ObjectRole::Related)) result.selection.related_ids.push_back(current.objects[idx].id);
        } else {
            result.selection = select_objects(current, instruction, backend, config);
            current = assign_roles(current, result.selection.target_id, result.selection.related_ids);
        }
        // Fixed for the whole loop; only the overlay origin follows the target.
        result.axis_length = current.target_axis_length();

        result.terminated_by = Termination::MaxIterations;
        for (int i = 1; i <= config.max_iterations; ++i) {
            const CameraRig rig = iteration_rig(current, config);
            IterationArtifacts art;
            art.iteration = i;
            const EvaluatorVerdict verdict = run_evaluator(current, rig, instruction, memory, config, backend, &art);
            if (verdict.faithful) {
                memory.append({i, verdict, std::nullopt, current.target_pose});
                result.artifacts.push_back(std::move(art));
                result.terminated_by = Termination::Faithful;
                break;
            }
            PoseProposal proposal = run_proposer(current, rig, verdict, instruction, memory, config, backend, &art);
            current = apply_target_update(current, proposal.update, result.axis_length);
            memory.append({i, verdict, std::move(proposal), current.target_pose});
            result.artifacts.push_back(std::move(art));
        }
        result.final_scene = std::move(current);
        result.memory = std::move(memory);
        return result;
    } catch (const LoopError&) {
        throw;
    } catch (const Error& e) {
        throw LoopError(e, memory);
    }
}

}  // namespace rearrange
