#pragma once

#include <rearrange/camera.hpp>
#include <rearrange/scene.hpp>

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace rearrange {

enum class AgentRole { Selection, Evaluator, Proposer };

std::string_view agent_role_name(AgentRole role);

struct EncodedImage {
    std::string mime = "image/jpeg";
    std::vector<std::uint8_t> bytes;
    std::string sha256;

    static EncodedImage jpeg(const Image& image, int quality = 90);
};

/// Request bookkeeping. `step` distinguishes sub-queries of one role
/// ("view"/"objects" for selection, "single-axis"/"euler" for the proposer);
/// `attempt` is 1 on a repair reprompt.
struct RequestMetadata {
    std::string task_id;
    int iteration = 0;
    std::string step;
    int attempt = 0;
};

struct AgentRequest {
    AgentRole role = AgentRole::Evaluator;
    std::string prompt;
    std::vector<EncodedImage> images;
    RequestMetadata metadata;
};

/// Ground-truth view of the loop handed to backends before every request.
/// Real VLM backends ignore it; the geometric oracle reads it instead of the
/// images.
struct Observation {
    SceneState scene;
    CameraRig rig;
    /// pixels[view][object index]
    std::vector<std::vector<std::size_t>> pixels;
    double axis_length = 0;
    std::string instruction;
};

class AgentBackend {
public:
    virtual ~AgentBackend() = default;

    virtual std::string complete(const AgentRequest& request) = 0;

    virtual void observe(std::shared_ptr<const Observation> /*observation*/) {}
};

// ---------------------------------------------------------------------------
// OpenAI-compatible chat-completions client

struct HttpBackendConfig {
    std::string endpoint;  ///< full URL, e.g. http://localhost:8000/v1/chat/completions
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    double temperature = 0.0;
    int max_tokens = 1024;
    std::chrono::seconds timeout{120};
    int max_attempts = 5;
    std::chrono::milliseconds backoff_base{1000};
    double backoff_factor = 2.0;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

using HttpHeaders = std::multimap<std::string, std::string>;
/// Returns nullopt on a transport-level failure (connection refused, timeout).
using HttpTransport = std::function<std::optional<HttpResponse>(const std::string& body, const HttpHeaders& headers)>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;

class HttpBackend : public AgentBackend {
public:
    explicit HttpBackend(HttpBackendConfig config, Sleeper sleeper = {}, HttpTransport transport = {});

    std::string complete(const AgentRequest& request) override;

    /// Chat-completions payload: one user message with a text part followed by
    /// image_url parts carrying base64 data URLs.
    std::string build_payload(const AgentRequest& request) const;

    /// Extracts choices[0].message.content from a response body.
    static std::string extract_content(const std::string& body);

private:
    HttpBackendConfig config_;
    Sleeper sleeper_;
    HttpTransport transport_;
};

HttpTransport make_httplib_transport(const HttpBackendConfig& config);

// ---------------------------------------------------------------------------
// Geometric oracle

struct OracleConfig {
    RigidPose goal_pose;
    double position_tol = 0.05;
    double rotation_tol_deg = 15.0;
    double noise_prob = 0.0;
    std::uint64_t seed = 0;
    /// Interpenetration when the target AABB overlaps another object's AABB
    /// by more than this fraction of the target AABB volume.
    double overlap_ratio = 0.01;
    double angle_snap_deg = 15.0;
    double translation_clamp = 3.0;
    /// Never declares the scene faithful.
    bool adversarial = false;
    std::optional<std::string> target_id;
    std::vector<std::string> related_ids;

    void validate() const;
};

class OracleBackend : public AgentBackend {
public:
    explicit OracleBackend(OracleConfig config);

    std::string complete(const AgentRequest& request) override;
    void observe(std::shared_ptr<const Observation> observation) override;

    const OracleConfig& config() const { return config_; }

private:
    std::string select(const AgentRequest& request, const Observation& obs) const;
    std::string evaluate(const Observation& obs) const;
    std::string propose(const AgentRequest& request, const Observation& obs) const;

    OracleConfig config_;
    mutable std::mutex mutex_;
    std::shared_ptr<const Observation> observation_;
};

/// Rotation vector (axis * angle, degrees) of a rotation matrix.
Vec3 rotation_vector_deg(const RotMat3& r);
/// Extrinsic x-y-z Euler angles (degrees) with R = Rz * Ry * Rx.
Vec3 euler_xyz_deg(const RotMat3& r);
double snap_degrees(double deg, double step);

// ---------------------------------------------------------------------------
// Record / replay

/// SHA-256 over role, prompt and the image hashes.
std::string request_key(const AgentRequest& request);

inline constexpr std::string_view kTranscriptFormat = "rearrange-transcript";
inline constexpr int kTranscriptVersion = 1;

/// Append-only JSONL transcript; the first line is a versioned header.
class TranscriptWriter {
public:
    explicit TranscriptWriter(std::filesystem::path path);

    void append(const AgentRequest& request, const std::string& key, const std::string& response);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::mutex mutex_;
};

class TranscriptStore {
public:
    static std::shared_ptr<TranscriptStore> load(const std::filesystem::path& path);

    /// Responses for identical keys are served in recorded order; the last
    /// one repeats once exhausted.
    std::optional<std::string> lookup(const std::string& key);
    std::size_t size() const { return total_; }

private:
    std::map<std::string, std::vector<std::string>> entries_;
    std::map<std::string, std::size_t> cursor_;
    std::size_t total_ = 0;
    std::mutex mutex_;
};

class RecordBackend : public AgentBackend {
public:
    RecordBackend(std::unique_ptr<AgentBackend> inner, std::shared_ptr<TranscriptWriter> writer);

    std::string complete(const AgentRequest& request) override;
    void observe(std::shared_ptr<const Observation> observation) override;

private:
    std::unique_ptr<AgentBackend> inner_;
    std::shared_ptr<TranscriptWriter> writer_;
};

class ReplayBackend : public AgentBackend {
public:
    explicit ReplayBackend(std::shared_ptr<TranscriptStore> store);

    std::string complete(const AgentRequest& request) override;

private:
    std::shared_ptr<TranscriptStore> store_;
};

/// Keeps every request (tests and structural checks) and forwards to `inner`.
class CapturingBackend : public AgentBackend {
public:
    explicit CapturingBackend(AgentBackend& inner) : inner_(inner) {}

    std::string complete(const AgentRequest& request) override;
    void observe(std::shared_ptr<const Observation> observation) override { inner_.observe(std::move(observation)); }

    const std::vector<AgentRequest>& requests() const { return requests_; }

private:
    AgentBackend& inner_;
    std::vector<AgentRequest> requests_;
};

}  // namespace rearrange
