#include <rearrange/backend.hpp>

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>

namespace rearrange {

using nlohmann::json;

std::string request_key(const AgentRequest& request)
{
    std::string material = fmt::format("{}\n{}\n", agent_role_name(request.role), request.prompt);
    for (const auto& img : request.images) {
        material += img.sha256.empty() ? sha256_hex(img.bytes) : img.sha256;
        material += '\n';
    }
    return sha256_hex(material);
}

TranscriptWriter::TranscriptWriter(std::filesystem::path path) : path_(std::move(path))
{
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    const bool fresh = !std::filesystem::exists(path_) || std::filesystem::file_size(path_) == 0;
    if (fresh) {
        std::ofstream out(path_, std::ios::trunc);
        if (!out) throw Error(ErrorCode::ImageIoError, fmt::format("cannot create transcript {}", path_.string()));
        out << json{{"format", kTranscriptFormat}, {"version", kTranscriptVersion}}.dump() << '\n';
    }
}

void TranscriptWriter::append(const AgentRequest& request, const std::string& key, const std::string& response)
{
    json images = json::array();
    for (const auto& img : request.images) images.push_back(img.sha256.empty() ? sha256_hex(img.bytes) : img.sha256);
    const json line = {{"key", key},
                       {"role", agent_role_name(request.role)},
                       {"task_id", request.metadata.task_id},
                       {"iteration", request.metadata.iteration},
                       {"step", request.metadata.step},
                       {"attempt", request.metadata.attempt},
                       {"prompt_sha256", sha256_hex(request.prompt)},
                       {"images", images},
                       {"response", response}};
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error(ErrorCode::ImageIoError, fmt::format("cannot append to transcript {}", path_.string()));
    out << line.dump() << '\n';
}

std::shared_ptr<TranscriptStore> TranscriptStore::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingAsset, path.string());
    auto store = std::make_shared<TranscriptStore>();
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json entry;
        try {
            entry = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::MalformedManifest, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        }
        if (line_no == 1) {
            if (entry.value("format", "") != kTranscriptFormat) {
                throw Error(ErrorCode::MalformedManifest, fmt::format("{}: missing transcript header", path.string()));
            }
            if (entry.value("version", 0) != kTranscriptVersion) {
                throw Error(ErrorCode::MalformedManifest, fmt::format("{}: unsupported transcript version", path.string()));
            }
            continue;
        }
        try {
            store->entries_[entry.at("key").get<std::string>()].push_back(entry.at("response").get<std::string>());
            ++store->total_;
        } catch (const json::exception& e) {
            throw Error(ErrorCode::MalformedManifest, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        }
    }
    return store;
}

std::optional<std::string> TranscriptStore::lookup(const std::string& key)
{
    std::lock_guard lock(mutex_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    auto& cursor = cursor_[key];
    const std::size_t idx = std::min(cursor, it->second.size() - 1);
    ++cursor;
    return it->second[idx];
}

RecordBackend::RecordBackend(std::unique_ptr<AgentBackend> inner, std::shared_ptr<TranscriptWriter> writer)
    : inner_(std::move(inner)), writer_(std::move(writer))
{
}

std::string RecordBackend::complete(const AgentRequest& request)
{
    std::string response = inner_->complete(request);
    writer_->append(request, request_key(request), response);
    return response;
}

void RecordBackend::observe(std::shared_ptr<const Observation> observation)
{
    inner_->observe(std::move(observation));
}

ReplayBackend::ReplayBackend(std::shared_ptr<TranscriptStore> store) : store_(std::move(store)) {}

std::string ReplayBackend::complete(const AgentRequest& request)
{
    const std::string key = request_key(request);
    if (auto response = store_->lookup(key)) return *response;
    throw Error(ErrorCode::ReplayMiss, fmt::format("no recorded response for key {} ({} request, task '{}', iteration {})", key,
                                                   agent_role_name(request.role), request.metadata.task_id,
                                                   request.metadata.iteration));
}

std::string CapturingBackend::complete(const AgentRequest& request)
{
    requests_.push_back(request);
    return inner_.complete(request);
}

}  // namespace rearrange
