#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace httplib {
class Server;
}

namespace rearrange::testing {

/// Local chat-completions endpoint that answers POSTs from a script of
/// (status, body) pairs; the last entry repeats once the script runs out.
class StubServer {
public:
    explicit StubServer(std::vector<std::pair<int, std::string>> script);
    ~StubServer();

    StubServer(const StubServer&) = delete;
    StubServer& operator=(const StubServer&) = delete;

    std::string url() const;
    int requests() const { return requests_.load(); }
    std::string last_body() const;
    std::string last_authorization() const;

private:
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
    std::vector<std::pair<int, std::string>> script_;
    std::atomic<int> requests_{0};
    mutable std::mutex mutex_;
    std::string last_body_;
    std::string last_auth_;
};

/// Well-formed chat-completions response whose message content is `content`.
std::string chat_response(const std::string& content);

}  // namespace rearrange::testing
