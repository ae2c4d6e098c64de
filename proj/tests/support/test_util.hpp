#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "looptool/backend.hpp"

namespace testutil {

using namespace looptool;

struct MockBackend {
    std::shared_ptr<MockTransport> transport;
    BackendHandle handle;
};

inline MockBackend responder_backend(BackendRole role, MockTransport::Responder fn, std::size_t inflight = 8,
                                     RetryPolicy retry = {3, std::chrono::milliseconds(1), 2.0}) {
    auto t = std::make_shared<MockTransport>(std::move(fn));
    return {t, BackendHandle(role, t, DecodingParams{0.7, 512, role == BackendRole::Policy}, retry, inflight)};
}

inline MockBackend script_backend(BackendRole role, MockScript script, std::size_t inflight = 8) {
    auto t = std::make_shared<MockTransport>(std::move(script));
    return {t, BackendHandle(role, t, DecodingParams{}, RetryPolicy{3, std::chrono::milliseconds(1), 2.0}, inflight)};
}

// Always answers with the same text.
inline MockBackend constant_backend(BackendRole role, std::string text) {
    return responder_backend(role, [text](const MessageList&) { return MockEntry{text, std::nullopt}; });
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("looptool_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
