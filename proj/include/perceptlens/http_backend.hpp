#pragma once

// Chat-completion HTTP backend. POSTs {model, messages:[{role:"user",
// content: prompt}]} and reads the first choice's message content. The API
// key comes from the environment variable named by BackendConfig.

#include <memory>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "perceptlens/annotate.hpp"
#include "perceptlens/common.hpp"

namespace perceptlens {

class HttpBackend : public Backend {
public:
    explicit HttpBackend(BackendConfig config) : config_(std::move(config)) {
        const std::string& url = config_.endpoint_url;
        const std::size_t scheme_end = url.find("://");
        if (scheme_end == std::string::npos) {
            throw ValidationError("endpoint_url must include a scheme: " + url);
        }
        const std::size_t path_start = url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            base_ = url;
            path_ = "/";
        } else {
            base_ = url.substr(0, path_start);
            path_ = url.substr(path_start);
        }
        if (const char* key = std::getenv(config_.api_key_env().c_str())) {
            api_key_ = key;
        }
    }

    const BackendConfig& config() const override { return config_; }

    std::string complete(const AnnotationRequest& request) override {
        json body{{"model", config_.model_name},
                  {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})}};
        if (config_.temperature) body["temperature"] = *config_.temperature;

        httplib::Client client(base_);
        client.set_connection_timeout(std::chrono::duration<double>(config_.timeout_seconds));
        client.set_read_timeout(std::chrono::duration<double>(config_.timeout_seconds));
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        auto response = client.Post(path_, headers, body.dump(), "application/json");
        if (!response) {
            throw BackendError("transport error talking to " + base_ + ": " +
                               httplib::to_string(response.error()));
        }
        if (response->status != 200) {
            throw BackendError("endpoint " + base_ + " returned HTTP " +
                               std::to_string(response->status));
        }
        try {
            const json reply = json::parse(response->body);
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            throw BackendError("malformed completion payload from " + base_ + ": " + e.what());
        }
    }

private:
    BackendConfig config_;
    std::string base_;
    std::string path_;
    std::string api_key_;
};

// Chooses the mock when the config names a script, the HTTP client otherwise.
inline std::shared_ptr<Backend> make_backend(const BackendConfig& config) {
    if (!config.mock_script.empty()) {
        return MockBackend::from_file(config, config.mock_script);
    }
    return std::make_shared<HttpBackend>(config);
}

}  // namespace perceptlens
