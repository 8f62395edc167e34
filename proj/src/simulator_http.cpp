#include "cbeval/simulatability.hpp"

#include "httplib.h"
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <stdexcept>
#include <thread>

namespace cbeval {

using nlohmann::json;

namespace {

bool transient_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

}  // namespace

SimulatorFn make_http_simulator(const HttpSimulatorConfig& config) {
    return [config](const std::string& system_text, const std::string& user_text) {
        json body;
        body["model"] = config.model;
        body["temperature"] = config.temperature;
        body["messages"] = json::array({
            json{{"role", "system"}, {"content", system_text}},
            json{{"role", "user"}, {"content", user_text}},
        });
        const std::string payload = body.dump();

        httplib::Headers headers;
        if (const char* key = std::getenv(config.api_key_env.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + key);

        int backoff_ms = config.initial_backoff_ms;
        std::string last_error;
        for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
                backoff_ms *= 2;
            }
            httplib::Client client(config.base_url);
            client.set_read_timeout(config.timeout_seconds, 0);
            client.set_connection_timeout(config.timeout_seconds, 0);
            auto res = client.Post(config.path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            if (transient_status(res->status)) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw std::runtime_error("simulator request failed: HTTP " +
                                         std::to_string(res->status) + " " + res->body);
            const json reply = json::parse(res->body);
            return reply.at("choices").at(0).at("message").at("content")
                .get<std::string>();
        }
        throw std::runtime_error("simulator retries exhausted: " + last_error);
    };
}

}  // namespace cbeval
