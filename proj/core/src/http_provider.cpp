#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "oneirotax/embedding.hpp"

namespace oneirotax {

using json = nlohmann::json;

namespace {

constexpr std::size_t kMaxBatch = 256;

httplib::Client make_client(const std::string& url) {
    httplib::Client cli(url);
    cli.set_connection_timeout(std::chrono::seconds(5));
    cli.set_read_timeout(std::chrono::seconds(120));
    cli.set_write_timeout(std::chrono::seconds(30));
    return cli;
}

// Runs `attempt` until it returns a response that is not a transient
// failure (transport error or 503), up to 1 + max_retries times.
template <typename F>
httplib::Result with_retries(const ProviderConfig& cfg, const char* what, F&& attempt) {
    auto backoff = cfg.retry_backoff;
    for (int i = 0;; ++i) {
        httplib::Result res = attempt();
        const bool transient = !res || res->status == 503;
        if (!transient || i >= cfg.max_retries) return res;
        spdlog::warn("embed service {} failed ({}); retry {}/{}", what,
                     res ? "HTTP 503" : httplib::to_string(res.error()), i + 1, cfg.max_retries);
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
}

}  // namespace

HttpProvider::HttpProvider(ProviderConfig config) : config_(std::move(config)) {
    if (config_.location.empty()) throw ValidationError("http provider: location (base URL) is empty");
    if (config_.batch_size == 0 || config_.batch_size > kMaxBatch) config_.batch_size = kMaxBatch;
}

void HttpProvider::check_health() {
    auto cli = make_client(config_.location);
    auto res = with_retries(config_, "/health", [&] { return cli.Get("/health"); });
    if (!res) throw ProviderError("embed service unreachable at " + config_.location + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw ProviderError("embed service /health returned HTTP " + std::to_string(res->status));
    json j;
    try {
        j = json::parse(res->body);
    } catch (const json::exception& e) {
        throw ProviderError(std::string("embed service /health: bad JSON: ") + e.what());
    }
    const auto dim = j.value("dim", std::size_t{0});
    if (dim != config_.expected_dim)
        throw ProviderError("dimension mismatch: observed " + std::to_string(dim) + ", expected " +
                            std::to_string(config_.expected_dim));
    const auto model = j.value("model", std::string{});
    if (!model.empty() && model != config_.model_name)
        spdlog::warn("embed service reports model '{}' but config names '{}'", model, config_.model_name);
    healthy_ = true;
}

std::vector<std::vector<float>> HttpProvider::embed_batch(std::span<const std::string> texts) {
    if (!healthy_) check_health();
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    auto cli = make_client(config_.location);
    for (std::size_t start = 0; start < texts.size(); start += config_.batch_size) {
        const std::size_t end = std::min(texts.size(), start + config_.batch_size);
        json req;
        req["texts"] = json::array();
        for (std::size_t i = start; i < end; ++i) req["texts"].push_back(texts[i]);
        const std::string body = req.dump();
        count_request();
        auto res = with_retries(config_, "/embed", [&] { return cli.Post("/embed", body, "application/json"); });
        if (!res) throw ProviderError("embed service unreachable: " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw ProviderError("embed service /embed returned HTTP " + std::to_string(res->status) + ": " + res->body);
        json j;
        try {
            j = json::parse(res->body);
        } catch (const json::exception& e) {
            throw ProviderError(std::string("embed service /embed: bad JSON: ") + e.what());
        }
        const auto dim = j.value("dim", std::size_t{0});
        if (dim != config_.expected_dim)
            throw ProviderError("dimension mismatch: observed " + std::to_string(dim) + ", expected " +
                                std::to_string(config_.expected_dim));
        const auto& vectors = j.at("vectors");
        if (!vectors.is_array() || vectors.size() != end - start)
            throw ProviderError("embed service returned " + std::to_string(vectors.size()) + " vectors for " +
                                std::to_string(end - start) + " texts");
        for (const auto& v : vectors) {
            auto row = v.get<std::vector<float>>();
            if (row.size() != dim)
                throw ProviderError("dimension mismatch: observed " + std::to_string(row.size()) + ", expected " +
                                    std::to_string(dim));
            out.push_back(std::move(row));
        }
    }
    return out;
}

}  // namespace oneirotax
