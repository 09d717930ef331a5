#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "oneirotax/error.hpp"
#include "oneirotax/util.hpp"

namespace oneirotax {

/// Row-major float32 matrix whose rows are keyed by the SHA-256 of the
/// embedded text.
struct EmbeddingMatrix {
    std::size_t dim = 0;
    std::vector<float> values;
    std::vector<Sha256> row_keys;

    std::size_t rows() const noexcept { return row_keys.size(); }
    std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
    std::span<float> row(std::size_t i) { return {values.data() + i * dim, dim}; }

    friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

/// Throws ValidationError on NaN/Inf or on inconsistent row counts.
void validate(const EmbeddingMatrix& m);

// EMB1 on-disk layout (all integers little-endian):
//   [0,8)   magic "EMB1\r\n\x1a\n"
//   [8,12)  version u32 (= 1)
//   [12,16) reserved u32 (= 0)
//   dim u32, n_rows u64
//   n_rows x (32-byte SHA-256 key, dim x float32)
//   CRC-32 (zlib polynomial) of every preceding byte, u32
inline constexpr std::uint32_t kEmb1Version = 1;
std::string encode_emb1(const EmbeddingMatrix& m);
/// Throws ValidationError on bad magic, version, truncation or checksum.
EmbeddingMatrix decode_emb1(std::string_view bytes);
void write_emb1(const std::filesystem::path& path, const EmbeddingMatrix& m);
EmbeddingMatrix read_emb1(const std::filesystem::path& path);

enum class ProviderKind { stub, file, http };
std::string_view to_string(ProviderKind k);
ProviderKind parse_provider_kind(std::string_view s);

struct ProviderConfig {
    ProviderKind kind = ProviderKind::stub;
    std::string location;  // EMB1 path (file) or base URL (http)
    std::string model_name = "stub-hash-v1";
    std::size_t expected_dim = 768;
    std::uint64_t stub_seed = 0;
    std::size_t batch_size = 256;
    int max_retries = 3;
    std::chrono::milliseconds retry_backoff{200};
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual const std::string& model_name() const = 0;
    virtual std::size_t dim() const = 0;
    /// One provider round-trip. Returned rows align with `texts`.
    virtual std::vector<std::vector<float>> embed_batch(std::span<const std::string> texts) = 0;

    std::size_t request_count() const noexcept { return requests_.load(); }

protected:
    void count_request() noexcept { ++requests_; }

private:
    std::atomic<std::size_t> requests_{0};
};

/// Deterministic stand-in encoder: each content token is mapped to a
/// seeded pseudo-random vector and a text embeds as the normalized sum of
/// its tokens. Texts sharing words therefore land close together.
class StubProvider final : public EmbeddingProvider {
public:
    StubProvider(std::string model_name, std::size_t dim, std::uint64_t seed);
    const std::string& model_name() const override { return model_; }
    std::size_t dim() const override { return dim_; }
    std::vector<std::vector<float>> embed_batch(std::span<const std::string> texts) override;

    std::vector<float> embed_one(std::string_view text) const;

private:
    std::string model_;
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Serves rows from an EMB1 dump, looked up by text hash.
class FileProvider final : public EmbeddingProvider {
public:
    FileProvider(const std::filesystem::path& path, std::string model_name, std::size_t expected_dim);
    const std::string& model_name() const override { return model_; }
    std::size_t dim() const override { return dim_; }
    std::vector<std::vector<float>> embed_batch(std::span<const std::string> texts) override;

private:
    std::string model_;
    std::size_t dim_ = 0;
    std::map<Sha256, std::vector<float>> rows_;
};

/// Client for the embedding microservice (GET /health, POST /embed).
class HttpProvider final : public EmbeddingProvider {
public:
    explicit HttpProvider(ProviderConfig config);
    const std::string& model_name() const override { return config_.model_name; }
    std::size_t dim() const override { return config_.expected_dim; }
    std::vector<std::vector<float>> embed_batch(std::span<const std::string> texts) override;

    /// Queries /health and checks the reported dim; throws ProviderError.
    void check_health();

private:
    ProviderConfig config_;
    bool healthy_ = false;
};

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& config);

/// Thread-safe content-addressed vector cache keyed by (model, text hash).
/// With a directory it persists one EMB1 file per model; a file failing
/// its checksum is discarded with a warning and counted in corrupt_loads().
class EmbeddingCache {
public:
    EmbeddingCache() = default;
    explicit EmbeddingCache(std::filesystem::path dir);

    std::optional<std::vector<float>> get(const std::string& model, const Sha256& key);
    void put(const std::string& model, const Sha256& key, std::vector<float> vec);
    /// Writes dirty models to disk.
    void flush();

    std::size_t corrupt_loads() const noexcept { return corrupt_loads_.load(); }
    std::filesystem::path file_for(const std::string& model) const;

    // In-flight coalescing: the first claimant of a key gets a promise to
    // fulfil; later claimants receive the shared future.
    struct Claim {
        std::shared_ptr<std::promise<std::vector<float>>> promise;  // set when we own the fetch
        std::shared_future<std::vector<float>> future;
    };
    Claim claim(const std::string& model, const Sha256& key);
    void release(const std::string& model, const Sha256& key);

private:
    struct ModelRows {
        bool loaded = false;
        bool dirty = false;
        std::map<Sha256, std::vector<float>> rows;
    };
    ModelRows& ensure_loaded(const std::string& model);  // requires unique lock

    std::optional<std::filesystem::path> dir_;
    std::shared_mutex mu_;
    std::unordered_map<std::string, ModelRows> models_;
    std::mutex inflight_mu_;
    std::map<std::pair<std::string, Sha256>, std::shared_future<std::vector<float>>> inflight_;
    std::atomic<std::size_t> corrupt_loads_{0};
};

/// Embeds `texts` (row i <-> texts[i]) through the cache. Identical texts
/// are requested once; results are validated against provider.dim().
EmbeddingMatrix embed_texts(EmbeddingProvider& provider, std::span<const std::string> texts,
                            EmbeddingCache* cache = nullptr, std::size_t batch_size = 256);

/// Cosine similarity. Throws PreconditionError on size mismatch or a zero
/// vector.
template <typename T, typename U>
double cosine(std::span<const T> u, std::span<const U> v) {
    if (u.size() != v.size()) throw PreconditionError("cosine: dimension mismatch");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double a = static_cast<double>(u[i]);
        const double b = static_cast<double>(v[i]);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if (nu == 0.0 || nv == 0.0) throw PreconditionError("cosine: zero vector");
    const double c = dot / (std::sqrt(nu) * std::sqrt(nv));
    return c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
    return cosine(std::span<const double>(u), std::span<const double>(v));
}
inline double cosine(const std::vector<float>& u, const std::vector<float>& v) {
    return cosine(std::span<const float>(u), std::span<const float>(v));
}

}  // namespace oneirotax
