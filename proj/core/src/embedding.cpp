#include "oneirotax/embedding.hpp"

#include <algorithm>
#include <cstring>
#include <set>

#include <spdlog/spdlog.h>

#include "oneirotax/text.hpp"

namespace oneirotax {

namespace {

constexpr char kMagic[8] = {'E', 'M', 'B', '1', '\r', '\n', '\x1a', '\n'};
constexpr std::size_t kHeaderSize = 16;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
std::uint32_t get_u32(std::string_view in, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}
std::uint64_t get_u64(std::string_view in, std::size_t pos) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

std::span<const std::uint8_t> as_bytes(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

void validate(const EmbeddingMatrix& m) {
    if (m.values.size() != m.rows() * m.dim)
        throw ValidationError("embedding matrix: " + std::to_string(m.values.size()) + " values for " +
                              std::to_string(m.rows()) + " rows of dim " + std::to_string(m.dim));
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        if (!std::isfinite(m.values[i]))
            throw ValidationError("embedding matrix: non-finite value in row " + std::to_string(i / m.dim));
    }
}

std::string encode_emb1(const EmbeddingMatrix& m) {
    validate(m);
    std::string out;
    out.reserve(kHeaderSize + 12 + m.rows() * (32 + 4 * m.dim) + 4);
    out.append(kMagic, sizeof kMagic);
    put_u32(out, kEmb1Version);
    put_u32(out, 0);
    put_u32(out, static_cast<std::uint32_t>(m.dim));
    put_u64(out, m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out.append(reinterpret_cast<const char*>(m.row_keys[r].data()), 32);
        for (float f : m.row(r)) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof bits);
            put_u32(out, bits);
        }
    }
    put_u32(out, crc32(as_bytes(out)));
    return out;
}

EmbeddingMatrix decode_emb1(std::string_view in) {
    if (in.size() < kHeaderSize + 12 + 4) throw ValidationError("EMB1: file truncated");
    if (std::memcmp(in.data(), kMagic, sizeof kMagic) != 0) throw ValidationError("EMB1: bad magic");
    if (const auto v = get_u32(in, 8); v != kEmb1Version)
        throw ValidationError("EMB1: unsupported version " + std::to_string(v));
    const std::uint32_t stored_crc = get_u32(in, in.size() - 4);
    if (crc32(as_bytes(in.substr(0, in.size() - 4))) != stored_crc)
        throw ValidationError("EMB1: checksum mismatch");
    EmbeddingMatrix m;
    m.dim = get_u32(in, kHeaderSize);
    const std::uint64_t n = get_u64(in, kHeaderSize + 4);
    const std::size_t record = 32 + 4 * m.dim;
    if (m.dim == 0 || (in.size() - kHeaderSize - 12 - 4) != n * record)
        throw ValidationError("EMB1: size does not match header (dim " + std::to_string(m.dim) + ", rows " +
                              std::to_string(n) + ")");
    m.row_keys.resize(n);
    m.values.resize(n * m.dim);
    std::size_t pos = kHeaderSize + 12;
    for (std::size_t r = 0; r < n; ++r) {
        std::memcpy(m.row_keys[r].data(), in.data() + pos, 32);
        pos += 32;
        for (std::size_t j = 0; j < m.dim; ++j, pos += 4) {
            const std::uint32_t bits = get_u32(in, pos);
            std::memcpy(&m.values[r * m.dim + j], &bits, sizeof bits);
        }
    }
    validate(m);
    return m;
}

void write_emb1(const std::filesystem::path& path, const EmbeddingMatrix& m) {
    write_file_atomic(path, encode_emb1(m));
}

EmbeddingMatrix read_emb1(const std::filesystem::path& path) { return decode_emb1(read_file(path)); }

std::string_view to_string(ProviderKind k) {
    switch (k) {
        case ProviderKind::stub: return "stub";
        case ProviderKind::file: return "file";
        case ProviderKind::http: return "http";
    }
    return "unknown";
}

ProviderKind parse_provider_kind(std::string_view s) {
    if (s == "stub") return ProviderKind::stub;
    if (s == "file") return ProviderKind::file;
    if (s == "http") return ProviderKind::http;
    throw ValidationError("unknown provider kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------

StubProvider::StubProvider(std::string model_name, std::size_t dim, std::uint64_t seed)
    : model_(std::move(model_name)), dim_(dim), seed_(seed) {
    if (dim_ == 0) throw ValidationError("stub provider: dim must be positive");
}

std::vector<float> StubProvider::embed_one(std::string_view text) const {
    auto tokens = text::tokenize(text);
    std::vector<std::string> content;
    for (const auto& t : tokens)
        if (!text::is_stop_word(t)) content.push_back(t);
    if (content.empty()) content = tokens;
    if (content.empty()) content.emplace_back(text);

    std::vector<double> acc(dim_, 0.0);
    for (const auto& tok : content) {
        const Sha256 h = sha256(tok);
        std::uint64_t state = seed_;
        for (int i = 0; i < 8; ++i) state ^= static_cast<std::uint64_t>(h[i]) << (8 * i);
        for (std::size_t j = 0; j < dim_; ++j) {
            const std::uint64_t r = splitmix64(state);
            acc[j] += static_cast<double>(r >> 11) * 0x1.0p-52 - 1.0;  // uniform in [-1, 1)
        }
    }
    double norm = 0.0;
    for (double a : acc) norm += a * a;
    norm = std::sqrt(norm);
    std::vector<float> out(dim_);
    for (std::size_t j = 0; j < dim_; ++j) out[j] = static_cast<float>(norm > 0 ? acc[j] / norm : 0.0);
    return out;
}

std::vector<std::vector<float>> StubProvider::embed_batch(std::span<const std::string> texts) {
    count_request();
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
}

FileProvider::FileProvider(const std::filesystem::path& path, std::string model_name, std::size_t expected_dim)
    : model_(std::move(model_name)) {
    if (!std::filesystem::exists(path)) throw ProviderError("file provider: no such file " + path.string());
    EmbeddingMatrix m;
    try {
        m = read_emb1(path);
    } catch (const ValidationError& e) {
        throw ProviderError(std::string("file provider: ") + e.what());
    }
    if (m.dim != expected_dim)
        throw ProviderError("file provider: dimension mismatch (observed " + std::to_string(m.dim) + ", expected " +
                            std::to_string(expected_dim) + ")");
    dim_ = m.dim;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        rows_.emplace(m.row_keys[r], std::vector<float>(row.begin(), row.end()));
    }
}

std::vector<std::vector<float>> FileProvider::embed_batch(std::span<const std::string> texts) {
    count_request();
    std::vector<std::vector<float>> out;
    std::vector<std::string> missing;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        const Sha256 key = sha256(t);
        auto it = rows_.find(key);
        if (it == rows_.end()) {
            missing.push_back(to_hex(key));
            continue;
        }
        out.push_back(it->second);
    }
    if (!missing.empty()) {
        std::string msg = "file provider: " + std::to_string(missing.size()) + " key(s) missing:";
        for (const auto& k : missing) msg += " " + k;
        throw ProviderError(msg);
    }
    return out;
}

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& config) {
    if (config.expected_dim == 0) throw ValidationError("provider.expected_dim must be positive");
    switch (config.kind) {
        case ProviderKind::stub:
            return std::make_unique<StubProvider>(config.model_name, config.expected_dim, config.stub_seed);
        case ProviderKind::file:
            return std::make_unique<FileProvider>(config.location, config.model_name, config.expected_dim);
        case ProviderKind::http: {
            auto p = std::make_unique<HttpProvider>(config);
            p->check_health();
            return p;
        }
    }
    throw ValidationError("unknown provider kind");
}

// ---------------------------------------------------------------------------

EmbeddingCache::EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(*dir_);
}

std::filesystem::path EmbeddingCache::file_for(const std::string& model) const {
    if (!dir_) return {};
    return *dir_ / (sha256_hex(model).substr(0, 16) + ".emb1");
}

EmbeddingCache::ModelRows& EmbeddingCache::ensure_loaded(const std::string& model) {
    auto& entry = models_[model];
    if (entry.loaded) return entry;
    entry.loaded = true;
    if (!dir_) return entry;
    const auto path = file_for(model);
    if (!std::filesystem::exists(path)) return entry;
    try {
        const EmbeddingMatrix m = read_emb1(path);
        for (std::size_t r = 0; r < m.rows(); ++r) {
            auto row = m.row(r);
            entry.rows.emplace(m.row_keys[r], std::vector<float>(row.begin(), row.end()));
        }
    } catch (const ValidationError& e) {
        ++corrupt_loads_;
        spdlog::warn("embedding cache {} discarded: {}", path.string(), e.what());
        entry.dirty = true;  // rewrite a clean file on flush
    }
    return entry;
}

std::optional<std::vector<float>> EmbeddingCache::get(const std::string& model, const Sha256& key) {
    {
        std::shared_lock lock(mu_);
        auto it = models_.find(model);
        if (it != models_.end() && it->second.loaded) {
            auto r = it->second.rows.find(key);
            if (r == it->second.rows.end()) return std::nullopt;
            return r->second;
        }
    }
    std::unique_lock lock(mu_);
    auto& entry = ensure_loaded(model);
    auto r = entry.rows.find(key);
    if (r == entry.rows.end()) return std::nullopt;
    return r->second;
}

void EmbeddingCache::put(const std::string& model, const Sha256& key, std::vector<float> vec) {
    std::unique_lock lock(mu_);
    auto& entry = ensure_loaded(model);
    entry.rows.insert_or_assign(key, std::move(vec));
    entry.dirty = true;
}

void EmbeddingCache::flush() {
    if (!dir_) return;
    std::unique_lock lock(mu_);
    for (auto& [model, entry] : models_) {
        if (!entry.dirty || entry.rows.empty()) continue;
        EmbeddingMatrix m;
        m.dim = entry.rows.begin()->second.size();
        for (const auto& [key, vec] : entry.rows) {
            if (vec.size() != m.dim) continue;
            m.row_keys.push_back(key);
            m.values.insert(m.values.end(), vec.begin(), vec.end());
        }
        write_emb1(file_for(model), m);
        entry.dirty = false;
    }
}

EmbeddingCache::Claim EmbeddingCache::claim(const std::string& model, const Sha256& key) {
    std::lock_guard lock(inflight_mu_);
    auto k = std::make_pair(model, key);
    if (auto it = inflight_.find(k); it != inflight_.end()) return {nullptr, it->second};
    auto promise = std::make_shared<std::promise<std::vector<float>>>();
    auto fut = promise->get_future().share();
    inflight_.emplace(std::move(k), fut);
    return {std::move(promise), std::move(fut)};
}

void EmbeddingCache::release(const std::string& model, const Sha256& key) {
    std::lock_guard lock(inflight_mu_);
    inflight_.erase(std::make_pair(model, key));
}

// ---------------------------------------------------------------------------

EmbeddingMatrix embed_texts(EmbeddingProvider& provider, std::span<const std::string> texts,
                            EmbeddingCache* cache, std::size_t batch_size) {
    if (texts.empty()) throw PreconditionError("embed_texts: no texts given");
    batch_size = std::max<std::size_t>(1, batch_size);
    const std::string& model = provider.model_name();
    const std::size_t dim = provider.dim();

    EmbeddingMatrix m;
    m.dim = dim;
    m.row_keys.reserve(texts.size());
    for (const auto& t : texts) m.row_keys.push_back(sha256(t));

    // Unique keys in first-occurrence order.
    std::map<Sha256, std::vector<float>> resolved;
    std::vector<std::size_t> to_fetch;  // index into texts of the first occurrence
    std::vector<std::pair<Sha256, std::shared_future<std::vector<float>>>> waiting;
    std::vector<std::shared_ptr<std::promise<std::vector<float>>>> owned;
    std::set<Sha256> seen;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const Sha256& key = m.row_keys[i];
        if (!seen.insert(key).second) continue;
        if (cache) {
            if (auto hit = cache->get(model, key)) {
                resolved.emplace(key, std::move(*hit));
                continue;
            }
            auto claim = cache->claim(model, key);
            if (!claim.promise) {
                waiting.emplace_back(key, claim.future);
                continue;
            }
            owned.push_back(std::move(claim.promise));
        }
        to_fetch.push_back(i);
    }

    auto fail_owned = [&](std::exception_ptr e) {
        for (std::size_t j = 0; j < owned.size(); ++j) {
            const Sha256& key = m.row_keys[to_fetch[j]];
            owned[j]->set_exception(e);
            cache->release(model, key);
        }
    };

    try {
        for (std::size_t start = 0; start < to_fetch.size(); start += batch_size) {
            const std::size_t end = std::min(to_fetch.size(), start + batch_size);
            std::vector<std::string> batch;
            batch.reserve(end - start);
            for (std::size_t j = start; j < end; ++j) batch.push_back(texts[to_fetch[j]]);
            auto rows = provider.embed_batch(batch);
            if (rows.size() != batch.size())
                throw ProviderError("provider returned " + std::to_string(rows.size()) + " rows for " +
                                    std::to_string(batch.size()) + " texts");
            for (std::size_t j = start; j < end; ++j) {
                auto& row = rows[j - start];
                if (row.size() != dim)
                    throw ProviderError("dimension mismatch: observed " + std::to_string(row.size()) +
                                        ", expected " + std::to_string(dim));
                for (float f : row)
                    if (!std::isfinite(f)) throw ProviderError("provider returned a non-finite value");
                resolved.emplace(m.row_keys[to_fetch[j]], std::move(row));
            }
        }
    } catch (...) {
        if (cache) fail_owned(std::current_exception());
        throw;
    }

    if (cache) {
        for (std::size_t j = 0; j < owned.size(); ++j) {
            const Sha256& key = m.row_keys[to_fetch[j]];
            const auto& vec = resolved.at(key);
            cache->put(model, key, vec);
            owned[j]->set_value(vec);
            cache->release(model, key);
        }
        for (auto& [key, fut] : waiting) resolved.emplace(key, fut.get());
    }

    m.values.resize(texts.size() * dim);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto& vec = resolved.at(m.row_keys[i]);
        std::copy(vec.begin(), vec.end(), m.values.begin() + static_cast<std::ptrdiff_t>(i * dim));
    }
    return m;
}

}  // namespace oneirotax
