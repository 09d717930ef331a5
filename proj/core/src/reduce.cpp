#include "oneirotax/reduce.hpp"

#include <numbers>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

namespace oneirotax {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Box-Muller on splitmix64 output; portable across standard libraries.
double gaussian(std::uint64_t& state) {
    const double u1 = (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Eigen::MatrixXd to_eigen(const EmbeddingMatrix& m) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.dim));
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.dim; ++c) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m.values[r * m.dim + c];
    return x;
}

EmbeddingMatrix from_eigen(const Eigen::MatrixXd& y, const std::vector<Sha256>& keys) {
    EmbeddingMatrix out;
    out.dim = static_cast<std::size_t>(y.cols());
    out.row_keys = keys;
    out.values.resize(static_cast<std::size_t>(y.rows() * y.cols()));
    for (Eigen::Index r = 0; r < y.rows(); ++r)
        for (Eigen::Index c = 0; c < y.cols(); ++c)
            out.values[static_cast<std::size_t>(r * y.cols() + c)] = static_cast<float>(y(r, c));
    return out;
}

}  // namespace

std::string_view to_string(ReduceMethod m) {
    return m == ReduceMethod::pca ? "pca" : "random_projection";
}

ReduceMethod parse_reduce_method(std::string_view s) {
    if (s == "pca") return ReduceMethod::pca;
    if (s == "random_projection") return ReduceMethod::random_projection;
    throw ValidationError("unknown reduce method '" + std::string(s) + "'");
}

EmbeddingMatrix reduce(const EmbeddingMatrix& matrix, std::size_t target_dim, ReduceMethod method,
                       std::uint64_t seed) {
    validate(matrix);
    if (target_dim == 0) throw PreconditionError("reduce: target_dim must be positive");
    if (target_dim > matrix.dim)
        throw PreconditionError("reduce: target_dim " + std::to_string(target_dim) + " exceeds input dim " +
                                std::to_string(matrix.dim));
    const Eigen::MatrixXd x = to_eigen(matrix);

    if (method == ReduceMethod::random_projection) {
        std::uint64_t state = seed ^ 0x5EEDC0DEULL;
        Eigen::MatrixXd proj(static_cast<Eigen::Index>(matrix.dim), static_cast<Eigen::Index>(target_dim));
        const double scale = 1.0 / std::sqrt(static_cast<double>(target_dim));
        for (Eigen::Index c = 0; c < proj.cols(); ++c)
            for (Eigen::Index r = 0; r < proj.rows(); ++r) proj(r, c) = gaussian(state) * scale;
        return from_eigen(x * proj, matrix.row_keys);
    }

    if (matrix.rows() < target_dim)
        throw PreconditionError("reduce: pca needs at least target_dim rows (" + std::to_string(matrix.rows()) +
                                " < " + std::to_string(target_dim) + ")");
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    const double denom = matrix.rows() > 1 ? static_cast<double>(matrix.rows() - 1) : 1.0;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw Error("reduce: eigen-decomposition failed");

    // Eigen returns ascending eigenvalues.
    const Eigen::VectorXd& values = eig.eigenvalues();
    const Eigen::Index d = values.size();
    const double top = values(d - 1);
    const double tol = std::max(top, 0.0) * 1e-10;
    std::size_t rank = 0;
    for (Eigen::Index i = d - 1; i >= 0 && values(i) > tol && top > 0; --i) ++rank;
    std::size_t k = target_dim;
    if (rank < target_dim) {
        spdlog::warn("reduce: pca input has rank {} < target_dim {}; returning {} component(s)", rank, target_dim,
                     std::max<std::size_t>(rank, 1));
        k = std::max<std::size_t>(rank, 1);
    }
    Eigen::MatrixXd basis(d, static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) {
        Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - static_cast<Eigen::Index>(j));
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        basis.col(static_cast<Eigen::Index>(j)) = v;
    }
    return from_eigen(centered * basis, matrix.row_keys);
}

std::vector<std::vector<double>> standardize(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    const std::size_t n = rows.size();
    const std::size_t d = rows.front().size();
    std::vector<std::vector<double>> out(n, std::vector<double>(d, 0.0));
    for (std::size_t c = 0; c < d; ++c) {
        double mean = 0.0;
        for (const auto& r : rows) mean += r.at(c);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& r : rows) var += (r[c] - mean) * (r[c] - mean);
        var /= static_cast<double>(n);
        const double sd = std::sqrt(var);
        // Constant columns (up to rounding) carry no information.
        if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) continue;
        for (std::size_t i = 0; i < n; ++i) out[i][c] = (rows[i][c] - mean) / sd;
    }
    return out;
}

}  // namespace oneirotax
