#pragma once

#include <cstdint>
#include <string_view>

#include "oneirotax/embedding.hpp"

namespace oneirotax {

enum class ReduceMethod { pca, random_projection };
std::string_view to_string(ReduceMethod m);
ReduceMethod parse_reduce_method(std::string_view s);

/// Projects rows onto `target_dim` dimensions.
///
/// pca: centres the rows and projects onto the leading eigenvectors of the
/// covariance matrix; each eigenvector's sign is fixed so its largest
/// |component| is positive. If the centred data has rank r < target_dim, a
/// warning is logged and only r components are returned.
///
/// random_projection: multiplies by a seeded Gaussian matrix scaled by
/// 1/sqrt(target_dim) (Johnson-Lindenstrauss).
///
/// Row keys are carried through unchanged.
EmbeddingMatrix reduce(const EmbeddingMatrix& matrix, std::size_t target_dim, ReduceMethod method,
                       std::uint64_t seed);

/// Per-column z-scoring in double precision. Zero-variance columns map to
/// 0. Population variance.
std::vector<std::vector<double>> standardize(const std::vector<std::vector<double>>& rows);

}  // namespace oneirotax
