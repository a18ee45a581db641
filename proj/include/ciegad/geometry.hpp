#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ciegad/errors.hpp"

namespace ciegad {

/// One point in the shared embedding space. All vectors in a run carry the
/// same dimension d; every operation below checks what it relies on.
using Embedding = std::vector<double>;

/// Sample id -> embedding, shared by clustering, allocation and synthesis.
using EmbeddingMap = std::unordered_map<std::string, Embedding>;

inline void require_same_dim(const Embedding& a, const Embedding& b) {
    if (a.size() != b.size()) {
        throw InvalidInputError("embedding dimension mismatch: " +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
    }
}

inline double dot(const Embedding& a, const Embedding& b) {
    require_same_dim(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Embedding& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

inline double euclidean(const Embedding& a, const Embedding& b) {
    require_same_dim(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

/// cos(a, b); throws when either vector has zero norm.
inline double cosine_similarity(const Embedding& a, const Embedding& b) {
    require_same_dim(a, b);
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) {
        throw DegenerateVectorError("cosine of a zero-norm vector is undefined");
    }
    if (a == b) return 1.0;  // exact on duplicates, where rounding would bite
    // Clamp against rounding so downstream sqrt(1 - cos) stays real.
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

/// 1 - cos(a, b), in [0, 2].
inline double cosine_distance(const Embedding& a, const Embedding& b) {
    return 1.0 - cosine_similarity(a, b);
}

inline Embedding centroid(std::span<const Embedding> set) {
    if (set.empty()) throw EmptySetError("centroid of an empty set");
    Embedding mean(set.front().size(), 0.0);
    for (const Embedding& x : set) {
        require_same_dim(mean, x);
        for (std::size_t i = 0; i < x.size(); ++i) mean[i] += x[i];
    }
    const double inv = 1.0 / static_cast<double>(set.size());
    for (double& v : mean) v *= inv;
    return mean;
}

inline Embedding centroid(const std::vector<Embedding>& set) {
    return centroid(std::span<const Embedding>(set));
}

/// Mean of the embeddings behind a list of sample ids.
inline Embedding centroid_of_ids(std::span<const std::string> ids,
                                 const EmbeddingMap& embeddings) {
    if (ids.empty()) throw EmptySetError("centroid of an empty id set");
    std::vector<Embedding> pts;
    pts.reserve(ids.size());
    for (const std::string& id : ids) {
        auto it = embeddings.find(id);
        if (it == embeddings.end()) {
            throw InvalidInputError("unknown sample id: " + id);
        }
        pts.push_back(it->second);
    }
    return centroid(pts);
}

/// Cosine distance from `point` to its k-th nearest neighbor among `others`.
/// k is clamped to |others|; the caller excludes the point itself.
inline double knn_radius(const Embedding& point,
                         std::span<const Embedding> others, int k) {
    if (others.empty()) throw EmptySetError("knn_radius over an empty set");
    if (k < 1) throw InvalidInputError("knn_radius requires k >= 1");
    const std::size_t kk =
        std::min<std::size_t>(static_cast<std::size_t>(k), others.size());
    std::vector<double> dist;
    dist.reserve(others.size());
    for (const Embedding& o : others) dist.push_back(cosine_distance(point, o));
    std::nth_element(dist.begin(), dist.begin() + (kk - 1), dist.end());
    return dist[kk - 1];
}

/// sqrt(2 * (1 - cos(x, center))): chord length between the unit-normalized
/// vectors, the Euclidean form of the displacement used by the sparsity term.
inline double sparsity_displacement(const Embedding& x, const Embedding& center) {
    const double c = cosine_similarity(x, center);
    return std::sqrt(std::max(0.0, 2.0 * (1.0 - c)));
}

struct GaussianFit {
    Embedding mean;
    Eigen::MatrixXd covariance;
};

/// Sample mean and unbiased (n-1) covariance with reg * I added.
inline GaussianFit gaussian_fit(std::span<const Embedding> set, double reg) {
    if (set.size() < 2) {
        throw InsufficientDataError("gaussian_fit needs at least 2 samples, got " +
                                    std::to_string(set.size()));
    }
    if (reg < 0.0) throw InvalidInputError("negative covariance regularizer");
    const Embedding mean = centroid(set);
    const auto d = static_cast<Eigen::Index>(mean.size());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd dev(d);
    for (const Embedding& x : set) {
        require_same_dim(mean, x);
        for (Eigen::Index i = 0; i < d; ++i) dev(i) = x[i] - mean[i];
        cov.noalias() += dev * dev.transpose();
    }
    cov /= static_cast<double>(set.size() - 1);
    cov += reg * Eigen::MatrixXd::Identity(d, d);
    return GaussianFit{mean, std::move(cov)};
}

inline void require_symmetric(const Eigen::MatrixXd& m, const char* name) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
        throw InvalidMatrixError(std::string(name) + " is not symmetric within tolerance");
    }
}

/// Tr((S1^{1/2} S2 S1^{1/2})^{1/2}) via symmetric eigendecomposition.
/// Numerically negative eigenvalues are clamped to zero before the square
/// roots; the clamp count is reported through `clamped` when non-null.
inline double trace_sqrt_product(const Eigen::MatrixXd& c1,
                                 const Eigen::MatrixXd& c2,
                                 int* clamped = nullptr) {
    if (c1.rows() != c1.cols() || c2.rows() != c2.cols() || c1.rows() != c2.rows()) {
        throw InvalidMatrixError("trace_sqrt_product needs square matrices of equal size");
    }
    require_symmetric(c1, "c1");
    require_symmetric(c2, "c2");
    int clamp_count = 0;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es1(c1);
    Eigen::VectorXd ev1 = es1.eigenvalues();
    for (Eigen::Index i = 0; i < ev1.size(); ++i) {
        if (ev1(i) < 0.0) {
            ev1(i) = 0.0;
            ++clamp_count;
        }
    }
    const Eigen::MatrixXd sqrt1 = es1.eigenvectors() *
                                  ev1.cwiseSqrt().asDiagonal() *
                                  es1.eigenvectors().transpose();

    Eigen::MatrixXd inner = sqrt1 * c2 * sqrt1;
    inner = 0.5 * (inner + inner.transpose());  // kill rounding asymmetry
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(inner);
    double trace = 0.0;
    for (Eigen::Index i = 0; i < inner.rows(); ++i) {
        const double ev = es2.eigenvalues()(i);
        if (ev < 0.0) {
            ++clamp_count;
            continue;
        }
        trace += std::sqrt(ev);
    }
    if (clamped) *clamped = clamp_count;
    return trace;
}

}  // namespace ciegad
