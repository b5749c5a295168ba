#pragma once

#include "bizmodel/matrix.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bizmodel {

struct ClusterSolution {
    std::size_t k = 0;
    std::vector<int> assignments;
    /// k x dim
    Matrix centroids;
    /// Sum of squared Euclidean distances to assigned centroids.
    double inertia = 0.0;
    std::size_t n_starts_used = 0;
};

struct KMeansOptions {
    std::size_t n_starts = 100;
    std::size_t max_iter = 300;
    std::uint64_t seed = 0;
};

/// One Lloyd run from given centroids, with the inertia after every update
/// step. Throws std::logic_error if inertia ever increases.
struct LloydRun {
    ClusterSolution solution;
    std::vector<double> inertia_trace;
    bool converged = false;
};

LloydRun lloyd(const Matrix& points, Matrix initial_centroids, std::size_t max_iter);

/// Best of `n_starts` Lloyd runs, each seeded with k distinct points drawn
/// uniformly (start s uses a stream derived from (seed, s)). An empty
/// cluster seizes the point farthest from its centroid.
ClusterSolution kmeans(const Matrix& points, std::size_t k, const KMeansOptions& options = {});

double inertia(const Matrix& points, std::span<const int> assignments, const Matrix& centroids);

/// Centroids as member means of the given labelling.
Matrix cluster_means(const Matrix& points, std::span<const int> assignments, std::size_t k);

/// Column z-scores; zero-variance columns are centred only.
Matrix standardize_columns(const Matrix& points);

enum class ValidityIndex { kCalinskiHarabasz, kSilhouette, kDaviesBouldin, kDunn, kHartigan };

std::string_view index_name(ValidityIndex index);
std::optional<ValidityIndex> parse_index_name(std::string_view name);
std::vector<ValidityIndex> all_validity_indices();

// Each returns nullopt where the index is undefined for the partition.
std::optional<double> calinski_harabasz(const Matrix& points, const ClusterSolution& solution);
std::optional<double> silhouette(const Matrix& points, const ClusterSolution& solution);
std::optional<double> davies_bouldin(const Matrix& points, const ClusterSolution& solution);
std::optional<double> dunn(const Matrix& points, const ClusterSolution& solution);
/// H(k) = (W_k / W_{k+1} - 1)(n - k - 1).
std::optional<double> hartigan(double inertia_k, double inertia_k_plus_1, std::size_t n, std::size_t k);

struct IndexVotes {
    ValidityIndex index{};
    /// One entry per k in the report's range.
    std::vector<std::optional<double>> values;
    std::optional<std::size_t> recommended_k;
};

struct KSelectionReport {
    std::vector<std::size_t> ks;
    std::vector<IndexVotes> indices;
    std::map<std::size_t, std::size_t> vote_counts;
    std::size_t final_k = 0;
    /// Best k-means solution for each k in `ks`.
    std::vector<ClusterSolution> solutions;

    const ClusterSolution& solution_for(std::size_t k) const;
};

struct SelectKOptions {
    std::size_t k_min = 2;
    std::size_t k_max = 10;
    KMeansOptions kmeans;
    std::vector<ValidityIndex> indices = all_validity_indices();
};

/// Argmax of the vote counts; ties go to the smallest k.
std::size_t majority_vote(const std::map<std::size_t, std::size_t>& votes);

/// Majority rule over the validity indices for k in [k_min, k_max].
KSelectionReport select_k(const Matrix& points, const SelectKOptions& options = {});

/// Columns: index, k, value, vote (1 when the index recommends that k).
std::string k_selection_csv(const KSelectionReport& report);

} // namespace bizmodel
