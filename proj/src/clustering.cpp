#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "l2r/decorrelation.hpp"
#include "l2r/errors.hpp"
#include "l2r/random.hpp"

namespace l2r {

namespace {

// Nearest medoid per variable; a medoid always belongs to its own cluster and
// remaining ties go to the lower medoid index.
double assign_to_medoids(const Eigen::MatrixXd& distance, const std::vector<int>& medoids, std::vector<int>& assign) {
    const int d = static_cast<int>(distance.rows());
    assign.assign(static_cast<std::size_t>(d), 0);
    double objective = 0.0;
    for (int v = 0; v < d; ++v) {
        int best = -1;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < medoids.size(); ++c) {
            if (medoids[c] == v) {
                best = static_cast<int>(c);
                best_dist = 0.0;
                break;
            }
            const double dist = distance(v, medoids[c]);
            if (dist < best_dist || (dist == best_dist && medoids[c] < medoids[static_cast<std::size_t>(best)])) {
                best = static_cast<int>(c);
                best_dist = dist;
            }
        }
        assign[static_cast<std::size_t>(v)] = best;
        objective += best_dist;
    }
    return objective;
}

}  // namespace

MedoidResult k_medoids(const Eigen::MatrixXd& distance, int k, std::uint64_t seed, int max_iterations) {
    const int d = static_cast<int>(distance.rows());
    if (distance.cols() != d || d == 0) {
        throw ShapeError("distance matrix must be square and non-empty");
    }
    if (k < 1 || k > d) {
        throw std::invalid_argument("cluster count " + std::to_string(k) + " must lie in [1, " + std::to_string(d) +
                                    "]");
    }
    Rng rng(seed);
    std::vector<int> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> medoids(order.begin(), order.begin() + k);
    std::sort(medoids.begin(), medoids.end());

    std::vector<int> assign;
    double objective = assign_to_medoids(distance, medoids, assign);
    MedoidResult out;
    std::vector<int> trial_assign;
    for (; out.iterations < max_iterations; ++out.iterations) {
        double best = objective;
        std::size_t best_slot = 0;
        int best_candidate = -1;
        for (std::size_t slot = 0; slot < medoids.size(); ++slot) {
            for (int candidate = 0; candidate < d; ++candidate) {
                if (std::find(medoids.begin(), medoids.end(), candidate) != medoids.end()) continue;
                std::vector<int> trial = medoids;
                trial[slot] = candidate;
                const double value = assign_to_medoids(distance, trial, trial_assign);
                if (value < best - 1e-12) {
                    best = value;
                    best_slot = slot;
                    best_candidate = candidate;
                }
            }
        }
        if (best_candidate < 0) break;
        medoids[best_slot] = best_candidate;
        std::sort(medoids.begin(), medoids.end());
        objective = assign_to_medoids(distance, medoids, assign);
    }
    out.clusters = {k, assign, medoids};
    out.objective = objective;
    out.clusters.validate();
    return out;
}

ClusterAssignment cluster_variables(const CorrelationProfile& profile, int k, std::uint64_t seed) {
    if (k > profile.dimension()) {
        throw std::invalid_argument("cluster count " + std::to_string(k) + " exceeds the " +
                                    std::to_string(profile.dimension()) + " representation variables");
    }
    return k_medoids(dissimilarity_matrix(profile), k, seed).clusters;
}

}  // namespace l2r
