#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace l2r {

/// Frozen random Fourier feature maps h(z) = sqrt(2) cos(omega z + phi) for the
/// two sides u and v of the partial cross-covariance.
class RFFBank {
public:
    RFFBank(Eigen::VectorXd omega_u, Eigen::VectorXd phase_u, Eigen::VectorXd omega_v, Eigen::VectorXd phase_v);

    /// omega ~ N(0,1), phi ~ U[0, 2pi), independently for both sides.
    static RFFBank sample(int functions_per_side, std::uint64_t seed);

    int size() const { return static_cast<int>(omega_u_.size()); }
    const Eigen::VectorXd& omega_u() const { return omega_u_; }
    const Eigen::VectorXd& phase_u() const { return phase_u_; }
    const Eigen::VectorXd& omega_v() const { return omega_v_; }
    const Eigen::VectorXd& phase_v() const { return phase_v_; }

    /// N x size feature matrices (and their derivatives w.r.t. z).
    Eigen::MatrixXd u(const Eigen::Ref<const Eigen::VectorXd>& z) const;
    Eigen::MatrixXd v(const Eigen::Ref<const Eigen::VectorXd>& z) const;
    Eigen::MatrixXd du(const Eigen::Ref<const Eigen::VectorXd>& z) const;
    Eigen::MatrixXd dv(const Eigen::Ref<const Eigen::VectorXd>& z) const;

    friend bool operator==(const RFFBank&, const RFFBank&) = default;

private:
    Eigen::VectorXd omega_u_, phase_u_, omega_v_, phase_v_;
};

/// Per-graph sample weights w_n = softplus(rho_n) * N / sum_m softplus(rho_m).
///
/// The weights are positive and average exactly 1 over all N entries for any rho.
/// The normaliser is cached, so reading or stepping a batch of B entries costs O(B).
class WeightVector {
public:
    WeightVector() = default;
    /// Uniform weights (rho = softplus^-1(1)).
    explicit WeightVector(std::size_t n);
    static WeightVector from_rho(Eigen::VectorXd rho);

    std::size_t size() const { return static_cast<std::size_t>(rho_.size()); }
    const Eigen::VectorXd& rho() const { return rho_; }
    double weight(int index) const;
    Eigen::VectorXd weights() const;
    Eigen::VectorXd gather(std::span<const int> ids) const;

    /// Exact d(loss)/d(rho) from d(loss)/d(w) over all entries, through softplus and the normaliser.
    Eigen::VectorXd grad_rho(const Eigen::Ref<const Eigen::VectorXd>& grad_w) const;

    /// SGD on the rho entries of `ids` given d(loss)/d(w) for those entries only.
    /// Uses the batch-restricted part of grad_rho; entries outside the batch keep
    /// their rho and move only through the shared normaliser.
    /// Returns the L2 norm of the applied rho update.
    double step(std::span<const int> ids, const Eigen::Ref<const Eigen::VectorXd>& grad_w_batch, double lr);

    /// Recomputes the cached normaliser from scratch.
    void renormalize();

    friend bool operator==(const WeightVector& a, const WeightVector& b) { return a.rho_ == b.rho_; }

private:
    Eigen::VectorXd rho_;
    double softplus_sum_ = 0.0;
};

double softplus(double x);
double inverse_softplus(double y);

/// Partition of d representation variables into K clusters, centred on medoid variables.
struct ClusterAssignment {
    int k = 0;
    std::vector<int> assign;   // length d, values in [0, k)
    std::vector<int> medoids;  // length k, medoids[c] is a variable with assign == c

    int dimension() const { return static_cast<int>(assign.size()); }
    static ClusterAssignment single(int d);
    static ClusterAssignment singletons(int d);
    void validate() const;

    /// {"K":int,"assign":[...],"medoids":[...]}
    std::string to_json() const;
    static ClusterAssignment from_json(const std::string& text);

    friend bool operator==(const ClusterAssignment&, const ClusterAssignment&) = default;
};

/// Which variable pairs the decorrelation objective penalises.
enum class PairSelection {
    cross_cluster,   // pairs in different clusters
    within_cluster,  // pairs in the same cluster (literal indicator variant)
};

/// Weighted partial cross-covariance between RFF maps of columns i and j (0-based):
/// (1/(N-1)) sum_n (w_n u(Z_ni) - mean_m w_m u(Z_mi))^T (w_n v(Z_nj) - mean_m w_m v(Z_mj)).
Eigen::MatrixXd partial_cross_cov(const Eigen::MatrixXd& z, const Eigen::Ref<const Eigen::VectorXd>& w, int i, int j,
                                  const RFFBank& bank);

struct DecorrelationResult {
    double value = 0.0;
    Eigen::VectorXd grad_w;  // length N
    Eigen::MatrixXd grad_z;  // N x d
    int penalized_pairs = 0;
};

/// Sum over selected pairs i < j of ||partial_cross_cov(i, j)||_F^2 with exact
/// gradients w.r.t. the weights and the representations.
DecorrelationResult decorrelation_loss(const Eigen::MatrixXd& z, const Eigen::Ref<const Eigen::VectorXd>& w,
                                       const ClusterAssignment& clusters, const RFFBank& bank,
                                       PairSelection selection = PairSelection::cross_cluster);

/// Pearson correlation matrix of the columns. A column with zero variance gets
/// correlation 0 with everything (itself included) and bumps `degenerate`.
Eigen::MatrixXd pearson(const Eigen::MatrixXd& z, std::size_t* degenerate = nullptr);

/// Per-subset Pearson matrices plus the reference ("average") correlation matrix.
struct CorrelationProfile {
    std::vector<Eigen::MatrixXd> subsets;
    Eigen::MatrixXd average;
    std::size_t degenerate_columns = 0;

    int dimension() const { return static_cast<int>(average.rows()); }
    std::size_t subset_count() const { return subsets.size(); }
    void clear_subsets() { subsets.clear(); }
};

/// Appends the batch correlation as a new subset and recomputes the average from
/// the concatenated queue blocks. An empty queue falls back to the batch itself.
void update_profile(CorrelationProfile& profile, const Eigen::MatrixXd& batch,
                    std::span<const Eigen::MatrixXd> queue_blocks);

/// sqrt( (1/(L-1)) sum_l (Corr_l(i,j) - Ave(i,j))^2 ) over the L stored subsets.
double dis(int i, int j, const CorrelationProfile& profile);
Eigen::MatrixXd dissimilarity_matrix(const CorrelationProfile& profile);

struct MedoidResult {
    ClusterAssignment clusters;
    double objective = 0.0;  // sum over variables of the distance to their medoid
    int iterations = 0;
};

/// PAM-style k-medoids on a symmetric distance matrix: seeded random initial
/// medoids, then best-improvement swaps until none improves (at most
/// `max_iterations`). Ties go to the lowest index.
MedoidResult k_medoids(const Eigen::MatrixXd& distance, int k, std::uint64_t seed, int max_iterations = 50);

/// k-medoids under Dis.
ClusterAssignment cluster_variables(const CorrelationProfile& profile, int k, std::uint64_t seed);

}  // namespace l2r
