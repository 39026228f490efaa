#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "l2r/decorrelation.hpp"
#include "l2r/gnn.hpp"
#include "l2r/graph.hpp"

namespace l2r {

enum class Order { first, second, joint };
std::string_view to_string(Order order);
Order order_from_string(std::string_view name);

struct TrainConfig {
    double eta_theta = 1e-2;
    double eta_w = 1e-2;
    double eps = 1e-2;  // finite-difference scale, relative: eps_abs = eps / ||grad_theta L_val||
    Order order = Order::first;
    int epochs = 100;
    int batch_size = 32;
    int queue_count = 4;
    std::vector<double> alphas;  // per-queue momentum; empty means `alpha` for every queue
    double alpha = 0.9;
    int clusters = 4;
    int recluster_period = 5;
    int rff_functions = 5;
    std::uint64_t seed = 0;
    bool decorrelate = true;  // false: weights stay uniform and no weight step runs
    PairSelection pair_selection = PairSelection::cross_cluster;
    double divergence_threshold = 1e6;

    void validate() const;
    std::vector<double> queue_alphas() const;
};

/// k momentum-averaged memory blocks of past batch representations and weights.
///
/// The first k pushes fill the blocks (warm-up); after that every push blends
/// the batch into all blocks: Q_i <- alpha_i Q_i + (1 - alpha_i) batch.
class QueueState {
public:
    QueueState(int queue_count, std::vector<double> alphas);

    bool warm() const { return static_cast<int>(z_blocks_.size()) == queue_count_; }
    int queue_count() const { return queue_count_; }
    const std::vector<double>& alphas() const { return alphas_; }
    const std::vector<Eigen::MatrixXd>& z_blocks() const { return z_blocks_; }
    const std::vector<Eigen::VectorXd>& w_blocks() const { return w_blocks_; }

    /// Concat(Z^(q_1), ..., Z^(q_k), current): ((filled + 1) * B) rows.
    Eigen::MatrixXd stacked_z(const Eigen::MatrixXd& current) const;
    Eigen::VectorXd stacked_w(const Eigen::VectorXd& current) const;

    friend void momentum_update(QueueState& queues, const Eigen::MatrixXd& z_batch, const Eigen::VectorXd& w_batch);

private:
    int queue_count_;
    std::vector<double> alphas_;
    std::vector<Eigen::MatrixXd> z_blocks_;
    std::vector<Eigen::VectorXd> w_blocks_;
};

void momentum_update(QueueState& queues, const Eigen::MatrixXd& z_batch, const Eigen::VectorXd& w_batch);

/// Finite-difference second-order term of the hypergradient:
/// -eta_theta / eps_abs * (g(theta_prev + eps_abs * grad_theta_val) - g(theta_prev)),
/// where g(theta) = d L_train(theta, W) / dW and eps_abs = eps / ||grad_theta_val||.
/// Zero when grad_theta_val vanishes.
Eigen::VectorXd second_order_correction(const Eigen::VectorXd& theta_prev, const Eigen::VectorXd& grad_theta_val,
                                        double eta_theta, double eps,
                                        const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad_w_train);

struct Hypergradient {
    Eigen::VectorXd gradient;
    double direct_norm = 0.0;
    double correction_norm = 0.0;
    bool fell_back = false;
};

/// direct + correction, unless the correction is non-finite or exceeds 1e3x a
/// non-zero direct term, in which case only the direct term is kept.
Hypergradient combine_hypergradient(const Eigen::VectorXd& direct, const Eigen::VectorXd& correction);

struct WeightStepReport {
    double decor_loss = 0.0;
    double direct_norm = 0.0;
    double correction_norm = 0.0;
    double update_norm = 0.0;
    bool fell_back = false;
    bool applied = false;  // false during queue warm-up
};

/// One SGD step on theta for the weighted prediction loss of `batch`; W is held fixed.
/// Returns the batch loss. Throws NumericalError if the loss or gradient is non-finite.
double outer_step_theta(Model& model, std::span<const Graph> graphs, std::span<const int> batch,
                        const WeightVector& weights, double eta_theta);

struct WeightStepContext {
    std::span<const Graph> graphs;
    std::span<const int> batch;
    const ClusterAssignment& clusters;
    const RFFBank& bank;
    const TrainConfig& config;
};

/// Weight update after the theta step (order first or second).
///
/// The batch is re-embedded with the updated parameters (`model`, theta^(i)) and
/// stacked under the queue memory; the decorrelation objective over that stack
/// gives the direct term for the batch weights. Order second adds the
/// finite-difference correction around `theta_prev` (theta^(i-1)). Queues are
/// refreshed with the batch afterwards. During warm-up only the queues move.
WeightStepReport inner_step_w(WeightVector& weights, const Model& model, const Parameters& theta_prev,
                              QueueState& queues, const WeightStepContext& ctx, Eigen::MatrixXd* batch_z = nullptr);

/// Single-level variant: W descends the same training objective as theta,
/// d/dW [L_train(theta, W) + L_decor(theta, W)], at the pre-step parameters.
WeightStepReport joint_step_w(WeightVector& weights, const Eigen::MatrixXd& batch_z,
                              const Eigen::VectorXd& train_grad_w, QueueState& queues, const WeightStepContext& ctx);

struct WeightSummary {
    double min = 0.0;
    double median = 0.0;
    double max = 0.0;
    double variance = 0.0;  // population variance
};
WeightSummary summarize_weights(const Eigen::VectorXd& w);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_decor_loss = 0.0;
    double val_pred_loss = 0.0;
    double test_acc = 0.0;
    WeightSummary weights;
    double step_ms = 0.0;
};

struct StepRecord {
    int step = 0;
    int epoch = 0;
    double train_loss = 0.0;
    WeightStepReport weight_step;
};

struct RunMetrics {
    std::vector<EpochRecord> epochs;
    std::vector<StepRecord> steps;
    bool aborted = false;
    std::string abort_reason;

    /// epoch,train_loss,val_decor_loss,val_pred_loss,test_acc,w_min,w_med,w_max,w_var,step_ms
    /// preceded by one "# config_hash=...,seed=..." line.
    void write_csv(const std::string& path, const std::string& config_hash, std::uint64_t seed) const;
    void write_steps_csv(const std::string& path, const std::string& config_hash, std::uint64_t seed) const;
};

inline constexpr std::string_view kMetricsHeader =
    "epoch,train_loss,val_decor_loss,val_pred_loss,test_acc,w_min,w_med,w_max,w_var,step_ms";

struct EvalResult {
    double accuracy = 0.0;
    std::array<std::array<long, 2>, 2> confusion{};  // [true][predicted]
    std::array<double, 2> class_accuracy{};
    std::size_t count = 0;
};

EvalResult evaluate(const Model& model, const GraphDataset& dataset);

struct StepEvent {
    int step = 0;
    int epoch = 0;
    const Model& model;
    const WeightVector& weights;
    const WeightStepReport& weight_step;
};

struct TrainResult {
    Model model;
    WeightVector weights;
    RFFBank bank;
    ClusterAssignment clusters;
    RunMetrics metrics;
};

/// Alternating bi-level training: per training batch one theta step (weighted
/// prediction loss) then one weight step. Deterministic given config.seed.
TrainResult train(const TrainConfig& config, const ModelConfig& model_config, const GraphDataset& train_set,
                  const GraphDataset& val_set, const GraphDataset& test_set,
                  const std::function<void(const StepEvent&)>& on_step = {});

}  // namespace l2r
