#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "l2r/graph.hpp"

namespace l2r {

enum class Backbone { gcn, gin };
enum class Activation { relu, identity };

std::string_view to_string(Backbone backbone);
Backbone backbone_from_string(std::string_view name);

struct ModelConfig {
    Backbone backbone = Backbone::gcn;
    int input_dim = 8;
    std::vector<int> layer_dims{32, 16};
    Activation activation = Activation::relu;
    int num_classes = 2;

    int embedding_dim() const { return layer_dims.empty() ? 0 : layer_dims.back(); }
    void validate() const;
};

struct Tensor {
    std::string name;
    Eigen::MatrixXd value;
};

/// Ordered collection of named tensors; also used for gradients of the same layout.
class Parameters {
public:
    void add(std::string name, Eigen::MatrixXd value);

    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }
    Eigen::MatrixXd& at(std::size_t index) { return tensors_[index].value; }
    const Eigen::MatrixXd& at(std::size_t index) const { return tensors_[index].value; }
    const Eigen::MatrixXd& find(std::string_view name) const;

    /// Total scalar count.
    Eigen::Index size() const;
    Eigen::VectorXd flatten() const;
    void assign(const Eigen::Ref<const Eigen::VectorXd>& flat);
    Parameters zeros_like() const;
    /// this += alpha * other
    void axpy(double alpha, const Parameters& other);
    bool all_finite() const;

    friend bool operator==(const Parameters& a, const Parameters& b);

private:
    std::vector<Tensor> tensors_;
};

/// Forward intermediates of one layer. GCN fills input/aggregated/pre/output;
/// GIN additionally fills hidden_pre/hidden for its two-layer MLP.
struct LayerTape {
    Eigen::MatrixXd input;
    Eigen::MatrixXd aggregated;
    Eigen::MatrixXd hidden_pre;
    Eigen::MatrixXd hidden;
    Eigen::MatrixXd pre;
    Eigen::MatrixXd output;
};

/// Everything backward() needs for one graph. Holds a pointer to the graph, which
/// must outlive the tape.
struct ForwardTape {
    const Graph* graph = nullptr;
    std::vector<LayerTape> layers;
    Eigen::RowVectorXd embedding;
};

/// GCN or GIN encoder with mean readout and a linear classifier d -> classes.
///
/// GCN layer: H' = act(D^-1/2 (A+I) D^-1/2 H W + b).
/// GIN layer: H' = act(MLP(h_v + sum_{u in N(v)} h_u)), MLP = Linear-act-Linear, epsilon fixed at 0.
class Model {
public:
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    Model(ModelConfig config, std::uint64_t seed);
    Model(ModelConfig config, Parameters params);

    const ModelConfig& config() const { return config_; }
    const Parameters& parameters() const { return params_; }
    Parameters& parameters() { return params_; }

    ForwardTape forward(const Graph& graph) const;
    Eigen::RowVectorXd embed(const Graph& graph) const;
    /// Accumulates d(loss)/d(theta) into `grads` given d(loss)/d(embedding).
    void backward(const ForwardTape& tape, const Eigen::Ref<const Eigen::RowVectorXd>& grad_embedding,
                  Parameters& grads) const;

    Eigen::MatrixXd classify(const Eigen::MatrixXd& embeddings) const;
    /// Accumulates classifier gradients; returns d(loss)/d(embeddings).
    Eigen::MatrixXd classifier_backward(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& grad_logits,
                                        Parameters& grads) const;

    /// Hash of the ReLU on/off pattern recorded in a tape; equal hashes mean the
    /// same linear region of the network.
    std::uint64_t activation_signature(const ForwardTape& tape) const;

private:
    void check_shapes() const;
    std::size_t classifier_index() const;

    ModelConfig config_;
    Parameters params_;
};

struct RepresentationBatch {
    Eigen::MatrixXd z;  // N x d, row i belongs to graph_ids[i]
    std::vector<int> graph_ids;
};

struct BatchTape {
    RepresentationBatch reps;
    std::vector<ForwardTape> tapes;
};

RepresentationBatch batch_embed(const Model& model, std::span<const Graph> graphs, std::span<const int> ids);
BatchTape batch_forward(const Model& model, std::span<const Graph> graphs, std::span<const int> ids);
void batch_backward(const Model& model, const BatchTape& tape, const Eigen::MatrixXd& grad_z, Parameters& grads);

struct LossResult {
    double value = 0.0;
    Eigen::VectorXd per_sample;   // unweighted cross-entropy per row
    Eigen::MatrixXd grad_logits;  // N x classes
    Eigen::VectorXd grad_weights;  // d(loss)/d(w_n) = l_n / N
};

/// (1/N) sum_n w_n * CE(softmax(logits_n), label_n). Weights must be >= 0.
LossResult weighted_loss(const Eigen::MatrixXd& logits, std::span<const int> labels,
                         const Eigen::Ref<const Eigen::VectorXd>& weights);

struct PredictionLoss {
    double value = 0.0;
    Parameters grads;
    Eigen::VectorXd per_sample;
    Eigen::VectorXd grad_weights;
    RepresentationBatch reps;
    std::uint64_t region = 0;  // combined activation signature of the batch
};

/// Weighted prediction loss of a batch with exact gradients w.r.t. every parameter.
PredictionLoss prediction_loss(const Model& model, std::span<const Graph> graphs, std::span<const int> ids,
                               const Eigen::Ref<const Eigen::VectorXd>& weights);

/// Per-sample cross-entropy only (no gradients).
Eigen::VectorXd per_sample_loss(const Model& model, std::span<const Graph> graphs, std::span<const int> ids);

/// theta <- theta - lr * grad. Throws NumericalError on a non-finite gradient and leaves params untouched.
void sgd_step(Parameters& params, const Parameters& grads, double lr);

struct FunctionValue {
    double value = 0.0;
    std::uint64_t region = 0;  // piecewise-smooth region id; 0 for smooth functions
};

struct GradcheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_nonsmooth = 0;
};

/// Compares `analytic` to central differences of `fn` at `x`.
///
/// Error per coordinate is |a - n| / max(|a|, |n|, 1e-3 * max_k |n_k|, 1e-12).
/// Coordinates whose +/- step leaves the base point's smooth region are skipped
/// and counted instead.
GradcheckReport gradcheck(const std::function<FunctionValue(const Eigen::VectorXd&)>& fn,
                          const Eigen::VectorXd& x, const Eigen::VectorXd& analytic, double step = 1e-4);

}  // namespace l2r
