#include "l2r/gnn.hpp"

#include <cmath>
#include <stdexcept>

#include "l2r/errors.hpp"
#include "l2r/random.hpp"

namespace l2r {

std::string_view to_string(Backbone backbone) {
    return backbone == Backbone::gcn ? "gcn" : "gin";
}

Backbone backbone_from_string(std::string_view name) {
    if (name == "gcn") return Backbone::gcn;
    if (name == "gin") return Backbone::gin;
    throw std::invalid_argument("unknown backbone '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
    if (input_dim <= 0) {
        throw std::invalid_argument("input_dim must be positive");
    }
    if (layer_dims.empty()) {
        throw std::invalid_argument("layer_dims must be non-empty");
    }
    for (int w : layer_dims) {
        if (w <= 0) throw std::invalid_argument("layer widths must be positive");
    }
    if (num_classes < 2) {
        throw std::invalid_argument("num_classes must be at least 2");
    }
}

// ---------------------------------------------------------------------------
// Parameters

void Parameters::add(std::string name, Eigen::MatrixXd value) {
    tensors_.push_back({std::move(name), std::move(value)});
}

const Eigen::MatrixXd& Parameters::find(std::string_view name) const {
    for (const auto& t : tensors_) {
        if (t.name == name) return t.value;
    }
    throw std::out_of_range("no tensor named '" + std::string(name) + "'");
}

Eigen::Index Parameters::size() const {
    Eigen::Index n = 0;
    for (const auto& t : tensors_) n += t.value.size();
    return n;
}

Eigen::VectorXd Parameters::flatten() const {
    Eigen::VectorXd flat(size());
    Eigen::Index offset = 0;
    for (const auto& t : tensors_) {
        flat.segment(offset, t.value.size()) = t.value.reshaped();
        offset += t.value.size();
    }
    return flat;
}

void Parameters::assign(const Eigen::Ref<const Eigen::VectorXd>& flat) {
    if (flat.size() != size()) {
        throw ShapeError("flat parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                         std::to_string(size()));
    }
    Eigen::Index offset = 0;
    for (auto& t : tensors_) {
        t.value.reshaped() = flat.segment(offset, t.value.size());
        offset += t.value.size();
    }
}

Parameters Parameters::zeros_like() const {
    Parameters out;
    for (const auto& t : tensors_) {
        out.add(t.name, Eigen::MatrixXd::Zero(t.value.rows(), t.value.cols()));
    }
    return out;
}

void Parameters::axpy(double alpha, const Parameters& other) {
    if (other.tensors_.size() != tensors_.size()) {
        throw ShapeError("parameter sets differ in tensor count");
    }
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        tensors_[i].value += alpha * other.tensors_[i].value;
    }
}

bool Parameters::all_finite() const {
    for (const auto& t : tensors_) {
        if (!t.value.allFinite()) return false;
    }
    return true;
}

bool operator==(const Parameters& a, const Parameters& b) {
    if (a.tensors_.size() != b.tensors_.size()) return false;
    for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
        const auto& x = a.tensors_[i];
        const auto& y = b.tensors_[i];
        if (x.name != y.name || x.value.rows() != y.value.rows() || x.value.cols() != y.value.cols() ||
            x.value != y.value) {
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Model

namespace {

Eigen::MatrixXd glorot(int fan_in, int fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Eigen::MatrixXd w(fan_in, fan_out);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            w(r, c) = dist(rng);
        }
    }
    return w;
}

Eigen::MatrixXd activate(Activation act, const Eigen::MatrixXd& pre) {
    return act == Activation::relu ? Eigen::MatrixXd(pre.cwiseMax(0.0)) : pre;
}

// grad * act'(pre); the ReLU derivative at exactly 0 is taken as 0.
Eigen::MatrixXd activation_backward(Activation act, const Eigen::MatrixXd& pre, const Eigen::MatrixXd& grad) {
    if (act == Activation::identity) return grad;
    return (pre.array() > 0.0).select(grad, 0.0);
}

// D^-1/2 (A+I) D^-1/2 H; symmetric, so it is also its own adjoint.
Eigen::MatrixXd gcn_propagate(const Graph& g, const Eigen::MatrixXd& h) {
    const int n = g.node_count();
    Eigen::VectorXd inv_sqrt(n);
    for (int v = 0; v < n; ++v) inv_sqrt(v) = 1.0 / std::sqrt(static_cast<double>(g.degree(v) + 1));
    Eigen::MatrixXd out(h.rows(), h.cols());
    for (int v = 0; v < n; ++v) {
        out.row(v) = h.row(v) * (inv_sqrt(v) * inv_sqrt(v));
        for (int u : g.neighbors(v)) {
            out.row(v) += h.row(u) * (inv_sqrt(u) * inv_sqrt(v));
        }
    }
    return out;
}

// (1 + eps) h_v + sum of neighbours, eps = 0; symmetric as well.
Eigen::MatrixXd gin_propagate(const Graph& g, const Eigen::MatrixXd& h) {
    Eigen::MatrixXd out = h;
    for (int v = 0; v < g.node_count(); ++v) {
        for (int u : g.neighbors(v)) out.row(v) += h.row(u);
    }
    return out;
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(seed);
    int in = config_.input_dim;
    for (std::size_t l = 0; l < config_.layer_dims.size(); ++l) {
        const int out = config_.layer_dims[l];
        const std::string prefix = "layer" + std::to_string(l);
        if (config_.backbone == Backbone::gcn) {
            params_.add(prefix + ".weight", glorot(in, out, rng));
            params_.add(prefix + ".bias", Eigen::MatrixXd::Zero(1, out));
        } else {
            params_.add(prefix + ".mlp0.weight", glorot(in, out, rng));
            params_.add(prefix + ".mlp0.bias", Eigen::MatrixXd::Zero(1, out));
            params_.add(prefix + ".mlp1.weight", glorot(out, out, rng));
            params_.add(prefix + ".mlp1.bias", Eigen::MatrixXd::Zero(1, out));
        }
        in = out;
    }
    params_.add("classifier.weight", glorot(in, config_.num_classes, rng));
    params_.add("classifier.bias", Eigen::MatrixXd::Zero(1, config_.num_classes));
}

Model::Model(ModelConfig config, Parameters params) : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
    check_shapes();
}

void Model::check_shapes() const {
    const std::size_t per_layer = config_.backbone == Backbone::gcn ? 2 : 4;
    const std::size_t expected = per_layer * config_.layer_dims.size() + 2;
    if (params_.tensors().size() != expected) {
        throw ShapeError("expected " + std::to_string(expected) + " tensors, got " +
                         std::to_string(params_.tensors().size()));
    }
    auto expect = [&](std::size_t idx, Eigen::Index rows, Eigen::Index cols) {
        const auto& t = params_.tensors()[idx];
        if (t.value.rows() != rows || t.value.cols() != cols) {
            throw ShapeError("tensor '" + t.name + "' has shape " + std::to_string(t.value.rows()) + "x" +
                             std::to_string(t.value.cols()) + ", expected " + std::to_string(rows) + "x" +
                             std::to_string(cols));
        }
    };
    int in = config_.input_dim;
    std::size_t idx = 0;
    for (int out : config_.layer_dims) {
        expect(idx++, in, out);
        expect(idx++, 1, out);
        if (config_.backbone == Backbone::gin) {
            expect(idx++, out, out);
            expect(idx++, 1, out);
        }
        in = out;
    }
    expect(idx++, in, config_.num_classes);
    expect(idx++, 1, config_.num_classes);
}

std::size_t Model::classifier_index() const {
    return params_.tensors().size() - 2;
}

ForwardTape Model::forward(const Graph& graph) const {
    if (graph.feature_dim() != config_.input_dim) {
        throw ShapeError("graph has feature dimension " + std::to_string(graph.feature_dim()) +
                         ", model expects " + std::to_string(config_.input_dim));
    }
    ForwardTape tape;
    tape.graph = &graph;
    tape.layers.resize(config_.layer_dims.size());
    const Eigen::MatrixXd* h = &graph.features();
    std::size_t idx = 0;
    for (auto& layer : tape.layers) {
        layer.input = *h;
        if (config_.backbone == Backbone::gcn) {
            layer.aggregated = gcn_propagate(graph, layer.input);
            layer.pre = layer.aggregated * params_.at(idx);
            layer.pre.rowwise() += params_.at(idx + 1).row(0);
            idx += 2;
        } else {
            layer.aggregated = gin_propagate(graph, layer.input);
            layer.hidden_pre = layer.aggregated * params_.at(idx);
            layer.hidden_pre.rowwise() += params_.at(idx + 1).row(0);
            layer.hidden = activate(config_.activation, layer.hidden_pre);
            layer.pre = layer.hidden * params_.at(idx + 2);
            layer.pre.rowwise() += params_.at(idx + 3).row(0);
            idx += 4;
        }
        layer.output = activate(config_.activation, layer.pre);
        h = &layer.output;
    }
    tape.embedding = h->colwise().mean();
    return tape;
}

Eigen::RowVectorXd Model::embed(const Graph& graph) const {
    return forward(graph).embedding;
}

void Model::backward(const ForwardTape& tape, const Eigen::Ref<const Eigen::RowVectorXd>& grad_embedding,
                     Parameters& grads) const {
    const Graph& graph = *tape.graph;
    const double inv_n = 1.0 / graph.node_count();
    Eigen::MatrixXd grad_out = grad_embedding.replicate(graph.node_count(), 1) * inv_n;

    const std::size_t per_layer = config_.backbone == Backbone::gcn ? 2 : 4;
    for (std::size_t l = tape.layers.size(); l-- > 0;) {
        const LayerTape& layer = tape.layers[l];
        const std::size_t idx = l * per_layer;
        const Eigen::MatrixXd grad_pre = activation_backward(config_.activation, layer.pre, grad_out);
        Eigen::MatrixXd grad_agg;
        if (config_.backbone == Backbone::gcn) {
            grads.at(idx).noalias() += layer.aggregated.transpose() * grad_pre;
            grads.at(idx + 1) += grad_pre.colwise().sum();
            grad_agg.noalias() = grad_pre * params_.at(idx).transpose();
        } else {
            grads.at(idx + 2).noalias() += layer.hidden.transpose() * grad_pre;
            grads.at(idx + 3) += grad_pre.colwise().sum();
            Eigen::MatrixXd grad_hidden = grad_pre * params_.at(idx + 2).transpose();
            grad_hidden = activation_backward(config_.activation, layer.hidden_pre, grad_hidden);
            grads.at(idx).noalias() += layer.aggregated.transpose() * grad_hidden;
            grads.at(idx + 1) += grad_hidden.colwise().sum();
            grad_agg.noalias() = grad_hidden * params_.at(idx).transpose();
        }
        if (l == 0) break;  // input features are not trainable
        grad_out = config_.backbone == Backbone::gcn ? gcn_propagate(graph, grad_agg) : gin_propagate(graph, grad_agg);
    }
}

Eigen::MatrixXd Model::classify(const Eigen::MatrixXd& embeddings) const {
    const std::size_t c = classifier_index();
    Eigen::MatrixXd logits = embeddings * params_.at(c);
    logits.rowwise() += params_.at(c + 1).row(0);
    return logits;
}

Eigen::MatrixXd Model::classifier_backward(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& grad_logits,
                                           Parameters& grads) const {
    const std::size_t c = classifier_index();
    grads.at(c).noalias() += embeddings.transpose() * grad_logits;
    grads.at(c + 1) += grad_logits.colwise().sum();
    return grad_logits * params_.at(c).transpose();
}

std::uint64_t Model::activation_signature(const ForwardTape& tape) const {
    if (config_.activation == Activation::identity) return 0;
    std::uint64_t h = 0x84222325cbf29ce4ULL;
    auto mix = [&h](const Eigen::MatrixXd& pre) {
        for (Eigen::Index i = 0; i < pre.size(); ++i) {
            h = splitmix64(h ^ static_cast<std::uint64_t>(pre.data()[i] > 0.0));
        }
    };
    for (const auto& layer : tape.layers) {
        if (config_.backbone == Backbone::gin) mix(layer.hidden_pre);
        mix(layer.pre);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Batches and losses

namespace {

void check_ids(std::span<const Graph> graphs, std::span<const int> ids) {
    if (ids.empty()) {
        throw std::invalid_argument("batch must not be empty");
    }
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= graphs.size()) {
            throw std::out_of_range("graph id " + std::to_string(id) + " out of range");
        }
    }
}

}  // namespace

RepresentationBatch batch_embed(const Model& model, std::span<const Graph> graphs, std::span<const int> ids) {
    check_ids(graphs, ids);
    RepresentationBatch out;
    out.z.resize(static_cast<Eigen::Index>(ids.size()), model.config().embedding_dim());
    out.graph_ids.assign(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out.z.row(static_cast<Eigen::Index>(i)) = model.embed(graphs[static_cast<std::size_t>(ids[i])]);
    }
    return out;
}

BatchTape batch_forward(const Model& model, std::span<const Graph> graphs, std::span<const int> ids) {
    check_ids(graphs, ids);
    BatchTape out;
    out.reps.z.resize(static_cast<Eigen::Index>(ids.size()), model.config().embedding_dim());
    out.reps.graph_ids.assign(ids.begin(), ids.end());
    out.tapes.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out.tapes.push_back(model.forward(graphs[static_cast<std::size_t>(ids[i])]));
        out.reps.z.row(static_cast<Eigen::Index>(i)) = out.tapes.back().embedding;
    }
    return out;
}

void batch_backward(const Model& model, const BatchTape& tape, const Eigen::MatrixXd& grad_z, Parameters& grads) {
    if (grad_z.rows() != static_cast<Eigen::Index>(tape.tapes.size()) ||
        grad_z.cols() != model.config().embedding_dim()) {
        throw ShapeError("embedding gradient shape does not match the batch");
    }
    for (std::size_t i = 0; i < tape.tapes.size(); ++i) {
        model.backward(tape.tapes[i], grad_z.row(static_cast<Eigen::Index>(i)), grads);
    }
}

LossResult weighted_loss(const Eigen::MatrixXd& logits, std::span<const int> labels,
                         const Eigen::Ref<const Eigen::VectorXd>& weights) {
    const Eigen::Index n = logits.rows();
    if (n == 0 || static_cast<Eigen::Index>(labels.size()) != n || weights.size() != n) {
        throw ShapeError("logits, labels and weights must have the same non-zero length");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (weights(i) < 0.0) {
            throw std::invalid_argument("sample weights must be non-negative, got " + std::to_string(weights(i)) +
                                        " at " + std::to_string(i));
        }
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= logits.cols()) {
            throw std::invalid_argument("label " + std::to_string(y) + " out of range");
        }
    }
    LossResult out;
    out.per_sample.resize(n);
    out.grad_logits.resize(n, logits.cols());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = logits.row(i);
        const double m = row.maxCoeff();
        const Eigen::RowVectorXd e = (row.array() - m).exp().matrix();
        const double s = e.sum();
        const int y = labels[static_cast<std::size_t>(i)];
        out.per_sample(i) = std::log(s) + m - row(y);
        Eigen::RowVectorXd p = e / s;
        p(y) -= 1.0;
        out.grad_logits.row(i) = p * (weights(i) * inv_n);
    }
    out.value = weights.dot(out.per_sample) * inv_n;
    out.grad_weights = out.per_sample * inv_n;
    return out;
}

PredictionLoss prediction_loss(const Model& model, std::span<const Graph> graphs, std::span<const int> ids,
                               const Eigen::Ref<const Eigen::VectorXd>& weights) {
    BatchTape tape = batch_forward(model, graphs, ids);
    std::vector<int> labels;
    labels.reserve(ids.size());
    for (int id : ids) labels.push_back(graphs[static_cast<std::size_t>(id)].label());

    const Eigen::MatrixXd logits = model.classify(tape.reps.z);
    LossResult loss = weighted_loss(logits, labels, weights);

    PredictionLoss out;
    out.grads = model.parameters().zeros_like();
    const Eigen::MatrixXd grad_z = model.classifier_backward(tape.reps.z, loss.grad_logits, out.grads);
    batch_backward(model, tape, grad_z, out.grads);
    out.value = loss.value;
    out.per_sample = std::move(loss.per_sample);
    out.grad_weights = std::move(loss.grad_weights);
    std::uint64_t region = 0;
    for (const auto& t : tape.tapes) region = splitmix64(region ^ model.activation_signature(t));
    out.region = region;
    out.reps = std::move(tape.reps);
    return out;
}

Eigen::VectorXd per_sample_loss(const Model& model, std::span<const Graph> graphs, std::span<const int> ids) {
    const RepresentationBatch reps = batch_embed(model, graphs, ids);
    std::vector<int> labels;
    labels.reserve(ids.size());
    for (int id : ids) labels.push_back(graphs[static_cast<std::size_t>(id)].label());
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(ids.size()));
    return weighted_loss(model.classify(reps.z), labels, ones).per_sample;
}

void sgd_step(Parameters& params, const Parameters& grads, double lr) {
    if (!grads.all_finite()) {
        throw NumericalError("non-finite gradient; SGD step aborted");
    }
    params.axpy(-lr, grads);
}

GradcheckReport gradcheck(const std::function<FunctionValue(const Eigen::VectorXd&)>& fn, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& analytic, double step) {
    if (analytic.size() != x.size()) {
        throw ShapeError("analytic gradient length differs from the point");
    }
    const std::uint64_t base_region = fn(x).region;
    Eigen::VectorXd numeric = Eigen::VectorXd::Zero(x.size());
    std::vector<bool> usable(static_cast<std::size_t>(x.size()), true);
    Eigen::VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + step;
        const FunctionValue plus = fn(probe);
        probe(i) = x(i) - step;
        const FunctionValue minus = fn(probe);
        probe(i) = x(i);
        if (plus.region != base_region || minus.region != base_region) {
            usable[static_cast<std::size_t>(i)] = false;
            continue;
        }
        numeric(i) = (plus.value - minus.value) / (2.0 * step);
    }
    GradcheckReport report;
    const double floor = std::max(1e-3 * numeric.cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!usable[static_cast<std::size_t>(i)]) {
            ++report.skipped_nonsmooth;
            continue;
        }
        const double a = analytic(i);
        const double n = numeric(i);
        const double denom = std::max({std::abs(a), std::abs(n), floor});
        report.max_relative_error = std::max(report.max_relative_error, std::abs(a - n) / denom);
        ++report.checked;
    }
    return report;
}

}  // namespace l2r
