#include "l2r/bilevel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "l2r/errors.hpp"
#include "l2r/random.hpp"

namespace l2r {

std::string_view to_string(Order order) {
    switch (order) {
        case Order::first: return "first";
        case Order::second: return "second";
        case Order::joint: return "joint";
    }
    return "unknown";
}

Order order_from_string(std::string_view name) {
    if (name == "first") return Order::first;
    if (name == "second") return Order::second;
    if (name == "joint") return Order::joint;
    throw std::invalid_argument("unknown order '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
    if (!(eta_theta >= 0.0) || !(eta_w >= 0.0)) throw std::invalid_argument("learning rates must be non-negative");
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
    if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
    if (queue_count < 1) throw std::invalid_argument("queue count must be at least 1");
    if (clusters < 1) throw std::invalid_argument("cluster count must be at least 1");
    if (recluster_period < 1) throw std::invalid_argument("recluster period must be at least 1");
    if (rff_functions < 1) throw std::invalid_argument("need at least one RFF function per side");
    if (!alphas.empty() && static_cast<int>(alphas.size()) != queue_count) {
        throw std::invalid_argument("need one momentum coefficient per queue");
    }
    for (double a : queue_alphas()) {
        if (!(a >= 0.0 && a < 1.0)) throw std::invalid_argument("momentum coefficients must lie in [0,1)");
    }
}

std::vector<double> TrainConfig::queue_alphas() const {
    return alphas.empty() ? std::vector<double>(static_cast<std::size_t>(std::max(queue_count, 0)), alpha) : alphas;
}

// ---------------------------------------------------------------------------
// Queues

QueueState::QueueState(int queue_count, std::vector<double> alphas)
    : queue_count_(queue_count), alphas_(std::move(alphas)) {
    if (queue_count_ < 1) throw std::invalid_argument("queue count must be at least 1");
    if (static_cast<int>(alphas_.size()) != queue_count_) {
        throw std::invalid_argument("need one momentum coefficient per queue");
    }
    for (double a : alphas_) {
        if (!(a >= 0.0 && a < 1.0)) throw std::invalid_argument("momentum coefficients must lie in [0,1)");
    }
}

Eigen::MatrixXd QueueState::stacked_z(const Eigen::MatrixXd& current) const {
    Eigen::Index rows = current.rows();
    for (const auto& q : z_blocks_) rows += q.rows();
    Eigen::MatrixXd out(rows, current.cols());
    Eigen::Index offset = 0;
    for (const auto& q : z_blocks_) {
        out.middleRows(offset, q.rows()) = q;
        offset += q.rows();
    }
    out.bottomRows(current.rows()) = current;
    return out;
}

Eigen::VectorXd QueueState::stacked_w(const Eigen::VectorXd& current) const {
    Eigen::Index rows = current.size();
    for (const auto& q : w_blocks_) rows += q.size();
    Eigen::VectorXd out(rows);
    Eigen::Index offset = 0;
    for (const auto& q : w_blocks_) {
        out.segment(offset, q.size()) = q;
        offset += q.size();
    }
    out.tail(current.size()) = current;
    return out;
}

void momentum_update(QueueState& queues, const Eigen::MatrixXd& z_batch, const Eigen::VectorXd& w_batch) {
    if (z_batch.rows() != w_batch.size()) {
        throw ShapeError("representation and weight blocks differ in length");
    }
    if (!queues.z_blocks_.empty()) {
        const auto& ref = queues.z_blocks_.front();
        if (ref.rows() != z_batch.rows() || ref.cols() != z_batch.cols()) {
            throw ShapeError("batch block " + std::to_string(z_batch.rows()) + "x" + std::to_string(z_batch.cols()) +
                             " does not match queue block " + std::to_string(ref.rows()) + "x" +
                             std::to_string(ref.cols()));
        }
    }
    if (!queues.warm()) {
        queues.z_blocks_.push_back(z_batch);
        queues.w_blocks_.push_back(w_batch);
        return;
    }
    for (std::size_t i = 0; i < queues.z_blocks_.size(); ++i) {
        const double a = queues.alphas_[i];
        queues.z_blocks_[i] = a * queues.z_blocks_[i] + (1.0 - a) * z_batch;
        queues.w_blocks_[i] = a * queues.w_blocks_[i] + (1.0 - a) * w_batch;
    }
}

// ---------------------------------------------------------------------------
// Hypergradient

Eigen::VectorXd second_order_correction(const Eigen::VectorXd& theta_prev, const Eigen::VectorXd& grad_theta_val,
                                        double eta_theta, double eps,
                                        const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad_w_train) {
    if (grad_theta_val.size() != theta_prev.size()) {
        throw ShapeError("validation gradient length differs from the parameter vector");
    }
    const Eigen::VectorXd base = grad_w_train(theta_prev);
    const double norm = grad_theta_val.norm();
    if (norm == 0.0) {
        return Eigen::VectorXd::Zero(base.size());
    }
    const double eps_abs = eps / norm;
    const Eigen::VectorXd shifted = grad_w_train(theta_prev + eps_abs * grad_theta_val);
    return (-eta_theta / eps_abs) * (shifted - base);
}

Hypergradient combine_hypergradient(const Eigen::VectorXd& direct, const Eigen::VectorXd& correction) {
    if (direct.size() != correction.size()) throw ShapeError("hypergradient terms differ in length");
    Hypergradient out;
    out.direct_norm = direct.norm();
    out.correction_norm = correction.norm();
    const bool unusable = !correction.allFinite() ||
                          (out.direct_norm > 0.0 && out.correction_norm > 1e3 * out.direct_norm);
    if (unusable) {
        out.fell_back = true;
        out.gradient = direct;
    } else {
        out.gradient = direct + correction;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Steps

double outer_step_theta(Model& model, std::span<const Graph> graphs, std::span<const int> batch,
                        const WeightVector& weights, double eta_theta) {
    const PredictionLoss loss = prediction_loss(model, graphs, batch, weights.gather(batch));
    if (!std::isfinite(loss.value)) {
        throw NumericalError("non-finite training loss " + std::to_string(loss.value));
    }
    sgd_step(model.parameters(), loss.grads, eta_theta);
    return loss.value;
}

namespace {

DecorrelationResult stacked_decorrelation(const QueueState& queues, const Eigen::MatrixXd& batch_z,
                                          const Eigen::VectorXd& batch_w, const WeightStepContext& ctx) {
    return decorrelation_loss(queues.stacked_z(batch_z), queues.stacked_w(batch_w), ctx.clusters, ctx.bank,
                              ctx.config.pair_selection);
}

}  // namespace

WeightStepReport inner_step_w(WeightVector& weights, const Model& model, const Parameters& theta_prev,
                              QueueState& queues, const WeightStepContext& ctx, Eigen::MatrixXd* batch_z) {
    const BatchTape tape = batch_forward(model, ctx.graphs, ctx.batch);
    if (batch_z) *batch_z = tape.reps.z;
    WeightStepReport report;
    const Eigen::VectorXd w_batch = weights.gather(ctx.batch);
    if (!queues.warm()) {
        momentum_update(queues, tape.reps.z, w_batch);
        return report;
    }
    const auto b = static_cast<Eigen::Index>(ctx.batch.size());
    const DecorrelationResult decor = stacked_decorrelation(queues, tape.reps.z, w_batch, ctx);
    const Eigen::VectorXd direct = decor.grad_w.tail(b);
    Eigen::VectorXd correction = Eigen::VectorXd::Zero(b);

    if (ctx.config.order == Order::second) {
        Parameters grads = model.parameters().zeros_like();
        batch_backward(model, tape, decor.grad_z.bottomRows(b), grads);
        Model probe(model.config(), theta_prev);
        auto grad_w_train = [&](const Eigen::VectorXd& theta) -> Eigen::VectorXd {
            probe.parameters().assign(theta);
            // d/dw_n of (1/B) sum w_n l_n
            return per_sample_loss(probe, ctx.graphs, ctx.batch) / static_cast<double>(b);
        };
        correction = second_order_correction(theta_prev.flatten(), grads.flatten(), ctx.config.eta_theta,
                                             ctx.config.eps, grad_w_train);
    } else if (ctx.config.order == Order::joint) {
        throw std::invalid_argument("inner_step_w handles orders first and second; use joint_step_w");
    }

    const Hypergradient h = combine_hypergradient(direct, correction);
    report.decor_loss = decor.value;
    report.direct_norm = h.direct_norm;
    report.correction_norm = h.correction_norm;
    report.fell_back = h.fell_back;
    report.update_norm = weights.step(ctx.batch, h.gradient, ctx.config.eta_w);
    report.applied = true;
    momentum_update(queues, tape.reps.z, weights.gather(ctx.batch));
    return report;
}

WeightStepReport joint_step_w(WeightVector& weights, const Eigen::MatrixXd& batch_z,
                              const Eigen::VectorXd& train_grad_w, QueueState& queues, const WeightStepContext& ctx) {
    WeightStepReport report;
    const Eigen::VectorXd w_batch = weights.gather(ctx.batch);
    if (!queues.warm()) {
        momentum_update(queues, batch_z, w_batch);
        return report;
    }
    const auto b = static_cast<Eigen::Index>(ctx.batch.size());
    if (train_grad_w.size() != b) throw ShapeError("training weight gradient length differs from batch size");
    const DecorrelationResult decor = stacked_decorrelation(queues, batch_z, w_batch, ctx);
    const Eigen::VectorXd direct = decor.grad_w.tail(b) + train_grad_w;
    report.decor_loss = decor.value;
    report.direct_norm = direct.norm();
    report.update_norm = weights.step(ctx.batch, direct, ctx.config.eta_w);
    report.applied = true;
    momentum_update(queues, batch_z, weights.gather(ctx.batch));
    return report;
}

// ---------------------------------------------------------------------------
// Evaluation

WeightSummary summarize_weights(const Eigen::VectorXd& w) {
    WeightSummary s;
    if (w.size() == 0) return s;
    std::vector<double> sorted(w.data(), w.data() + w.size());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    s.min = sorted.front();
    s.max = sorted.back();
    s.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    const double mean = w.mean();
    s.variance = (w.array() - mean).square().mean();
    return s;
}

EvalResult evaluate(const Model& model, const GraphDataset& dataset) {
    EvalResult out;
    out.count = dataset.size();
    if (dataset.empty()) return out;
    long correct = 0;
    for (const auto& g : dataset.graphs) {
        const Eigen::MatrixXd logits = model.classify(model.embed(g));
        Eigen::Index predicted = 0;
        logits.row(0).maxCoeff(&predicted);
        const int y = g.label();
        ++out.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(predicted)];
        if (predicted == y) ++correct;
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
    for (std::size_t c = 0; c < 2; ++c) {
        const long total = out.confusion[c][0] + out.confusion[c][1];
        out.class_accuracy[c] = total > 0 ? static_cast<double>(out.confusion[c][c]) / static_cast<double>(total) : 0.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

std::vector<int> iota_ids(std::size_t n) {
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

double mean_prediction_loss(const Model& model, const GraphDataset& set) {
    if (set.empty()) return 0.0;
    const auto ids = iota_ids(set.size());
    return per_sample_loss(model, set.graphs, ids).mean();
}

double decorrelation_on(const Model& model, const GraphDataset& set, const ClusterAssignment& clusters,
                        const RFFBank& bank, PairSelection selection) {
    if (set.size() < 2) return 0.0;
    const auto ids = iota_ids(set.size());
    const RepresentationBatch reps = batch_embed(model, set.graphs, ids);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(reps.z.rows());
    return decorrelation_loss(reps.z, ones, clusters, bank, selection).value;
}

}  // namespace

TrainResult train(const TrainConfig& config, const ModelConfig& model_config, const GraphDataset& train_set,
                  const GraphDataset& val_set, const GraphDataset& test_set,
                  const std::function<void(const StepEvent&)>& on_step) {
    config.validate();
    model_config.validate();
    const int d = model_config.embedding_dim();
    if (config.clusters > d) {
        throw std::invalid_argument("cluster count " + std::to_string(config.clusters) + " exceeds embedding width " +
                                    std::to_string(d));
    }
    if (static_cast<int>(train_set.size()) < config.batch_size) {
        throw std::invalid_argument("training set (" + std::to_string(train_set.size()) +
                                    " graphs) is smaller than one batch");
    }

    TrainResult result{Model(model_config, derive_seed(config.seed, Stream::model_init)),
                       WeightVector(train_set.size()),
                       RFFBank::sample(config.rff_functions, derive_seed(config.seed, Stream::rff_bank)),
                       ClusterAssignment::singletons(d),
                       {}};
    Model& model = result.model;
    WeightVector& weights = result.weights;
    RunMetrics& metrics = result.metrics;

    QueueState queues(config.queue_count, config.queue_alphas());
    CorrelationProfile profile;
    bool have_clusters = false;
    const std::uint64_t cluster_seed = derive_seed(config.seed, Stream::clustering);
    auto recluster = [&](int tag) {
        result.clusters = cluster_variables(profile, config.clusters, derive_seed(cluster_seed, {static_cast<std::uint64_t>(tag)}));
        have_clusters = true;
    };

    Rng order_rng(derive_seed(config.seed, Stream::batch_order));
    std::vector<int> order = iota_ids(train_set.size());
    const std::size_t b = static_cast<std::size_t>(config.batch_size);
    const std::size_t batches = train_set.size() / b;
    const std::span<const Graph> graphs(train_set.graphs);
    std::size_t fallbacks = 0;
    int step = 0;

    for (int epoch = 0; epoch < config.epochs && !metrics.aborted; ++epoch) {
        if (config.decorrelate && have_clusters && epoch > 0 && epoch % config.recluster_period == 0 &&
            profile.subset_count() >= 2) {
            recluster(epoch);
            profile.clear_subsets();
        }
        std::shuffle(order.begin(), order.end(), order_rng);
        double loss_sum = 0.0;
        double elapsed_ms = 0.0;
        std::size_t done = 0;
        for (std::size_t bi = 0; bi < batches; ++bi) {
            const auto start = std::chrono::steady_clock::now();
            const std::span<const int> batch(order.data() + bi * b, b);
            const WeightStepContext ctx{graphs, batch, result.clusters, result.bank, config};
            PredictionLoss loss;
            try {
                loss = prediction_loss(model, graphs, batch, weights.gather(batch));
                if (!std::isfinite(loss.value)) throw NumericalError("non-finite training loss");
                if (loss.value > config.divergence_threshold) {
                    metrics.aborted = true;
                    metrics.abort_reason = "diverged: loss " + std::to_string(loss.value) + " at step " + std::to_string(step);
                    break;
                }
                // Weight steps need clusters; until the first clustering the queues and profile still fill.
                const bool weight_step = config.decorrelate && (have_clusters || !queues.warm());
                WeightStepReport report;
                Eigen::MatrixXd step_z;
                if (config.decorrelate && config.order == Order::joint) {
                    step_z = loss.reps.z;
                    if (weight_step) report = joint_step_w(weights, step_z, loss.grad_weights, queues, ctx);
                }
                const Parameters theta_prev = config.decorrelate && config.order == Order::second ? model.parameters()
                                                                                                   : Parameters{};
                sgd_step(model.parameters(), loss.grads, config.eta_theta);
                if (config.decorrelate && config.order != Order::joint && weight_step) {
                    report = inner_step_w(weights, model, theta_prev, queues, ctx, &step_z);
                }
                if (config.decorrelate && !weight_step) {
                    if (step_z.size() == 0) step_z = batch_embed(model, graphs, batch).z;
                    momentum_update(queues, step_z, weights.gather(batch));
                }
                if (config.decorrelate) {
                    update_profile(profile, step_z, queues.z_blocks());
                    if (!have_clusters && queues.warm() && profile.subset_count() >= 2) recluster(0);
                }
                if (report.fell_back) ++fallbacks;
                metrics.steps.push_back({step, epoch, loss.value, report});
                if (on_step) on_step(StepEvent{step, epoch, model, weights, report});
            } catch (const NumericalError& e) {
                metrics.aborted = true;
                metrics.abort_reason = std::string("numerical error at step ") + std::to_string(step) + ": " + e.what();
                break;
            }
            loss_sum += loss.value;
            ++done;
            ++step;
            elapsed_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        }
        if (done == 0) break;
        weights.renormalize();

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(done);
        rec.val_pred_loss = mean_prediction_loss(model, val_set);
        rec.val_decor_loss = decorrelation_on(model, val_set, have_clusters ? result.clusters : ClusterAssignment::singletons(d),
                                              result.bank, config.pair_selection);
        rec.test_acc = evaluate(model, test_set).accuracy;
        rec.weights = summarize_weights(weights.weights());
        rec.step_ms = elapsed_ms / static_cast<double>(done);
        metrics.epochs.push_back(rec);
    }
    if (fallbacks > 0) {
        std::cerr << "warning: " << fallbacks
                  << " weight steps fell back to the first-order hypergradient (finite-difference correction too large)\n";
    }
    return result;
}

}  // namespace l2r
