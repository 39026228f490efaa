#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "helpers.hpp"
#include "l2r/bilevel.hpp"
#include "l2r/errors.hpp"

using namespace l2r;

namespace {

SyntheticSplits small_data(std::uint64_t seed, int n_train = 64) {
    SyntheticSpec spec;
    spec.n_train = n_train;
    spec.n_val = 24;
    spec.n_test = 24;
    spec.seed = seed;
    return generate_synthetic_dataset(spec);
}

ModelConfig small_model() {
    ModelConfig m;
    m.layer_dims = {8, 6};
    return m;
}

TrainConfig small_train() {
    TrainConfig t;
    t.epochs = 3;
    t.batch_size = 8;
    t.queue_count = 2;
    t.clusters = 3;
    t.eta_theta = 0.2;
    t.eta_w = 5.0;
    t.seed = 4;
    return t;
}

std::vector<int> iota(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 0);
    return v;
}

}  // namespace

TEST_SUITE("bilevel") {

TEST_CASE("train config validation") {
    TrainConfig t;
    CHECK_NOTHROW(t.validate());
    CHECK(t.queue_alphas() == std::vector<double>(4, 0.9));
    t.batch_size = 1;
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    t = {};
    t.alpha = 1.0;
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    t = {};
    t.eps = 0.0;
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    t = {};
    t.eta_w = -1.0;
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    t = {};
    t.alphas = {0.1, 0.2};
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    t.queue_count = 2;
    CHECK_NOTHROW(t.validate());
    CHECK(order_from_string("second") == Order::second);
    CHECK_THROWS_AS(order_from_string("third"), std::invalid_argument);
}

TEST_CASE("momentum queues") {
    const Eigen::MatrixXd a = test::gaussian_matrix(1, 4, 3);
    const Eigen::MatrixXd b = test::gaussian_matrix(2, 4, 3);
    const Eigen::VectorXd wa = Eigen::VectorXd::Constant(4, 2.0);
    const Eigen::VectorXd wb = Eigen::VectorXd::Constant(4, 1.0);

    QueueState replace(1, {0.0});
    momentum_update(replace, a, wa);
    CHECK(replace.warm());
    momentum_update(replace, b, wb);
    CHECK(replace.z_blocks()[0] == b);
    CHECK(replace.w_blocks()[0] == wb);

    QueueState half(2, {0.5, 0.5});
    momentum_update(half, a, wa);
    CHECK_FALSE(half.warm());
    momentum_update(half, a, wa);
    CHECK(half.warm());
    momentum_update(half, b, wb);
    CHECK((half.z_blocks()[1] - 0.5 * (a + b)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((half.w_blocks()[0].array() - 1.5).abs().maxCoeff() < 1e-15);
    CHECK(half.stacked_z(b).rows() == 12);
    CHECK(half.stacked_z(b).bottomRows(4) == b);
    CHECK(half.stacked_w(wb).size() == 12);

    CHECK_THROWS_AS(momentum_update(half, test::gaussian_matrix(3, 5, 3), Eigen::VectorXd::Ones(5)), ShapeError);
    CHECK_THROWS_AS(momentum_update(half, a, Eigen::VectorXd::Ones(3)), ShapeError);
    CHECK_THROWS_AS(QueueState(2, {0.5}), std::invalid_argument);
    CHECK_THROWS_AS(QueueState(1, {1.0}), std::invalid_argument);
}

TEST_CASE("queues converge geometrically to a repeated batch") {
    const Eigen::MatrixXd start = test::gaussian_matrix(4, 6, 2);
    const Eigen::MatrixXd target = test::gaussian_matrix(5, 6, 2);
    const std::vector<double> alphas{0.3, 0.9};
    QueueState q(2, alphas);
    momentum_update(q, start, Eigen::VectorXd::Zero(6));
    momentum_update(q, start, Eigen::VectorXd::Zero(6));
    for (int t = 1; t <= 25; ++t) {
        momentum_update(q, target, Eigen::VectorXd::Ones(6));
        for (std::size_t i = 0; i < 2; ++i) {
            const double factor = std::pow(alphas[i], t);
            const Eigen::MatrixXd expect = target + factor * (start - target);
            CHECK((q.z_blocks()[i] - expect).cwiseAbs().maxCoeff() < 1e-12);
            CHECK((q.w_blocks()[i].array() - (1.0 - factor)).abs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("second-order correction on the quadratic toy problem") {
    // inner: L_train = |theta - A W|^2, outer: |theta - b|^2.
    const Eigen::MatrixXd A = test::gaussian_matrix(8, 5, 3);
    const Eigen::VectorXd W = test::gaussian_matrix(9, 3, 1).col(0);
    const Eigen::VectorXd b = test::gaussian_matrix(10, 5, 1).col(0);
    const Eigen::VectorXd theta_prev = test::gaussian_matrix(11, 5, 1).col(0);
    const double eta = 0.5;  // one step lands on theta*(W) = A W
    const Eigen::VectorXd theta = theta_prev - eta * 2.0 * (theta_prev - A * W);
    CHECK((theta - A * W).norm() < 1e-12);
    auto grad_w_train = [&](const Eigen::VectorXd& t) -> Eigen::VectorXd { return -2.0 * A.transpose() * (t - A * W); };
    const Eigen::VectorXd grad_val = 2.0 * (theta - b);
    for (double eps : {1e-2, 1e-4, 1.0}) {
        const Eigen::VectorXd corr = second_order_correction(theta_prev, grad_val, eta, eps, grad_w_train);
        const Hypergradient h = combine_hypergradient(Eigen::VectorXd::Zero(3), corr);
        const Eigen::VectorXd closed = 2.0 * A.transpose() * (A * W - b);
        CHECK(!h.fell_back);
        CHECK((h.gradient - closed).norm() / closed.norm() < 1e-3);
    }
    CHECK(second_order_correction(theta_prev, Eigen::VectorXd::Zero(5), eta, 1e-2, grad_w_train).isZero());
    CHECK_THROWS_AS(second_order_correction(theta_prev, Eigen::VectorXd::Zero(4), eta, 1e-2, grad_w_train), ShapeError);
}

TEST_CASE("hypergradient fallback") {
    Eigen::VectorXd direct(2), corr(2);
    direct << 1.0, 0.0;
    corr << 0.5, 0.5;
    Hypergradient h = combine_hypergradient(direct, corr);
    CHECK_FALSE(h.fell_back);
    CHECK(h.gradient == direct + corr);
    corr << 2e3, 0.0;
    h = combine_hypergradient(direct, corr);
    CHECK(h.fell_back);
    CHECK(h.gradient == direct);
    corr << std::numeric_limits<double>::quiet_NaN(), 0.0;
    CHECK(combine_hypergradient(direct, corr).fell_back);
    corr << 5.0, 1.0;
    CHECK_FALSE(combine_hypergradient(Eigen::VectorXd::Zero(2), corr).fell_back);
    CHECK_THROWS_AS(combine_hypergradient(direct, Eigen::VectorXd::Zero(3)), ShapeError);
}

TEST_CASE("outer step") {
    const SyntheticSplits d = small_data(1);
    Model model(small_model(), 3);
    const Parameters start = model.parameters();
    const std::vector<int> batch{0, 1, 2, 3, 4, 5, 6, 7};
    const WeightVector uniform(d.train.size());
    outer_step_theta(model, d.train.graphs, batch, uniform, 0.0);
    CHECK(model.parameters() == start);

    outer_step_theta(model, d.train.graphs, batch, uniform, 0.3);
    Parameters manual = start;
    const PredictionLoss plain = prediction_loss(Model(small_model(), start), d.train.graphs, batch,
                                                 Eigen::VectorXd::Ones(8));
    sgd_step(manual, plain.grads, 0.3);
    CHECK(model.parameters() == manual);
}

TEST_CASE("training loss falls over 50 steps on a 64-graph toy set") {
    const SyntheticSplits d = small_data(2, 64);
    Model model(small_model(), 5);
    const WeightVector w(64);
    Rng rng(3);
    std::vector<int> order = iota(64);
    std::vector<double> losses;
    for (int step = 0; step < 50; ++step) {
        if (step % 8 == 0) std::shuffle(order.begin(), order.end(), rng);
        const std::span<const int> batch(order.data() + (step % 8) * 8, 8);
        losses.push_back(outer_step_theta(model, d.train.graphs, batch, w, 0.5));
    }
    const double head = std::accumulate(losses.begin(), losses.begin() + 10, 0.0) / 10;
    const double tail = std::accumulate(losses.end() - 10, losses.end(), 0.0) / 10;
    CHECK(tail < head);
}

TEST_CASE("inner step: warm-up, eta_w = 0, normalisation") {
    const SyntheticSplits d = small_data(3);
    const Model model(small_model(), 2);
    const TrainConfig cfg = small_train();
    const RFFBank bank = RFFBank::sample(5, 1);
    const ClusterAssignment clusters{2, {0, 0, 0, 1, 1, 1}, {0, 3}};
    WeightVector w(d.train.size());
    QueueState q(cfg.queue_count, cfg.queue_alphas());
    const std::vector<int> ids = iota(static_cast<int>(d.train.size()));
    auto batch_at = [&](int k) { return std::span<const int>(ids.data() + k * 8, 8); };

    for (int k = 0; k < 2; ++k) {
        const WeightStepReport r =
            inner_step_w(w, model, model.parameters(), q, {d.train.graphs, batch_at(k), clusters, bank, cfg});
        CHECK_FALSE(r.applied);
    }
    CHECK(q.warm());
    CHECK(w == WeightVector(d.train.size()));

    TrainConfig frozen = cfg;
    frozen.eta_w = 0.0;
    const WeightStepReport r0 =
        inner_step_w(w, model, model.parameters(), q, {d.train.graphs, batch_at(2), clusters, bank, frozen});
    CHECK(r0.applied);
    CHECK(r0.update_norm == 0.0);
    CHECK(w == WeightVector(d.train.size()));

    TrainConfig strong = cfg;
    strong.eta_w = 1e4;
    for (int k = 3; k < 8; ++k) {
        Eigen::MatrixXd z;
        const WeightStepReport r =
            inner_step_w(w, model, model.parameters(), q, {d.train.graphs, batch_at(k), clusters, bank, strong}, &z);
        CHECK(r.applied);
        CHECK(z.rows() == 8);
        CHECK(w.weights().mean() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(w.weights().minCoeff() > 0.0);
    }
    CHECK_FALSE(w == WeightVector(d.train.size()));

    TrainConfig joint = cfg;
    joint.order = Order::joint;
    CHECK_THROWS_AS(inner_step_w(w, model, model.parameters(), q, {d.train.graphs, batch_at(0), clusters, bank, joint}),
                    std::invalid_argument);
}

TEST_CASE("second order with eta_theta = 0 reproduces first order") {
    const SyntheticSplits d = small_data(4);
    TrainConfig first = small_train();
    first.eta_theta = 0.0;
    first.eta_w = 50.0;
    TrainConfig second = first;
    second.order = Order::second;
    const TrainResult a = train(first, small_model(), d.train, d.val, d.test);
    const TrainResult b = train(second, small_model(), d.train, d.val, d.test);
    REQUIRE(a.metrics.steps.size() == b.metrics.steps.size());
    for (std::size_t i = 0; i < a.metrics.steps.size(); ++i)
        CHECK(a.metrics.steps[i].weight_step.update_norm == b.metrics.steps[i].weight_step.update_norm);
    CHECK(a.weights == b.weights);
}

TEST_CASE("weight summary") {
    Eigen::VectorXd w(4);
    w << 0.5, 1.5, 0.8, 1.2;
    const WeightSummary s = summarize_weights(w);
    CHECK(s.min == 0.5);
    CHECK(s.max == 1.5);
    CHECK(s.median == doctest::Approx(1.0));
    CHECK(s.variance == doctest::Approx((0.25 + 0.25 + 0.04 + 0.04) / 4));
}

TEST_CASE("evaluate") {
    // One feature, +1 for positives and -1 for negatives; identity GCN keeps the sign.
    GraphDataset data;
    Rng rng(6);
    for (int i = 0; i < 10; ++i) {
        const int label = i % 2;
        Graph g = test::random_graph(rng, 5, 1, label);
        data.graphs.push_back(Graph(5, g.edges(), Eigen::MatrixXd::Constant(5, 1, label == 1 ? 1.0 : -1.0), label));
    }
    ModelConfig cfg;
    cfg.input_dim = 1;
    cfg.layer_dims = {1};
    cfg.activation = Activation::identity;
    Parameters p;
    p.add("layer0.weight", Eigen::MatrixXd::Ones(1, 1));
    p.add("layer0.bias", Eigen::MatrixXd::Zero(1, 1));
    Eigen::MatrixXd head(1, 2);
    head << -1.0, 1.0;
    p.add("classifier.weight", head);
    p.add("classifier.bias", Eigen::MatrixXd::Zero(1, 2));
    const EvalResult perfect = evaluate(Model(cfg, p), data);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.confusion[0][0] + perfect.confusion[1][1] == 10);

    p.at(2).setZero();
    Eigen::MatrixXd bias(1, 2);
    bias << 1.0, 0.0;
    p.at(3) = bias;
    const EvalResult constant = evaluate(Model(cfg, p), data);
    CHECK(constant.accuracy == 0.5);
    CHECK(constant.class_accuracy[0] == 1.0);
    CHECK(constant.class_accuracy[1] == 0.0);
    long total = 0;
    for (const auto& row : constant.confusion) total += row[0] + row[1];
    CHECK(total == 10);
}

TEST_CASE("train: determinism and reductions") {
    const SyntheticSplits d = small_data(5);
    const TrainConfig cfg = small_train();
    const TrainResult a = train(cfg, small_model(), d.train, d.val, d.test);
    const TrainResult b = train(cfg, small_model(), d.train, d.val, d.test);
    CHECK(a.model.parameters() == b.model.parameters());
    CHECK(a.weights == b.weights);
    CHECK(a.clusters == b.clusters);
    REQUIRE(a.metrics.epochs.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(a.metrics.epochs[e].train_loss == b.metrics.epochs[e].train_loss);
        CHECK(a.metrics.epochs[e].val_decor_loss == b.metrics.epochs[e].val_decor_loss);
    }
    CHECK(a.metrics.steps.size() == 3 * (64 / 8));

    TrainConfig off = cfg;
    off.decorrelate = false;
    const TrainResult plain = train(off, small_model(), d.train, d.val, d.test);
    for (const auto& e : plain.metrics.epochs) CHECK(e.weights.variance == 0.0);

    TrainConfig frozen = cfg;
    frozen.eta_w = 0.0;
    const TrainResult still = train(frozen, small_model(), d.train, d.val, d.test);
    CHECK(still.model.parameters() == plain.model.parameters());

    TrainConfig one = cfg;
    one.clusters = 1;
    std::vector<double> decor;
    int applied = 0;
    train(one, small_model(), d.train, d.val, d.test, [&](const StepEvent& ev) {
        decor.push_back(ev.weight_step.decor_loss);
        applied += ev.weight_step.applied ? 1 : 0;
    });
    CHECK(decor.size() == 24);
    CHECK(applied > 10);
    for (double v : decor) CHECK(v == 0.0);
}

TEST_CASE("train: errors and divergence") {
    const SyntheticSplits d = small_data(6);
    TrainConfig cfg = small_train();
    cfg.clusters = 7;
    CHECK_THROWS_AS(train(cfg, small_model(), d.train, d.val, d.test), std::invalid_argument);
    cfg = small_train();
    cfg.batch_size = 100;
    CHECK_THROWS_AS(train(cfg, small_model(), d.train, d.val, d.test), std::invalid_argument);
    cfg = small_train();
    cfg.divergence_threshold = 1e-3;
    const TrainResult r = train(cfg, small_model(), d.train, d.val, d.test);
    CHECK(r.metrics.aborted);
    CHECK(r.metrics.abort_reason.find("diverged") != std::string::npos);
    CHECK(r.metrics.epochs.empty());
}

TEST_CASE("metrics csv") {
    const SyntheticSplits d = small_data(7);
    const TrainResult r = train(small_train(), small_model(), d.train, d.val, d.test);
    const auto path = std::filesystem::temp_directory_path() / "l2r_test_metrics.csv";
    r.metrics.write_csv(path.string(), "00ff", 9);
    std::ifstream in(path);
    std::string first, header;
    std::getline(in, first);
    std::getline(in, header);
    CHECK(first == "# config_hash=00ff,seed=9");
    CHECK(header == kMetricsHeader);
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == 3);
    std::filesystem::remove(path);
}

}  // TEST_SUITE
