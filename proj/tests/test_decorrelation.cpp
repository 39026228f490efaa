#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "l2r/decorrelation.hpp"
#include "l2r/errors.hpp"
#include "l2r/gnn.hpp"

using namespace l2r;

namespace {

/// Straight transcription of the double sum, one entry at a time.
double naive_pair(const Eigen::MatrixXd& z, const Eigen::VectorXd& w, int i, int j, const RFFBank& bank) {
    const auto n = z.rows();
    double total = 0.0;
    for (int a = 0; a < bank.size(); ++a) {
        for (int b = 0; b < bank.size(); ++b) {
            double mu = 0.0, mv = 0.0;
            for (Eigen::Index r = 0; r < n; ++r) {
                mu += w(r) * std::sqrt(2.0) * std::cos(bank.omega_u()(a) * z(r, i) + bank.phase_u()(a));
                mv += w(r) * std::sqrt(2.0) * std::cos(bank.omega_v()(b) * z(r, j) + bank.phase_v()(b));
            }
            mu /= static_cast<double>(n);
            mv /= static_cast<double>(n);
            double c = 0.0;
            for (Eigen::Index r = 0; r < n; ++r) {
                const double u = w(r) * std::sqrt(2.0) * std::cos(bank.omega_u()(a) * z(r, i) + bank.phase_u()(a));
                const double v = w(r) * std::sqrt(2.0) * std::cos(bank.omega_v()(b) * z(r, j) + bank.phase_v()(b));
                c += (u - mu) * (v - mv);
            }
            c /= static_cast<double>(n - 1);
            total += c * c;
        }
    }
    return total;
}

Eigen::VectorXd positive_weights(std::uint64_t seed, int n) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.3, 2.0);
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w(i) = u(rng);
    return w;
}

ClusterAssignment random_clusters(std::uint64_t seed, int d, int k) {
    Rng rng(seed);
    ClusterAssignment c;
    c.k = k;
    c.assign.resize(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) c.assign[static_cast<std::size_t>(i)] = i < k ? i : std::uniform_int_distribution<int>(0, k - 1)(rng);
    c.medoids.resize(static_cast<std::size_t>(k));
    std::iota(c.medoids.begin(), c.medoids.end(), 0);
    return c;
}

}  // namespace

TEST_SUITE("decorrelation") {

TEST_CASE("cross-covariance matches the independent fixture") {
    const auto fx = test::load_fixture("cross_cov.json");
    const Eigen::MatrixXd z = test::to_matrix(fx["z"]);
    const Eigen::VectorXd w = test::to_vector(fx["w"]);
    const RFFBank bank(test::to_vector(fx["omega_u"]), test::to_vector(fx["phase_u"]), test::to_vector(fx["omega_v"]),
                       test::to_vector(fx["phase_v"]));
    for (auto [key, expect] : fx["cross_cov"].items()) {
        const int i = key[0] - '0';
        const int j = key[2] - '0';
        const Eigen::MatrixXd got = partial_cross_cov(z, w, i, j, bank);
        const Eigen::MatrixXd want = test::to_matrix(expect);
        CHECK((got - want).cwiseAbs().maxCoeff() < 1e-13);
    }
    ClusterAssignment c{2, fx["assign"].get<std::vector<int>>(), {0, 1}};
    CHECK(decorrelation_loss(z, w, c, bank).value == doctest::Approx(fx["loss_cross"].get<double>()).epsilon(1e-12));
    CHECK(decorrelation_loss(z, w, c, bank, PairSelection::within_cluster).value ==
          doctest::Approx(fx["loss_within"].get<double>()).epsilon(1e-12));
    CHECK(decorrelation_loss(z, w, ClusterAssignment::singletons(3), bank).value ==
          doctest::Approx(fx["loss_all"].get<double>()).epsilon(1e-12));
}

TEST_CASE("cross-covariance edge cases") {
    const RFFBank bank = RFFBank::sample(5, 1);
    Eigen::MatrixXd z = test::gaussian_matrix(2, 30, 3);
    z.col(1).setConstant(0.7);
    CHECK(partial_cross_cov(z, Eigen::VectorXd::Ones(30), 0, 1, bank).cwiseAbs().maxCoeff() < 1e-14);
    CHECK_THROWS_AS(partial_cross_cov(z.topRows(1), Eigen::VectorXd::Ones(1), 0, 1, bank), std::invalid_argument);
    CHECK_THROWS_AS(partial_cross_cov(z, Eigen::VectorXd::Ones(30), 1, 1, bank), std::invalid_argument);
    CHECK_THROWS_AS(partial_cross_cov(z, Eigen::VectorXd::Ones(30), 0, 3, bank), std::out_of_range);
    CHECK_THROWS_AS(partial_cross_cov(z, Eigen::VectorXd::Ones(29), 0, 1, bank), ShapeError);
}

TEST_CASE("full objective equals a naive double loop") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const Eigen::MatrixXd z = test::gaussian_matrix(seed, 15, 5);
        const RFFBank bank = RFFBank::sample(5, seed + 10);
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(15);
        double naive = 0.0;
        for (int i = 0; i < 5; ++i)
            for (int j = i + 1; j < 5; ++j) naive += naive_pair(z, ones, i, j, bank);
        const double got = decorrelation_loss(z, ones, ClusterAssignment::singletons(5), bank).value;
        CHECK(std::abs(got - naive) / naive < 1e-10);
    }
}

TEST_CASE("cluster masks select the right pairs") {
    const Eigen::MatrixXd z = test::gaussian_matrix(7, 25, 4);
    const Eigen::VectorXd w = positive_weights(3, 25);
    const RFFBank bank = RFFBank::sample(5, 2);
    CHECK(decorrelation_loss(z, w, ClusterAssignment::single(4), bank).value == 0.0);
    CHECK(decorrelation_loss(z, w, ClusterAssignment::single(4), bank).penalized_pairs == 0);
    const ClusterAssignment two{2, {0, 0, 1, 1}, {0, 2}};
    const DecorrelationResult r = decorrelation_loss(z, w, two, bank);
    CHECK(r.penalized_pairs == 4);
    const double expect = naive_pair(z, w, 0, 2, bank) + naive_pair(z, w, 0, 3, bank) + naive_pair(z, w, 1, 2, bank) +
                          naive_pair(z, w, 1, 3, bank);
    CHECK(r.value == doctest::Approx(expect).epsilon(1e-12));
    const DecorrelationResult within = decorrelation_loss(z, w, two, bank, PairSelection::within_cluster);
    CHECK(within.value == doctest::Approx(naive_pair(z, w, 0, 1, bank) + naive_pair(z, w, 2, 3, bank)).epsilon(1e-12));
    CHECK_THROWS_AS(decorrelation_loss(z, w, ClusterAssignment::singletons(5), bank), ShapeError);
}

TEST_CASE("loss is invariant to cluster relabeling and partition-respecting permutations") {
    const Eigen::MatrixXd z = test::gaussian_matrix(9, 20, 5);
    const Eigen::VectorXd w = positive_weights(4, 20);
    const RFFBank bank = RFFBank::sample(5, 6);
    const ClusterAssignment a{2, {0, 0, 1, 1, 1}, {0, 2}};
    const ClusterAssignment relabeled{2, {1, 1, 0, 0, 0}, {2, 0}};
    const double base = decorrelation_loss(z, w, a, bank).value;
    CHECK(decorrelation_loss(z, w, relabeled, bank).value == doctest::Approx(base).epsilon(1e-12));
    // Cross pairs only ever pair a variable from {0,1} with one from {2,3,4}; the
    // statistic is asymmetric in (u, v), so permute within clusters.
    Eigen::MatrixXd zp(20, 5);
    zp.col(0) = z.col(1);
    zp.col(1) = z.col(0);
    zp.col(2) = z.col(4);
    zp.col(3) = z.col(2);
    zp.col(4) = z.col(3);
    CHECK(decorrelation_loss(zp, w, a, bank).value == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("rho gradients match central differences (N=20, d=8, K=3)") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CAPTURE(seed);
        const Eigen::MatrixXd z = test::gaussian_matrix(seed, 20, 8);
        const RFFBank bank = RFFBank::sample(5, seed + 50);
        const ClusterAssignment clusters = random_clusters(seed, 8, 3);
        const Eigen::VectorXd rho = test::gaussian_matrix(seed + 90, 20, 1).col(0);
        const WeightVector wv = WeightVector::from_rho(rho);
        const DecorrelationResult r = decorrelation_loss(z, wv.weights(), clusters, bank);
        auto fn = [&](const Eigen::VectorXd& x) {
            return FunctionValue{decorrelation_loss(z, WeightVector::from_rho(x).weights(), clusters, bank).value, 0};
        };
        CHECK(gradcheck(fn, rho, wv.grad_rho(r.grad_w)).max_relative_error <= 1e-4);
    }
}

TEST_CASE("representation gradients match central differences") {
    const Eigen::MatrixXd z = test::gaussian_matrix(31, 12, 5);
    const Eigen::VectorXd w = positive_weights(8, 12);
    const RFFBank bank = RFFBank::sample(5, 4);
    const ClusterAssignment clusters = random_clusters(2, 5, 2);
    const DecorrelationResult r = decorrelation_loss(z, w, clusters, bank);
    auto fn = [&](const Eigen::VectorXd& flat) {
        const Eigen::MatrixXd zz = Eigen::Map<const Eigen::MatrixXd>(flat.data(), 12, 5);
        return FunctionValue{decorrelation_loss(zz, w, clusters, bank).value, 0};
    };
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(z.data(), z.size());
    const Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(r.grad_z.data(), r.grad_z.size());
    CHECK(gradcheck(fn, x, g).max_relative_error <= 1e-4);
}

TEST_CASE("weight vector normalisation") {
    const Eigen::VectorXd rho = 3.0 * test::gaussian_matrix(5, 50, 1).col(0);
    WeightVector wv = WeightVector::from_rho(rho);
    CHECK(wv.weights().mean() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(wv.weights().minCoeff() > 0.0);
    const WeightVector uniform(10);
    CHECK((uniform.weights().array() - 1.0).abs().maxCoeff() < 1e-15);
    CHECK(softplus(inverse_softplus(0.37)) == doctest::Approx(0.37).epsilon(1e-14));
    CHECK(softplus(-800.0) >= 0.0);
    CHECK(softplus(800.0) == doctest::Approx(800.0));

    const std::vector<int> batch{3, 7, 11, 20};
    const Eigen::VectorXd before = wv.rho();
    Eigen::VectorXd g(4);
    g << 0.5, -1.0, 2.0, 0.1;
    const double norm = wv.step(batch, g, 0.7);
    CHECK(norm > 0.0);
    int changed = 0;
    for (int i = 0; i < 50; ++i) changed += wv.rho()(i) != before(i);
    CHECK(changed == 4);
    CHECK(wv.weights().mean() == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(wv.weights().minCoeff() > 0.0);
    CHECK(wv.step(batch, g, 0.0) == 0.0);
    CHECK_THROWS_AS(wv.step(batch, Eigen::VectorXd::Ones(3), 1.0), ShapeError);
    g(0) = std::nan("");
    CHECK_THROWS_AS(wv.step(batch, g, 1.0), NumericalError);
}

TEST_CASE("batch step follows the batch part of the exact rho gradient") {
    WeightVector wv = WeightVector::from_rho(test::gaussian_matrix(12, 30, 1).col(0));
    const std::vector<int> batch{2, 5, 9};
    const Eigen::VectorXd g = test::gaussian_matrix(13, 3, 1).col(0);
    Eigen::VectorXd full = Eigen::VectorXd::Zero(30);
    for (int i = 0; i < 3; ++i) full(batch[static_cast<std::size_t>(i)]) = g(i);
    const Eigen::VectorXd exact = wv.grad_rho(full);
    const Eigen::VectorXd before = wv.rho();
    wv.step(batch, g, 1e-3);
    for (int i = 0; i < 3; ++i) {
        const int k = batch[static_cast<std::size_t>(i)];
        CHECK((before(k) - wv.rho()(k)) / 1e-3 == doctest::Approx(exact(k)).epsilon(1e-12));
    }
}

TEST_CASE("independence statistic separates dependent from independent columns") {
    Eigen::MatrixXd z = test::gaussian_matrix(77, 4000, 3);
    z.col(2) = z.col(0);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(4000);
    double indep = 0.0, ident = 0.0;
    for (std::uint64_t b = 0; b < 5; ++b) {
        const RFFBank bank = RFFBank::sample(5, 1000 + b);
        indep += partial_cross_cov(z, ones, 0, 1, bank).squaredNorm();
        ident += partial_cross_cov(z, ones, 0, 2, bank).squaredNorm();
    }
    CHECK(indep / 5 < 0.02);
    CHECK(ident > 10 * indep);
}

TEST_CASE("rff bank") {
    const RFFBank a = RFFBank::sample(5, 3);
    CHECK(a == RFFBank::sample(5, 3));
    CHECK_FALSE(a == RFFBank::sample(5, 4));
    CHECK(a.size() == 5);
    CHECK(a.phase_u().minCoeff() >= 0.0);
    CHECK(a.phase_v().maxCoeff() < 2 * M_PI);
    Eigen::VectorXd z(3);
    z << -0.5, 0.0, 1.25;
    const Eigen::MatrixXd u = a.u(z);
    for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 5; ++k)
            CHECK(u(r, k) == doctest::Approx(std::sqrt(2.0) * std::cos(a.omega_u()(k) * z(r) + a.phase_u()(k))));
    const double h = 1e-6;
    const Eigen::MatrixXd numeric = (a.v(z.array() + h) - a.v(z.array() - h)) / (2 * h);
    CHECK((numeric - a.dv(z)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK_THROWS_AS(RFFBank::sample(0, 1), std::invalid_argument);
}

}  // TEST_SUITE
