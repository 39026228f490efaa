#include "l2r/decorrelation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "l2r/errors.hpp"

namespace l2r {

ClusterAssignment ClusterAssignment::single(int d) {
    if (d <= 0) throw std::invalid_argument("cluster assignment needs at least one variable");
    return {1, std::vector<int>(static_cast<std::size_t>(d), 0), {0}};
}

ClusterAssignment ClusterAssignment::singletons(int d) {
    if (d <= 0) throw std::invalid_argument("cluster assignment needs at least one variable");
    ClusterAssignment out{d, {}, {}};
    for (int i = 0; i < d; ++i) {
        out.assign.push_back(i);
        out.medoids.push_back(i);
    }
    return out;
}

void ClusterAssignment::validate() const {
    const int d = dimension();
    if (k < 1 || k > d) {
        throw std::invalid_argument("cluster count " + std::to_string(k) + " outside [1, " + std::to_string(d) + "]");
    }
    if (static_cast<int>(medoids.size()) != k) {
        throw std::invalid_argument("need exactly one medoid per cluster");
    }
    for (int a : assign) {
        if (a < 0 || a >= k) throw std::invalid_argument("cluster id " + std::to_string(a) + " out of range");
    }
    for (int c = 0; c < k; ++c) {
        const int m = medoids[static_cast<std::size_t>(c)];
        if (m < 0 || m >= d || assign[static_cast<std::size_t>(m)] != c) {
            throw std::invalid_argument("medoid of cluster " + std::to_string(c) + " is not a member of it");
        }
    }
}

std::string ClusterAssignment::to_json() const {
    nlohmann::json j;
    j["K"] = k;
    j["assign"] = assign;
    j["medoids"] = medoids;
    return j.dump();
}

ClusterAssignment ClusterAssignment::from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ClusterAssignment out{j.at("K").get<int>(), j.at("assign").get<std::vector<int>>(),
                              j.at("medoids").get<std::vector<int>>()};
        out.validate();
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("cluster assignment: ") + e.what(), 0);
    }
}

// ---------------------------------------------------------------------------

namespace {

void check_weighted_batch(const Eigen::MatrixXd& z, const Eigen::Ref<const Eigen::VectorXd>& w) {
    if (z.rows() < 2) {
        throw std::invalid_argument("partial cross-covariance needs at least 2 rows, got " + std::to_string(z.rows()));
    }
    if (w.size() != z.rows()) {
        throw ShapeError("weight vector length " + std::to_string(w.size()) + " differs from row count " +
                         std::to_string(z.rows()));
    }
}

Eigen::MatrixXd centered(Eigen::MatrixXd m) {
    m.rowwise() -= m.colwise().mean();
    return m;
}

}  // namespace

Eigen::MatrixXd partial_cross_cov(const Eigen::MatrixXd& z, const Eigen::Ref<const Eigen::VectorXd>& w, int i, int j,
                                  const RFFBank& bank) {
    check_weighted_batch(z, w);
    if (i < 0 || j < 0 || i >= z.cols() || j >= z.cols()) {
        throw std::out_of_range("variable index out of range");
    }
    if (i == j) {
        throw std::invalid_argument("partial cross-covariance needs two distinct variables");
    }
    const Eigen::MatrixXd a = centered(w.asDiagonal() * bank.u(z.col(i)));
    const Eigen::MatrixXd b = centered(w.asDiagonal() * bank.v(z.col(j)));
    return a.transpose() * b / static_cast<double>(z.rows() - 1);
}

DecorrelationResult decorrelation_loss(const Eigen::MatrixXd& z, const Eigen::Ref<const Eigen::VectorXd>& w,
                                       const ClusterAssignment& clusters, const RFFBank& bank,
                                       PairSelection selection) {
    check_weighted_batch(z, w);
    const int d = static_cast<int>(z.cols());
    if (clusters.dimension() != d) {
        throw ShapeError("cluster assignment covers " + std::to_string(clusters.dimension()) +
                         " variables but the representation has " + std::to_string(d));
    }
    const Eigen::Index n = z.rows();
    const double scale = 1.0 / static_cast<double>(n - 1);

    std::vector<Eigen::MatrixXd> raw_u(static_cast<std::size_t>(d)), raw_v(static_cast<std::size_t>(d));
    std::vector<Eigen::MatrixXd> cu(static_cast<std::size_t>(d)), cv(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c) {
        const auto k = static_cast<std::size_t>(c);
        raw_u[k] = bank.u(z.col(c));
        raw_v[k] = bank.v(z.col(c));
        cu[k] = centered(w.asDiagonal() * raw_u[k]);
        cv[k] = centered(w.asDiagonal() * raw_v[k]);
    }

    const Eigen::Index f = bank.size();
    std::vector<Eigen::MatrixXd> grad_u(static_cast<std::size_t>(d), Eigen::MatrixXd::Zero(n, f));
    std::vector<Eigen::MatrixXd> grad_v(static_cast<std::size_t>(d), Eigen::MatrixXd::Zero(n, f));
    std::vector<bool> touched_u(static_cast<std::size_t>(d), false), touched_v(static_cast<std::size_t>(d), false);

    DecorrelationResult out;
    // Pairs are visited in fixed (i, j) order so the sum is reproducible.
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            const bool same = clusters.assign[static_cast<std::size_t>(i)] == clusters.assign[static_cast<std::size_t>(j)];
            if (same != (selection == PairSelection::within_cluster)) continue;
            const auto ki = static_cast<std::size_t>(i);
            const auto kj = static_cast<std::size_t>(j);
            const Eigen::MatrixXd sigma = cu[ki].transpose() * cv[kj] * scale;
            out.value += sigma.squaredNorm();
            // cu, cv are column-centred, so the centring projection drops out of these adjoints
            grad_u[ki].noalias() += (2.0 * scale) * cv[kj] * sigma.transpose();
            grad_v[kj].noalias() += (2.0 * scale) * cu[ki] * sigma;
            touched_u[ki] = true;
            touched_v[kj] = true;
            ++out.penalized_pairs;
        }
    }

    out.grad_w = Eigen::VectorXd::Zero(n);
    out.grad_z = Eigen::MatrixXd::Zero(n, d);
    for (int c = 0; c < d; ++c) {
        const auto k = static_cast<std::size_t>(c);
        if (touched_u[k]) {
            out.grad_w += grad_u[k].cwiseProduct(raw_u[k]).rowwise().sum();
            out.grad_z.col(c) += w.cwiseProduct(grad_u[k].cwiseProduct(bank.du(z.col(c))).rowwise().sum());
        }
        if (touched_v[k]) {
            out.grad_w += grad_v[k].cwiseProduct(raw_v[k]).rowwise().sum();
            out.grad_z.col(c) += w.cwiseProduct(grad_v[k].cwiseProduct(bank.dv(z.col(c))).rowwise().sum());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd pearson(const Eigen::MatrixXd& z, std::size_t* degenerate) {
    const Eigen::Index d = z.cols();
    const Eigen::RowVectorXd mean = z.colwise().mean();
    Eigen::MatrixXd c = z.rowwise() - mean;
    Eigen::VectorXd sd(d);
    std::vector<bool> constant(static_cast<std::size_t>(d), false);
    for (Eigen::Index k = 0; k < d; ++k) {
        sd(k) = c.col(k).norm();
        if (!(sd(k) > 1e-12 * (1.0 + std::abs(mean(k))) * std::sqrt(static_cast<double>(z.rows())))) {
            constant[static_cast<std::size_t>(k)] = true;
            if (degenerate) ++*degenerate;
        }
    }
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index a = 0; a < d; ++a) {
        if (constant[static_cast<std::size_t>(a)]) continue;
        out(a, a) = 1.0;
        for (Eigen::Index b = a + 1; b < d; ++b) {
            if (constant[static_cast<std::size_t>(b)]) continue;
            const double r = std::clamp(c.col(a).dot(c.col(b)) / (sd(a) * sd(b)), -1.0, 1.0);
            out(a, b) = r;
            out(b, a) = r;
        }
    }
    return out;
}

void update_profile(CorrelationProfile& profile, const Eigen::MatrixXd& batch,
                    std::span<const Eigen::MatrixXd> queue_blocks) {
    if (batch.rows() < 2) {
        throw std::invalid_argument("profile update needs a batch of at least 2 rows");
    }
    if (!profile.subsets.empty() && profile.dimension() != batch.cols()) {
        throw ShapeError("batch width differs from the profile dimension");
    }
    profile.subsets.push_back(pearson(batch, &profile.degenerate_columns));
    if (queue_blocks.empty()) {
        profile.average = profile.subsets.back();
        return;
    }
    Eigen::Index rows = 0;
    for (const auto& q : queue_blocks) {
        if (q.cols() != batch.cols()) throw ShapeError("queue block width differs from the batch");
        rows += q.rows();
    }
    Eigen::MatrixXd stacked(rows, batch.cols());
    Eigen::Index offset = 0;
    for (const auto& q : queue_blocks) {
        stacked.middleRows(offset, q.rows()) = q;
        offset += q.rows();
    }
    profile.average = pearson(stacked, &profile.degenerate_columns);
}

double dis(int i, int j, const CorrelationProfile& profile) {
    const std::size_t l = profile.subsets.size();
    if (l < 2) {
        throw std::invalid_argument("Dis needs at least 2 correlation subsets, have " + std::to_string(l));
    }
    const int d = profile.dimension();
    if (i < 0 || j < 0 || i >= d || j >= d) throw std::out_of_range("variable index out of range");
    const double ave = profile.average(i, j);
    double sum = 0.0;
    for (const auto& c : profile.subsets) {
        const double diff = c(i, j) - ave;
        sum += diff * diff;
    }
    return std::sqrt(sum / static_cast<double>(l - 1));
}

Eigen::MatrixXd dissimilarity_matrix(const CorrelationProfile& profile) {
    const int d = profile.dimension();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            out(i, j) = out(j, i) = dis(i, j, profile);
        }
    }
    return out;
}

}  // namespace l2r
