#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "l2r/graph.hpp"
#include "l2r/random.hpp"

namespace l2r::test {

inline nlohmann::json load_fixture(const std::string& name) {
    std::ifstream in(std::filesystem::path(L2R_FIXTURE_DIR) / name);
    return nlohmann::json::parse(in);
}

inline Eigen::MatrixXd to_matrix(const nlohmann::json& rows) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    const auto c = static_cast<Eigen::Index>(rows.at(0).size());
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows.at(i).at(j).get<double>();
    return m;
}

inline Eigen::VectorXd to_vector(const nlohmann::json& values) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = values.at(i).get<double>();
    return v;
}

/// Connected-ish random graph with Gaussian features.
inline Graph random_graph(Rng& rng, int n, int features, int label, double p = 0.4) {
    std::vector<Edge> edges;
    std::bernoulli_distribution coin(p);
    for (int v = 1; v < n; ++v) {
        const int parent = std::uniform_int_distribution<int>(0, v - 1)(rng);
        edges.emplace_back(parent, v);
        for (int u = 0; u < v; ++u)
            if (u != parent && coin(rng)) edges.emplace_back(u, v);
    }
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd x(n, features);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
    return Graph(n, std::move(edges), std::move(x), label);
}

inline std::vector<Graph> random_graphs(std::uint64_t seed, int count, int features, int min_nodes = 3,
                                        int max_nodes = 8) {
    Rng rng(seed);
    std::vector<Graph> out;
    for (int i = 0; i < count; ++i) {
        const int n = std::uniform_int_distribution<int>(min_nodes, max_nodes)(rng);
        out.push_back(random_graph(rng, n, features, i % 2));
    }
    return out;
}

inline Eigen::MatrixXd gaussian_matrix(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols) {
    Rng rng(seed);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
    return m;
}

}  // namespace l2r::test
