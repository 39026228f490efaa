#include "l2r/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "l2r/random.hpp"

namespace l2r {

std::string_view to_string(MotifKind kind) {
    switch (kind) {
        case MotifKind::wheel: return "wheel";
        case MotifKind::star: return "star";
        case MotifKind::circle: return "circle";
        case MotifKind::grid: return "grid";
        case MotifKind::diamond: return "diamond";
    }
    return "unknown";
}

MotifKind motif_from_string(std::string_view name) {
    for (auto kind : kAllMotifs) {
        if (to_string(kind) == name) {
            return kind;
        }
    }
    throw std::invalid_argument("unknown motif kind '" + std::string(name) + "'");
}

int minimum_motif_size(MotifKind kind) {
    switch (kind) {
        case MotifKind::wheel: return 4;
        case MotifKind::star: return 3;
        case MotifKind::circle: return 3;
        case MotifKind::grid: return 4;
        case MotifKind::diamond: return 4;
    }
    return 0;
}

namespace {

int grid_rows(int size) {
    int rows = static_cast<int>(std::sqrt(static_cast<double>(size)));
    while (rows >= 2 && size % rows != 0) {
        --rows;
    }
    return rows;
}

}  // namespace

bool motif_size_valid(MotifKind kind, int size) {
    if (size < minimum_motif_size(kind)) {
        return false;
    }
    return kind != MotifKind::grid || grid_rows(size) >= 2;
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "unknown";
}

Graph::Graph(int node_count, std::vector<Edge> edges, Eigen::MatrixXd features, int label,
             std::vector<MotifKind> motifs)
    : node_count_(node_count), edges_(std::move(edges)), features_(std::move(features)), label_(label),
      motifs_(std::move(motifs)) {
    if (node_count_ <= 0) {
        throw std::invalid_argument("graph must have at least one node");
    }
    if (label_ != 0 && label_ != 1) {
        throw std::invalid_argument("graph label must be 0 or 1, got " + std::to_string(label_));
    }
    if (features_.rows() != node_count_) {
        throw std::invalid_argument("feature matrix has " + std::to_string(features_.rows()) + " rows for " +
                                    std::to_string(node_count_) + " nodes");
    }
    for (auto& [u, v] : edges_) {
        if (u < 0 || v < 0 || u >= node_count_ || v >= node_count_) {
            throw std::invalid_argument("edge (" + std::to_string(u) + "," + std::to_string(v) +
                                        ") out of range for " + std::to_string(node_count_) + " nodes");
        }
        if (u == v) {
            throw std::invalid_argument("self-loop on node " + std::to_string(u));
        }
        if (u > v) {
            std::swap(u, v);
        }
    }
    std::sort(edges_.begin(), edges_.end());
    if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end()) {
        throw std::invalid_argument("duplicate edge");
    }
    adjacency_.assign(static_cast<std::size_t>(node_count_), {});
    for (const auto& [u, v] : edges_) {
        adjacency_[static_cast<std::size_t>(u)].push_back(v);
        adjacency_[static_cast<std::size_t>(v)].push_back(u);
    }
}

bool Graph::has_motif(MotifKind kind) const {
    return std::find(motifs_.begin(), motifs_.end(), kind) != motifs_.end();
}

Graph Graph::permuted(const std::vector<int>& perm) const {
    if (static_cast<int>(perm.size()) != node_count_) {
        throw std::invalid_argument("permutation length does not match node count");
    }
    std::vector<Edge> edges;
    edges.reserve(edges_.size());
    for (const auto& [u, v] : edges_) {
        edges.emplace_back(perm[static_cast<std::size_t>(u)], perm[static_cast<std::size_t>(v)]);
    }
    Eigen::MatrixXd features(features_.rows(), features_.cols());
    for (int v = 0; v < node_count_; ++v) {
        features.row(perm[static_cast<std::size_t>(v)]) = features_.row(v);
    }
    return Graph(node_count_, std::move(edges), std::move(features), label_, motifs_);
}

bool operator==(const Graph& a, const Graph& b) {
    return a.node_count_ == b.node_count_ && a.label_ == b.label_ && a.edges_ == b.edges_ &&
           a.motifs_ == b.motifs_ && a.features_.rows() == b.features_.rows() &&
           a.features_.cols() == b.features_.cols() && a.features_ == b.features_;
}

Graph generate_motif(MotifKind kind, int size) {
    if (!motif_size_valid(kind, size)) {
        throw std::invalid_argument("invalid size " + std::to_string(size) + " for " + std::string(to_string(kind)) +
                                    " motif (minimum " + std::to_string(minimum_motif_size(kind)) +
                                    (kind == MotifKind::grid ? ", composite r x c" : "") + ")");
    }
    std::vector<Edge> edges;
    switch (kind) {
        case MotifKind::wheel: {
            const int rim = size - 1;
            for (int i = 0; i < rim; ++i) {
                edges.emplace_back(0, 1 + i);
                edges.emplace_back(1 + i, 1 + (i + 1) % rim);
            }
            break;
        }
        case MotifKind::star:
            for (int i = 1; i < size; ++i) {
                edges.emplace_back(0, i);
            }
            break;
        case MotifKind::circle:
            for (int i = 0; i < size; ++i) {
                edges.emplace_back(i, (i + 1) % size);
            }
            break;
        case MotifKind::grid: {
            const int rows = grid_rows(size);
            const int cols = size / rows;
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < cols; ++c) {
                    const int v = r * cols + c;
                    if (c + 1 < cols) edges.emplace_back(v, v + 1);
                    if (r + 1 < rows) edges.emplace_back(v, v + cols);
                }
            }
            break;
        }
        case MotifKind::diamond: {
            // apexes 0 and 1, middle path 2..size-1
            for (int m = 2; m < size; ++m) {
                edges.emplace_back(0, m);
                edges.emplace_back(1, m);
                if (m + 1 < size) edges.emplace_back(m, m + 1);
            }
            break;
        }
    }
    return Graph(size, std::move(edges), Eigen::MatrixXd::Zero(size, 0), 0, {kind});
}

void SyntheticSpec::validate() const {
    if (n_train <= 0 || n_val <= 0 || n_test <= 0) {
        throw std::invalid_argument("split sizes must be positive");
    }
    if (!(bias_ratio >= 0.0 && bias_ratio <= 1.0)) {
        throw std::invalid_argument("bias_ratio must lie in [0,1]");
    }
    if (!(test_bias_ratio >= 0.0 && test_bias_ratio <= 1.0)) {
        throw std::invalid_argument("test_bias_ratio must lie in [0,1]");
    }
    if (feature_dim <= 0) {
        throw std::invalid_argument("feature_dim must be positive");
    }
    if (!(edge_probability >= 0.0 && edge_probability <= 1.0)) {
        throw std::invalid_argument("edge_probability must lie in [0,1]");
    }
    if (motif_size_range.empty() || base_graph_size_range.empty()) {
        throw std::invalid_argument("size ranges must be non-empty");
    }
    if (base_graph_size_range.lo < 1) {
        throw std::invalid_argument("base graphs need at least one node");
    }
    for (auto kind : kAllMotifs) {
        bool feasible = false;
        for (int s = motif_size_range.lo; s <= motif_size_range.hi && !feasible; ++s) {
            feasible = motif_size_valid(kind, s);
        }
        if (!feasible) {
            throw std::invalid_argument("motif_size_range [" + std::to_string(motif_size_range.lo) + "," +
                                        std::to_string(motif_size_range.hi) + "] has no valid size for " +
                                        std::string(to_string(kind)));
        }
    }
}

int biased_positive_count(double ratio, int n_pos) {
    // the epsilon keeps e.g. 0.7 * 500 from flooring to 349
    return static_cast<int>(std::floor(ratio * n_pos + 1e-9));
}

namespace {

struct Recipe {
    int label = 0;
    MotifKind extra = MotifKind::star;
};

int sample_motif_size(MotifKind kind, IntRange range, Rng& rng) {
    std::vector<int> sizes;
    for (int s = range.lo; s <= range.hi; ++s) {
        if (motif_size_valid(kind, s)) sizes.push_back(s);
    }
    std::uniform_int_distribution<std::size_t> pick(0, sizes.size() - 1);
    return sizes[pick(rng)];
}

Graph build_graph(const SyntheticSpec& spec, const Recipe& recipe, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_int_distribution<int> base_size(spec.base_graph_size_range.lo, spec.base_graph_size_range.hi);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int base_n = base_size(rng);
    std::vector<Edge> edges;
    for (int u = 0; u < base_n; ++u) {
        for (int v = u + 1; v < base_n; ++v) {
            if (unit(rng) < spec.edge_probability) edges.emplace_back(u, v);
        }
    }

    std::vector<MotifKind> motifs;
    if (recipe.label == 1) motifs.push_back(MotifKind::wheel);
    motifs.push_back(recipe.extra);

    int n = base_n;
    std::uniform_int_distribution<int> base_node(0, base_n - 1);
    for (auto kind : motifs) {
        const Graph motif = generate_motif(kind, sample_motif_size(kind, spec.motif_size_range, rng));
        for (const auto& [u, v] : motif.edges()) {
            edges.emplace_back(n + u, n + v);
        }
        std::uniform_int_distribution<int> motif_node(0, motif.node_count() - 1);
        const int anchor = n + motif_node(rng);
        edges.emplace_back(base_node(rng), anchor);
        n += motif.node_count();
    }

    Eigen::MatrixXd features(n, spec.feature_dim);
    for (int i = 0; i < n; ++i) {
        for (int f = 0; f < spec.feature_dim; ++f) {
            features(i, f) = unit(rng);
        }
    }
    return Graph(n, std::move(edges), std::move(features), recipe.label, std::move(motifs));
}

}  // namespace

GraphDataset generate_split(const SyntheticSpec& spec, Split split, int count, double ratio) {
    spec.validate();
    const auto split_id = static_cast<std::uint64_t>(split);
    Rng split_rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(Stream::dataset), split_id}));

    const int n_pos = count / 2;
    const int n_neg = count - n_pos;
    const int n_star = biased_positive_count(ratio, n_pos);

    std::vector<Recipe> recipes;
    recipes.reserve(static_cast<std::size_t>(count));
    constexpr std::array<MotifKind, 3> kPlainPositive = {MotifKind::circle, MotifKind::grid, MotifKind::diamond};
    std::uniform_int_distribution<std::size_t> pick3(0, kPlainPositive.size() - 1);
    std::uniform_int_distribution<std::size_t> pick4(0, kNonCausalMotifs.size() - 1);
    for (int i = 0; i < n_pos; ++i) {
        recipes.push_back({1, i < n_star ? MotifKind::star : kPlainPositive[pick3(split_rng)]});
    }
    for (int i = 0; i < n_neg; ++i) {
        recipes.push_back({0, kNonCausalMotifs[pick4(split_rng)]});
    }
    std::shuffle(recipes.begin(), recipes.end(), split_rng);

    GraphDataset out;
    out.split = split;
    out.provenance = spec;
    out.graphs.reserve(recipes.size());
    for (std::size_t i = 0; i < recipes.size(); ++i) {
        out.graphs.push_back(
            build_graph(spec, recipes[i], derive_seed(spec.seed, {static_cast<std::uint64_t>(Stream::dataset),
                                                                  split_id, 1000 + static_cast<std::uint64_t>(i)})));
    }
    return out;
}

SyntheticSplits generate_synthetic_dataset(const SyntheticSpec& spec) {
    spec.validate();
    return {generate_split(spec, Split::train, spec.n_train, spec.bias_ratio),
            generate_split(spec, Split::val, spec.n_val, spec.bias_ratio),
            generate_split(spec, Split::test, spec.n_test, spec.test_bias_ratio)};
}

}  // namespace l2r
