#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace l2r {

enum class MotifKind { wheel, star, circle, grid, diamond };

inline constexpr std::array<MotifKind, 5> kAllMotifs = {MotifKind::wheel, MotifKind::star, MotifKind::circle,
                                                        MotifKind::grid, MotifKind::diamond};
/// Candidates for the non-label motif; the wheel is the causal one.
inline constexpr std::array<MotifKind, 4> kNonCausalMotifs = {MotifKind::star, MotifKind::circle, MotifKind::grid,
                                                              MotifKind::diamond};

std::string_view to_string(MotifKind kind);
MotifKind motif_from_string(std::string_view name);
int minimum_motif_size(MotifKind kind);
/// Whether `size` is a legal node count for `kind` (grids need a composite r x c with r, c >= 2).
bool motif_size_valid(MotifKind kind, int size);

using Edge = std::pair<int, int>;

/// Undirected graph with per-node features and a binary label.
///
/// Edges are stored canonically (u < v, sorted). Self-loops and duplicates are
/// rejected; the GCN self-loop is added by normalization at forward time.
class Graph {
public:
    Graph() = default;
    Graph(int node_count, std::vector<Edge> edges, Eigen::MatrixXd features, int label,
          std::vector<MotifKind> motifs = {});

    int node_count() const { return node_count_; }
    int feature_dim() const { return static_cast<int>(features_.cols()); }
    int label() const { return label_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const Eigen::MatrixXd& features() const { return features_; }
    const std::vector<int>& neighbors(int v) const { return adjacency_[static_cast<std::size_t>(v)]; }
    int degree(int v) const { return static_cast<int>(adjacency_[static_cast<std::size_t>(v)].size()); }
    /// Generation metadata: every motif planted in this graph.
    const std::vector<MotifKind>& motifs() const { return motifs_; }
    bool has_motif(MotifKind kind) const;

    /// Relabels nodes so that old node v becomes perm[v]; features move with their node.
    Graph permuted(const std::vector<int>& perm) const;

    friend bool operator==(const Graph& a, const Graph& b);

private:
    int node_count_ = 0;
    std::vector<Edge> edges_;
    Eigen::MatrixXd features_;
    int label_ = 0;
    std::vector<MotifKind> motifs_;
    std::vector<std::vector<int>> adjacency_;
};

/// Canonical motif topology with zero-width feature placeholders.
///
/// wheel: hub (node 0) joined to every rim node plus a rim cycle; star: hub plus
/// leaves; circle: one cycle; grid: r x c lattice with r the largest divisor
/// <= sqrt(size); diamond: two apexes joined to every node of a middle path
/// (size 4 is K4 minus an edge).
Graph generate_motif(MotifKind kind, int size);

struct IntRange {
    int lo = 0;
    int hi = 0;
    bool empty() const { return hi < lo; }
    friend bool operator==(const IntRange&, const IntRange&) = default;
};

struct SyntheticSpec {
    int n_train = 1000;
    int n_val = 300;
    int n_test = 500;
    double bias_ratio = 0.8;       // fraction of positives that also carry a star
    double test_bias_ratio = 0.25;  // 0.25 makes star independent of the label
    IntRange motif_size_range{5, 9};
    IntRange base_graph_size_range{4, 8};
    int feature_dim = 8;
    double edge_probability = 0.15;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument on counts, ratios or infeasible size ranges.
    void validate() const;
    friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

enum class Split { train, val, test };
std::string_view to_string(Split split);

struct ExternalSource {
    std::filesystem::path path;
    friend bool operator==(const ExternalSource&, const ExternalSource&) = default;
};

struct GraphDataset {
    std::vector<Graph> graphs;
    Split split = Split::train;
    std::variant<SyntheticSpec, ExternalSource> provenance;

    std::size_t size() const { return graphs.size(); }
    bool empty() const { return graphs.empty(); }
};

struct SyntheticSplits {
    GraphDataset train;
    GraphDataset val;
    GraphDataset test;
};

/// Number of positives that receive the spurious star: floor(ratio * n_pos).
int biased_positive_count(double ratio, int n_pos);

/// Builds train/val/test splits. Train and val use `bias_ratio`, test uses
/// `test_bias_ratio`. Positives carry a wheel plus either a star (exactly
/// floor(ratio * n_pos) of them) or one of circle/grid/diamond; negatives carry one
/// motif drawn uniformly from the four non-causal kinds. Output depends only on
/// the spec.
SyntheticSplits generate_synthetic_dataset(const SyntheticSpec& spec);

/// One split on its own; graph i is generated from a sub-seed of (seed, split, i).
GraphDataset generate_split(const SyntheticSpec& spec, Split split, int count, double ratio);

// JSON-lines: {"n":int,"edges":[[u,v],...],"x":[[f floats],...],"y":0|1,"motifs":[...]}
void save_dataset(const GraphDataset& dataset, const std::filesystem::path& path);
GraphDataset load_dataset(const std::filesystem::path& path, Split split = Split::train);
std::string serialize_graph(const Graph& graph);
Graph parse_graph(std::string_view line, std::size_t line_number = 0);

}  // namespace l2r
