#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "l2r/errors.hpp"
#include "l2r/graph.hpp"

namespace l2r {

using nlohmann::json;

std::string serialize_graph(const Graph& graph) {
    json edges = json::array();
    for (const auto& [u, v] : graph.edges()) {
        edges.push_back({u, v});
    }
    json x = json::array();
    for (int i = 0; i < graph.node_count(); ++i) {
        json row = json::array();
        for (int f = 0; f < graph.feature_dim(); ++f) {
            row.push_back(graph.features()(i, f));
        }
        x.push_back(std::move(row));
    }
    json motifs = json::array();
    for (auto kind : graph.motifs()) {
        motifs.push_back(std::string(to_string(kind)));
    }
    json record = json::object();
    record["n"] = graph.node_count();
    record["edges"] = std::move(edges);
    record["x"] = std::move(x);
    record["y"] = graph.label();
    record["motifs"] = std::move(motifs);
    return record.dump();
}

namespace {

const json& require(const json& record, const char* field, const char* meaning, std::size_t line) {
    auto it = record.find(field);
    if (it == record.end()) {
        throw ParseError(std::string("missing field \"") + field + "\" (" + meaning + ")", line);
    }
    return *it;
}

}  // namespace

Graph parse_graph(std::string_view text, std::size_t line) {
    json record;
    try {
        record = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what(), line);
    }
    if (!record.is_object()) {
        throw ParseError("record is not a JSON object", line);
    }
    try {
        const int n = require(record, "n", "node count", line).get<int>();
        const json& edges_json = require(record, "edges", "edge list", line);
        const json& x_json = require(record, "x", "node features", line);
        const int y = require(record, "y", "label", line).get<int>();

        std::vector<Edge> edges;
        for (const auto& e : edges_json) {
            if (!e.is_array() || e.size() != 2) {
                throw ParseError("edge entries must be [u,v] pairs", line);
            }
            edges.emplace_back(e[0].get<int>(), e[1].get<int>());
        }
        if (!x_json.is_array() || static_cast<int>(x_json.size()) != n) {
            throw ParseError("\"x\" must hold one feature row per node", line);
        }
        const std::size_t f = n > 0 ? x_json[0].size() : 0;
        Eigen::MatrixXd x(n, static_cast<Eigen::Index>(f));
        for (int i = 0; i < n; ++i) {
            const auto& row = x_json[static_cast<std::size_t>(i)];
            if (!row.is_array() || row.size() != f) {
                throw ParseError("feature rows must share one width", line);
            }
            for (std::size_t c = 0; c < f; ++c) {
                x(i, static_cast<Eigen::Index>(c)) = row[c].get<double>();
            }
        }
        std::vector<MotifKind> motifs;
        if (auto it = record.find("motifs"); it != record.end()) {
            for (const auto& m : *it) {
                motifs.push_back(motif_from_string(m.get<std::string>()));
            }
        }
        return Graph(n, std::move(edges), std::move(x), y, std::move(motifs));
    } catch (const json::exception& e) {
        throw ParseError(std::string("type error: ") + e.what(), line);
    } catch (const std::invalid_argument& e) {
        throw ParseError(e.what(), line);
    }
}

void save_dataset(const GraphDataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    for (const auto& g : dataset.graphs) {
        out << serialize_graph(g) << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

GraphDataset load_dataset(const std::filesystem::path& path, Split split) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open dataset " + path.string());
    }
    GraphDataset out;
    out.split = split;
    out.provenance = ExternalSource{path};
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        Graph g = parse_graph(text, line);
        if (!out.graphs.empty() && g.feature_dim() != out.graphs.front().feature_dim()) {
            throw SchemaError("line " + std::to_string(line) + ": feature dimension " +
                              std::to_string(g.feature_dim()) + " differs from " +
                              std::to_string(out.graphs.front().feature_dim()));
        }
        out.graphs.push_back(std::move(g));
    }
    if (out.graphs.empty()) {
        std::cerr << "warning: dataset " << path.string() << " is empty\n";
    }
    return out;
}

}  // namespace l2r
