#include "l2r/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "l2r/errors.hpp"

namespace l2r {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::vector<std::string> parse_config_args(std::string_view text) {
    std::vector<std::string> args;
    std::size_t line_number = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find('\n', pos), text.size());
        const std::string_view line = trim(text.substr(pos, end - pos));
        ++line_number;
        pos = end + 1;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key=value", line_number);
        std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));
        while (!key.empty() && key.front() == '-') key.remove_prefix(1);
        if (key.empty()) throw ParseError("empty key", line_number);
        args.push_back("--" + std::string(key));
        args.emplace_back(value);
        if (end == text.size()) break;
    }
    return args;
}

std::vector<std::string> read_config_args(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot read config file " + path.string(), 0);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_args(buffer.str());
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::string canonical_config(const SyntheticSpec& d) {
    std::ostringstream s;
    s << "data.n_train=" << d.n_train << "\ndata.n_val=" << d.n_val << "\ndata.n_test=" << d.n_test
      << "\ndata.bias_ratio=" << num(d.bias_ratio) << "\ndata.test_bias_ratio=" << num(d.test_bias_ratio)
      << "\ndata.motif_size=" << d.motif_size_range.lo << ".." << d.motif_size_range.hi
      << "\ndata.base_size=" << d.base_graph_size_range.lo << ".." << d.base_graph_size_range.hi
      << "\ndata.feature_dim=" << d.feature_dim << "\ndata.edge_probability=" << num(d.edge_probability) << '\n';
    return s.str();
}

std::string canonical_config(const SyntheticSpec& data, const ModelConfig& m, const TrainConfig& t) {
    std::ostringstream s;
    s << canonical_config(data);
    s << "model.backbone=" << to_string(m.backbone) << "\nmodel.input_dim=" << m.input_dim << "\nmodel.layers=";
    for (std::size_t i = 0; i < m.layer_dims.size(); ++i) s << (i ? "," : "") << m.layer_dims[i];
    s << "\nmodel.activation=" << (m.activation == Activation::relu ? "relu" : "identity")
      << "\nmodel.classes=" << m.num_classes;
    s << "\ntrain.eta_theta=" << num(t.eta_theta) << "\ntrain.eta_w=" << num(t.eta_w) << "\ntrain.eps=" << num(t.eps)
      << "\ntrain.order=" << to_string(t.order) << "\ntrain.epochs=" << t.epochs << "\ntrain.batch=" << t.batch_size
      << "\ntrain.queues=" << t.queue_count << "\ntrain.alphas=";
    const auto alphas = t.queue_alphas();
    for (std::size_t i = 0; i < alphas.size(); ++i) s << (i ? "," : "") << num(alphas[i]);
    s << "\ntrain.clusters=" << t.clusters << "\ntrain.recluster=" << t.recluster_period
      << "\ntrain.rff=" << t.rff_functions << "\ntrain.decorrelate=" << (t.decorrelate ? 1 : 0)
      << "\ntrain.pairs=" << (t.pair_selection == PairSelection::cross_cluster ? "cross" : "within")
      << "\ntrain.divergence=" << num(t.divergence_threshold) << '\n';
    return s.str();
}

std::string config_hash(const std::string& canonical) { return hex64(fnv1a(canonical)); }

}  // namespace l2r
