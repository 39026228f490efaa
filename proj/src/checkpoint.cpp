#include "l2r/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "l2r/errors.hpp"

namespace l2r {

using nlohmann::json;

namespace {

json vec_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd json_vec(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["config_hash"] = c.config_hash;
    j["seed"] = c.seed;
    j["model"] = {{"backbone", to_string(c.model_config.backbone)},
                  {"input_dim", c.model_config.input_dim},
                  {"layers", c.model_config.layer_dims},
                  {"activation", c.model_config.activation == Activation::relu ? "relu" : "identity"},
                  {"classes", c.model_config.num_classes}};
    json tensors = json::array();
    for (const auto& t : c.params.tensors()) {
        std::vector<double> data;
        data.reserve(static_cast<std::size_t>(t.value.size()));
        for (Eigen::Index r = 0; r < t.value.rows(); ++r)
            for (Eigen::Index col = 0; col < t.value.cols(); ++col) data.push_back(t.value(r, col));
        tensors.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}, {"data", data}});
    }
    j["tensors"] = std::move(tensors);
    j["rho"] = vec_json(c.rho);
    j["rff"] = {{"omega_u", vec_json(c.bank.omega_u())},
                {"phase_u", vec_json(c.bank.phase_u())},
                {"omega_v", vec_json(c.bank.omega_v())},
                {"phase_v", vec_json(c.bank.phase_v())}};
    j["clusters"] = json::parse(c.clusters.to_json());

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump() << '\n';
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw SchemaError(path.string() + ": not JSON: " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) throw SchemaError("not an l2r checkpoint");
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw SchemaError("unsupported checkpoint version " + std::to_string(version));
        }
        ModelConfig mc;
        Parameters params;
        const json& m = j.at("model");
        mc.backbone = backbone_from_string(m.at("backbone").get<std::string>());
        mc.input_dim = m.at("input_dim").get<int>();
        mc.layer_dims = m.at("layers").get<std::vector<int>>();
        const auto act = m.at("activation").get<std::string>();
        if (act != "relu" && act != "identity") throw SchemaError("unknown activation " + act);
        mc.activation = act == "relu" ? Activation::relu : Activation::identity;
        mc.num_classes = m.at("classes").get<int>();
        for (const auto& t : j.at("tensors")) {
            const auto rows = t.at("rows").get<Eigen::Index>();
            const auto cols = t.at("cols").get<Eigen::Index>();
            const auto data = t.at("data").get<std::vector<double>>();
            if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
                throw SchemaError("tensor " + t.at("name").get<std::string>() + " has inconsistent shape");
            }
            Eigen::MatrixXd value(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index col = 0; col < cols; ++col) value(r, col) = data[static_cast<std::size_t>(r * cols + col)];
            params.add(t.at("name").get<std::string>(), std::move(value));
        }
        const json& rff = j.at("rff");
        Checkpoint c{mc,
                     params,
                     json_vec(j.at("rho")),
                     RFFBank(json_vec(rff.at("omega_u")), json_vec(rff.at("phase_u")), json_vec(rff.at("omega_v")),
                             json_vec(rff.at("phase_v"))),
                     ClusterAssignment::from_json(j.at("clusters").dump()),
                     j.at("config_hash").get<std::string>(),
                     j.at("seed").get<std::uint64_t>()};
        Model probe(c.model_config, c.params);  // shape check
        return c;
    } catch (const json::exception& e) {
        throw SchemaError(path.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

}  // namespace l2r
