#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "l2r/decorrelation.hpp"
#include "l2r/gnn.hpp"

namespace l2r {

inline constexpr std::string_view kCheckpointFormat = "l2r-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Everything needed to evaluate or resume a trained model.
///
/// File layout (JSON, version 1):
///   {"format":"l2r-checkpoint","version":1,"config_hash":"...","seed":n,
///    "model":{"backbone":"gcn","input_dim":8,"layers":[32,16],"activation":"relu","classes":2},
///    "tensors":[{"name":"layer0.weight","rows":r,"cols":c,"data":[row-major...]},...],
///    "rho":[...],"rff":{"omega_u":[...],"phase_u":[...],"omega_v":[...],"phase_v":[...]},
///    "clusters":{"K":k,"assign":[...],"medoids":[...]}}
struct Checkpoint {
    ModelConfig model_config;
    Parameters params;
    Eigen::VectorXd rho;
    RFFBank bank;
    ClusterAssignment clusters;
    std::string config_hash;
    std::uint64_t seed = 0;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws SchemaError on a wrong format/version or inconsistent shapes.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace l2r
