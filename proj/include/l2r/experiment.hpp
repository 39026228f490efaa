#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "l2r/bilevel.hpp"
#include "l2r/gnn.hpp"
#include "l2r/graph.hpp"

namespace l2r {

enum class Method { backbone, l2r };
std::string_view to_string(Method method);

/// full: bi-level L2R; no_bilevel: W trained jointly with theta; no_decor: frozen uniform W.
enum class Ablation { full, no_bilevel, no_decor };
std::string_view to_string(Ablation ablation);
Ablation ablation_from_string(std::string_view name);

TrainConfig apply_ablation(TrainConfig config, Ablation ablation);
TrainConfig apply_method(TrainConfig config, Method method);

struct ExperimentSettings {
    SyntheticSpec data;
    ModelConfig model;
    TrainConfig train;
};

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 for fewer than two values
};
MeanStd mean_std(const std::vector<double>& values);

struct RunOutcome {
    std::uint64_t seed = 0;
    double test_acc = 0.0;
    double final_gap = 0.0;  // final-epoch val_pred_loss - train_loss
    WeightSummary weights;
    RunMetrics metrics;
};

/// Generates the dataset for `seed` (data.seed = seed) and trains with train.seed = seed.
RunOutcome run_once(const ExperimentSettings& settings, std::uint64_t seed);

struct SweepRow {
    double mu = 0.0;
    Method method = Method::backbone;
    std::vector<RunOutcome> runs;
    MeanStd accuracy;
    MeanStd w_median;
    MeanStd w_variance;
};

/// For every mu and method, trains on data biased with mu and tests on test_bias_ratio data.
std::vector<SweepRow> sweep_mu(const ExperimentSettings& settings, const std::vector<double>& mus,
                               const std::vector<std::uint64_t>& seeds, const std::vector<Method>& methods,
                               const std::function<void(const SweepRow&, const RunOutcome&)>& on_run = {});

SweepRow summarize_runs(double mu, Method method, std::vector<RunOutcome> runs);

}  // namespace l2r
