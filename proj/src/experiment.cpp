#include "l2r/experiment.hpp"

#include <cmath>
#include <stdexcept>

namespace l2r {

std::string_view to_string(Method method) { return method == Method::backbone ? "backbone" : "l2r"; }

std::string_view to_string(Ablation ablation) {
    switch (ablation) {
        case Ablation::full: return "full";
        case Ablation::no_bilevel: return "no-bilevel";
        case Ablation::no_decor: return "no-decor";
    }
    return "unknown";
}

Ablation ablation_from_string(std::string_view name) {
    if (name == "full") return Ablation::full;
    if (name == "no-bilevel") return Ablation::no_bilevel;
    if (name == "no-decor") return Ablation::no_decor;
    throw std::invalid_argument("unknown ablation '" + std::string(name) + "'");
}

TrainConfig apply_ablation(TrainConfig config, Ablation ablation) {
    switch (ablation) {
        case Ablation::full: break;
        case Ablation::no_bilevel: config.order = Order::joint; break;
        case Ablation::no_decor: config.decorrelate = false; break;
    }
    return config;
}

TrainConfig apply_method(TrainConfig config, Method method) {
    if (method == Method::backbone) config.decorrelate = false;
    return config;
}

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd out;
    if (values.empty()) return out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

RunOutcome run_once(const ExperimentSettings& settings, std::uint64_t seed) {
    SyntheticSpec data = settings.data;
    data.seed = seed;
    TrainConfig train_config = settings.train;
    train_config.seed = seed;
    const SyntheticSplits splits = generate_synthetic_dataset(data);
    TrainResult result = train(train_config, settings.model, splits.train, splits.val, splits.test);
    RunOutcome out;
    out.seed = seed;
    out.weights = summarize_weights(result.weights.weights());
    if (!result.metrics.epochs.empty()) {
        const EpochRecord& last = result.metrics.epochs.back();
        out.test_acc = last.test_acc;
        out.final_gap = last.val_pred_loss - last.train_loss;
    }
    out.metrics = std::move(result.metrics);
    return out;
}

SweepRow summarize_runs(double mu, Method method, std::vector<RunOutcome> runs) {
    SweepRow row;
    row.mu = mu;
    row.method = method;
    std::vector<double> acc, med, var;
    for (const auto& r : runs) {
        acc.push_back(r.test_acc);
        med.push_back(r.weights.median);
        var.push_back(r.weights.variance);
    }
    row.accuracy = mean_std(acc);
    row.w_median = mean_std(med);
    row.w_variance = mean_std(var);
    row.runs = std::move(runs);
    return row;
}

std::vector<SweepRow> sweep_mu(const ExperimentSettings& settings, const std::vector<double>& mus,
                               const std::vector<std::uint64_t>& seeds, const std::vector<Method>& methods,
                               const std::function<void(const SweepRow&, const RunOutcome&)>& on_run) {
    if (mus.empty()) throw std::invalid_argument("sweep needs at least one mu value");
    if (seeds.empty()) throw std::invalid_argument("sweep needs at least one seed");
    if (methods.empty()) throw std::invalid_argument("sweep needs at least one method");
    for (double mu : mus) {
        if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("mu values must lie in [0,1]");
    }
    std::vector<SweepRow> rows;
    for (double mu : mus) {
        for (Method method : methods) {
            ExperimentSettings s = settings;
            s.data.bias_ratio = mu;
            s.train = apply_method(settings.train, method);
            SweepRow partial;
            partial.mu = mu;
            partial.method = method;
            std::vector<RunOutcome> runs;
            for (std::uint64_t seed : seeds) {
                runs.push_back(run_once(s, seed));
                if (on_run) on_run(partial, runs.back());
            }
            rows.push_back(summarize_runs(mu, method, std::move(runs)));
        }
    }
    return rows;
}

}  // namespace l2r
