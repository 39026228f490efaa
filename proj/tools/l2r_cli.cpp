// l2r: data generation, training, evaluation and synthetic sweeps.
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "l2r/bilevel.hpp"
#include "l2r/checkpoint.hpp"
#include "l2r/config.hpp"
#include "l2r/errors.hpp"
#include "l2r/experiment.hpp"
#include "l2r/graph.hpp"

namespace fs = std::filesystem;
using namespace l2r;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
    std::vector<T> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        std::istringstream cell(item);
        T value{};
        cell >> value;
        if (cell.fail() || !cell.eof()) throw ValidationError(std::string("bad value '") + item + "' in " + what);
        out.push_back(value);
    }
    return out;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

struct Options {
    SyntheticSpec data;
    ModelConfig model;
    TrainConfig train;
    std::string backbone = "gcn";
    std::string layers = "32,16";
    std::string order = "first";
    std::string ablation = "full";
    std::string pairs = "cross";
    std::string alphas;
    std::uint64_t seed = 0;
    std::string seeds = "1,2,3,4,5";
    std::string mus = "0.6,0.7,0.8,0.9";
    std::string methods = "backbone,l2r";
    std::string ablations = "full,no-bilevel,no-decor";
    std::string data_dir;
    std::string checkpoint;
    std::string eval_data;
    std::string out = ".";
    bool quiet = false;
};

void add_data_options(CLI::App* app, Options& o) {
    app->add_option("--mu", o.data.bias_ratio, "Fraction of positive training graphs that also carry a star");
    app->add_option("--test-mu", o.data.test_bias_ratio, "Bias ratio of the test split");
    app->add_option("--n-train", o.data.n_train);
    app->add_option("--n-val", o.data.n_val);
    app->add_option("--n-test", o.data.n_test);
    app->add_option("--motif-min", o.data.motif_size_range.lo);
    app->add_option("--motif-max", o.data.motif_size_range.hi);
    app->add_option("--base-min", o.data.base_graph_size_range.lo);
    app->add_option("--base-max", o.data.base_graph_size_range.hi);
    app->add_option("--features", o.data.feature_dim, "Node feature width");
}

void add_model_options(CLI::App* app, Options& o) {
    app->add_option("--backbone", o.backbone)->check(CLI::IsMember({"gcn", "gin"}));
    app->add_option("--layers", o.layers, "Comma-separated layer widths; the last is the embedding width");
}

void add_train_options(CLI::App* app, Options& o) {
    app->add_option("--order", o.order)->check(CLI::IsMember({"first", "second", "joint"}));
    app->add_option("--clusters", o.train.clusters, "Variable cluster count K");
    app->add_option("--queues", o.train.queue_count, "Momentum queue count k");
    app->add_option("--alpha", o.train.alpha, "Momentum coefficient for every queue");
    app->add_option("--alphas", o.alphas, "Comma-separated per-queue momentum coefficients");
    app->add_option("--eps", o.train.eps, "Relative finite-difference scale of the second-order term");
    app->add_option("--eta-theta", o.train.eta_theta);
    app->add_option("--eta-w", o.train.eta_w);
    app->add_option("--batch", o.train.batch_size);
    app->add_option("--epochs", o.train.epochs);
    app->add_option("--recluster", o.train.recluster_period, "Epochs between re-clustering");
    app->add_option("--rff", o.train.rff_functions, "Random Fourier functions per side");
    app->add_option("--pairs", o.pairs, "Penalised variable pairs")->check(CLI::IsMember({"cross", "within"}));
    app->add_option("--divergence", o.train.divergence_threshold, "Abort when the batch loss exceeds this");
}

void finalize(Options& o) {
    o.model.backbone = backbone_from_string(o.backbone);
    o.model.input_dim = o.data.feature_dim;
    o.model.layer_dims = parse_list<int>(o.layers, "--layers");
    o.train.order = order_from_string(o.order);
    o.train.pair_selection = o.pairs == "cross" ? PairSelection::cross_cluster : PairSelection::within_cluster;
    if (!o.alphas.empty()) {
        o.train.alphas = parse_list<double>(o.alphas, "--alphas");
        o.train.queue_count = static_cast<int>(o.train.alphas.size());
    }
    o.train = apply_ablation(o.train, ablation_from_string(o.ablation));
    if (const char* env = std::getenv("L2R_SEED")) {
        try {
            std::size_t used = 0;
            o.seed = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument(env);
        } catch (const std::exception&) {
            throw ValidationError(std::string("L2R_SEED is not an unsigned integer: ") + env);
        }
    }
    o.data.seed = o.seed;
    o.train.seed = o.seed;
    o.data.validate();
    o.model.validate();
    o.train.validate();
}

fs::path prepare_out(const std::string& dir) {
    fs::path out(dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + out.string() + ": " + ec.message());
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
    if (!f) throw std::runtime_error("failed writing " + path.string());
}

nlohmann::json spec_json(const SyntheticSpec& s) {
    return {{"n_train", s.n_train},
            {"n_val", s.n_val},
            {"n_test", s.n_test},
            {"mu_bias", s.bias_ratio},
            {"test_mu", s.test_bias_ratio},
            {"motif_size", {s.motif_size_range.lo, s.motif_size_range.hi}},
            {"base_size", {s.base_graph_size_range.lo, s.base_graph_size_range.hi}},
            {"feature_dim", s.feature_dim},
            {"edge_probability", s.edge_probability},
            {"seed", s.seed}};
}

int cmd_gen_data(Options& o) {
    const fs::path out = prepare_out(o.out);
    const std::string hash = config_hash(canonical_config(o.data));
    const SyntheticSplits splits = generate_synthetic_dataset(o.data);
    save_dataset(splits.train, out / "train.jsonl");
    save_dataset(splits.val, out / "val.jsonl");
    save_dataset(splits.test, out / "test.jsonl");
    nlohmann::json manifest = {{"format", "l2r-dataset"},
                               {"version", 1},
                               {"config_hash", hash},
                               {"seed", o.seed},
                               {"spec", spec_json(o.data)},
                               {"files", {{"train", "train.jsonl"}, {"val", "val.jsonl"}, {"test", "test.jsonl"}}}};
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    if (!o.quiet) std::cout << "wrote " << splits.train.size() << "/" << splits.val.size() << "/" << splits.test.size()
                            << " graphs to " << out.string() << " (config " << hash << ", seed " << o.seed << ")\n";
    return 0;
}

GraphDataset load_split(const fs::path& path, Split split) {
    if (!fs::exists(path)) throw std::runtime_error("dataset not found: " + path.string());
    return load_dataset(path, split);
}

SyntheticSplits obtain_data(const Options& o) {
    if (o.data_dir.empty()) return generate_synthetic_dataset(o.data);
    const fs::path dir(o.data_dir);
    return {load_split(dir / "train.jsonl", Split::train), load_split(dir / "val.jsonl", Split::val),
            load_split(dir / "test.jsonl", Split::test)};
}

int cmd_train(Options& o) {
    const SyntheticSplits splits = obtain_data(o);
    if (!splits.train.empty()) o.model.input_dim = splits.train.graphs.front().feature_dim();
    const fs::path out = prepare_out(o.out);
    const std::string hash = config_hash(canonical_config(o.data, o.model, o.train));
    TrainResult result = train(o.train, o.model, splits.train, splits.val, splits.test);
    result.metrics.write_csv((out / "metrics.csv").string(), hash, o.seed);
    result.metrics.write_steps_csv((out / "steps.csv").string(), hash, o.seed);
    Checkpoint ck{o.model, result.model.parameters(), result.weights.rho(), result.bank, result.clusters, hash, o.seed};
    save_checkpoint(ck, out / "checkpoint.json");
    write_text(out / "clusters.json", result.clusters.to_json() + "\n");
    if (result.metrics.aborted) {
        std::cerr << "error: training aborted: " << result.metrics.abort_reason << '\n';
        return kExitRuntime;
    }
    if (!o.quiet && !result.metrics.epochs.empty()) {
        const EpochRecord& last = result.metrics.epochs.back();
        std::cout << "epochs " << result.metrics.epochs.size() << " train_loss " << num(last.train_loss)
                  << " val_pred_loss " << num(last.val_pred_loss) << " test_acc " << num(last.test_acc) << " w_var "
                  << num(last.weights.variance) << " (config " << hash << ", seed " << o.seed << ")\n";
    }
    return 0;
}

int cmd_eval(Options& o) {
    if (o.checkpoint.empty()) throw ValidationError("eval needs --checkpoint");
    if (o.eval_data.empty()) throw ValidationError("eval needs --data");
    if (!fs::exists(o.checkpoint)) throw std::runtime_error("checkpoint not found: " + o.checkpoint);
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    const GraphDataset data = load_split(o.eval_data, Split::test);
    const Model model(ck.model_config, ck.params);
    const EvalResult r = evaluate(model, data);
    nlohmann::json j = {{"config_hash", ck.config_hash},
                        {"seed", ck.seed},
                        {"count", r.count},
                        {"accuracy", r.accuracy},
                        {"class_accuracy", r.class_accuracy},
                        {"confusion", r.confusion}};
    std::cout << j.dump() << '\n';
    if (o.out != ".") write_text(prepare_out(o.out) / "eval.json", j.dump(2) + "\n");
    return 0;
}

std::string run_header(const std::string& hash) { return "# config_hash=" + hash + "\n"; }

std::string runs_row(std::string_view label, double mu, const RunOutcome& r) {
    return std::string(label) + "," + num(mu) + "," + std::to_string(r.seed) + "," + num(r.test_acc) + "," +
           num(r.final_gap) + "," + num(r.weights.min) + "," + num(r.weights.median) + "," + num(r.weights.max) + "," +
           num(r.weights.variance) + "\n";
}

int cmd_sweep_mu(Options& o) {
    const auto mus = parse_list<double>(o.mus, "--mus");
    auto seeds = parse_list<std::uint64_t>(o.seeds, "--seeds");
    if (std::getenv("L2R_SEED")) seeds = {o.seed};
    std::vector<Method> methods;
    for (const auto& m : parse_list<std::string>(o.methods, "--methods")) {
        if (m == "backbone") methods.push_back(Method::backbone);
        else if (m == "l2r") methods.push_back(Method::l2r);
        else throw ValidationError("unknown method '" + m + "'");
    }
    if (mus.empty()) throw ValidationError("--mus is empty");
    if (seeds.empty()) throw ValidationError("--seeds is empty");
    for (double mu : mus) {
        if (!(mu >= 0.0 && mu <= 1.0)) throw ValidationError("--mus values must lie in [0,1]");
    }
    const fs::path out = prepare_out(o.out);
    const std::string hash = config_hash(canonical_config(o.data, o.model, o.train) + "sweep.mus=" + o.mus +
                                         "\nsweep.methods=" + o.methods + "\n");
    ExperimentSettings settings{o.data, o.model, o.train};
    const auto rows = sweep_mu(settings, mus, seeds, methods, [&](const SweepRow& row, const RunOutcome& r) {
        if (!o.quiet) {
            std::cerr << "mu=" << num(row.mu) << " " << to_string(row.method) << " seed=" << r.seed
                      << " test_acc=" << num(r.test_acc) << '\n';
        }
    });
    std::string summary = run_header(hash) + "mu,method,seeds,acc_mean,acc_std,w_median_mean,w_var_mean\n";
    std::string runs = run_header(hash) + "method,mu,seed,test_acc,final_gap,w_min,w_med,w_max,w_var\n";
    for (const auto& row : rows) {
        summary += num(row.mu) + "," + std::string(to_string(row.method)) + "," + std::to_string(row.runs.size()) + "," +
                   num(row.accuracy.mean) + "," + num(row.accuracy.stddev) + "," + num(row.w_median.mean) + "," +
                   num(row.w_variance.mean) + "\n";
        for (const auto& r : row.runs) runs += runs_row(to_string(row.method), row.mu, r);
        if (!o.quiet) {
            std::cout << "mu=" << num(row.mu) << " " << to_string(row.method) << " acc " << num(row.accuracy.mean)
                      << " +- " << num(row.accuracy.stddev) << '\n';
        }
    }
    write_text(out / "summary.csv", summary);
    write_text(out / "runs.csv", runs);
    return 0;
}

int cmd_ablate(Options& o) {
    auto seeds = parse_list<std::uint64_t>(o.seeds, "--seeds");
    if (std::getenv("L2R_SEED")) seeds = {o.seed};
    if (seeds.empty()) throw ValidationError("--seeds is empty");
    std::vector<Ablation> ablations;
    for (const auto& a : parse_list<std::string>(o.ablations, "--ablations")) ablations.push_back(ablation_from_string(a));
    if (ablations.empty()) throw ValidationError("--ablations is empty");
    const fs::path out = prepare_out(o.out);
    const std::string hash =
        config_hash(canonical_config(o.data, o.model, o.train) + "ablate.variants=" + o.ablations + "\n");
    std::string summary = run_header(hash) + "ablation,seeds,acc_mean,acc_std,gap_mean,w_var_mean\n";
    std::string runs = run_header(hash) + "ablation,mu,seed,test_acc,final_gap,w_min,w_med,w_max,w_var\n";
    for (Ablation a : ablations) {
        ExperimentSettings settings{o.data, o.model, apply_ablation(o.train, a)};
        std::vector<RunOutcome> outcomes;
        for (auto seed : seeds) {
            outcomes.push_back(run_once(settings, seed));
            runs += runs_row(to_string(a), o.data.bias_ratio, outcomes.back());
        }
        std::vector<double> gaps;
        for (const auto& r : outcomes) gaps.push_back(r.final_gap);
        const SweepRow row = summarize_runs(o.data.bias_ratio, Method::l2r, outcomes);
        const MeanStd gap = mean_std(gaps);
        summary += std::string(to_string(a)) + "," + std::to_string(seeds.size()) + "," + num(row.accuracy.mean) + "," +
                   num(row.accuracy.stddev) + "," + num(gap.mean) + "," + num(row.w_variance.mean) + "\n";
        if (!o.quiet) {
            std::cout << to_string(a) << " acc " << num(row.accuracy.mean) << " +- " << num(row.accuracy.stddev)
                      << " gap " << num(gap.mean) << '\n';
        }
    }
    write_text(out / "summary.csv", summary);
    write_text(out / "runs.csv", runs);
    return 0;
}

// Moves "--config FILE" entries out of argv and splices the file's settings in
// right after the subcommand, so explicit flags (which come later) win.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::vector<std::string> file_args;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        std::string path;
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw ValidationError("--config needs a file");
            path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
            continue;
        }
        std::vector<std::string> more;
        try {
            more = read_config_args(path);
        } catch (const ParseError& e) {
            throw ValidationError("config " + path + ": " + e.what());
        }
        file_args.insert(file_args.end(), more.begin(), more.end());
    }
    if (!rest.empty() && !file_args.empty()) rest.insert(rest.begin() + 1, file_args.begin(), file_args.end());
    return rest;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learning-to-reweight graph classification on synthetic motif data"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");
    Options o;

    auto* gen = app.add_subcommand("gen-data", "Write train/val/test JSON-lines splits and a manifest");
    auto* trn = app.add_subcommand("train", "Train one model and write metrics, steps and a checkpoint");
    auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint on a JSON-lines dataset");
    auto* swp = app.add_subcommand("sweep-mu", "Backbone vs L2R across training bias ratios");
    auto* abl = app.add_subcommand("ablate", "Compare full, no-bilevel and no-decor variants");
    for (auto* sub : {gen, trn, evl, swp, abl}) {
        sub->add_option("--out", o.out, "Output directory");
        sub->add_flag("--quiet", o.quiet);
        sub->add_option("--config")->description("Flat key=value file; explicit flags override it");
    }
    for (auto* sub : {gen, trn}) sub->add_option("--seed", o.seed, "Seed (L2R_SEED overrides)");
    for (auto* sub : {gen, trn, swp, abl}) add_data_options(sub, o);
    for (auto* sub : {trn, swp, abl}) {
        add_model_options(sub, o);
        add_train_options(sub, o);
    }
    trn->add_option("--ablation", o.ablation)->check(CLI::IsMember({"full", "no-bilevel", "no-decor"}));
    trn->add_option("--data", o.data_dir, "Directory with train/val/test.jsonl (default: generate)");
    evl->add_option("--checkpoint", o.checkpoint)->required();
    evl->add_option("--data", o.eval_data, "JSON-lines dataset file")->required();
    for (auto* sub : {swp, abl}) sub->add_option("--seeds", o.seeds, "Comma-separated seeds");
    swp->add_option("--mus", o.mus, "Comma-separated training bias ratios");
    swp->add_option("--methods", o.methods, "Comma-separated subset of backbone,l2r");
    swp->add_option("--ablation", o.ablation)->check(CLI::IsMember({"full", "no-bilevel", "no-decor"}));
    abl->add_option("--ablations", o.ablations, "Comma-separated variants");

    try {
        std::vector<std::string> args = expand_config(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
        if (!evl->parsed()) finalize(o);
        if (gen->parsed()) return cmd_gen_data(o);
        if (trn->parsed()) return cmd_train(o);
        if (evl->parsed()) return cmd_eval(o);
        if (swp->parsed()) return cmd_sweep_mu(o);
        return cmd_ablate(o);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}
