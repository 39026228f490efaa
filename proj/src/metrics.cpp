#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "l2r/bilevel.hpp"

namespace l2r {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::ofstream open_for_write(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

}  // namespace

void RunMetrics::write_csv(const std::string& path, const std::string& config_hash, std::uint64_t seed) const {
    auto out = open_for_write(path);
    out << "# config_hash=" << config_hash << ",seed=" << seed;
    if (aborted) out << ",aborted=" << abort_reason;
    out << '\n' << kMetricsHeader << '\n';
    for (const auto& e : epochs) {
        out << e.epoch << ',' << num(e.train_loss) << ',' << num(e.val_decor_loss) << ',' << num(e.val_pred_loss) << ','
            << num(e.test_acc) << ',' << num(e.weights.min) << ',' << num(e.weights.median) << ','
            << num(e.weights.max) << ',' << num(e.weights.variance) << ',' << num(e.step_ms) << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

void RunMetrics::write_steps_csv(const std::string& path, const std::string& config_hash, std::uint64_t seed) const {
    auto out = open_for_write(path);
    out << "# config_hash=" << config_hash << ",seed=" << seed << '\n';
    out << "step,epoch,train_loss,decor_loss,direct_norm,correction_norm,update_norm,fell_back,applied\n";
    for (const auto& s : steps) {
        const auto& w = s.weight_step;
        out << s.step << ',' << s.epoch << ',' << num(s.train_loss) << ',' << num(w.decor_loss) << ','
            << num(w.direct_norm) << ',' << num(w.correction_norm) << ',' << num(w.update_norm) << ','
            << (w.fell_back ? 1 : 0) << ',' << (w.applied ? 1 : 0) << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace l2r
