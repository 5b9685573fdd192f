#include <cstdio>
#include <sstream>

#include "derain/app.hpp"

namespace derain::app {

ModelConfig model_config(const RunConfig& cfg) {
    ModelConfig m;
    m.base_channels = cfg.base_channels;
    m.encoder_depth = cfg.encoder_depth;
    m.msrb_per_level = cfg.msrb_per_level;
    m.use_multiscale = !cfg.no_multiscale;
    if (cfg.pool != "avg" && cfg.pool != "max") {
        throw std::invalid_argument("pool must be 'avg' or 'max', got '" + cfg.pool + "'");
    }
    m.pool = cfg.pool == "avg" ? PoolKind::Average : PoolKind::Max;
    m.ablation.topology = parse_topology(cfg.mode.empty() ? "m4" : cfg.mode);
    m.ablation.no_dilated_streams = cfg.no_dilated_streams;
    m.ablation.no_physical_loss = cfg.no_physical_loss;
    m.validate();
    return m;
}

LossWeights loss_weights(const RunConfig& cfg) {
    LossWeights w{cfg.alpha, cfg.beta, cfg.gamma};
    w.validate();
    return w;
}

LrSchedule schedule(const RunConfig& cfg) {
    LrSchedule s;
    s.initial = cfg.lr;
    return s.with_total(cfg.epochs);
}

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"' || ch == '\\') out += '\\';
        out += ch;
    }
    return out + "\"";
}

const char* flag(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string to_ini(const RunConfig& c) {
    std::ostringstream os;
    os << "seed=" << c.seed << '\n'
       << "mode=" << quoted(c.mode) << '\n'
       << "no-multiscale=" << flag(c.no_multiscale) << '\n'
       << "no-dilated-streams=" << flag(c.no_dilated_streams) << '\n'
       << "no-physical-loss=" << flag(c.no_physical_loss) << '\n'
       << "base-channels=" << c.base_channels << '\n'
       << "encoder-depth=" << c.encoder_depth << '\n'
       << "msrb-per-level=" << c.msrb_per_level << '\n'
       << "pool=" << quoted(c.pool) << '\n'
       << "alpha=" << num(c.alpha) << '\n'
       << "beta=" << num(c.beta) << '\n'
       << "gamma=" << num(c.gamma) << '\n'
       << "lr=" << num(c.lr) << '\n'
       << "epochs=" << c.epochs << '\n'
       << "batch=" << c.batch << '\n'
       << "crop=" << c.crop << '\n'
       << "checkpoint-every=" << c.checkpoint_every << '\n'
       << "dataset=" << quoted(c.dataset) << '\n'
       << "synthetic=" << flag(c.synthetic) << '\n'
       << "synthetic-count=" << c.synthetic_count << '\n'
       << "synthetic-size=" << c.synthetic_size << '\n'
       << "holdout-count=" << c.holdout_count << '\n'
       << "rain-streaks-min=" << num(c.rain.streak_count.lo) << '\n'
       << "rain-streaks-max=" << num(c.rain.streak_count.hi) << '\n'
       << "rain-length-min=" << num(c.rain.length.lo) << '\n'
       << "rain-length-max=" << num(c.rain.length.hi) << '\n'
       << "rain-angle-min=" << num(c.rain.angle.lo) << '\n'
       << "rain-angle-max=" << num(c.rain.angle.hi) << '\n'
       << "rain-angle-jitter=" << num(c.rain.angle_jitter) << '\n'
       << "rain-width-min=" << num(c.rain.width.lo) << '\n'
       << "rain-width-max=" << num(c.rain.width.hi) << '\n'
       << "rain-intensity-min=" << num(c.rain.intensity.lo) << '\n'
       << "rain-intensity-max=" << num(c.rain.intensity.hi) << '\n'
       << "rain-blur=" << num(c.rain.blur_sigma) << '\n'
       << "out=" << quoted(c.out) << '\n'
       << "checkpoint=" << quoted(c.checkpoint) << '\n'
       << "dump-intermediates=" << flag(c.dump_intermediates) << '\n'
       << "derained=" << quoted(c.derained) << '\n'
       << "ground-truth=" << quoted(c.ground_truth) << '\n'
       << "rainy=" << quoted(c.rainy) << '\n';
    if (!c.inputs.empty()) {
        os << "inputs=[";
        for (std::size_t i = 0; i < c.inputs.size(); ++i) os << (i ? "," : "") << quoted(c.inputs[i]);
        os << "]\n";
    }
    return os.str();
}

}  // namespace derain::app
