// Command-line entry point: train, derain, eval and ablate.
#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "derain/app.hpp"

namespace {

using derain::app::RunConfig;

std::string shortest(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// CLI11 parses reals through long double, which can round twice; strtod rounds once, so a
// value echoed into resolved_config.ini reads back as the same double.
CLI::Option* add_real(CLI::App& app, const std::string& name, double& target,
                      const std::string& help = "") {
    return app
        .add_option_function<std::string>(
            name,
            [&target, name](const std::string& text) {
                char* end = nullptr;
                errno = 0;
                const double v = std::strtod(text.c_str(), &end);
                if (end != text.c_str() + text.size() || errno == ERANGE || text.empty()) {
                    throw CLI::ValidationError(name, "not a real number: " + text);
                }
                target = v;
            },
            help)
        ->type_name("FLOAT")
        ->default_str(shortest(target));
}

void add_range(CLI::App& app, const std::string& key, derain::Range& r, const std::string& what) {
    add_real(app, "--" + key + "-min", r.lo, "lower bound of the " + what);
    add_real(app, "--" + key + "-max", r.hi, "upper bound of the " + what);
}

void add_options(CLI::App& app, RunConfig& c) {
    app.add_option("--seed", c.seed, "seed of initialisation, data order and synthesis")
        ->capture_default_str();
    app.add_option("--mode", c.mode, "topology m1..m4 (train default m4; derain checks it)")
        ->check(CLI::IsMember({"", "m1", "m2", "m3", "m4"}));
    app.add_flag("--no-multiscale", c.no_multiscale, "single-scale residual blocks (W/O rows)");
    app.add_flag("--no-dilated-streams", c.no_dilated_streams, "plain convs in the guide head (R1)");
    app.add_flag("--no-physical-loss", c.no_physical_loss, "drop the O = B + R term (R2)");
    app.add_option("--base-channels", c.base_channels)->capture_default_str();
    app.add_option("--encoder-depth", c.encoder_depth)->capture_default_str();
    app.add_option("--msrb-per-level", c.msrb_per_level)->capture_default_str();
    app.add_option("--pool", c.pool, "pooling inside the multi-scale block")
        ->check(CLI::IsMember({"avg", "max"}))
        ->capture_default_str();

    add_real(app, "--alpha", c.alpha, "weight of the rain-streak term");
    add_real(app, "--beta", c.beta, "weight of the rain-free term");
    add_real(app, "--gamma", c.gamma, "weight of the physical term");
    add_real(app, "--lr", c.lr, "initial learning rate");
    app.add_option("--epochs", c.epochs, "epochs; decay milestones sit at 60% and 80%")
        ->capture_default_str();
    app.add_option("--batch", c.batch)->capture_default_str();
    app.add_option("--crop", c.crop, "training crop size (0 = whole images)")->capture_default_str();
    app.add_option("--checkpoint-every", c.checkpoint_every, "epochs between checkpoints (0 = last only)")
        ->capture_default_str();

    app.add_option("--dataset", c.dataset, "directory with rain/ and norain/ PNGs");
    app.add_flag("--synthetic", c.synthetic, "train on the seeded synthetic set");
    app.add_option("--synthetic-count", c.synthetic_count)->capture_default_str();
    app.add_option("--synthetic-size", c.synthetic_size)->capture_default_str();
    app.add_option("--holdout-count", c.holdout_count, "held-out images for ablate")
        ->capture_default_str();
    add_range(app, "rain-streaks", c.rain.streak_count, "streak count");
    add_range(app, "rain-length", c.rain.length, "streak length in pixels");
    add_range(app, "rain-angle", c.rain.angle, "rain direction in degrees");
    add_real(app, "--rain-angle-jitter", c.rain.angle_jitter);
    add_range(app, "rain-width", c.rain.width, "streak width in pixels");
    add_range(app, "rain-intensity", c.rain.intensity, "streak intensity");
    add_real(app, "--rain-blur", c.rain.blur_sigma, "Gaussian blur sigma of the streak map");

    app.add_option("--out", c.out, "output directory")->capture_default_str();
    app.add_option("--checkpoint", c.checkpoint, "checkpoint file for derain");
    app.add_flag("--dump-intermediates", c.dump_intermediates, "also write <stem>_rain / <stem>_free");
    app.add_option("--derained", c.derained, "eval: directory of derained PNGs");
    app.add_option("--ground-truth", c.ground_truth, "eval: directory of clean PNGs");
    app.add_option("--rainy", c.rainy, "eval: directory of rainy inputs for physical residuals");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Physical-model-guided image deraining.\n"
        "Commands: train, derain <images|dirs...>, eval, ablate",
        "derain"};
    // A repeated flag takes its last value, as a flag given after --config overrides the file.
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    RunConfig cfg;
    std::string command;
    app.add_option("command", command, "train | derain | eval | ablate")
        ->required()
        ->check(CLI::IsMember({"train", "derain", "eval", "ablate"}));
    app.add_option("inputs", cfg.inputs, "derain: input PNG files or directories");
    app.set_config("--config", "", "flat key = value file using the long flag names");
    add_options(app, cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (command == "train") {
            const auto res = derain::app::cmd_train(cfg);
            std::cout << "trained " << res.epochs.size() << " epochs; final total loss "
                      << derain::format_metric(res.epochs.back().loss.total) << "\n"
                      << "checkpoint: " << res.checkpoint.string() << "\n"
                      << "log: " << res.log.string() << "\n";
        } else if (command == "derain") {
            for (const auto& p : derain::app::cmd_derain(cfg)) std::cout << p.string() << "\n";
        } else if (command == "eval") {
            derain::app::cmd_eval(cfg, std::cout);
        } else {
            derain::app::cmd_ablate(cfg, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "derain " << command << ": error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
