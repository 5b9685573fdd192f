#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "derain/app.hpp"
#include "derain/image_io.hpp"
#include "derain/rng.hpp"

namespace derain::app {

namespace fs = std::filesystem;

namespace {

void prepare_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create output directory " + dir.string());
    }
    const fs::path probe = dir / ".write_probe";
    {
        std::ofstream os(probe);
        if (!os) throw IoError("output directory " + dir.string() + " is not writable");
    }
    fs::remove(probe, ec);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
}

std::vector<fs::path> png_files(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".png") out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void check_crop(const RunConfig& cfg, const ModelConfig& model,
                const std::vector<RainPair>& data) {
    const std::int64_t m = model.spatial_multiple();
    if (cfg.batch <= 0) throw std::invalid_argument("batch must be positive");
    if (cfg.epochs <= 0) throw std::invalid_argument("epochs must be positive");
    if (cfg.crop < 0) throw std::invalid_argument("crop must be nonnegative");
    if (cfg.crop > 0) {
        if (cfg.crop % m != 0) {
            throw std::invalid_argument("crop " + std::to_string(cfg.crop) +
                                        " must be a multiple of " + std::to_string(m));
        }
        for (const auto& p : data) {
            if (p.o.shape().h < cfg.crop || p.o.shape().w < cfg.crop) {
                throw std::invalid_argument("crop " + std::to_string(cfg.crop) +
                                            " exceeds training image " + p.o.shape().str());
            }
        }
        return;
    }
    const Shape& s = data.front().o.shape();
    for (const auto& p : data) {
        if (p.o.shape() != s) {
            throw std::invalid_argument("crop 0 needs equally sized training images");
        }
    }
    if (s.h % m != 0 || s.w % m != 0) {
        throw std::invalid_argument("crop 0 needs image sizes that are multiples of " +
                                    std::to_string(m));
    }
}

}  // namespace

std::vector<RainPair> resolve_training_data(const RunConfig& cfg) {
    if (!cfg.dataset.empty()) return load_pairs(dataset_scan(cfg.dataset));
    if (cfg.synthetic) {
        if (cfg.synthetic_count <= 0 || cfg.synthetic_size <= 0) {
            throw std::invalid_argument("synthetic-count and synthetic-size must be positive");
        }
        return make_synthetic_set(static_cast<std::size_t>(cfg.synthetic_count), cfg.synthetic_size,
                                  cfg.rain, derive_seed(cfg.seed, 100));
    }
    throw std::invalid_argument("no training data: pass --dataset <dir> or --synthetic");
}

std::vector<RainPair> synthetic_holdout(const RunConfig& cfg) {
    return make_synthetic_set(static_cast<std::size_t>(std::max<std::int64_t>(cfg.holdout_count, 1)),
                              cfg.synthetic_size, cfg.rain, derive_seed(cfg.seed, 200));
}

TrainResult train_on(const RunConfig& cfg, const std::vector<RainPair>& data,
                     const fs::path& out_dir) {
    if (data.empty()) throw std::invalid_argument("training data is empty");
    const ModelConfig model = model_config(cfg);
    check_crop(cfg, model, data);
    prepare_out_dir(out_dir);
    write_text(out_dir / "resolved_config.ini", to_ini(cfg));

    Trainer trainer(model, loss_weights(cfg), cfg.seed);
    const LossWeights applied = effective_weights(trainer.weights(), model.ablation);
    const LrSchedule sched = schedule(cfg);

    TrainResult result;
    result.log = out_dir / "train_log.csv";
    result.checkpoint = out_dir / "checkpoint.ckpt";
    std::ofstream log(result.log, std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot write " + result.log.string());
    write_log_header(log);

    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochLog row;
        row.epoch = epoch;
        row.lr = lr_at(sched, epoch);
        BatchStream stream(data, static_cast<std::size_t>(cfg.batch), cfg.crop, cfg.seed, epoch);
        double guide = 0, rain = 0, rain_free = 0, physical = 0, seen = 0;
        while (auto batch = stream.next()) {
            const double n = static_cast<double>(batch->o.shape().n);
            const LossBreakdown bd = trainer.step(*batch, row.lr);
            guide += n * bd.guide;
            rain += n * bd.rain;
            rain_free += n * bd.rain_free;
            physical += n * bd.physical;
            seen += n;
            row.loss.has_guide = bd.has_guide;
            row.loss.has_rain = bd.has_rain;
            row.loss.has_rain_free = bd.has_rain_free;
            row.loss.has_physical = bd.has_physical;
        }
        row.loss.guide = guide / seen;
        row.loss.rain = rain / seen;
        row.loss.rain_free = rain_free / seen;
        row.loss.physical = physical / seen;
        row.loss.total = combine_losses(row.loss.guide, row.loss.rain, row.loss.rain_free,
                                        row.loss.physical, applied);
        write_log_row(log, row);
        log.flush();
        result.epochs.push_back(row);
        const std::int64_t done = epoch + 1;
        if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.epochs) {
            save_checkpoint(trainer.checkpoint(done),
                            out_dir / ("checkpoint_e" + std::to_string(done) + ".ckpt"));
        }
    }
    result.state = trainer.checkpoint(cfg.epochs);
    save_checkpoint(result.state, result.checkpoint);
    return result;
}

TrainResult cmd_train(const RunConfig& cfg) {
    model_config(cfg);
    loss_weights(cfg);
    const std::vector<RainPair> data = resolve_training_data(cfg);
    return train_on(cfg, data, cfg.out);
}

std::vector<fs::path> cmd_derain(const RunConfig& cfg) {
    if (cfg.checkpoint.empty()) throw std::invalid_argument("derain needs --checkpoint <file>");
    if (cfg.inputs.empty()) throw std::invalid_argument("derain needs at least one input image");
    const Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
    const AblationMode& have = ckpt.config.ablation;
    if (!cfg.mode.empty() && parse_topology(cfg.mode) != have.topology) {
        throw std::invalid_argument("checkpoint " + cfg.checkpoint + " was trained in mode " +
                                    topology_name(have.topology) + ", not " + cfg.mode);
    }
    if (cfg.no_multiscale && ckpt.config.use_multiscale) {
        throw std::invalid_argument("checkpoint " + cfg.checkpoint +
                                    " uses multi-scale blocks but --no-multiscale was given");
    }
    if (cfg.no_dilated_streams && !have.no_dilated_streams) {
        throw std::invalid_argument("checkpoint " + cfg.checkpoint +
                                    " uses dilated streams but --no-dilated-streams was given");
    }
    const Trainer trainer(ckpt, loss_weights(cfg));

    std::vector<fs::path> images;
    for (const std::string& in : cfg.inputs) {
        if (fs::is_directory(in)) {
            for (const auto& p : png_files(in)) images.push_back(p);
        } else {
            images.emplace_back(in);
        }
    }
    const fs::path out_dir = cfg.out;
    prepare_out_dir(out_dir);
    write_text(out_dir / "resolved_config.ini", to_ini(cfg));
    std::vector<fs::path> written;
    for (const fs::path& path : images) {
        const std::string stem = path.stem().string();
        const fs::path target = out_dir / (stem + ".png");
        if (fs::exists(target) && fs::equivalent(target, path)) {
            throw std::invalid_argument("refusing to overwrite input " + path.string());
        }
        const InferenceResult res = trainer.infer(load_png(path));
        save_png(res.final, target);
        written.push_back(target);
        if (cfg.dump_intermediates) {
            if (res.rain_hat) {
                save_png(*res.rain_hat, out_dir / (stem + "_rain.png"));
                written.push_back(out_dir / (stem + "_rain.png"));
            }
            if (res.free_hat) {
                save_png(*res.free_hat, out_dir / (stem + "_free.png"));
                written.push_back(out_dir / (stem + "_free.png"));
            }
        }
    }
    return written;
}

MetricReport cmd_eval(const RunConfig& cfg, std::ostream& table) {
    if (cfg.derained.empty() || cfg.ground_truth.empty()) {
        throw std::invalid_argument("eval needs --derained <dir> and --ground-truth <dir>");
    }
    for (const std::string& d : {cfg.derained, cfg.ground_truth}) {
        if (!fs::is_directory(d)) throw IoError("not a directory: " + d);
    }
    std::set<std::string> truth, derained, intermediates;
    for (const auto& p : png_files(cfg.ground_truth)) truth.insert(p.filename().string());
    std::set<std::string> all;
    for (const auto& p : png_files(cfg.derained)) all.insert(p.filename().string());
    for (const auto& name : all) {
        bool dump = false;
        for (const char* suffix : {"_rain.png", "_free.png"}) {
            const std::string s = suffix;
            if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0 &&
                all.count(name.substr(0, name.size() - s.size()) + ".png") &&
                !truth.count(name)) {
                dump = true;
            }
        }
        (dump ? intermediates : derained).insert(name);
    }
    std::string offenders;
    for (const auto& n : derained) {
        if (!truth.count(n)) offenders += " " + n + " (no ground truth)";
    }
    for (const auto& n : truth) {
        if (!derained.count(n)) offenders += " " + n + " (not derained)";
    }
    if (!offenders.empty()) throw IoError("unmatched files:" + offenders);
    if (truth.empty()) throw IoError("no PNG files in " + cfg.ground_truth);

    MetricReport report;
    std::ostringstream physical;
    bool have_physical = false;
    physical << "image,mean_abs_residual,max_abs_residual\n";
    for (const auto& name : truth) {
        const Tensor<float> out = load_png(fs::path(cfg.derained) / name);
        const Tensor<float> gt = load_png(fs::path(cfg.ground_truth) / name);
        if (out.shape() != gt.shape()) {
            throw IoError("size mismatch for " + name + ": " + out.shape().str() + " vs " +
                          gt.shape().str());
        }
        const std::string stem = fs::path(name).stem().string();
        report.add(stem, psnr(out, gt), ssim(out, gt));

        const fs::path rain = fs::path(cfg.derained) / (stem + "_rain.png");
        const fs::path free = fs::path(cfg.derained) / (stem + "_free.png");
        if (!cfg.rainy.empty() && fs::exists(rain) && fs::exists(free)) {
            const Tensor<float> map = physical_residual_map(load_png(free), load_png(rain),
                                                            load_png(fs::path(cfg.rainy) / name));
            double sum = 0, worst = 0;
            for (std::int64_t i = 0; i < map.numel(); ++i) {
                sum += map[i];
                worst = std::max(worst, static_cast<double>(map[i]));
            }
            physical << stem << ',' << format_metric(sum / static_cast<double>(map.numel())) << ','
                     << format_metric(worst) << '\n';
            have_physical = true;
        }
    }
    report.finalize();
    report.write_csv(table);
    if (!cfg.out.empty()) {
        prepare_out_dir(cfg.out);
        std::ofstream os(fs::path(cfg.out) / "eval.csv", std::ios::binary | std::ios::trunc);
        report.write_csv(os);
        if (have_physical) write_text(fs::path(cfg.out) / "physical_residual.csv", physical.str());
    }
    return report;
}

namespace {

std::string fixed(double v, int digits) {
    if (std::isinf(v)) return "Inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

const AblationEntry* find_entry(const std::vector<AblationEntry>& entries, const std::string& label) {
    for (const auto& e : entries) {
        if (e.label == label) return &e;
    }
    return nullptr;
}

std::string render_tables(const std::vector<AblationEntry>& entries) {
    std::ostringstream os;
    os << "Table 2: multi-scale (W) vs single-scale (W/O) blocks per topology\n"
       << "(held-out PSNR dB / SSIM; train L1 = mean |final - B| on the training set)\n\n"
       << "|     | Metric   | M_1 | M_2 | M_3 | M_4 |\n"
       << "|-----|----------|-----|-----|-----|-----|\n";
    for (const char* row : {"W", "W/O"}) {
        for (const char* metric : {"PSNR", "SSIM", "train L1"}) {
            os << "| " << row << " | " << metric << " |";
            for (const char* col : {"M1", "M2", "M3", "M4"}) {
                const AblationEntry* e = find_entry(entries, std::string(col) + "/" + row);
                if (!e) {
                    os << " - |";
                } else if (std::string(metric) == "PSNR") {
                    os << ' ' << fixed(e->psnr, 2) << " |";
                } else if (std::string(metric) == "SSIM") {
                    os << ' ' << fixed(e->ssim, 4) << " |";
                } else {
                    os << ' ' << fixed(e->train_l1, 5) << " |";
                }
            }
            os << '\n';
        }
    }
    os << "\nTable 3: dilated streams and physical constraint\n\n"
       << "| Metric   | R_1 | R_2 | R_3 |\n"
       << "|----------|-----|-----|-----|\n";
    for (const char* metric : {"PSNR", "SSIM", "train L1"}) {
        os << "| " << metric << " |";
        for (const char* col : {"R1", "R2", "R3"}) {
            const AblationEntry* e = find_entry(entries, col);
            if (!e) {
                os << " - |";
            } else if (std::string(metric) == "PSNR") {
                os << ' ' << fixed(e->psnr, 2) << " |";
            } else if (std::string(metric) == "SSIM") {
                os << ' ' << fixed(e->ssim, 4) << " |";
            } else {
                os << ' ' << fixed(e->train_l1, 5) << " |";
            }
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace

AblationResult cmd_ablate(const RunConfig& cfg, std::ostream& table) {
    RunConfig base = cfg;
    std::vector<RainPair> train;
    std::vector<RainPair> holdout;
    if (!cfg.dataset.empty()) {
        std::vector<RainPair> all = resolve_training_data(cfg);
        const auto keep = static_cast<std::size_t>(
            std::clamp<std::int64_t>(cfg.holdout_count, 1, static_cast<std::int64_t>(all.size()) - 1));
        holdout.assign(all.end() - static_cast<std::ptrdiff_t>(keep), all.end());
        all.resize(all.size() - keep);
        train = std::move(all);
    } else {
        base.synthetic = true;
        train = resolve_training_data(base);
        holdout = synthetic_holdout(base);
    }

    struct Variant {
        std::string label, table, column, row, mode;
        bool no_multiscale, no_dilated, no_physical;
    };
    std::vector<Variant> variants;
    for (const char* row : {"W", "W/O"}) {
        for (int m = 1; m <= 4; ++m) {
            const std::string mode = "m" + std::to_string(m);
            variants.push_back({"M" + std::to_string(m) + "/" + row, "2", "M_" + std::to_string(m),
                                row, mode, std::string(row) == "W/O", false, false});
        }
    }
    variants.push_back({"R1", "3", "R_1", "", "m4", false, true, false});
    variants.push_back({"R2", "3", "R_2", "", "m4", false, false, true});
    variants.push_back({"R3", "3", "R_3", "", "m4", false, false, false});

    prepare_out_dir(cfg.out);
    write_text(fs::path(cfg.out) / "resolved_config.ini", to_ini(base));
    AblationResult result;
    for (const Variant& v : variants) {
        RunConfig run = base;
        run.mode = v.mode;
        run.no_multiscale = v.no_multiscale;
        run.no_dilated_streams = v.no_dilated;
        run.no_physical_loss = v.no_physical;
        std::string dir = v.label;
        std::replace(dir.begin(), dir.end(), '/', '_');
        const TrainResult trained = train_on(run, train, fs::path(cfg.out) / dir);
        const Trainer model(trained.state, loss_weights(run));

        AblationEntry entry{v.label, v.table, v.column, v.row, model.net().config(), 0, 0, 0,
                            trained.epochs};
        for (const RainPair& p : holdout) {
            Tensor<float> out = model.infer(p.o).final;
            for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(out[i], 0.0f, 1.0f);
            entry.psnr += psnr(out, p.b);
            entry.ssim += ssim(out, p.b);
        }
        entry.psnr /= static_cast<double>(holdout.size());
        entry.ssim /= static_cast<double>(holdout.size());
        for (const RainPair& p : train) {
            const Tensor<float> out = model.infer(p.o).final;
            double acc = 0;
            for (std::int64_t i = 0; i < out.numel(); ++i) acc += std::abs(out[i] - p.b[i]);
            entry.train_l1 += acc / static_cast<double>(out.numel());
        }
        entry.train_l1 /= static_cast<double>(train.size());
        result.entries.push_back(std::move(entry));
    }

    result.tables = render_tables(result.entries);
    table << result.tables;
    write_text(fs::path(cfg.out) / "ablation.md", result.tables);
    std::ostringstream csv;
    csv << "label,table,column,row,psnr,ssim,train_l1\n";
    for (const auto& e : result.entries) {
        csv << e.label << ',' << e.table << ',' << e.column << ',' << e.row << ','
            << format_metric(e.psnr) << ',' << format_metric(e.ssim) << ','
            << format_metric(e.train_l1) << '\n';
    }
    write_text(fs::path(cfg.out) / "ablation.csv", csv.str());
    return result;
}

}  // namespace derain::app
