#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "derain/app.hpp"
#include "derain/image_io.hpp"

using namespace derain;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("derain_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun cli(const std::string& args, const fs::path& dir) {
    const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string("\"") + DERAIN_CLI_PATH + "\" " + args + " > \"" +
                            out.string() + "\" 2> \"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

const std::string kSmall =
    " --synthetic --synthetic-count 3 --synthetic-size 32 --base-channels 4 --encoder-depth 2 "
    "--batch 2 --crop 16";

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
    const fs::path dir = temp_dir("ckpt");
    ModelConfig cfg;
    cfg.base_channels = 4;
    cfg.encoder_depth = 2;
    cfg.ablation.topology = Topology::M3;
    cfg.pool = PoolKind::Max;
    app::Trainer trainer(cfg, LossWeights{}, 5);
    const RainPair pr = make_synthetic_set(1, 16, RainParams{}, 1).front();
    trainer.step(app::single_batch(pr), 1e-3);
    const Checkpoint ck = trainer.checkpoint(3);
    save_checkpoint(ck, dir / "a.ckpt");
    const Checkpoint back = load_checkpoint(dir / "a.ckpt");
    EXPECT_EQ(back.config, cfg);
    EXPECT_EQ(back.epoch, 3);
    EXPECT_EQ(back.adam.step, 1);
    ASSERT_EQ(back.params.size(), ck.params.size());
    for (const auto& p : ck.params) {
        EXPECT_EQ(back.params.get(p->name).value, p->value);
        EXPECT_EQ(back.params.get(p->name).m, p->m);
        EXPECT_EQ(back.params.get(p->name).v, p->v);
    }
    save_checkpoint(back, dir / "b.ckpt");
    EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
    EXPECT_EQ(model_config_from_json(model_config_json(cfg)), cfg);

    std::string bytes = slurp(dir / "a.ckpt");
    std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 10);
    EXPECT_THROW(load_checkpoint(dir / "trunc.ckpt"), IoError);
    std::ofstream(dir / "junk.ckpt", std::ios::binary) << "hello";
    EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), IoError);
    fs::remove_all(dir);
}

TEST(Cli, TrainWritesLogCheckpointAndConfig) {
    const fs::path dir = temp_dir("train");
    const CliRun r = cli("train --epochs 1 --seed 7" + kSmall + " --out \"" + (dir / "o").string() + "\"", dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "o" / "checkpoint.ckpt"));
    EXPECT_TRUE(fs::exists(dir / "o" / "resolved_config.ini"));
    const auto rows = csv_rows(slurp(dir / "o" / "train_log.csv"));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"epoch", "lr", "guide", "rain", "rain_free", "physical", "total"}));
    fs::remove_all(dir);
}

TEST(Cli, LogTotalsUsePaperWeights) {
    const fs::path dir = temp_dir("weights");
    const CliRun r = cli("train --epochs 4" + kSmall + " --out \"" + (dir / "o").string() + "\"", dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = csv_rows(slurp(dir / "o" / "train_log.csv"));
    ASSERT_EQ(rows.size(), 5u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double g = std::stod(rows[i][2]), ra = std::stod(rows[i][3]), f = std::stod(rows[i][4]),
                     p = std::stod(rows[i][5]), t = std::stod(rows[i][6]);
        EXPECT_EQ(t, g + 0.5 * ra + 0.5 * f + 0.001 * p);
    }
    fs::remove_all(dir);
}

TEST(Cli, EchoedConfigReproducesTheRun) {
    const fs::path dir = temp_dir("replay");
    ASSERT_EQ(cli("train --epochs 2 --seed 3 --lr 0.0007 --rain-blur 0.45" + kSmall + " --out \"" +
                      (dir / "a").string() + "\"",
                  dir)
                  .code,
              0);
    const CliRun r = cli("train --config \"" + (dir / "a" / "resolved_config.ini").string() +
                          "\" --out \"" + (dir / "b").string() + "\"",
                      dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(dir / "a" / "checkpoint.ckpt"), slurp(dir / "b" / "checkpoint.ckpt"));
    EXPECT_EQ(slurp(dir / "a" / "train_log.csv"), slurp(dir / "b" / "train_log.csv"));
    // Flags override values from the file.
    ASSERT_EQ(cli("train --config \"" + (dir / "a" / "resolved_config.ini").string() +
                      "\" --epochs 1 --out \"" + (dir / "c").string() + "\"",
                  dir)
                  .code,
              0);
    EXPECT_EQ(csv_rows(slurp(dir / "c" / "train_log.csv")).size(), 2u);
    fs::remove_all(dir);
}

TEST(Cli, FailuresExitNonzeroWithOneLine) {
    const fs::path dir = temp_dir("fail");
    CliRun r = cli("train --epochs 1 --out \"" + (dir / "o").string() + "\"", dir);  // no data source
    EXPECT_NE(r.code, 0);
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
    EXPECT_FALSE(fs::exists(dir / "o" / "train_log.csv"));

    std::ofstream(dir / "file") << "x";
    r = cli("train --epochs 1" + kSmall + " --out \"" + (dir / "file" / "sub").string() + "\"", dir);
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("output directory"), std::string::npos) << r.err;

    r = cli("train --epochs 1" + kSmall + " --crop 12 --out \"" + (dir / "o").string() + "\"", dir);
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("multiple of 8"), std::string::npos) << r.err;

    r = cli("frobnicate", dir);
    EXPECT_NE(r.code, 0);
    fs::remove_all(dir);
}

TEST(Cli, DerainHandlesOddSizesModesAndDumps) {
    const fs::path dir = temp_dir("derain");
    ASSERT_EQ(cli("train --epochs 1" + kSmall + " --out \"" + (dir / "m").string() + "\"", dir).code, 0);
    const Tensor<float> img = make_synthetic_set(1, 64, RainParams{}, 4).front().o.crop(0, 0, 33, 47);
    fs::create_directories(dir / "in");
    save_png(img, dir / "in" / "odd.png");
    const std::string ck = " --checkpoint \"" + (dir / "m" / "checkpoint.ckpt").string() + "\"";

    CliRun r = cli("derain \"" + (dir / "in" / "odd.png").string() + "\"" + ck + " --dump-intermediates --out \"" +
                    (dir / "out").string() + "\"",
                dir);
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"odd.png", "odd_rain.png", "odd_free.png"}) {
        ASSERT_TRUE(fs::exists(dir / "out" / f)) << f;
        EXPECT_EQ(load_png(dir / "out" / f).shape(), (Shape{1, 3, 33, 47}));
    }

    r = cli("derain \"" + (dir / "in").string() + "\"" + ck + " --mode m2 --out \"" + (dir / "o2").string() + "\"", dir);
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("mode m4"), std::string::npos) << r.err;
    fs::remove_all(dir);
}

TEST(Cli, ZeroRainHeadM1IsByteIdentity) {
    const fs::path dir = temp_dir("identity");
    ModelConfig cfg;
    cfg.base_channels = 4;
    cfg.encoder_depth = 2;
    cfg.ablation.topology = Topology::M1;
    app::Trainer trainer(cfg, LossWeights{}, 1);
    trainer.net().params().get("rain.out.weight").value.fill(0.0f);
    trainer.net().params().get("rain.out.bias").value.fill(0.0f);
    save_checkpoint(trainer.checkpoint(0), dir / "m1.ckpt");
    fs::create_directories(dir / "in");
    save_png(make_synthetic_set(1, 40, RainParams{}, 2).front().o.crop(0, 0, 29, 37), dir / "in" / "x.png");
    const CliRun r = cli("derain \"" + (dir / "in" / "x.png").string() + "\" --mode m1 --checkpoint \"" +
                          (dir / "m1.ckpt").string() + "\" --out \"" + (dir / "out").string() + "\"",
                      dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(dir / "in" / "x.png"), slurp(dir / "out" / "x.png"));
    fs::remove_all(dir);
}

TEST(Cli, EvalTablesAndOffenders) {
    const fs::path dir = temp_dir("eval");
    fs::create_directories(dir / "gt");
    fs::create_directories(dir / "pred");
    const auto pairs = make_synthetic_set(3, 24, RainParams{}, 6);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        save_png(pairs[i].b, dir / "gt" / ("p" + std::to_string(i) + ".png"));
        save_png(pairs[i].o, dir / "pred" / ("p" + std::to_string(i) + ".png"));
    }
    CliRun r = cli("eval --derained \"" + (dir / "gt").string() + "\" --ground-truth \"" + (dir / "gt").string() +
                    "\" --out \"" + (dir / "e1").string() + "\"",
                dir);
    ASSERT_EQ(r.code, 0) << r.err;
    auto rows = csv_rows(r.out);
    ASSERT_EQ(rows.size(), 5u);  // header + 3 images + mean
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i][1], "Inf");
        EXPECT_EQ(rows[i][2], "1");
    }

    r = cli("eval --derained \"" + (dir / "pred").string() + "\" --ground-truth \"" + (dir / "gt").string() +
                "\" --out \"" + (dir / "e2").string() + "\"",
            dir);
    ASSERT_EQ(r.code, 0) << r.err;
    rows = csv_rows(slurp(dir / "e2" / "eval.csv"));
    ASSERT_EQ(rows.size(), 5u);
    double sum = 0;
    for (std::size_t i = 1; i < 4; ++i) sum += std::stod(rows[i][1]);
    EXPECT_NEAR(std::stod(rows[4][1]), sum / 3, 1e-9);

    fs::remove(dir / "gt" / "p1.png");
    r = cli("eval --derained \"" + (dir / "pred").string() + "\" --ground-truth \"" + (dir / "gt").string() +
                "\" --out \"" + (dir / "e3").string() + "\"",
            dir);
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("p1.png"), std::string::npos) << r.err;
    fs::remove_all(dir);
}

TEST(Cli, EvalReportsPhysicalResidualsFromDumps) {
    const fs::path dir = temp_dir("residual");
    ASSERT_EQ(cli("train --epochs 1" + kSmall + " --out \"" + (dir / "m").string() + "\"", dir).code, 0);
    fs::create_directories(dir / "rainy");
    fs::create_directories(dir / "gt");
    const auto pairs = make_synthetic_set(2, 24, RainParams{}, 3);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        save_png(pairs[i].o, dir / "rainy" / ("q" + std::to_string(i) + ".png"));
        save_png(pairs[i].b, dir / "gt" / ("q" + std::to_string(i) + ".png"));
    }
    ASSERT_EQ(cli("derain \"" + (dir / "rainy").string() + "\" --dump-intermediates --checkpoint \"" +
                      (dir / "m" / "checkpoint.ckpt").string() + "\" --out \"" + (dir / "d").string() + "\"",
                  dir)
                  .code,
              0);
    const CliRun r = cli("eval --derained \"" + (dir / "d").string() + "\" --ground-truth \"" + (dir / "gt").string() +
                          "\" --rainy \"" + (dir / "rainy").string() + "\" --out \"" + (dir / "e").string() + "\"",
                      dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(csv_rows(r.out).size(), 4u);
    const auto phys = csv_rows(slurp(dir / "e" / "physical_residual.csv"));
    ASSERT_EQ(phys.size(), 3u);
    EXPECT_EQ(phys[0][0], "image");
    fs::remove_all(dir);
}
