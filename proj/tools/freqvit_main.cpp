// freqvit command-line driver: dataset generation, two-stage pretraining,
// linear probing, corruption benchmarking, Fourier sensitivity heatmaps, and
// FLOPs accounting.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "CLI11.hpp"
#include "freqvit/config.hpp"
#include "freqvit/datagen.hpp"
#include "freqvit/evalsuite.hpp"
#include "freqvit/spectral.hpp"
#include "freqvit/threads.hpp"
#include "freqvit/train.hpp"

namespace fs = std::filesystem;
using namespace freqvit;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string data_dir;
    std::string out_dir;
    std::string checkpoint_dir;
    std::string probe_path;
    bool baseline = false;
    bool use_student = false;
    double heatmap_v_override = std::nan("");
    std::string preset;
};

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return parse_run_config("");
    return load_run_config(path);
}

datagen::LoadedDataset load_split(const std::string& root, const char* split) {
    const fs::path dir = fs::path(root) / split;
    return datagen::load_dataset(datagen::scan_dataset(dir.string()));
}

ssl::EncoderParams<float>& pick_encoder(ssl::TrainState& state, bool use_student) {
    return use_student ? state.student : state.teacher;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
}

char hash_buf[32];
const char* hex16(uint64_t h) {
    std::snprintf(hash_buf, sizeof(hash_buf), "%016llx", static_cast<unsigned long long>(h));
    return hash_buf;
}

int cmd_gen_data(const CommonArgs& args) {
    RunConfig cfg = load_config_or_default(args.config_path);
    cfg.synth.seed = cfg.seed;
    const datagen::DatasetManifest train = datagen::generate_synth(cfg.synth, args.out_dir);
    std::printf("gen-data: wrote %zu train images (%d classes) under %s\n",
                train.total_files(), cfg.synth.classes, train.root.c_str());
    std::printf("gen-data: config_hash=%s seed=%llu\n", hex16(config_hash(cfg)),
                static_cast<unsigned long long>(cfg.seed));
    return 0;
}

int cmd_pretrain(const CommonArgs& args, int threads) {
    const RunConfig cfg = load_config_or_default(args.config_path);
    if (!imaging::crop_bounds_within_paper(cfg.curriculum.local_crop_min_scale,
                                           cfg.curriculum.local_crop_max_scale))
        std::fprintf(stderr,
                     "note: local crop scale bounds fall below the published 0.08 floor\n");

    const datagen::LoadedDataset train = load_split(args.data_dir, "train");
    ssl::TrainOptions opts;
    opts.baseline = args.baseline;
    opts.threads = threads;
    opts.out_dir = args.out_dir;
    opts.config_hash = config_hash(cfg);
    opts.verbose = true;

    const ssl::TrainResult result =
        ssl::train_run(train.images, cfg.curriculum, cfg.encoder, cfg.loss, cfg.seed, opts);
    std::printf("pretrain: %zu epochs, final loss %.5f, cumulative flops %.4e\n",
                result.metrics.size(), result.metrics.back().loss,
                result.metrics.back().cum_flops);
    std::printf("pretrain: checkpoint checksum %s\n",
                hex16(ssl::checkpoint_checksum((fs::path(args.out_dir) / "checkpoint").string())));
    return 0;
}

int cmd_probe(const CommonArgs& args, int threads) {
    const RunConfig cfg = load_config_or_default(args.config_path);
    ssl::TrainState state = ssl::load_checkpoint(args.checkpoint_dir);
    const auto& encoder = pick_encoder(state, args.use_student);

    const datagen::LoadedDataset train = load_split(args.data_dir, "train");
    const datagen::LoadedDataset val = load_split(args.data_dir, "val");

    const evalsuite::FeatureMatrix train_fm =
        evalsuite::extract_features(encoder, train.images, train.labels, threads);
    evalsuite::ProbeCfg pcfg;
    pcfg.iters = cfg.eval.probe_iters;
    pcfg.batch = cfg.eval.probe_batch;
    pcfg.lr = cfg.eval.probe_lr;
    pcfg.seed = cfg.seed;
    const evalsuite::ProbeModel probe = evalsuite::train_probe(train_fm, pcfg);

    const evalsuite::FeatureMatrix val_fm =
        evalsuite::extract_features(encoder, val.images, val.labels, threads);
    const double train_acc = evalsuite::probe_accuracy(probe, train_fm);
    const double val_acc = evalsuite::probe_accuracy(probe, val_fm);

    fs::create_directories(args.out_dir);
    evalsuite::save_probe((fs::path(args.out_dir) / "probe.fvt").string(), probe);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "# config_hash=%s seed=%llu\n"
                  "probe_iters=%d\nprobe_batch=%d\nencoder=%s\n"
                  "train_accuracy=%.6f\nval_accuracy=%.6f\n",
                  hex16(config_hash(cfg)), static_cast<unsigned long long>(cfg.seed),
                  pcfg.iters, pcfg.batch, args.use_student ? "student" : "teacher", train_acc,
                  val_acc);
    write_text((fs::path(args.out_dir) / "probe_report.txt").string(), buf);
    std::printf("probe: train accuracy %.4f, val accuracy %.4f\n", train_acc, val_acc);
    return 0;
}

int cmd_eval_c(const CommonArgs& args, int threads) {
    const RunConfig cfg = load_config_or_default(args.config_path);
    ssl::TrainState state = ssl::load_checkpoint(args.checkpoint_dir);
    const auto& encoder = pick_encoder(state, args.use_student);
    const evalsuite::ProbeModel probe = evalsuite::load_probe(args.probe_path);
    const datagen::LoadedDataset val = load_split(args.data_dir, "val");

    evalsuite::BenchmarkReport report =
        evalsuite::corruption_benchmark(encoder, probe, val.images, val.labels,
                                        augment::corruption_catalog(), cfg.seed, threads);
    report.probe_iters = cfg.eval.probe_iters;
    report.probe_batch = cfg.eval.probe_batch;

    fs::create_directories(args.out_dir);
    write_text((fs::path(args.out_dir) / "eval_c.csv").string(),
               evalsuite::report_csv(report, config_hash(cfg), cfg.seed));
    write_text((fs::path(args.out_dir) / "catalog.csv").string(), augment::catalog_csv());
    std::printf("eval-c: clean %.4f, corruption overall %.4f (high group %.4f)\n",
                report.clean_accuracy, report.overall_accuracy,
                evalsuite::group_accuracy(report, augment::FrequencyGroup::kHigh));
    return 0;
}

int cmd_heatmap(const CommonArgs& args, int threads) {
    const RunConfig cfg = load_config_or_default(args.config_path);
    ssl::TrainState state = ssl::load_checkpoint(args.checkpoint_dir);
    const auto& encoder = pick_encoder(state, args.use_student);
    const evalsuite::ProbeModel probe = evalsuite::load_probe(args.probe_path);
    datagen::LoadedDataset val = load_split(args.data_dir, "val");
    if (val.images.empty()) throw std::runtime_error("heatmap: empty evaluation split");

    // evaluation happens at the nearest power-of-two resolution
    const int native = val.images[0].height;
    int pow2 = 1;
    while (pow2 * 2 <= native) pow2 *= 2;
    if (static_cast<double>(native) / pow2 > 2.0 * pow2 / native) pow2 *= 2;
    const bool resized = pow2 != native;
    if (resized)
        for (auto& img : val.images) img = imaging::resize_bicubic(img, pow2, pow2);

    spectral::HeatmapCfg hcfg;
    hcfg.v = std::isnan(args.heatmap_v_override) ? cfg.eval.heatmap_v : args.heatmap_v_override;
    hcfg.images_per_class = cfg.eval.heatmap_images_per_class;
    hcfg.seed = cfg.seed;
    hcfg.threads = threads;

    const spectral::HeatmapGrid grid = spectral::sensitivity_heatmap(
        [&](const ImageTensor& img) {
            ssl::EncoderActs<float> acts;
            ssl::encoder_forward(encoder, img, acts);
            return evalsuite::probe_predict(probe, acts.feature.data());
        },
        val.images, val.labels, hcfg);

    fs::create_directories(args.out_dir);
    write_heatmap_csv((fs::path(args.out_dir) / "heatmap.csv").string(), grid,
                      config_hash(cfg), cfg.seed);
    write_heatmap_pgm((fs::path(args.out_dir) / "heatmap.pgm").string(),
                      (fs::path(args.out_dir) / "heatmap_meta.txt").string(), grid);
    if (resized) {
        std::ofstream meta(fs::path(args.out_dir) / "heatmap_meta.txt", std::ios::app);
        meta << "evaluation_resized_from=" << native << "\n";
    }
    std::printf("heatmap: %dx%d grid, v=%.5f, clean error %.4f\n", grid.n, grid.n,
                grid.perturbation_norm, grid.clean_error);
    return 0;
}

int cmd_flops(const CommonArgs& args) {
    ssl::EncoderCfg encoder;
    curriculum::CurriculumConfig ccfg;
    int baseline_epochs;
    if (!args.preset.empty()) {
        const evalsuite::FlopsPreset preset = evalsuite::flops_preset(args.preset);
        encoder = preset.encoder;
        ccfg = preset.curriculum;
        baseline_epochs = preset.baseline_epochs;
    } else {
        const RunConfig cfg = load_config_or_default(args.config_path);
        encoder = cfg.encoder;
        ccfg = cfg.curriculum;
        baseline_epochs = ccfg.total_epochs;
    }

    const int t2 = evalsuite::patch_tokens(encoder, ccfg.stage2_global_res);
    const int t1 = evalsuite::patch_tokens(encoder, ccfg.stage1_global_res);
    std::printf("tokens per forward pass: %d+1 at %d, %d+1 at %d (%.0f%% reduction)\n", t2,
                ccfg.stage2_global_res, t1, ccfg.stage1_global_res,
                100.0 * (1.0 - static_cast<double>(t1) / t2));
    std::printf("forward GFLOPs: %.4f at %d, %.4f at %d\n",
                evalsuite::flops_forward(encoder, ccfg.stage2_global_res) / 1e9,
                ccfg.stage2_global_res,
                evalsuite::flops_forward(encoder, ccfg.stage1_global_res) / 1e9,
                ccfg.stage1_global_res);

    curriculum::CurriculumConfig baseline_cfg = ccfg;
    baseline_cfg.total_epochs = baseline_epochs;
    const double base = evalsuite::schedule_flops(baseline_cfg, encoder, /*baseline=*/true);
    const double ours = evalsuite::schedule_flops(ccfg, encoder, /*baseline=*/false);
    std::printf("schedule GFLOPs per image: baseline (%d ep @%d) %.4f, curriculum (%d ep) %.4f\n",
                baseline_epochs, ccfg.stage2_global_res, base / 1e9, ccfg.total_epochs,
                ours / 1e9);
    std::printf("schedule flops ratio (baseline / curriculum): %.4f\n", base / ours);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"freqvit: two-stage low-frequency curriculum lab for self-distillation"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: $FREQVIT_THREADS or 1)");

    CommonArgs args;

    CLI::App* gen = app.add_subcommand("gen-data", "write the synthetic dataset");
    gen->add_option("--config", args.config_path, "config file (key = value)");
    gen->add_option("--out", args.out_dir, "output root")->required();

    CLI::App* pre = app.add_subcommand("pretrain", "run two-stage self-distillation");
    pre->add_option("--config", args.config_path, "config file");
    pre->add_option("--data", args.data_dir, "dataset root (train/ and val/)")->required();
    pre->add_option("--out", args.out_dir, "output directory")->required();
    pre->add_flag("--baseline", args.baseline,
                  "single-stage baseline: full resolution, no patching");

    CLI::App* prb = app.add_subcommand("probe", "fit a linear probe on frozen features");
    prb->add_option("--config", args.config_path, "config file");
    prb->add_option("--checkpoint", args.checkpoint_dir, "checkpoint directory")->required();
    prb->add_option("--data", args.data_dir, "dataset root")->required();
    prb->add_option("--out", args.out_dir, "output directory")->required();
    prb->add_flag("--student", args.use_student, "probe the student instead of the teacher");

    CLI::App* evc = app.add_subcommand("eval-c", "corruption robustness benchmark");
    evc->add_option("--config", args.config_path, "config file");
    evc->add_option("--checkpoint", args.checkpoint_dir, "checkpoint directory")->required();
    evc->add_option("--probe", args.probe_path, "probe.fvt path")->required();
    evc->add_option("--data", args.data_dir, "dataset root")->required();
    evc->add_option("--out", args.out_dir, "output directory")->required();
    evc->add_flag("--student", args.use_student, "evaluate the student instead of the teacher");

    CLI::App* hm = app.add_subcommand("heatmap", "Fourier error-sensitivity heatmap");
    hm->add_option("--config", args.config_path, "config file");
    hm->add_option("--checkpoint", args.checkpoint_dir, "checkpoint directory")->required();
    hm->add_option("--probe", args.probe_path, "probe.fvt path")->required();
    hm->add_option("--data", args.data_dir, "dataset root")->required();
    hm->add_option("--out", args.out_dir, "output directory")->required();
    hm->add_option("--v", args.heatmap_v_override, "perturbation norm override");
    hm->add_flag("--student", args.use_student, "evaluate the student instead of the teacher");

    CLI::App* fl = app.add_subcommand("flops", "token and FLOPs accounting");
    fl->add_option("--config", args.config_path, "config file");
    fl->add_option("--preset", args.preset, "named preset (vitb16)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const int t = resolve_threads(threads);
        if (gen->parsed()) return cmd_gen_data(args);
        if (pre->parsed()) return cmd_pretrain(args, t);
        if (prb->parsed()) return cmd_probe(args, t);
        if (evc->parsed()) return cmd_eval_c(args, t);
        if (hm->parsed()) return cmd_heatmap(args, t);
        if (fl->parsed()) return cmd_flops(args);
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
