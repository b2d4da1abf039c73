// Command-line front end: train / enhance / eval / bench / gradcheck.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fpie/fpie.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::vector<std::string> sets;
    int64_t seed = -1;
    int threads = 1;
    bool deterministic = false;
};

fpie::RunConfig assemble_config(const GlobalArgs& g) {
    fpie::RunConfig cfg;
    if (!g.config_path.empty()) cfg = fpie::RunConfig::parse_file(g.config_path);
    for (const std::string& kv : g.sets) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) throw fpie::ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (g.seed >= 0) cfg.set("seed", std::to_string(g.seed));
    cfg.set("threads", std::to_string(g.threads));
    if (g.deterministic) cfg.set("deterministic", "true");
    // kernels use fixed accumulation order unconditionally, so the flag only
    // needs to be accepted and recorded
    fpie::set_num_threads(static_cast<int>(cfg.get_int("threads", 1)));
    return cfg;
}

fpie::GeneratorConfig config_from_weights(const std::vector<fpie::NamedTensor>& entries) {
    return fpie::infer_generator_config(entries);
}

fpie::Model generator_from_file(const std::string& weights_path) {
    const auto entries = fpie::load_weights(weights_path);
    const fpie::GeneratorConfig cfg = config_from_weights(entries);
    fpie::Rng rng(0);
    fpie::Model gen = fpie::build_generator(cfg, rng);
    fpie::load_into_model(weights_path, gen);
    return gen;
}

int cmd_train(const GlobalArgs& g, const std::string& data_dir, const std::string& out_dir,
              int64_t iterations_override) {
    fpie::RunConfig cfg = assemble_config(g);
    const std::string root = !data_dir.empty() ? data_dir : cfg.get_string("data.root", "");
    if (root.empty()) throw fpie::ConfigError("train: no dataset (use --data or data.root)");
    if (!fs::is_directory(root)) throw fpie::DataError("train: dataset directory not found: " + root);

    fpie::TrainConfig tc = cfg.train_config();
    if (iterations_override > 0) tc.iterations = iterations_override;
    tc.out_dir = !out_dir.empty() ? out_dir : cfg.get_string("out.dir", "fpie_out");
    if (tc.checkpoint_every == 0) tc.checkpoint_every = 0; // final checkpoint always written

    const std::vector<fpie::PatchPair> pairs = fpie::load_pairs(root, "train");
    std::vector<fpie::PatchPair> held_out;
    if (fs::is_directory(fs::path(root) / "test")) held_out = fpie::load_pairs(root, "test");

    fs::create_directories(tc.out_dir);
    std::ofstream log_file(fs::path(tc.out_dir) / "train.log");
    fpie::TrainResult result =
        fpie::train(tc, pairs, held_out.empty() ? nullptr : &held_out, &log_file);
    std::cout << "trained " << tc.iterations << " iterations; final total loss "
              << result.log.back().total << "\n"
              << "checkpoint: "
              << (fs::path(tc.out_dir) / ("checkpoint_" + std::to_string(tc.iterations) + ".fpie")).string()
              << "\n";
    return 0;
}

int cmd_enhance(const GlobalArgs& g, const std::string& weights, const std::string& in_path,
                const std::string& out_path) {
    assemble_config(g);
    fpie::Model gen = generator_from_file(weights);
    const fpie::Tensor img = fpie::read_png(in_path);
    auto [padded, spec] = fpie::pad_to_multiple(img, 4);
    const fpie::Tensor enhanced = gen.infer(padded);
    fpie::write_png(out_path, fpie::crop_to_spec(enhanced, spec));
    std::cout << "wrote " << out_path << " (" << img.shape().w << "x" << img.shape().h << ")\n";
    return 0;
}

int cmd_eval(const GlobalArgs& g, const std::string& weights, const std::string& data_dir) {
    fpie::RunConfig cfg = assemble_config(g);
    const auto mode = cfg.get_bool("metrics.rgb_mean", false) ? fpie::MetricColorMode::RgbMean
                                                              : fpie::MetricColorMode::Luma;
    fpie::Model gen = generator_from_file(weights);
    const std::vector<fpie::PatchPair> pairs = fpie::load_pairs(data_dir, "test");
    if (pairs.empty()) throw fpie::DataError("eval: empty test set in " + data_dir);

    double psnr_acc = 0.0, ssim_acc = 0.0, ms_acc = 0.0;
    const fpie::Shape ps = pairs[0].phone.shape();
    const int scales = fpie::ms_ssim_max_scales(ps.h, ps.w);
    for (const fpie::PatchPair& p : pairs) {
        auto [padded, spec] = fpie::pad_to_multiple(p.phone, 4);
        const fpie::Tensor enhanced = fpie::crop_to_spec(gen.infer(padded), spec);
        psnr_acc += fpie::psnr(enhanced, p.dslr, 1.0f, mode);
        ssim_acc += fpie::ssim(enhanced, p.dslr, 1.0f, mode);
        if (scales > 0) ms_acc += fpie::ms_ssim(enhanced, p.dslr, scales, 1.0f, mode);
    }
    const auto n = static_cast<double>(pairs.size());
    std::cout << "psnr\tssim\tms_ssim\tn\n";
    std::cout << static_cast<float>(psnr_acc / n) << '\t' << static_cast<float>(ssim_acc / n) << '\t';
    if (scales > 0) {
        std::cout << static_cast<float>(ms_acc / n);
        if (scales < 5) std::cout << " (" << scales << "-scale)";
    } else {
        std::cout << "-";
    }
    std::cout << '\t' << pairs.size() << "\n";
    return 0;
}

fpie::GeneratorConfig grid_entry_to_config(const nlohmann::json& e) {
    if (!e.is_object()) throw fpie::ConfigError("bench: grid entries must be objects");
    const std::string variant = e.value("variant", "baseline");
    fpie::GeneratorConfig cfg;
    if (variant == "baseline") {
        cfg = fpie::GeneratorConfig::baseline(e.value("kernel", 3), e.value("channels", 64),
                                              e.value("blocks", 4));
    } else if (variant == "strided") {
        cfg = fpie::GeneratorConfig::strided(e.value("kernel", 3), e.value("strided_kernel", 4),
                                             e.value("base_channels", 16));
        if (e.contains("blocks")) cfg.blocks = e["blocks"].get<int64_t>();
    } else {
        throw fpie::ConfigError("bench: unknown variant '" + variant + "'");
    }
    if (e.contains("use_prelu")) cfg.use_prelu = e["use_prelu"].get<bool>();
    cfg.validate();
    return cfg;
}

int cmd_bench(const GlobalArgs& g, const std::string& grid_path, const std::string& data_dir,
              const std::string& out_prefix, int64_t repeats, bool macs_only, int64_t width,
              int64_t height) {
    fpie::RunConfig cfg = assemble_config(g);
    std::ifstream is(grid_path);
    if (!is) throw fpie::ConfigError("bench: cannot open grid file " + grid_path);
    nlohmann::json grid = nlohmann::json::parse(is);
    if (!grid.is_array() || grid.empty()) {
        throw fpie::ConfigError("bench: grid must be a non-empty JSON array");
    }
    std::vector<fpie::GeneratorConfig> configs;
    for (const auto& e : grid) configs.push_back(grid_entry_to_config(e));

    fpie::FrontierOptions opt;
    opt.input = {1, 3, height > 0 ? height : cfg.get_int("bench.height", 720),
                 width > 0 ? width : cfg.get_int("bench.width", 1280)};
    opt.repeats = repeats > 0 ? repeats : cfg.get_int("bench.repeats", 5);
    opt.threads = static_cast<int>(cfg.get_int("threads", 1));
    opt.macs_only = macs_only;

    std::vector<fpie::PatchPair> test_set;
    if (!data_dir.empty()) test_set = fpie::load_pairs(data_dir, "test");

    const std::vector<fpie::BenchReport> rows =
        fpie::frontier_report(configs, opt, test_set.empty() ? nullptr : &test_set);
    fpie::write_frontier_tsv(std::cout, rows);
    if (!out_prefix.empty()) {
        std::ofstream tsv(out_prefix + ".tsv");
        fpie::write_frontier_tsv(tsv, rows);
        std::ofstream json_out(out_prefix + ".json");
        json_out << fpie::frontier_json(rows).dump(2) << "\n";
        std::cout << "wrote " << out_prefix << ".tsv and " << out_prefix << ".json\n";
    }
    return 0;
}

int cmd_gradcheck(const GlobalArgs& g, bool list_only, const std::string& corrupt) {
    fpie::RunConfig cfg = assemble_config(g);
    const std::vector<fpie::GradCheckCase> suite = fpie::default_gradcheck_suite();
    if (list_only) {
        for (const fpie::GradCheckCase& c : suite) std::cout << c.name << "\n";
        return 0;
    }
    fpie::GradCheckOptions opts;
    opts.seed = static_cast<uint64_t>(cfg.get_int("seed", 2018));
    opts.corrupt = corrupt;
    bool all_pass = true;
    for (const fpie::GradCheckResult& r : fpie::run_gradcheck(suite, opts)) {
        std::cout << (r.pass ? "ok   " : "FAIL ") << r.name << "  max_rel_err=" << r.max_rel_err
                  << "\n";
        all_pass = all_pass && r.pass;
    }
    if (!all_pass) {
        std::cerr << "gradcheck: at least one op exceeded tolerance 1e-3\n";
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fpie: fast perceptual image enhancement engine"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalArgs g;
    app.add_option("--config", g.config_path, "key = value config file");
    app.add_option("--set", g.sets, "override a config key (key=value, repeatable)");
    app.add_option("--seed", g.seed, "global RNG seed");
    app.add_option("--threads", g.threads, "kernel-internal worker threads");
    app.add_flag("--deterministic", g.deterministic,
                 "record deterministic mode (kernels are always thread-count independent)");

    auto* train = app.add_subcommand("train", "adversarial training on a paired dataset");
    std::string train_data, train_out;
    int64_t train_iters = 0;
    train->add_option("--data", train_data, "dataset root with train/{phone,dslr}");
    train->add_option("--out", train_out, "output directory for checkpoints and log");
    train->add_option("--iterations", train_iters, "override train.iterations");

    auto* enhance = app.add_subcommand("enhance", "enhance a PNG with trained weights");
    std::string enh_weights, enh_in, enh_out;
    enhance->add_option("--weights", enh_weights, "weight file (.fpie)")->required();
    enhance->add_option("--in", enh_in, "input PNG")->required();
    enhance->add_option("--out", enh_out, "output PNG")->required();

    auto* eval = app.add_subcommand("eval", "PSNR/SSIM/MS-SSIM on a test split");
    std::string eval_weights, eval_data;
    eval->add_option("--weights", eval_weights, "weight file (.fpie)")->required();
    eval->add_option("--data", eval_data, "dataset root with test/{phone,dslr}")->required();

    auto* bench = app.add_subcommand("bench", "MACs, timing and quality frontier over a config grid");
    std::string bench_grid, bench_data, bench_out;
    int64_t bench_repeats = 0, bench_w = 0, bench_h = 0;
    bool macs_only = false;
    bench->add_option("--grid", bench_grid, "JSON array of generator configs")->required();
    bench->add_option("--data", bench_data, "optional dataset root for PSNR/MS-SSIM columns");
    bench->add_option("--out", bench_out, "output file prefix (.tsv/.json)");
    bench->add_option("--repeats", bench_repeats, "timing repeats (median, default 5)");
    bench->add_option("--width", bench_w, "timing image width (default 1280)");
    bench->add_option("--height", bench_h, "timing image height (default 720)");
    bench->add_flag("--macs-only", macs_only, "skip wall-time measurement");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op and loss");
    bool gc_list = false;
    std::string gc_corrupt;
    gradcheck->add_flag("--list", gc_list, "list checked ops without running");
    gradcheck->add_option("--corrupt", gc_corrupt, "test fixture: corrupt this op's gradient")
        ->group("");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(g, train_data, train_out, train_iters);
        if (enhance->parsed()) return cmd_enhance(g, enh_weights, enh_in, enh_out);
        if (eval->parsed()) return cmd_eval(g, eval_weights, eval_data);
        if (bench->parsed())
            return cmd_bench(g, bench_grid, bench_data, bench_out, bench_repeats, macs_only, bench_w,
                             bench_h);
        if (gradcheck->parsed()) return cmd_gradcheck(g, gc_list, gc_corrupt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
