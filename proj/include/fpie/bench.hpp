#pragma once

#include <algorithm>
#include <chrono>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpie/data.hpp"
#include "fpie/metrics.hpp"
#include "fpie/models.hpp"
#include "fpie/parallel.hpp"

namespace fpie {

struct BenchReport {
    std::string label;
    std::string kernel_col, channels_col, blocks_col;
    int64_t macs = 0;
    int64_t params = 0;
    float wall_ms = 0.0f;
    int64_t peak_mem_bytes = 0;
    std::optional<float> psnr_db;
    std::optional<float> ms_ssim_val;
    std::optional<float> speedup; // wall(baseline row) / wall(this row)
};

/// Multiplies plus bias adds for one cross-correlation layer, the unit the
/// whole harness counts in.
inline int64_t conv_layer_macs(int64_t out_elems, int64_t in_channels, int64_t kernel, bool bias) {
    return out_elems * in_channels * kernel * kernel + (bias ? out_elems : 0);
}

/// Border-exact multiply count of a transposed convolution. Tap validity is
/// separable, so rows and columns are counted independently.
inline int64_t convt_layer_macs(int64_t out_h, int64_t out_w, int64_t in_h, int64_t in_w,
                                int64_t in_channels, int64_t kernel, int64_t stride, int64_t pad,
                                bool bias) {
    auto axis_taps = [&](int64_t out_sz, int64_t in_sz) {
        int64_t total = 0;
        for (int64_t o = 0; o < out_sz; ++o) {
            for (int64_t k = 0; k < kernel; ++k) {
                const int64_t t = o + pad - k;
                if (t >= 0 && t % stride == 0 && t / stride < in_sz) ++total;
            }
        }
        return total;
    };
    return axis_taps(out_h, in_h) * axis_taps(out_w, in_w) * in_channels +
           (bias ? out_h * out_w : 0);
}

struct MacCount {
    int64_t macs = 0;
    int64_t params = 0; // trainable parameter elements
};

/// Analytic cost of a built model at the given input shape. Exact integers
/// derived from the layer graph, never measured.
inline MacCount count_model_macs(const Model& m, Shape input) {
    const std::vector<Shape> shapes = m.infer_shapes(input);
    MacCount out;
    for (size_t i = 0; i < m.steps.size(); ++i) {
        const Step& s = m.steps[i];
        if (s.kind == StepKind::Conv) {
            const Shape ws = m.params[s.weight].value.shape();
            const Shape os = shapes[i];
            out.macs += os.n * conv_layer_macs(os.c * os.h * os.w, ws.c, ws.h, s.bias >= 0);
        } else if (s.kind == StepKind::ConvT) {
            const Shape ws = m.params[s.weight].value.shape();
            const Shape os = shapes[i];
            const Shape is = shapes[s.input];
            // tap counts are identical for every output channel
            out.macs += os.n * os.c *
                        convt_layer_macs(os.h, os.w, is.h, is.w, ws.n, ws.h, s.stride, s.pad,
                                         s.bias >= 0);
        }
    }
    for (const Parameter& p : m.params) {
        if (p.trainable) out.params += p.value.shape().numel();
    }
    return out;
}

inline std::pair<int64_t, int64_t> count_macs(const GeneratorConfig& cfg, Shape input) {
    Rng rng(0);
    Model m = build_generator(cfg, rng);
    const MacCount c = count_model_macs(m, input);
    return {c.macs, c.params};
}

/// Peak live bytes under the sequential schedule infer() actually uses:
/// weights resident throughout, each activation alive from creation to its
/// last consumer.
inline int64_t estimate_peak_memory(const Model& m, Shape input) {
    const std::vector<Shape> shapes = m.infer_shapes(input);
    const std::vector<int64_t> last = m.last_use();
    int64_t weight_bytes = 0;
    for (const Parameter& p : m.params) weight_bytes += p.value.shape().numel() * 4;
    int64_t peak = 0;
    for (size_t i = 0; i < m.steps.size(); ++i) {
        int64_t live = 0;
        for (size_t j = 0; j <= i; ++j) {
            if (last[j] >= static_cast<int64_t>(i)) live += shapes[j].numel() * 4;
        }
        peak = std::max(peak, live);
    }
    return peak + weight_bytes;
}

/// Median wall time of single forward passes after one warm-up, at a pinned
/// thread count.
inline float time_inference(const Model& m, Shape input, int64_t repeats, int threads) {
    if (repeats < 3) throw std::invalid_argument("time_inference: repeats must be >= 3");
    const int prev_threads = num_threads();
    set_num_threads(threads);
    Rng rng(7);
    Tensor x = random_normal(input, 0.5f, 0.1f, rng);
    m.infer(x); // warm-up
    std::vector<float> times;
    times.reserve(repeats);
    for (int64_t i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        m.infer(x);
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<float, std::milli>(t1 - t0).count());
    }
    set_num_threads(prev_threads);
    std::sort(times.begin(), times.end());
    const size_t n = times.size();
    return n % 2 == 1 ? times[n / 2] : 0.5f * (times[n / 2 - 1] + times[n / 2]);
}

struct FrontierOptions {
    Shape input{1, 3, 720, 1280};
    int64_t repeats = 5;
    int threads = 1;
    bool macs_only = false;
    uint64_t weight_seed = 7;
};

/// One report row per config; the FIRST config is the designated baseline for
/// the speedup column. Quality columns appear when a test set is supplied.
inline std::vector<BenchReport> frontier_report(const std::vector<GeneratorConfig>& configs,
                                                const FrontierOptions& opt,
                                                const std::vector<PatchPair>* test_set = nullptr) {
    if (configs.empty()) throw std::invalid_argument("frontier_report: need at least one config");
    std::vector<BenchReport> rows;
    for (const GeneratorConfig& cfg : configs) {
        cfg.validate();
        Rng rng(opt.weight_seed);
        Model m = build_generator(cfg, rng);
        BenchReport r;
        r.label = cfg.label();
        r.kernel_col = cfg.variant == GeneratorVariant::Strided && cfg.kernel != cfg.strided_kernel
                           ? std::to_string(cfg.kernel) + "-" + std::to_string(cfg.strided_kernel)
                           : std::to_string(cfg.kernel);
        r.channels_col = cfg.variant == GeneratorVariant::Strided
                             ? std::to_string(cfg.base_channels) + "-" + std::to_string(cfg.max_channels)
                             : std::to_string(cfg.base_channels);
        r.blocks_col = std::to_string(cfg.blocks);
        const MacCount mc = count_model_macs(m, opt.input);
        r.macs = mc.macs;
        r.params = mc.params;
        r.peak_mem_bytes = estimate_peak_memory(m, opt.input);
        if (!opt.macs_only) {
            r.wall_ms = time_inference(m, opt.input, opt.repeats, opt.threads);
        }
        if (test_set && !test_set->empty()) {
            double psnr_acc = 0.0, ms_acc = 0.0;
            const Shape ps = (*test_set)[0].phone.shape();
            const int scales = ms_ssim_max_scales(ps.h, ps.w);
            for (const PatchPair& p : *test_set) {
                const Tensor enhanced = m.infer(p.phone);
                psnr_acc += psnr(enhanced, p.dslr, 1.0f);
                if (scales > 0) ms_acc += ms_ssim(enhanced, p.dslr, scales);
            }
            r.psnr_db = static_cast<float>(psnr_acc / test_set->size());
            if (scales > 0) r.ms_ssim_val = static_cast<float>(ms_acc / test_set->size());
        }
        rows.push_back(std::move(r));
    }
    if (!opt.macs_only) {
        const float base = rows.front().wall_ms;
        for (BenchReport& r : rows) r.speedup = base / r.wall_ms;
    }
    return rows;
}

/// Tab-separated table mirroring the published column layout
/// (kernel, channels, blocks, time, PSNR, MS-SSIM) plus speedup.
inline void write_frontier_tsv(std::ostream& os, const std::vector<BenchReport>& rows) {
    os << "kernel\tchannels\tblocks\tmacs\tparams\tpeak_mem_bytes\ttime_s\tpsnr\tms_ssim\tspeedup\n";
    auto opt_str = [](const std::optional<float>& v) {
        return v ? std::to_string(*v) : std::string("-");
    };
    for (const BenchReport& r : rows) {
        os << r.kernel_col << '\t' << r.channels_col << '\t' << r.blocks_col << '\t' << r.macs << '\t'
           << r.params << '\t' << r.peak_mem_bytes << '\t'
           << (r.wall_ms > 0 ? std::to_string(r.wall_ms / 1000.0f) : std::string("-")) << '\t'
           << opt_str(r.psnr_db) << '\t' << opt_str(r.ms_ssim_val) << '\t' << opt_str(r.speedup)
           << '\n';
    }
}

/// Structured report: rows plus (speedup, ms_ssim) plot pairs.
inline nlohmann::json frontier_json(const std::vector<BenchReport>& rows) {
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const BenchReport& r : rows) {
        nlohmann::json e{{"label", r.label},       {"kernel", r.kernel_col},
                         {"channels", r.channels_col}, {"blocks", r.blocks_col},
                         {"macs", r.macs},         {"params", r.params},
                         {"peak_mem_bytes", r.peak_mem_bytes}};
        if (r.wall_ms > 0) e["time_s"] = r.wall_ms / 1000.0f;
        if (r.psnr_db) e["psnr"] = *r.psnr_db;
        if (r.ms_ssim_val) e["ms_ssim"] = *r.ms_ssim_val;
        if (r.speedup) e["speedup"] = *r.speedup;
        j["rows"].push_back(e);
    }
    j["plot_data"] = nlohmann::json::array();
    for (const BenchReport& r : rows) {
        if (r.speedup && r.ms_ssim_val) {
            j["plot_data"].push_back({*r.speedup, *r.ms_ssim_val});
        }
    }
    return j;
}

} // namespace fpie
