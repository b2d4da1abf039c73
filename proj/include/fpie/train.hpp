#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fpie/data.hpp"
#include "fpie/losses.hpp"
#include "fpie/metrics.hpp"
#include "fpie/models.hpp"
#include "fpie/weights.hpp"

namespace fpie {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AdamConfig {
    float lr = 5e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Bias-corrected Adam over a fixed parameter set; moment tensors live here.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
        for (Parameter* p : params_) {
            m_.push_back(Tensor::zeros(p->value.shape()));
            v_.push_back(Tensor::zeros(p->value.shape()));
        }
    }

    int64_t step_count() const { return step_; }

    /// One update from the gradients currently stored on the parameters.
    /// Non-finite gradients abort with the parameter's name.
    void step() {
        ++step_;
        const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(step_));
        const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(step_));
        for (size_t i = 0; i < params_.size(); ++i) {
            Parameter& p = *params_[i];
            const float* g = p.grad.data();
            float* pm = m_[i].data();
            float* pv = v_[i].data();
            float* pw = p.value.data();
            const size_t n = p.value.size();
            for (size_t j = 0; j < n; ++j) {
                if (!std::isfinite(g[j])) {
                    throw TrainError("adam: non-finite gradient in parameter '" + p.name + "'");
                }
                pm[j] = cfg_.beta1 * pm[j] + (1.0f - cfg_.beta1) * g[j];
                pv[j] = cfg_.beta2 * pv[j] + (1.0f - cfg_.beta2) * g[j] * g[j];
                const float mhat = pm[j] / bc1;
                const float vhat = pv[j] / bc2;
                pw[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

private:
    std::vector<Parameter*> params_;
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    int64_t step_ = 0;
};

struct TrainConfig {
    int64_t iterations = 500;
    int64_t batch_size = 8;
    LossWeights weights;
    GeneratorConfig gen;
    DiscriminatorConfig disc;
    AdamConfig adam;
    uint64_t seed = 1;
    int64_t checkpoint_every = 0; // 0: final checkpoint only
    int64_t eval_every = 0;       // 0: never
    std::string out_dir;          // empty: no checkpoints written
    bool content_squared = false;
    bool tv_literal = false;
    bool color_sigma_squared = false;
};

struct TrainResult {
    Model generator;
    Model discriminator;
    std::vector<LossBreakdown> log;
};

namespace detail {

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string config_digest(const TrainConfig& c) {
    std::ostringstream os;
    os << static_cast<int>(c.gen.variant) << '|' << c.gen.kernel << '|' << c.gen.strided_kernel << '|'
       << c.gen.base_channels << '|' << c.gen.blocks << '|' << c.gen.use_prelu << '|'
       << c.gen.block_batch_norm << '|' << c.batch_size << '|' << c.iterations << '|' << c.weights.content
       << '|' << c.weights.texture << '|' << c.weights.color << '|' << c.weights.tv << '|' << c.adam.lr;
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(os.str())));
    return buf;
}

inline void write_checkpoint(const TrainConfig& cfg, const Model& gen, const Model& disc,
                             int64_t iteration) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const std::string base = (fs::path(cfg.out_dir) / ("checkpoint_" + std::to_string(iteration))).string();
    save_models(base + ".fpie", {&gen, &disc});
    std::ofstream manifest(base + ".manifest");
    manifest << "iteration = " << iteration << "\n"
             << "seed = " << cfg.seed << "\n"
             << "config_hash = " << config_digest(cfg) << "\n";
}

} // namespace detail

/// Alternating adversarial training: one discriminator step (real DSLR vs
/// freshly generated batch) then one generator step on the weighted total
/// loss. With texture weight 0 the discriminator is never touched.
inline TrainResult train(const TrainConfig& cfg, const std::vector<PatchPair>& pairs,
                         const std::vector<PatchPair>* held_out = nullptr,
                         std::ostream* log_stream = nullptr) {
    if (cfg.iterations < 1 || cfg.batch_size < 1) {
        throw TrainError("train: iterations and batch_size must be >= 1");
    }
    if (pairs.empty()) throw TrainError("train: empty dataset");

    Rng init_rng = Rng(cfg.seed).fork(1);
    TrainResult r{build_generator(cfg.gen, init_rng), Model{}, {}};
    Rng disc_rng = Rng(cfg.seed).fork(2);
    r.discriminator = build_discriminator(cfg.disc, disc_rng);
    FeatureExtractor fe = make_tiny_fixed_extractor();
    GaussianKernel blur_kernel = build_gaussian_kernel(0.053f, 0.0f, 3.0f, 10, cfg.color_sigma_squared);

    std::vector<Parameter*> gen_params = r.generator.trainable_parameters();
    std::vector<Parameter*> disc_params = r.discriminator.trainable_parameters();
    Adam adam_gen(gen_params, cfg.adam);
    Adam adam_disc(disc_params, cfg.adam);

    BatchSampler sampler(pairs, cfg.batch_size, Rng(cfg.seed).fork(3));
    const bool adversarial = cfg.weights.texture > 0.0f;

    if (log_stream) (*log_stream) << kLogHeader << "\n";

    for (int64_t iter = 1; iter <= cfg.iterations; ++iter) {
        const auto t0 = std::chrono::steady_clock::now();
        BatchSampler::Batch batch = sampler.next();

        if (adversarial) {
            // fresh fakes, no gradient back into the generator
            Tensor fake;
            {
                Tape no_grad(false);
                Node* x = no_grad.leaf(batch.phone, false);
                fake = r.generator.forward(no_grad, x, BatchNormMode::Train)->value;
            }
            zero_grads(disc_params);
            Tape t;
            Node* real_n = t.leaf(batch.dslr, false);
            Node* fake_n = t.leaf(fake, false);
            Node* d_loss = texture_loss_discriminator(t, r.discriminator, real_n, fake_n);
            t.backward(d_loss);
            adam_disc.step();
        }

        zero_grads(gen_params);
        Tape t;
        Node* phone = t.leaf(batch.phone, false);
        Node* dslr = t.leaf(batch.dslr, false);
        Node* enhanced = r.generator.forward(t, phone, BatchNormMode::Train);
        Node* l_content = content_loss(t, fe, enhanced, dslr, cfg.content_squared);
        Node* l_texture = adversarial
                              ? texture_loss_generator(t, r.discriminator, enhanced)
                              : t.leaf(Tensor::zeros({1, 1, 1, 1}), false);
        Node* l_color = color_loss(t, enhanced, dslr, blur_kernel);
        Node* l_tv = tv_loss(t, enhanced, cfg.tv_literal);
        auto [total, breakdown] = total_loss(t, l_content, l_texture, l_color, l_tv, cfg.weights);
        if (!std::isfinite(breakdown.total)) {
            std::string ids;
            for (const std::string& id : batch.ids) ids += id + " ";
            throw TrainError("train: non-finite total loss at iteration " + std::to_string(iter) +
                             "; batch ids: " + ids);
        }
        t.backward(total);
        adam_gen.step();

        const auto t1 = std::chrono::steady_clock::now();
        const float wall_ms = std::chrono::duration<float, std::milli>(t1 - t0).count();
        r.log.push_back(breakdown);
        if (log_stream) (*log_stream) << to_log_line(iter, breakdown, wall_ms) << "\n";

        if (held_out && cfg.eval_every > 0 && iter % cfg.eval_every == 0) {
            double acc = 0.0;
            for (const PatchPair& p : *held_out) {
                acc += psnr(r.generator.infer(p.phone), p.dslr, 1.0f);
            }
            if (log_stream) {
                (*log_stream) << "# eval iter=" << iter << " psnr=" << acc / held_out->size() << "\n";
            }
        }
        if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0) {
            detail::write_checkpoint(cfg, r.generator, r.discriminator, iter);
        }
    }
    if (!cfg.out_dir.empty()) {
        detail::write_checkpoint(cfg, r.generator, r.discriminator, cfg.iterations);
    }
    return r;
}

} // namespace fpie
