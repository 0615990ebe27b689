#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "toyvlm/checkpoint.hpp"
#include "toyvlm/config.hpp"
#include "toyvlm/data.hpp"
#include "toyvlm/model.hpp"
#include "toyvlm/optim.hpp"

namespace toyvlm {

struct TrainReport {
    std::vector<double> loss_series;  // one entry per optimizer step
    std::vector<double> lr_series;
    double wall_time_sec = 0;
    std::string checkpoint_path;
    std::vector<std::pair<std::int64_t, double>> eval_snapshots;  // (step, score)
};

// Writes "step loss lr" lines.
inline void write_metrics_log(const TrainReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("write_metrics_log: cannot open " + path);
    f << "step loss lr\n";
    for (std::size_t i = 0; i < report.loss_series.size(); ++i)
        f << i << " " << report.loss_series[i] << " " << report.lr_series[i] << "\n";
}

// Optional periodic evaluation: called every `every` optimizer steps.
template <class T>
struct EvalHook {
    int every = 0;
    std::function<double(VlmT<T>&)> fn;
};

// Runs one stage of the recipe over the seeded mixture stream: AdamW with
// cosine annealing, the stage's freezing policy, and a checkpoint at the
// end. Frozen groups are checksummed before and after; drift is a hard
// error. NaN loss aborts with the step index.
template <class T>
TrainReport run_stage(const StageConfig& cfg, VlmT<T>& model,
                      const std::map<std::string, std::vector<TaskRecord>>& corpora,
                      const std::string& checkpoint_path, const EvalHook<T>* eval_hook = nullptr,
                      bool verbose = false) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    model.set_frozen_groups(cfg.freeze);
    std::map<std::string, std::uint64_t> frozen_sums;
    for (const auto& g : cfg.freeze) frozen_sums[g] = model.group_checksum(g);

    MixtureSpec mixture = cfg.mixture;
    mixture.seed = derive_seed(cfg.seed, std::string("mixture_") + stage_name(cfg.stage), 0);
    MixtureSampler sampler(mixture, corpora);
    if (sampler.epoch_size() == 0) throw ConfigError("run_stage: mixture has no records");

    const std::int64_t samples_per_step =
        static_cast<std::int64_t>(cfg.batch_size) * cfg.grad_accumulation;
    const std::int64_t total_samples = static_cast<std::int64_t>(cfg.epochs) * sampler.epoch_size();
    const std::int64_t total_steps = total_samples / samples_per_step;
    if (total_steps == 0)
        throw ConfigError("run_stage: corpus too small for one optimizer step (" +
                          std::to_string(total_samples) + " samples, " + std::to_string(samples_per_step) +
                          " per step)");

    const LrSchedule sched{cfg.initial_lr, cfg.final_lr, total_steps};
    AdamWT<T> opt;
    auto trainable = model.trainable_params();
    if (trainable.empty()) throw ConfigError("run_stage: no trainable parameters");

    const int effective_limit = std::min(cfg.token_limit, model.config().max_seq_len);
    const Tokenizer& tok = model.tokenizer();

    TrainReport report;
    model.zero_grads();
    for (std::int64_t step = 0; step < total_steps; ++step) {
        const double lr = cosine_lr(sched, step);
        double loss_sum = 0;
        for (std::int64_t s = 0; s < samples_per_step; ++s) {
            TaskRecord rec = sampler.next();
            const auto budget = check_token_budget(render_template(rec, cfg.chat_template, cfg.fix_template_typos),
                                                   tok, model.config().n_img_tokens, effective_limit);
            if (!budget.fits)
                throw InputError("run_stage: record of " + std::to_string(budget.actual) +
                                 " tokens exceeds the stream limit " + std::to_string(effective_limit));
            try {
                auto loss = model.record_loss(std::move(rec), cfg.chat_template, cfg.fix_template_typos);
                const double lv = loss.item();
                if (!std::isfinite(lv)) throw NumericError("non-finite loss");
                loss_sum += lv;
                backward(scale(loss, 1.0 / static_cast<double>(samples_per_step)));
            } catch (const NumericError& e) {
                throw NumericError(std::string("run_stage: aborted at optimizer step ") + std::to_string(step) +
                                   ": " + e.what());
            }
        }
        opt.step(trainable, lr);
        model.zero_grads();
        report.loss_series.push_back(loss_sum / static_cast<double>(samples_per_step));
        report.lr_series.push_back(lr);
        if (verbose) {
            std::printf("[%s] step %lld/%lld loss %.4f lr %.3g\n", stage_name(cfg.stage),
                        static_cast<long long>(step + 1), static_cast<long long>(total_steps),
                        report.loss_series.back(), lr);
            std::fflush(stdout);
        }
        if (eval_hook && eval_hook->every > 0 && (step + 1) % eval_hook->every == 0)
            report.eval_snapshots.emplace_back(step + 1, eval_hook->fn(model));
    }

    for (const auto& [g, sum] : frozen_sums)
        if (model.group_checksum(g) != sum)
            throw NumericError("run_stage: frozen group '" + g + "' drifted during training");

    if (!checkpoint_path.empty()) {
        save_checkpoint(checkpoint_path, model.params(), model.config(), stage_name(cfg.stage));
        report.checkpoint_path = checkpoint_path;
    }
    report.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// Copies matching parameters from a checkpoint into a model. Strict mode
// errors on any name mismatch; lenient mode reports skipped names.
template <class T>
LoadReport init_from_checkpoint(VlmT<T>& model, const LoadedCheckpoint& ckpt, bool strict) {
    return load_into_params(ckpt, model.params(), strict);
}

// Composes the stage-2 model: vocabulary branch weights from the stage-1
// checkpoint, second branch loaded from its own checkpoint or freshly
// initialized, input embedding layers and LM freshly initialized.
template <class T>
VlmT<T> build_composite(const LoadedCheckpoint& vocab_ckpt, const LoadedCheckpoint* clip_ckpt,
                        const ModelConfig& lm_cfg, std::uint64_t init_seed = 0) {
    const ModelConfig& vc = vocab_ckpt.meta.config;
    auto mismatch = [&](const char* field, int a, int b) {
        if (a != b)
            throw ConfigError(std::string("build_composite: ") + field + " mismatch; stage-1 config {" +
                              vc.to_text() + "} vs target config {" + lm_cfg.to_text() + "}");
    };
    mismatch("n_img_tokens", vc.n_img_tokens, lm_cfg.n_img_tokens);
    mismatch("c_branch", vc.c_branch, lm_cfg.c_branch);
    mismatch("high_res", vc.high_res, lm_cfg.high_res);
    mismatch("enc_dim", vc.enc_dim, lm_cfg.enc_dim);
    mismatch("enc_layers", vc.enc_layers, lm_cfg.enc_layers);

    VlmT<T> model(lm_cfg, init_seed);
    // vocabulary branch only; embed/lm stay fresh
    std::map<std::string, TensorT<T>> branch_params;
    for (auto& [name, p] : model.params())
        if (name.rfind("vocab_branch.", 0) == 0) branch_params.emplace(name, p);
    load_into_params(vocab_ckpt, branch_params, false);
    if (clip_ckpt) {
        std::map<std::string, TensorT<T>> clip_params;
        for (auto& [name, p] : model.params())
            if (name.rfind("clip_branch.", 0) == 0) clip_params.emplace(name, p);
        load_into_params(*clip_ckpt, clip_params, false);
    }
    return model;
}

}  // namespace toyvlm
