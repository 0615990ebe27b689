#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "toyvlm/data.hpp"

namespace toyvlm {

// Topology of the two-branch model. A checkpoint only loads against an
// identical config echo.
struct ModelConfig {
    int high_res = 64;       // square input of the vocabulary branch
    int low_res = 32;        // square crop of the second branch
    int n_img_tokens = 16;   // tokens per branch (perfect square)
    int c_branch = 32;       // channels per branch
    int d_model = 64;        // LM hidden size; dual-branch: 2 * c_branch
    int n_layers = 2;
    int n_heads = 4;
    int vocab_size = 262;
    int max_seq_len = 512;
    int enc_dim = 32;        // encoder width inside each branch
    int enc_layers = 1;
    int enc_heads = 4;
    bool dual_branch = true;  // false: stage-1 pipeline (vocabulary branch only)

    // CPU-trainable defaults preserving every structural contract.
    static ModelConfig toy();
    // Stage-1 (vocabulary generation) variant of toy().
    static ModelConfig toy_tiny_plus();
    // The published token/channel geometry: 1024/224 inputs, 256 tokens,
    // 1024 channels per branch, 2048 LM input channels.
    static ModelConfig paper_shape();

    void validate() const;

    // Derived geometry.
    int token_grid() const;        // sqrt(n_img_tokens)
    int vocab_patch_grid() const;  // 4 * token_grid(): two stride-2 convs away
    int vocab_patch_size() const;
    int clip_patch_size() const;

    std::map<std::string, std::string> to_kv() const;
    static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);

    bool operator==(const ModelConfig&) const = default;
};

enum class StageKind { TinyPlus, Pretrain, Sft };

const char* stage_name(StageKind s);

// One training stage: schedule, freezing policy, mixture.
struct StageConfig {
    StageKind stage = StageKind::TinyPlus;
    int batch_size = 8;
    int grad_accumulation = 4;
    int epochs = 2;
    double initial_lr = 5e-5;
    double final_lr = 0.0;
    MixtureSpec mixture;
    std::set<std::string> freeze;  // parameter-group prefixes
    std::uint64_t seed = 0;
    int token_limit = 4096;
    TemplateKind chat_template = TemplateKind::VicunaV1;
    bool fix_template_typos = false;

    // Published-recipe presets (batch 512); desk-scale runs shrink the
    // batch via config.
    static StageConfig paper_tiny_plus();  // 512, 2 epochs, 5e-5 -> 0, nothing frozen
    static StageConfig paper_pretrain();   // 512, 1 epoch, 5e-5, branches frozen
    static StageConfig paper_sft();        // 512, 1 epoch, 2e-5, branches frozen

    void validate() const;
};

// ---------------------------------------------------------------------------
// key = value config files with [section] blocks
// ---------------------------------------------------------------------------

using ConfigSections = std::map<std::string, std::map<std::string, std::string>>;

ConfigSections parse_config_text(const std::string& text);
ConfigSections parse_config_file(const std::string& path);
std::string config_to_text(const ConfigSections& sections);

}  // namespace toyvlm
