#include "toyvlm/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "toyvlm/errors.hpp"

namespace toyvlm {

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::toy_tiny_plus() {
    ModelConfig cfg;
    cfg.dual_branch = false;
    return cfg;
}

ModelConfig ModelConfig::paper_shape() {
    ModelConfig cfg;
    cfg.high_res = 1024;
    cfg.low_res = 224;
    cfg.n_img_tokens = 256;
    cfg.c_branch = 1024;
    cfg.d_model = 2048;
    cfg.n_layers = 1;
    cfg.n_heads = 16;
    cfg.max_seq_len = 300;
    cfg.enc_dim = 32;
    cfg.enc_layers = 1;
    cfg.enc_heads = 4;
    return cfg;
}

int ModelConfig::token_grid() const {
    const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_img_tokens))));
    return g;
}

int ModelConfig::vocab_patch_grid() const { return 4 * token_grid(); }
int ModelConfig::vocab_patch_size() const { return high_res / vocab_patch_grid(); }
int ModelConfig::clip_patch_size() const { return low_res / token_grid(); }

void ModelConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v <= 0) throw ConfigError(std::string("ModelConfig: ") + name + " must be positive");
    };
    positive(high_res, "high_res");
    positive(low_res, "low_res");
    positive(n_img_tokens, "n_img_tokens");
    positive(c_branch, "c_branch");
    positive(d_model, "d_model");
    positive(n_layers, "n_layers");
    positive(n_heads, "n_heads");
    positive(vocab_size, "vocab_size");
    positive(max_seq_len, "max_seq_len");
    positive(enc_dim, "enc_dim");
    positive(enc_heads, "enc_heads");
    if (enc_layers < 0) throw ConfigError("ModelConfig: enc_layers must be >= 0");
    const int g = token_grid();
    if (g * g != n_img_tokens)
        throw ConfigError("ModelConfig: n_img_tokens=" + std::to_string(n_img_tokens) + " is not a perfect square");
    if (dual_branch && d_model != 2 * c_branch)
        throw ConfigError("ModelConfig: d_model=" + std::to_string(d_model) + " must equal 2*c_branch=" +
                          std::to_string(2 * c_branch));
    if (max_seq_len < n_img_tokens + 2)
        throw ConfigError("ModelConfig: max_seq_len must be >= n_img_tokens + 2");
    if (high_res % vocab_patch_grid() != 0)
        throw ConfigError("ModelConfig: high_res=" + std::to_string(high_res) + " not divisible by patch grid " +
                          std::to_string(vocab_patch_grid()));
    if (low_res % g != 0)
        throw ConfigError("ModelConfig: low_res=" + std::to_string(low_res) + " not divisible by token grid " +
                          std::to_string(g));
    if (d_model % n_heads != 0) throw ConfigError("ModelConfig: d_model not divisible by n_heads");
    if (enc_dim % enc_heads != 0) throw ConfigError("ModelConfig: enc_dim not divisible by enc_heads");
    if (c_branch % 2 != 0) throw ConfigError("ModelConfig: c_branch must be even");
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
    return {
        {"high_res", std::to_string(high_res)},       {"low_res", std::to_string(low_res)},
        {"n_img_tokens", std::to_string(n_img_tokens)}, {"c_branch", std::to_string(c_branch)},
        {"d_model", std::to_string(d_model)},         {"n_layers", std::to_string(n_layers)},
        {"n_heads", std::to_string(n_heads)},         {"vocab_size", std::to_string(vocab_size)},
        {"max_seq_len", std::to_string(max_seq_len)}, {"enc_dim", std::to_string(enc_dim)},
        {"enc_layers", std::to_string(enc_layers)},   {"enc_heads", std::to_string(enc_heads)},
        {"dual_branch", dual_branch ? "1" : "0"},
    };
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
    ModelConfig cfg;
    auto get = [&kv](const char* key, int fallback) {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        try {
            return std::stoi(it->second);
        } catch (const std::exception&) {
            throw ConfigError(std::string("ModelConfig: bad integer for ") + key + ": " + it->second);
        }
    };
    cfg.high_res = get("high_res", cfg.high_res);
    cfg.low_res = get("low_res", cfg.low_res);
    cfg.n_img_tokens = get("n_img_tokens", cfg.n_img_tokens);
    cfg.c_branch = get("c_branch", cfg.c_branch);
    cfg.d_model = get("d_model", cfg.d_model);
    cfg.n_layers = get("n_layers", cfg.n_layers);
    cfg.n_heads = get("n_heads", cfg.n_heads);
    cfg.vocab_size = get("vocab_size", cfg.vocab_size);
    cfg.max_seq_len = get("max_seq_len", cfg.max_seq_len);
    cfg.enc_dim = get("enc_dim", cfg.enc_dim);
    cfg.enc_layers = get("enc_layers", cfg.enc_layers);
    cfg.enc_heads = get("enc_heads", cfg.enc_heads);
    cfg.dual_branch = get("dual_branch", cfg.dual_branch ? 1 : 0) != 0;
    cfg.validate();
    return cfg;
}

std::string ModelConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : to_kv()) out += k + " = " + v + "\n";
    return out;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
    const auto sections = parse_config_text(text);
    auto it = sections.find("");
    if (it == sections.end()) throw ConfigError("ModelConfig::from_text: empty config");
    return from_kv(it->second);
}

// ---------------------------------------------------------------------------

const char* stage_name(StageKind s) {
    switch (s) {
        case StageKind::TinyPlus: return "tiny_plus";
        case StageKind::Pretrain: return "pretrain";
        case StageKind::Sft: return "sft";
    }
    throw ConfigError("stage_name: bad enum value");
}

StageConfig StageConfig::paper_tiny_plus() {
    StageConfig cfg;
    cfg.stage = StageKind::TinyPlus;
    cfg.batch_size = 512;
    cfg.grad_accumulation = 1;
    cfg.epochs = 2;
    cfg.initial_lr = 5e-5;
    cfg.final_lr = 0.0;
    cfg.chat_template = TemplateKind::VicunaV1;
    return cfg;
}

StageConfig StageConfig::paper_pretrain() {
    StageConfig cfg;
    cfg.stage = StageKind::Pretrain;
    cfg.batch_size = 512;
    cfg.grad_accumulation = 1;
    cfg.epochs = 1;
    cfg.initial_lr = 5e-5;
    cfg.final_lr = 0.0;
    cfg.freeze = {"vocab_branch", "clip_branch"};
    cfg.chat_template = TemplateKind::QwenChat;
    return cfg;
}

StageConfig StageConfig::paper_sft() {
    StageConfig cfg = paper_pretrain();
    cfg.stage = StageKind::Sft;
    cfg.initial_lr = 2e-5;
    return cfg;
}

void StageConfig::validate() const {
    if (batch_size <= 0) throw ConfigError("StageConfig: batch_size must be positive");
    if (grad_accumulation <= 0) throw ConfigError("StageConfig: grad_accumulation must be positive");
    if (epochs <= 0) throw ConfigError("StageConfig: epochs must be positive");
    if (token_limit <= 0) throw ConfigError("StageConfig: token_limit must be positive");
    // Freezing policy is part of the recipe, not a free knob.
    if (stage == StageKind::TinyPlus) {
        if (!freeze.empty()) throw ConfigError("StageConfig: tiny_plus trains all parameters, freeze must be empty");
    } else {
        if (!freeze.count("vocab_branch") || !freeze.count("clip_branch"))
            throw ConfigError(std::string("StageConfig: ") + stage_name(stage) +
                              " must freeze both vision branches");
    }
}

// ---------------------------------------------------------------------------

ConfigSections parse_config_text(const std::string& text) {
    ConfigSections sections;
    std::string current;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ParseError("config: unterminated section header: " + t, lineno);
            current = trim(t.substr(1, t.size() - 2));
            sections[current];
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("config: expected key = value: " + t, lineno);
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ParseError("config: empty key", lineno);
        sections[current][key] = value;
    }
    return sections;
}

ConfigSections parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_config_text(buf.str());
}

std::string config_to_text(const ConfigSections& sections) {
    std::string out;
    for (const auto& [name, kv] : sections) {
        if (!name.empty()) out += "[" + name + "]\n";
        for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    }
    return out;
}

}  // namespace toyvlm
