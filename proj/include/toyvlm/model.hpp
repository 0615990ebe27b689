#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toyvlm/config.hpp"
#include "toyvlm/data.hpp"
#include "toyvlm/image.hpp"
#include "toyvlm/optim.hpp"
#include "toyvlm/tensor.hpp"
#include "toyvlm/tokenizer.hpp"

namespace toyvlm {

// Strips the training-format quoting (`"text" `) from generated output.
inline std::string extract_response_text(const std::string& raw) {
    std::size_t b = raw.find_first_not_of(" \t\n");
    std::size_t e = raw.find_last_not_of(" \t\n");
    if (b == std::string::npos) return "";
    std::string s = raw.substr(b, e - b + 1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

// Two vision branches merged into a decoder-only language model.
//
// The vocabulary branch resizes any image to high_res^2, patch-embeds it,
// runs a small windowless transformer encoder and compresses the feature
// map with two stride-2 convolutions down to a sqrt(n_img_tokens) grid of
// c_branch-channel tokens. The second branch center-crops to low_res^2 and
// patch-embeds straight to the token grid. Each branch output passes
// through its own learned linear input-embedding layer; in dual-branch
// mode the results are concatenated channel-wise to d_model = 2*c_branch.
template <class T>
class VlmT {
public:
    explicit VlmT(ModelConfig cfg, std::uint64_t init_seed = 0) : cfg_(std::move(cfg)) {
        cfg_.validate();
        init_params(init_seed);
    }

    const ModelConfig& config() const { return cfg_; }
    const Tokenizer& tokenizer() const { return tok_; }

    // --- parameters ------------------------------------------------------

    std::map<std::string, TensorT<T>>& params() { return params_; }
    const std::map<std::string, TensorT<T>>& params() const { return params_; }

    // Marks parameters trainable except those under a frozen group prefix
    // ("vocab_branch", "clip_branch", "embed", "lm").
    void set_frozen_groups(const std::set<std::string>& groups) {
        for (auto& [name, p] : params_) p.node->requires_grad = !in_groups(name, groups);
    }

    std::vector<TensorT<T>> trainable_params() {
        std::vector<TensorT<T>> out;
        for (auto& [name, p] : params_)
            if (p.requires_grad()) out.push_back(p);
        return out;
    }

    void zero_grads() {
        for (auto& [name, p] : params_) p.zero_grad();
    }

    // FNV-1a over the little-endian float bytes of every parameter whose
    // name starts with `prefix`.
    std::uint64_t group_checksum(const std::string& prefix) const;

    // --- vision ----------------------------------------------------------

    TensorT<T> encode_vocab_branch(const Image& img);
    TensorT<T> encode_clip_branch(const Image& img);
    // Branch embeddings + concatenation (dual) or single-branch projection.
    TensorT<T> merge_branches(const TensorT<T>& vocab_tokens, const TensorT<T>* clip_tokens);
    // Full image path: branches + merge.
    TensorT<T> encode_image(const Image& img);

    // --- language model --------------------------------------------------

    struct Assembled {
        TensorT<T> embeddings;       // [len, d_model]
        std::vector<int> flat_ids;   // token id per position, -1 inside the image block
        std::vector<bool> response;  // true on response-segment positions
        int image_offset = -1;       // -1 when no image block
    };

    // Splices image embeddings into the tokenized conversation at the
    // <image> placeholder. img_tokens must come from encode_image (or be
    // null for text-only records).
    Assembled assemble_sequence(const RenderedParts& parts, const TensorT<T>* img_tokens);

    // Causal transformer over assembled embeddings -> [len, vocab] logits.
    TensorT<T> forward_lm(const TensorT<T>& embeddings);

    // Next-token cross-entropy over response positions.
    TensorT<T> loss_on(const Assembled& seq);

    // Convenience: render + encode + assemble + loss for one record.
    TensorT<T> record_loss(TaskRecord rec, TemplateKind tmpl, bool fix_typos = false);

    struct GenerateResult {
        std::string text;  // assistant text with quoting stripped
        std::string raw;   // decoded tokens as generated
        bool truncated = false;
    };

    // Greedy decoding until the template's end token or max_new tokens.
    GenerateResult generate(const std::string& prompt, const Image* img, TemplateKind tmpl, int max_new,
                            TaskKind kind_hint = TaskKind::Vqa);

private:
    ModelConfig cfg_;
    Tokenizer tok_;
    std::map<std::string, TensorT<T>> params_;

    static bool in_groups(const std::string& name, const std::set<std::string>& groups) {
        for (const auto& g : groups)
            if (name.rfind(g + ".", 0) == 0) return true;
        return false;
    }

    void init_params(std::uint64_t seed);
    TensorT<T>& param(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("unknown parameter " + name);
        return it->second;
    }

    TensorT<T> linear(const TensorT<T>& x, const std::string& prefix) {
        return add(matmul(x, param(prefix + ".w")), param(prefix + ".b"));
    }
    TensorT<T> block(const TensorT<T>& x, const std::string& prefix, int dim, int heads, bool causal);
    TensorT<T> encoder_stack(TensorT<T> x, const std::string& branch);
    TensorT<T> patch_embed(const Image& resized, int patch, const std::string& branch);
};

using Vlm = VlmT<float>;

// ---------------------------------------------------------------------------
// implementation
// ---------------------------------------------------------------------------

template <class T>
void VlmT<T>::init_params(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "model_init", 0));
    const double std_w = 0.02;
    auto weight = [&](const std::string& name, std::vector<int> shape) {
        params_.emplace(name, TensorT<T>::randn(std::move(shape), rng, std_w, true));
    };
    auto zeros = [&](const std::string& name, std::vector<int> shape) {
        params_.emplace(name, TensorT<T>::zeros(std::move(shape), true));
    };
    auto ones = [&](const std::string& name, int d) {
        auto t = TensorT<T>::zeros({d}, true);
        for (auto& v : t.data()) v = T(1);
        params_.emplace(name, std::move(t));
    };
    auto add_block = [&](const std::string& prefix, int dim, int mlp_dim) {
        ones(prefix + ".ln1.g", dim);
        zeros(prefix + ".ln1.b", {dim});
        for (const char* m : {"q", "k", "v", "o"}) {
            weight(prefix + ".attn.w" + std::string(m), {dim, dim});
            zeros(prefix + ".attn.b" + std::string(m), {dim});
        }
        ones(prefix + ".ln2.g", dim);
        zeros(prefix + ".ln2.b", {dim});
        weight(prefix + ".mlp.fc1.w", {dim, mlp_dim});
        zeros(prefix + ".mlp.fc1.b", {mlp_dim});
        weight(prefix + ".mlp.fc2.w", {mlp_dim, dim});
        zeros(prefix + ".mlp.fc2.b", {dim});
    };

    const int g = cfg_.token_grid();
    const int pg = cfg_.vocab_patch_grid();
    const int c_mid = cfg_.c_branch / 2;

    // vocabulary branch
    weight("vocab_branch.patch.w", {3 * cfg_.vocab_patch_size() * cfg_.vocab_patch_size(), cfg_.enc_dim});
    zeros("vocab_branch.patch.b", {cfg_.enc_dim});
    weight("vocab_branch.pos", {pg * pg, cfg_.enc_dim});
    for (int l = 0; l < cfg_.enc_layers; ++l)
        add_block("vocab_branch.layer" + std::to_string(l), cfg_.enc_dim, 4 * cfg_.enc_dim);
    ones("vocab_branch.enc_ln.g", cfg_.enc_dim);
    zeros("vocab_branch.enc_ln.b", {cfg_.enc_dim});
    weight("vocab_branch.conv1.w", {c_mid, cfg_.enc_dim, 2, 2});
    zeros("vocab_branch.conv1.b", {c_mid});
    weight("vocab_branch.conv2.w", {cfg_.c_branch, c_mid, 2, 2});
    zeros("vocab_branch.conv2.b", {cfg_.c_branch});
    ones("vocab_branch.out_ln.g", cfg_.c_branch);
    zeros("vocab_branch.out_ln.b", {cfg_.c_branch});

    if (cfg_.dual_branch) {
        weight("clip_branch.patch.w", {3 * cfg_.clip_patch_size() * cfg_.clip_patch_size(), cfg_.enc_dim});
        zeros("clip_branch.patch.b", {cfg_.enc_dim});
        weight("clip_branch.pos", {g * g, cfg_.enc_dim});
        for (int l = 0; l < cfg_.enc_layers; ++l)
            add_block("clip_branch.layer" + std::to_string(l), cfg_.enc_dim, 4 * cfg_.enc_dim);
        ones("clip_branch.enc_ln.g", cfg_.enc_dim);
        zeros("clip_branch.enc_ln.b", {cfg_.enc_dim});
        weight("clip_branch.proj.w", {cfg_.enc_dim, cfg_.c_branch});
        zeros("clip_branch.proj.b", {cfg_.c_branch});
        ones("clip_branch.out_ln.g", cfg_.c_branch);
        zeros("clip_branch.out_ln.b", {cfg_.c_branch});
        // one input embedding layer per vocabulary network
        weight("embed.vocab.w", {cfg_.c_branch, cfg_.c_branch});
        zeros("embed.vocab.b", {cfg_.c_branch});
        weight("embed.clip.w", {cfg_.c_branch, cfg_.c_branch});
        zeros("embed.clip.b", {cfg_.c_branch});
    } else {
        weight("embed.vocab.w", {cfg_.c_branch, cfg_.d_model});
        zeros("embed.vocab.b", {cfg_.d_model});
    }

    // language model
    weight("lm.tok_emb", {cfg_.vocab_size, cfg_.d_model});
    weight("lm.pos_emb", {cfg_.max_seq_len, cfg_.d_model});
    for (int l = 0; l < cfg_.n_layers; ++l)
        add_block("lm.layer" + std::to_string(l), cfg_.d_model, 4 * cfg_.d_model);
    ones("lm.final_ln.g", cfg_.d_model);
    zeros("lm.final_ln.b", {cfg_.d_model});
    weight("lm.head.w", {cfg_.d_model, cfg_.vocab_size});
    zeros("lm.head.b", {cfg_.vocab_size});
}

template <class T>
std::uint64_t VlmT<T>::group_checksum(const std::string& prefix) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* bytes, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(bytes);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [name, p] : params_) {
        if (p.node == nullptr) continue;
        if (!prefix.empty() && name.rfind(prefix + ".", 0) != 0) continue;
        mix(name.data(), name.size());
        for (T v : p.data()) {
            const float f = static_cast<float>(v);
            mix(&f, sizeof(f));
        }
    }
    return h;
}

template <class T>
TensorT<T> VlmT<T>::patch_embed(const Image& resized, int patch, const std::string& branch) {
    const int grid = resized.height / patch;
    const int pdim = 3 * patch * patch;
    std::vector<T> data(static_cast<std::size_t>(grid) * grid * pdim);
    std::size_t idx = 0;
    for (int py = 0; py < grid; ++py)
        for (int px = 0; px < grid; ++px)
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < patch; ++y)
                    for (int x = 0; x < patch; ++x)
                        data[idx++] = static_cast<T>(resized.at(py * patch + y, px * patch + x)[c] / 255.0);
    auto patches = TensorT<T>::from_data({grid * grid, pdim}, std::move(data), false);
    auto emb = linear(patches, branch + ".patch");
    return add(emb, param(branch + ".pos"));
}

template <class T>
TensorT<T> VlmT<T>::block(const TensorT<T>& x, const std::string& prefix, int dim, int heads, bool causal) {
    const int dh = dim / heads;
    // attention with pre-norm residual
    auto h = layer_norm(x, param(prefix + ".ln1.g"), param(prefix + ".ln1.b"));
    auto q = add(matmul(h, param(prefix + ".attn.wq")), param(prefix + ".attn.bq"));
    auto k = add(matmul(h, param(prefix + ".attn.wk")), param(prefix + ".attn.bk"));
    auto v = add(matmul(h, param(prefix + ".attn.wv")), param(prefix + ".attn.bv"));
    std::vector<TensorT<T>> head_outs;
    for (int hd = 0; hd < heads; ++hd) {
        auto qh = slice_cols(q, hd * dh, dh);
        auto kh = slice_cols(k, hd * dh, dh);
        auto vh = slice_cols(v, hd * dh, dh);
        auto scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
        auto probs = softmax_rows(scores, causal);
        head_outs.push_back(matmul(probs, vh));
    }
    auto attn = add(matmul(concat_cols(head_outs), param(prefix + ".attn.wo")), param(prefix + ".attn.bo"));
    auto x1 = add(x, attn);
    // MLP with pre-norm residual
    auto h2 = layer_norm(x1, param(prefix + ".ln2.g"), param(prefix + ".ln2.b"));
    auto m = linear(gelu(linear(h2, prefix + ".mlp.fc1")), prefix + ".mlp.fc2");
    return add(x1, m);
}

template <class T>
TensorT<T> VlmT<T>::encoder_stack(TensorT<T> x, const std::string& branch) {
    for (int l = 0; l < cfg_.enc_layers; ++l)
        x = block(x, branch + ".layer" + std::to_string(l), cfg_.enc_dim, cfg_.enc_heads, false);
    return layer_norm(x, param(branch + ".enc_ln.g"), param(branch + ".enc_ln.b"));
}

template <class T>
TensorT<T> VlmT<T>::encode_vocab_branch(const Image& img) {
    if (!img.valid()) throw InputError("encode_vocab_branch: invalid image");
    const Image resized = resize_bilinear(img, cfg_.high_res, cfg_.high_res);
    auto x = encoder_stack(patch_embed(resized, cfg_.vocab_patch_size(), "vocab_branch"), "vocab_branch");
    // [pg*pg, enc_dim] -> [enc_dim, pg, pg] for the paired compression convs
    const int pg = cfg_.vocab_patch_grid();
    auto fmap = reshape(transpose(x), {cfg_.enc_dim, pg, pg});
    auto& b1 = param("vocab_branch.conv1.b");
    auto c1 = gelu(conv2d(fmap, param("vocab_branch.conv1.w"), 2, &b1));
    auto& b2 = param("vocab_branch.conv2.b");
    auto c2 = conv2d(c1, param("vocab_branch.conv2.w"), 2, &b2);
    auto tokens = chw_to_tokens(c2);  // [n_img_tokens, c_branch]
    return layer_norm(tokens, param("vocab_branch.out_ln.g"), param("vocab_branch.out_ln.b"));
}

template <class T>
TensorT<T> VlmT<T>::encode_clip_branch(const Image& img) {
    if (!cfg_.dual_branch) throw ConfigError("encode_clip_branch: model has no second branch");
    if (!img.valid()) throw InputError("encode_clip_branch: invalid image");
    const Image cropped = resize_short_side_center_crop(img, cfg_.low_res);
    auto x = encoder_stack(patch_embed(cropped, cfg_.clip_patch_size(), "clip_branch"), "clip_branch");
    auto tokens = linear(x, "clip_branch.proj");  // [n_img_tokens, c_branch]
    return layer_norm(tokens, param("clip_branch.out_ln.g"), param("clip_branch.out_ln.b"));
}

template <class T>
TensorT<T> VlmT<T>::merge_branches(const TensorT<T>& vocab_tokens, const TensorT<T>* clip_tokens) {
    if (cfg_.dual_branch) {
        if (clip_tokens == nullptr) throw DimensionError("merge_branches: dual-branch model needs both inputs");
        if (vocab_tokens.shape() != clip_tokens->shape())
            throw DimensionError("merge_branches: shape mismatch " + shape_str(vocab_tokens.shape()) + " vs " +
                                 shape_str(clip_tokens->shape()));
        auto a = linear(vocab_tokens, "embed.vocab");
        auto b = linear(*clip_tokens, "embed.clip");
        return concat_cols<T>({a, b});
    }
    if (clip_tokens != nullptr) throw DimensionError("merge_branches: single-branch model takes one input");
    return linear(vocab_tokens, "embed.vocab");
}

template <class T>
TensorT<T> VlmT<T>::encode_image(const Image& img) {
    auto vt = encode_vocab_branch(img);
    if (!cfg_.dual_branch) return merge_branches(vt, nullptr);
    auto ct = encode_clip_branch(img);
    return merge_branches(vt, &ct);
}

template <class T>
typename VlmT<T>::Assembled VlmT<T>::assemble_sequence(const RenderedParts& parts, const TensorT<T>* img_tokens) {
    const std::vector<int> prefix_ids = tok_.encode(parts.prefix);
    const std::vector<int> response_ids = tok_.encode(parts.response);
    int placeholders = 0;
    for (int id : prefix_ids) placeholders += id == Tokenizer::kImagePlaceholder;
    for (int id : response_ids) placeholders += id == Tokenizer::kImagePlaceholder;
    if (img_tokens != nullptr && placeholders != 1)
        throw FormatError("assemble_sequence: expected exactly one <image> placeholder, found " +
                          std::to_string(placeholders));
    if (img_tokens == nullptr && placeholders != 0)
        throw FormatError("assemble_sequence: <image> placeholder present but no image given");
    if (img_tokens != nullptr && img_tokens->shape() != std::vector<int>{cfg_.n_img_tokens, cfg_.d_model})
        throw DimensionError("assemble_sequence: image tokens must be [" + std::to_string(cfg_.n_img_tokens) + "," +
                             std::to_string(cfg_.d_model) + "], got " + shape_str(img_tokens->shape()));

    Assembled out;
    std::vector<TensorT<T>> segments;
    std::vector<int> text_run;
    auto flush = [&](bool response_flag) {
        if (text_run.empty()) return;
        segments.push_back(embedding_rows(param("lm.tok_emb"), text_run));
        for (int id : text_run) {
            out.flat_ids.push_back(id);
            out.response.push_back(response_flag);
        }
        text_run.clear();
    };
    auto feed = [&](const std::vector<int>& ids, bool response_flag) {
        for (int id : ids) {
            if (id == Tokenizer::kImagePlaceholder) {
                flush(response_flag);
                out.image_offset = static_cast<int>(out.flat_ids.size());
                segments.push_back(*img_tokens);
                for (int i = 0; i < cfg_.n_img_tokens; ++i) {
                    out.flat_ids.push_back(-1);
                    out.response.push_back(false);
                }
            } else {
                text_run.push_back(id);
            }
        }
        flush(response_flag);
    };
    feed(prefix_ids, false);
    feed(response_ids, true);

    const int len = static_cast<int>(out.flat_ids.size());
    if (len > cfg_.max_seq_len)
        throw InputError("assemble_sequence: sequence length " + std::to_string(len) + " exceeds max_seq_len " +
                         std::to_string(cfg_.max_seq_len));
    auto emb = concat_rows(segments);
    std::vector<int> pos_ids(len);
    for (int i = 0; i < len; ++i) pos_ids[i] = i;
    out.embeddings = add(emb, embedding_rows(param("lm.pos_emb"), pos_ids));
    return out;
}

template <class T>
TensorT<T> VlmT<T>::forward_lm(const TensorT<T>& embeddings) {
    const auto& s = embeddings.shape();
    if (s.size() != 2 || s[1] != cfg_.d_model)
        throw DimensionError("forward_lm: expected [len," + std::to_string(cfg_.d_model) + "], got " + shape_str(s));
    if (s[0] > cfg_.max_seq_len)
        throw InputError("forward_lm: sequence length " + std::to_string(s[0]) + " exceeds max_seq_len " +
                         std::to_string(cfg_.max_seq_len));
    auto x = embeddings;
    for (int l = 0; l < cfg_.n_layers; ++l)
        x = block(x, "lm.layer" + std::to_string(l), cfg_.d_model, cfg_.n_heads, true);
    x = layer_norm(x, param("lm.final_ln.g"), param("lm.final_ln.b"));
    return linear(x, "lm.head");
}

template <class T>
TensorT<T> VlmT<T>::loss_on(const Assembled& seq) {
    const int len = static_cast<int>(seq.flat_ids.size());
    auto logits = forward_lm(seq.embeddings);
    std::vector<int> targets(len, 0);
    std::vector<bool> mask(len, false);
    for (int i = 0; i + 1 < len; ++i) {
        const int next = seq.flat_ids[i + 1];
        if (next >= 0 && seq.response[i + 1]) {
            targets[i] = next;
            mask[i] = true;
        }
    }
    return softmax_cross_entropy(logits, targets, mask);
}

template <class T>
TensorT<T> VlmT<T>::record_loss(TaskRecord rec, TemplateKind tmpl, bool fix_typos) {
    validate_record(rec);
    const RenderedParts parts = render_template_parts(rec, tmpl, fix_typos);
    if (rec.kind == TaskKind::Nlp) {
        auto seq = assemble_sequence(parts, nullptr);
        return loss_on(seq);
    }
    auto img_tokens = encode_image(load_record_image(rec));
    auto seq = assemble_sequence(parts, &img_tokens);
    return loss_on(seq);
}

template <class T>
typename VlmT<T>::GenerateResult VlmT<T>::generate(const std::string& prompt, const Image* img, TemplateKind tmpl,
                                                   int max_new, TaskKind kind_hint) {
    TaskRecord rec;
    rec.kind = img ? kind_hint : TaskKind::Nlp;
    rec.prompt = prompt;
    const RenderedParts parts = render_template_parts(rec, tmpl);
    std::optional<TensorT<T>> img_tokens;
    if (img) img_tokens = encode_image(*img);

    const int eos = tmpl == TemplateKind::VicunaV1 ? Tokenizer::kEos : Tokenizer::kImEnd;

    GenerateResult res;
    if (max_new <= 0) return res;

    // The prompt part of the sequence is fixed; generated ids are appended
    // and the full (cache-less) forward is re-run per token.
    std::vector<int> generated;
    for (int step = 0; step < max_new; ++step) {
        RenderedParts cur = parts;
        cur.response = tok_.decode(generated);
        auto seq = assemble_sequence(cur, img ? &*img_tokens : nullptr);
        auto logits = forward_lm(seq.embeddings);
        const int len = logits.shape()[0];
        const int v = logits.shape()[1];
        const T* row = logits.data().data() + static_cast<std::size_t>(len - 1) * v;
        int best = 0;
        for (int j = 1; j < v; ++j)
            if (row[j] > row[best]) best = j;
        if (best == eos) {
            res.raw = tok_.decode(generated);
            res.text = extract_response_text(res.raw);
            return res;
        }
        generated.push_back(best);
    }
    res.truncated = true;
    res.raw = tok_.decode(generated);
    res.text = extract_response_text(res.raw);
    return res;
}

}  // namespace toyvlm
