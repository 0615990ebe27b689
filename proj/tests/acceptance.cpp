// Acceptance gate: nine self-contained checks, one per release criterion.
// Each prints exactly one "criterion N: PASS|FAIL" line; `--only N` runs a
// single criterion (the ctest entries), no flag runs all of them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "toyvlm/checkpoint.hpp"
#include "toyvlm/data.hpp"
#include "toyvlm/image.hpp"
#include "toyvlm/metrics.hpp"
#include "toyvlm/model.hpp"
#include "toyvlm/rng.hpp"
#include "toyvlm/synth.hpp"
#include "toyvlm/tokenizer.hpp"
#include "toyvlm/train.hpp"

using namespace toyvlm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

TensorT<double> rt(std::vector<int> shape, Rng& rng, bool rg = true) {
    return TensorT<double>::randn(std::move(shape), rng, 1.0, rg);
}

// Mean exact-character accuracy of greedy generations against the gold
// responses: 1 - total_edit_distance / total_gold_chars, floored at 0.
double char_accuracy(Vlm& model, std::vector<TaskRecord>& recs, TemplateKind tmpl) {
    std::size_t dist = 0, total = 0;
    for (auto& rec : recs) {
        const Image& img = load_record_image(rec);
        auto out = model.generate(rec.prompt, &img, tmpl, static_cast<int>(rec.response.size()) + 12,
                                  rec.kind);
        dist += levenshtein(out.text, rec.response);
        total += rec.response.size();
    }
    return total == 0 ? 0.0 : std::max(0.0, 1.0 - static_cast<double>(dist) / static_cast<double>(total));
}

// --------------------------------------------------------------------------
// 1. shape contract at full configured width
// --------------------------------------------------------------------------

bool criterion_1(std::string& detail) {
    const auto t0 = Clock::now();
    Vlm model(ModelConfig::paper_shape(), 1);
    Rng rng(11);
    Image img = Image::filled(320, 256, 0, 0, 0);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    auto tokens = model.encode_image(img);
    const double secs = seconds_since(t0);
    const bool shape_ok = tokens.shape() == std::vector<int>{256, 2048};
    detail = "encode+merge -> " + shape_str(tokens.shape()) + " in " + std::to_string(secs) + "s";
    return shape_ok && secs < 10.0;
}

// --------------------------------------------------------------------------
// 2. finite-difference gradcheck: every op + the end-to-end model
// --------------------------------------------------------------------------

bool criterion_2(std::string& detail) {
    const auto t0 = Clock::now();
    Rng rng(29);
    double worst = 0;

    {
        auto a = rt({3, 4}, rng), b = rt({4, 2}, rng);
        worst = std::max(worst, gradcheck([&] { return sum(matmul(a, b)); }, {a, b}, rng));
    }
    {
        auto a = rt({3, 4}, rng), b = rt({3, 4}, rng), bias = rt({4}, rng);
        worst = std::max(worst, gradcheck([&] { return sum(mul(add(a, bias), b)); }, {a, b, bias}, rng));
    }
    {
        auto a = rt({4, 5}, rng);
        worst = std::max(worst, gradcheck([&] { return sum(scale(mul(a, a), 0.37)); }, {a}, rng));
    }
    {
        auto a = rt({2, 6}, rng);
        worst = std::max(worst, gradcheck([&] { return sum(gelu(a)); }, {a}, rng));
    }
    {
        auto x = rt({3, 6}, rng), g = rt({6}, rng), b = rt({6}, rng);
        auto w = rt({3, 6}, rng, false);
        worst = std::max(worst, gradcheck([&] { return sum(mul(layer_norm(x, g, b), w)); }, {x, g, b}, rng));
    }
    {
        auto logits = rt({4, 6}, rng);
        worst = std::max(worst, gradcheck(
                                    [&] {
                                        return softmax_cross_entropy(logits, {0, 2, 5, 1},
                                                                     {true, false, true, true});
                                    },
                                    {logits}, rng));
    }
    {
        auto x = rt({2, 6, 6}, rng), k = rt({3, 2, 2, 2}, rng), b = rt({3}, rng);
        worst = std::max(worst, gradcheck([&] { return sum(conv2d(x, k, 2, &b)); }, {x, k, b}, rng));
    }
    {
        auto a = rt({4, 4}, rng);
        auto w = rt({4, 4}, rng, false);
        worst = std::max(worst, gradcheck([&] { return sum(mul(softmax_rows(a, true), w)); }, {a}, rng));
        worst = std::max(worst, gradcheck([&] { return sum(mul(softmax_rows(a, false), w)); }, {a}, rng));
    }
    {
        auto a = rt({3, 4}, rng);
        auto w = rt({4, 3}, rng, false);
        worst = std::max(worst, gradcheck([&] { return sum(mul(transpose(a), w)); }, {a}, rng));
    }
    {
        auto a = rt({3, 4}, rng), b = rt({3, 2}, rng);
        worst = std::max(worst, gradcheck(
                                    [&] {
                                        auto cat = concat_cols<double>({a, b});
                                        return sum(mul(slice_cols(cat, 1, 4), slice_cols(cat, 2, 4)));
                                    },
                                    {a, b}, rng));
    }
    {
        auto a = rt({2, 4}, rng), b = rt({3, 4}, rng);
        auto w = rt({5, 4}, rng, false);
        worst = std::max(worst,
                         gradcheck([&] { return sum(mul(concat_rows<double>({a, b}), w)); }, {a, b}, rng));
    }
    {
        auto table = rt({5, 3}, rng);
        auto w = rt({4, 3}, rng, false);
        worst = std::max(worst, gradcheck(
                                    [&] { return sum(mul(embedding_rows(table, {0, 3, 3, 1}), w)); },
                                    {table}, rng));
    }
    {
        auto a = rt({3, 4}, rng);
        auto w = rt({2, 6}, rng, false);
        worst = std::max(worst, gradcheck([&] { return sum(mul(reshape(a, {2, 6}), w)); }, {a}, rng));
    }
    {
        auto x = rt({2, 3, 3}, rng);
        worst = std::max(worst,
                         gradcheck([&] { return sum(mul(chw_to_tokens(x), chw_to_tokens(x))); }, {x}, rng));
    }
    const double op_worst = worst;

    // end-to-end: a small instance of the full architecture in double
    // precision, every parameter checked
    ModelConfig micro;
    micro.high_res = 32;
    micro.low_res = 8;
    micro.n_img_tokens = 4;
    micro.c_branch = 8;
    micro.d_model = 16;
    micro.n_layers = 1;
    micro.n_heads = 2;
    micro.enc_dim = 8;
    micro.enc_layers = 1;
    micro.enc_heads = 2;
    micro.max_seq_len = 128;
    VlmT<double> model(micro, 23);

    Rng prng(31);
    Image img = Image::filled(32, 48, 0, 0, 0);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(prng.uniform_int(0, 255));
    TaskRecord rec;
    rec.kind = TaskKind::Caption;
    rec.image = std::make_shared<Image>(img);
    rec.prompt = kCaptionPrompt;
    rec.response = "A noisy page.";

    std::vector<TensorT<double>> leaves;
    for (auto& [name, p] : model.params()) leaves.push_back(p);
    auto make_loss = [&] { return model.record_loss(rec, TemplateKind::VicunaV1); };
    const double model_worst = gradcheck(make_loss, leaves, prng, 20);
    worst = std::max(op_worst, model_worst);

    detail = "op worst " + std::to_string(op_worst) + ", model worst " + std::to_string(model_worst) +
             ", " + std::to_string(seconds_since(t0)) + "s";
    return worst < 1e-3 && seconds_since(t0) < 300.0;
}

// --------------------------------------------------------------------------
// 3. stage-1 learnability on a synthetic OCR corpus
// --------------------------------------------------------------------------

bool criterion_3(std::string& detail) {
    const auto t0 = Clock::now();
    // Page distribution chosen for desk-scale trainability: one fixed-length
    // word per 32px page over a five-letter alphabet. Held-out pages draw
    // fresh words from the same 5^5 space, so the held-out score measures
    // character reading, not page memorization.
    DocumentConfig dc;
    dc.page_px = 32;
    dc.min_lines = 1;
    dc.max_lines = 1;
    dc.min_word_len = 5;
    dc.max_word_len = 5;
    dc.alphabet = "ABCDE";
    Rng rng(derive_seed(3, "ocr_corpus", 0));
    auto make_docs = [&](int n) {
        std::vector<TaskRecord> recs;
        for (int i = 0; i < n; ++i) {
            Document d = gen_document(rng, dc);
            recs.push_back(*build_pdf_record(d.text, std::make_shared<Image>(d.image), false));
        }
        return recs;
    };
    std::map<std::string, std::vector<TaskRecord>> corpora;
    corpora["train"] = make_docs(200);
    auto held = make_docs(50);

    Vlm model(ModelConfig::toy_tiny_plus(), 12345);

    // Two-phase schedule. Learning to read the page goes through a sharp
    // phase transition whose onset scales with corpus size, so warm-up
    // rounds drive the transition on rotating 10-page subsets at constant
    // lr until the subset is solved; the final phase then fits the full
    // corpus quickly.
    StageConfig stage = StageConfig::paper_tiny_plus();
    stage.batch_size = 4;
    stage.grad_accumulation = 1;
    stage.mixture.entries = {{"train", 1.0}};
    for (int round = 0; round < 8; ++round) {
        std::map<std::string, std::vector<TaskRecord>> warm;
        const int off = round * 10 % 200;
        warm["train"].assign(corpora["train"].begin() + off, corpora["train"].begin() + off + 10);
        stage.epochs = 150;
        stage.initial_lr = 2e-3;
        stage.final_lr = 2e-3;
        stage.seed = 7 + round;
        const auto report = run_stage(stage, model, warm, "");
        if (report.loss_series.back() < 0.05) break;
    }

    stage.epochs = 60;
    stage.initial_lr = 1e-3;
    stage.final_lr = 1e-4;
    stage.seed = 101;
    run_stage(stage, model, corpora, "");

    const double train_acc = char_accuracy(model, corpora["train"], stage.chat_template);
    const double held_acc = char_accuracy(model, held, stage.chat_template);
    const double secs = seconds_since(t0);
    detail = "train acc " + std::to_string(train_acc) + ", held-out acc " + std::to_string(held_acc) +
             ", " + std::to_string(secs) + "s";
    return train_acc >= 0.99 && held_acc >= 0.90 && secs < 1800.0;
}

// --------------------------------------------------------------------------
// 4. stage-2 detection transfer with frozen branches
// --------------------------------------------------------------------------

bool criterion_4(std::string& detail) {
    const auto t0 = Clock::now();
    // Scene distribution chosen for desk-scale trainability: one object per
    // scene (within the <= 5-object bound), fixed object size, positions
    // snapped to a coarse grid so the box vocabulary is a small discrete
    // set.
    SceneRecipe recipe = SceneRecipe::standard();
    recipe.grid_snap = 16;
    recipe.min_size = 16;
    recipe.max_size = 16;
    Rng rng(derive_seed(4, "scenes", 0));
    DetectionPolicy policy;
    auto make_scenes = [&](int n) {
        std::vector<TaskRecord> recs;
        for (int i = 0; i < n; ++i)
            recs.push_back(*reorganize_detection(gen_scene(rng, recipe, 1), policy, rng));
        return recs;
    };

    // Same two-phase curriculum as the stage-1 gate: warm-up rounds on
    // rotating 10-scene subsets until the subset is solved, then the full
    // corpus.
    auto curriculum = [](Vlm& model, StageConfig base,
                         std::map<std::string, std::vector<TaskRecord>>& corpora,
                         const std::string& out) {
        StageConfig stage = base;
        stage.batch_size = 4;
        stage.grad_accumulation = 1;
        stage.mixture.entries = {{"det", 1.0}};
        const int total = static_cast<int>(corpora["det"].size());
        for (int round = 0; round < 8; ++round) {
            std::map<std::string, std::vector<TaskRecord>> warm;
            const int off = round * 10 % total;
            warm["det"].assign(corpora["det"].begin() + off, corpora["det"].begin() + off + 10);
            stage.epochs = 150;
            stage.initial_lr = 2e-3;
            stage.final_lr = 2e-3;
            stage.seed = base.seed + round;
            const auto report = run_stage(stage, model, warm, "");
            if (report.loss_series.back() < 0.05) break;
        }
        stage.epochs = 60;
        stage.initial_lr = 1e-3;
        stage.final_lr = 1e-4;
        stage.seed = base.seed + 100;
        run_stage(stage, model, corpora, out);
    };

    // stage 1: single-branch model learns the box vocabulary
    std::map<std::string, std::vector<TaskRecord>> s1_corpora;
    s1_corpora["det"] = make_scenes(200);
    Vlm s1(ModelConfig::toy_tiny_plus(), 111);
    StageConfig st1 = StageConfig::paper_tiny_plus();
    st1.seed = 3;
    const std::string s1_path = (fs::temp_directory_path() / "acceptance_c4_s1.ckpt").string();
    curriculum(s1, st1, s1_corpora, s1_path);

    // stage 2: composite model, both vision branches frozen
    auto ckpt = read_checkpoint(s1_path);
    Vlm model = build_composite<float>(ckpt, nullptr, ModelConfig::toy(), 222);
    std::map<std::string, std::vector<TaskRecord>> s2_corpora;
    s2_corpora["det"] = make_scenes(200);
    StageConfig st2 = StageConfig::paper_pretrain();
    st2.seed = 5;
    const std::uint64_t vocab_sum = model.group_checksum("vocab_branch");
    const std::uint64_t clip_sum = model.group_checksum("clip_branch");
    curriculum(model, st2, s2_corpora, "");
    const bool frozen_ok = vocab_sum == model.group_checksum("vocab_branch") &&
                           clip_sum == model.group_checksum("clip_branch");

    // held-out scenes, <= 5 objects; score the first predicted box
    auto held = make_scenes(40);
    int hits = 0;
    double iou_sum = 0;
    for (auto& rec : held) {
        const Image& img = load_record_image(rec);
        auto out = model.generate(rec.prompt, &img, st2.chat_template,
                                  static_cast<int>(rec.response.size()) + 12, rec.kind);
        auto pred = parse_prediction_box(out.text, 1000, 1000);
        auto gold = parse_prediction_box(rec.response, 1000, 1000);
        double v = 0;
        if (pred && gold) v = iou(*pred, *gold);
        iou_sum += v;
        hits += v >= 0.5;
    }
    const double acc = hits / static_cast<double>(held.size());
    const double mean_iou = iou_sum / static_cast<double>(held.size());
    const double secs = seconds_since(t0);
    detail = "acc@0.5 " + std::to_string(acc) + ", mean IoU " + std::to_string(mean_iou) +
             ", frozen " + (frozen_ok ? "intact" : "DRIFTED") + ", " + std::to_string(secs) + "s";
    return acc >= 0.7 && mean_iou >= 0.5 && frozen_ok && secs < 1800.0;
}

// --------------------------------------------------------------------------
// 5. detection / REC split law over 10,000 scenes
// --------------------------------------------------------------------------

bool criterion_5(std::string& detail) {
    Rng rng(55);
    DetectionPolicy policy;
    int violations = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(1, 60));
        const int n_classes = static_cast<int>(rng.uniform_int(1, 12));
        Scene scene;
        scene.image = Image::filled(100, 100, 0, 0, 0);
        for (int i = 0; i < n; ++i) {
            ObjectAnnotation obj;
            obj.class_name = "class" + std::to_string(i % n_classes);
            const double x = (i % 10) * 10.0, y = (i / 10 % 10) * 10.0;
            obj.box = {x, y, x + 8, y + 8};
            scene.objects.push_back(obj);
        }
        auto rec = reorganize_detection(scene, policy, rng);
        if (!rec) {
            ++violations;
            continue;
        }
        if (n <= 30) {
            if (rec->kind != TaskKind::Detection || rec->prompt != "Detect all objects in this image")
                ++violations;
        } else {
            if (rec->kind != TaskKind::Rec) {
                ++violations;
                continue;
            }
            // prompt must be "Detect <class>, <class>, ... in this image"
            // over 1..5 classes present in the scene
            const std::string& p = rec->prompt;
            const std::string head = "Detect ", tail = "in this image";
            bool ok = p.rfind(head, 0) == 0 && p.size() > head.size() + tail.size() &&
                      p.compare(p.size() - tail.size(), tail.size(), tail) == 0;
            if (ok) {
                std::string mid = p.substr(head.size(), p.size() - head.size() - tail.size());
                int count = 0;
                std::size_t pos = 0;
                while (ok && pos < mid.size()) {
                    const std::size_t comma = mid.find(", ", pos);
                    if (comma == std::string::npos) {
                        ok = false;
                        break;
                    }
                    const std::string cls = mid.substr(pos, comma - pos);
                    ok = cls.rfind("class", 0) == 0 && std::stoi(cls.substr(5)) < n_classes;
                    ++count;
                    pos = comma + 2;
                }
                ok = ok && count >= 1 && count <= 5;
            }
            if (!ok) ++violations;
        }
    }
    detail = std::to_string(violations) + " violations in 10000 scenes";
    return violations == 0;
}

// --------------------------------------------------------------------------
// 6. chat-template goldens byte-for-byte
// --------------------------------------------------------------------------

bool criterion_6(std::string& detail) {
    const std::string dir = TOYVLM_GOLDEN_DIR;
    auto make = [](TaskKind kind, std::string prompt, std::string response, bool with_image) {
        TaskRecord rec;
        rec.kind = kind;
        rec.prompt = std::move(prompt);
        rec.response = std::move(response);
        if (with_image) rec.image = std::make_shared<Image>(Image::filled(4, 4, 1, 2, 3));
        return rec;
    };
    auto ocr = make(TaskKind::PdfOcr, kOcrPrompt, "HELLO\nWORLD", true);
    auto md = make(TaskKind::Markdown, kMarkdownPrompt, "# TITLE\n*BODY*", true);
    auto nlp = make(TaskKind::Nlp, "WHAT IS 2 + 3?", "5", false);
    auto cap = make(TaskKind::Caption, kCaptionPrompt, "A picture with a red square.", true);
    auto det = make(TaskKind::Detection, kDetectAllPrompt, "red square: [0, 0, 250, 250]", true);
    auto rec = make(TaskKind::Rec, "Detect blue circle, in this image",
                    "blue circle: [500, 500, 750, 750]", true);
    auto vqa = make(TaskKind::Vqa, std::string("How many circles are there? ") + kVqaSuffix, "2", true);

    struct Case {
        const char* file;
        TaskRecord rec;
        TemplateKind kind;
        bool fix;
    };
    const std::vector<Case> cases = {
        {"vicuna_ocr.txt", ocr, TemplateKind::VicunaV1, false},
        {"vicuna_ocr_fixed.txt", ocr, TemplateKind::VicunaV1, true},
        {"vicuna_markdown.txt", md, TemplateKind::VicunaV1, false},
        {"vicuna_nlp.txt", nlp, TemplateKind::VicunaV1, false},
        {"vicuna_caption.txt", cap, TemplateKind::VicunaV1, false},
        {"vicuna_detection.txt", det, TemplateKind::VicunaV1, false},
        {"vicuna_rec.txt", rec, TemplateKind::VicunaV1, false},
        {"vicuna_vqa.txt", vqa, TemplateKind::VicunaV1, false},
        {"qwen_ocr.txt", ocr, TemplateKind::QwenChat, false},
        {"qwen_markdown.txt", md, TemplateKind::QwenChat, false},
        {"qwen_nlp.txt", nlp, TemplateKind::QwenChat, false},
        {"qwen_caption.txt", cap, TemplateKind::QwenChat, false},
        {"qwen_detection.txt", det, TemplateKind::QwenChat, false},
        {"qwen_rec.txt", rec, TemplateKind::QwenChat, false},
        {"qwen_vqa.txt", vqa, TemplateKind::QwenChat, false},
    };
    int diffs = 0;
    bool default_has_typo = false;
    for (const auto& c : cases) {
        const std::string rendered = render_template(c.rec, c.kind, c.fix);
        if (rendered != read_file(dir + "/" + c.file)) ++diffs;
        if (c.kind == TemplateKind::VicunaV1 && !c.fix)
            default_has_typo = default_has_typo || rendered.find("ASSITANT") != std::string::npos;
    }
    detail = std::to_string(diffs) + " golden diffs in " + std::to_string(cases.size()) + " renderings" +
             (default_has_typo ? ", literal marker spelling verified" : ", marker spelling NOT verified");
    return diffs == 0 && default_has_typo;
}

// --------------------------------------------------------------------------
// 7. metric oracles
// --------------------------------------------------------------------------

// Independent full-matrix edit-distance DP, written against the textbook
// recurrence rather than the library's rolling-row version.
std::size_t oracle_levenshtein(const std::string& a, const std::string& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
    for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                                d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    return d[n][m];
}

bool criterion_7(std::string& detail) {
    Rng rng(77);
    auto rand_str = [&](int max_len) {
        static const char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
        const int len = static_cast<int>(rng.uniform_int(0, max_len));
        std::string s;
        for (int i = 0; i < len; ++i)
            s += alphabet[rng.uniform_int(0, sizeof(alphabet) - 2)];
        return s;
    };

    int anls_mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::string pred = rand_str(14), gold = rand_str(14);
        const std::size_t d = oracle_levenshtein(pred, gold);
        const std::size_t denom = std::max(pred.size(), gold.size());
        double expected;
        if (denom == 0) {
            expected = 1.0;
        } else {
            const double nl = static_cast<double>(d) / static_cast<double>(denom);
            expected = nl < 0.5 ? 1.0 - nl : 0.0;
        }
        if (anls(pred, {gold}) != expected) ++anls_mismatches;
    }

    int iou_mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        auto rand_box = [&] {
            const int x1 = static_cast<int>(rng.uniform_int(0, 30));
            const int y1 = static_cast<int>(rng.uniform_int(0, 30));
            const int x2 = x1 + 1 + static_cast<int>(rng.uniform_int(0, 31 - x1));
            const int y2 = y1 + 1 + static_cast<int>(rng.uniform_int(0, 31 - y1));
            return BBox{static_cast<double>(x1), static_cast<double>(y1), static_cast<double>(x2),
                        static_cast<double>(y2)};
        };
        const BBox a = rand_box(), b = rand_box();
        // count unit pixels covered by each box
        std::size_t inter = 0, uni = 0;
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                const bool in_a = x >= a.x1 && x < a.x2 && y >= a.y1 && y < a.y2;
                const bool in_b = x >= b.x1 && x < b.x2 && y >= b.y1 && y < b.y2;
                inter += in_a && in_b;
                uni += in_a || in_b;
            }
        const double expected = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
        if (std::abs(iou(a, b) - expected) > 1e-6) ++iou_mismatches;
    }

    int round_trip_failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int w = 10 + static_cast<int>(rng.uniform_int(0, 1990));
        const int h = 10 + static_cast<int>(rng.uniform_int(0, 1990));
        const int x1 = static_cast<int>(rng.uniform_int(0, w - 2));
        const int y1 = static_cast<int>(rng.uniform_int(0, h - 2));
        const BBox box{static_cast<double>(x1), static_cast<double>(y1),
                       static_cast<double>(x1 + 1 + rng.uniform_int(0, w - x1 - 1)),
                       static_cast<double>(y1 + 1 + rng.uniform_int(0, h - y1 - 1))};
        const NormBox n = normalize_box(box, w, h);
        const NormBox back = normalize_box(denormalize_box(n, w, h), w, h);
        if (std::abs(back.x1 - n.x1) > 1 || std::abs(back.y1 - n.y1) > 1 ||
            std::abs(back.x2 - n.x2) > 1 || std::abs(back.y2 - n.y2) > 1)
            ++round_trip_failures;
    }

    detail = std::to_string(anls_mismatches) + " anls mismatches, " + std::to_string(iou_mismatches) +
             " iou mismatches, " + std::to_string(round_trip_failures) + " round-trip failures";
    return anls_mismatches == 0 && iou_mismatches == 0 && round_trip_failures == 0;
}

// --------------------------------------------------------------------------
// 8. cosine schedule conformance over a recorded 100-step run
// --------------------------------------------------------------------------

bool criterion_8(std::string& detail) {
    Rng rng(88);
    std::map<std::string, std::vector<TaskRecord>> corpora;
    for (int i = 0; i < 100; ++i) corpora["nlp"].push_back(gen_nlp_sample(rng));

    Vlm model(ModelConfig::toy_tiny_plus(), 8);
    StageConfig stage = StageConfig::paper_tiny_plus();
    stage.batch_size = 1;
    stage.grad_accumulation = 1;
    stage.epochs = 1;
    stage.initial_lr = 5e-5;
    stage.final_lr = 0.0;
    stage.seed = 88;
    stage.mixture.entries = {{"nlp", 1.0}};
    TrainReport report = run_stage(stage, model, corpora, "");

    if (report.lr_series.size() != 100) {
        detail = "expected 100 recorded steps, got " + std::to_string(report.lr_series.size());
        return false;
    }
    const double pi = std::acos(-1.0);
    int mismatches = 0;
    for (int step = 0; step < 100; ++step) {
        const double t = static_cast<double>(step) / 100.0;
        const double expected = 0.0 + 0.5 * (5e-5 - 0.0) * (1.0 + std::cos(pi * t));
        if (report.lr_series[static_cast<std::size_t>(step)] != expected) ++mismatches;
    }
    // endpoints of the annealing curve itself
    const bool start_ok = report.lr_series.front() == 5e-5;
    const double terminal = 0.0 + 0.5 * (5e-5 - 0.0) * (1.0 + std::cos(pi));
    const bool end_ok = terminal == 0.0 && cosine_lr({5e-5, 0.0, 100}, 100) == 0.0;
    detail = std::to_string(mismatches) + " mismatches over 100 steps, start " +
             (start_ok ? "5e-5 exact" : "WRONG") + ", terminal " + (end_ok ? "0 exact" : "WRONG");
    return mismatches == 0 && start_ok && end_ok;
}

// --------------------------------------------------------------------------
// 9. bit-identical reruns of the full pipeline
// --------------------------------------------------------------------------

struct PipelineArtifacts {
    std::string checkpoint_bytes;
    std::string metrics_bytes;
    std::string report_bytes;
};

PipelineArtifacts run_pipeline(const fs::path& dir) {
    fs::create_directories(dir);
    Rng rng(derive_seed(9, "pipeline", 0));

    DocumentConfig dc;
    dc.min_lines = 1;
    dc.max_lines = 2;
    SceneRecipe recipe = SceneRecipe::standard();
    recipe.grid_snap = 8;
    recipe.min_size = 16;
    recipe.max_size = 24;
    DetectionPolicy policy;

    std::map<std::string, std::vector<TaskRecord>> s1_corpora, s2_corpora, sft_corpora;
    for (int i = 0; i < 32; ++i) {
        Document d = gen_document(rng, dc);
        s1_corpora["docs"].push_back(*build_pdf_record(d.text, std::make_shared<Image>(d.image), false));
    }
    for (int i = 0; i < 16; ++i) s1_corpora["nlp"].push_back(gen_nlp_sample(rng));
    std::vector<Scene> scenes;
    for (int i = 0; i < 32; ++i) scenes.push_back(gen_scene(rng, recipe, 1));
    for (auto& sc : scenes) s2_corpora["det"].push_back(*reorganize_detection(sc, policy, rng));
    for (int i = 0; i < 16; ++i) sft_corpora["vqa"].push_back(gen_vqa_sample(scenes[i % scenes.size()], rng));
    sft_corpora["det"] = s2_corpora["det"];

    // stage 1: vocabulary branch
    Vlm s1(ModelConfig::toy_tiny_plus(), 91);
    StageConfig st1 = StageConfig::paper_tiny_plus();
    st1.batch_size = 4;
    st1.grad_accumulation = 1;
    st1.epochs = 1;
    st1.initial_lr = 5e-4;
    st1.seed = 19;
    st1.mixture.entries = {{"docs", 1.0}, {"nlp", 1.0}};
    run_stage(st1, s1, s1_corpora, (dir / "stage1.ckpt").string());

    // stage 2: composite pretrain, branches frozen
    auto s1_ckpt = read_checkpoint((dir / "stage1.ckpt").string());
    Vlm model = build_composite<float>(s1_ckpt, nullptr, ModelConfig::toy(), 92);
    StageConfig st2 = StageConfig::paper_pretrain();
    st2.batch_size = 4;
    st2.grad_accumulation = 1;
    st2.epochs = 1;
    st2.initial_lr = 5e-4;
    st2.seed = 29;
    st2.mixture.entries = {{"det", 1.0}};
    run_stage(st2, model, s2_corpora, (dir / "stage2.ckpt").string());

    // SFT
    StageConfig st3 = StageConfig::paper_sft();
    st3.batch_size = 4;
    st3.grad_accumulation = 1;
    st3.epochs = 1;
    st3.seed = 39;
    st3.mixture.entries = {{"vqa", 1.0}, {"det", 1.0}};
    TrainReport sft = run_stage(st3, model, sft_corpora, (dir / "final.ckpt").string());
    write_metrics_log(sft, (dir / "metrics.log").string());

    // eval
    auto gen_fn = [&](TaskRecord& rec) {
        const Image* img = rec.has_image() ? &load_record_image(rec) : nullptr;
        return model.generate(rec.prompt, img, st3.chat_template, 16, rec.kind).text;
    };
    std::vector<TaskRecord> eval_recs(sft_corpora["vqa"].begin(), sft_corpora["vqa"].begin() + 8);
    EvalReport report = eval_dataset(gen_fn, eval_recs, MetricKind::Anls, "pipeline_vqa");
    std::ofstream((dir / "report.json").string()) << report_to_json(report);

    PipelineArtifacts out;
    out.checkpoint_bytes = read_file((dir / "final.ckpt").string());
    out.metrics_bytes = read_file((dir / "metrics.log").string());
    out.report_bytes = read_file((dir / "report.json").string());
    return out;
}

bool criterion_9(std::string& detail) {
    const auto t0 = Clock::now();
    const fs::path base = fs::temp_directory_path() / "acceptance_c9";
    fs::remove_all(base);
    PipelineArtifacts a = run_pipeline(base / "run_a");
    PipelineArtifacts b = run_pipeline(base / "run_b");
    const bool ckpt_ok = a.checkpoint_bytes == b.checkpoint_bytes && !a.checkpoint_bytes.empty();
    const bool metrics_ok = a.metrics_bytes == b.metrics_bytes && !a.metrics_bytes.empty();
    const bool report_ok = a.report_bytes == b.report_bytes && !a.report_bytes.empty();
    detail = std::string("checkpoint ") + (ckpt_ok ? "identical" : "DIFFERS") + ", metrics " +
             (metrics_ok ? "identical" : "DIFFERS") + ", eval report " +
             (report_ok ? "identical" : "DIFFERS") + ", " + std::to_string(seconds_since(t0)) + "s";
    return ckpt_ok && metrics_ok && report_ok;
}

struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::string&)> fn;
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    if (argc == 3 && std::strcmp(argv[1], "--only") == 0) {
        only = std::atoi(argv[2]);
        if (only < 1 || only > 9) {
            std::fprintf(stderr, "usage: acceptance [--only N] with N in 1..9\n");
            return 2;
        }
    } else if (argc != 1) {
        std::fprintf(stderr, "usage: acceptance [--only N]\n");
        return 2;
    }

    const std::vector<Criterion> criteria = {
        {1, "shape contract", criterion_1},
        {2, "gradcheck suite", criterion_2},
        {3, "stage-1 learnability", criterion_3},
        {4, "stage-2 detection transfer", criterion_4},
        {5, "detection/rec split law", criterion_5},
        {6, "template goldens", criterion_6},
        {7, "metric oracles", criterion_7},
        {8, "schedule conformance", criterion_8},
        {9, "reproducibility", criterion_9},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        std::string detail;
        bool ok = false;
        try {
            ok = c.fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("criterion %d (%s): %s — %s\n", c.id, c.name, ok ? "PASS" : "FAIL", detail.c_str());
        std::fflush(stdout);
        failures += !ok;
    }
    return failures == 0 ? 0 : 1;
}
