#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "toyvlm/checkpoint.hpp"
#include "toyvlm/config.hpp"
#include "toyvlm/data.hpp"
#include "toyvlm/errors.hpp"
#include "toyvlm/metrics.hpp"
#include "toyvlm/model.hpp"
#include "toyvlm/synth.hpp"
#include "toyvlm/train.hpp"

namespace fs = std::filesystem;
using namespace toyvlm;

namespace {

// exit codes: 0 ok, 2 usage/input, 3 config/format, 4 io, 5 numeric

TemplateKind template_from_name(const std::string& name) {
    if (name == "vicuna") return TemplateKind::VicunaV1;
    if (name == "qwen") return TemplateKind::QwenChat;
    throw ConfigError("unknown chat template '" + name + "' (expected vicuna or qwen)");
}

const char* template_name(TemplateKind t) { return t == TemplateKind::VicunaV1 ? "vicuna" : "qwen"; }

std::string default_out_dir(const std::string& fallback) {
    const char* env = std::getenv("TOYVLM_OUTPUT_DIR");
    return env && *env ? std::string(env) : fallback;
}

void apply_thread_env() {
#ifdef _OPENMP
    if (const char* env = std::getenv("TOYVLM_THREADS"); env && *env) {
        const int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }
#endif
}

// --data entries: "id=path/to/manifest.jsonl" or a bare path (id = stem).
struct DataArg {
    std::string id;
    std::string path;
};

DataArg parse_data_arg(const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos) return {fs::path(arg).stem().string(), arg};
    if (eq == 0 || eq + 1 == arg.size()) throw ConfigError("bad --data entry '" + arg + "' (want id=path)");
    return {arg.substr(0, eq), arg.substr(eq + 1)};
}

// "--mixture id:w,id:w"; default: weight 1 per corpus.
std::vector<std::pair<std::string, double>> parse_mixture(const std::string& text) {
    std::vector<std::pair<std::string, double>> entries;
    std::string rest = text;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string item = rest.substr(0, comma);
        rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
        const auto colon = item.find(':');
        if (colon == std::string::npos || colon == 0)
            throw ConfigError("bad --mixture entry '" + item + "' (want id:weight)");
        try {
            entries.emplace_back(item.substr(0, colon), std::stod(item.substr(colon + 1)));
        } catch (const std::exception&) {
            throw ConfigError("bad --mixture weight in '" + item + "'");
        }
    }
    if (entries.empty()) throw ConfigError("--mixture is empty");
    return entries;
}

struct StageFlags {
    int batch = -1;
    int accum = -1;
    int epochs = -1;
    double lr = -1;
    double final_lr = -1;
    std::int64_t seed = -1;
    int token_limit = -1;
    std::string tmpl;
    bool fix_typos = false;
    std::string mixture;
};

void add_stage_flags(CLI::App* cmd, StageFlags& f) {
    cmd->add_option("--batch", f.batch, "batch size");
    cmd->add_option("--accum", f.accum, "gradient accumulation steps");
    cmd->add_option("--epochs", f.epochs, "epochs over the mixture");
    cmd->add_option("--lr", f.lr, "initial learning rate");
    cmd->add_option("--final-lr", f.final_lr, "final learning rate");
    cmd->add_option("--seed", f.seed, "stage seed");
    cmd->add_option("--token-limit", f.token_limit, "per-record token budget");
    cmd->add_option("--template", f.tmpl, "chat template: vicuna or qwen");
    cmd->add_flag("--fix-typos", f.fix_typos, "use the corrected assistant spelling");
    cmd->add_option("--mixture", f.mixture, "corpus weights, id:w,id:w (default: equal)");
}

int to_int(const std::string& v, const char* key) {
    try {
        return std::stoi(v);
    } catch (const std::exception&) {
        throw ConfigError(std::string("bad integer for ") + key + ": " + v);
    }
}

double to_double(const std::string& v, const char* key) {
    try {
        return std::stod(v);
    } catch (const std::exception&) {
        throw ConfigError(std::string("bad number for ") + key + ": " + v);
    }
}

// [stage] file section, then command-line flags, layered onto a preset.
StageConfig resolve_stage(StageConfig stage, const ConfigSections& file, const StageFlags& flags) {
    if (auto it = file.find("stage"); it != file.end()) {
        for (const auto& [k, v] : it->second) {
            if (k == "batch_size") stage.batch_size = to_int(v, k.c_str());
            else if (k == "grad_accumulation") stage.grad_accumulation = to_int(v, k.c_str());
            else if (k == "epochs") stage.epochs = to_int(v, k.c_str());
            else if (k == "initial_lr") stage.initial_lr = to_double(v, k.c_str());
            else if (k == "final_lr") stage.final_lr = to_double(v, k.c_str());
            else if (k == "seed") stage.seed = static_cast<std::uint64_t>(std::stoull(v));
            else if (k == "token_limit") stage.token_limit = to_int(v, k.c_str());
            else if (k == "template") stage.chat_template = template_from_name(v);
            else if (k == "fix_template_typos") stage.fix_template_typos = to_int(v, k.c_str()) != 0;
            else throw ConfigError("unknown [stage] key '" + k + "'");
        }
    }
    // -1 marks "flag not given"; invalid values fall through to validate()
    if (flags.batch != -1) stage.batch_size = flags.batch;
    if (flags.accum != -1) stage.grad_accumulation = flags.accum;
    if (flags.epochs != -1) stage.epochs = flags.epochs;
    if (flags.lr >= 0) stage.initial_lr = flags.lr;
    if (flags.final_lr >= 0) stage.final_lr = flags.final_lr;
    if (flags.seed >= 0) stage.seed = static_cast<std::uint64_t>(flags.seed);
    if (flags.token_limit != -1) stage.token_limit = flags.token_limit;
    if (!flags.tmpl.empty()) stage.chat_template = template_from_name(flags.tmpl);
    if (flags.fix_typos) stage.fix_template_typos = true;
    return stage;
}

ModelConfig resolve_model(ModelConfig base, const ConfigSections& file) {
    auto it = file.find("model");
    if (it == file.end()) return base;
    auto kv = base.to_kv();
    for (const auto& [k, v] : it->second) {
        if (!kv.count(k)) throw ConfigError("unknown [model] key '" + k + "'");
        kv[k] = v;
    }
    return ModelConfig::from_kv(kv);
}

std::map<std::string, std::vector<TaskRecord>> load_corpora(const std::vector<std::string>& data_args) {
    if (data_args.empty()) throw ConfigError("at least one --data manifest is required");
    std::map<std::string, std::vector<TaskRecord>> corpora;
    for (const auto& arg : data_args) {
        const DataArg d = parse_data_arg(arg);
        if (corpora.count(d.id)) throw ConfigError("duplicate corpus id '" + d.id + "'");
        corpora[d.id] = read_manifest(d.path);
        std::printf("corpus %-12s %6zu records  %s\n", d.id.c_str(), corpora[d.id].size(), d.path.c_str());
    }
    return corpora;
}

MixtureSpec resolve_mixture(const StageFlags& flags,
                            const std::map<std::string, std::vector<TaskRecord>>& corpora) {
    MixtureSpec spec;
    if (!flags.mixture.empty()) {
        spec.entries = parse_mixture(flags.mixture);
    } else {
        for (const auto& [id, recs] : corpora) spec.entries.emplace_back(id, 1.0);
    }
    return spec;
}

void write_effective_config(const fs::path& out_dir, const ModelConfig& model, const StageConfig& stage) {
    ConfigSections sections;
    sections["model"] = model.to_kv();
    auto& s = sections["stage"];
    s["stage"] = stage_name(stage.stage);
    s["batch_size"] = std::to_string(stage.batch_size);
    s["grad_accumulation"] = std::to_string(stage.grad_accumulation);
    s["epochs"] = std::to_string(stage.epochs);
    s["initial_lr"] = std::to_string(stage.initial_lr);
    s["final_lr"] = std::to_string(stage.final_lr);
    s["seed"] = std::to_string(stage.seed);
    s["token_limit"] = std::to_string(stage.token_limit);
    s["template"] = template_name(stage.chat_template);
    s["fix_template_typos"] = stage.fix_template_typos ? "1" : "0";
    std::string freeze;
    for (const auto& g : stage.freeze) freeze += (freeze.empty() ? "" : ",") + g;
    s["freeze"] = freeze;
    std::string mix;
    for (const auto& [id, w] : stage.mixture.entries)
        mix += (mix.empty() ? "" : ",") + id + ":" + std::to_string(w);
    s["mixture"] = mix;

    const std::string text = config_to_text(sections);
    std::ofstream f(out_dir / "config_effective.ini");
    if (!f) throw IoError("cannot write " + (out_dir / "config_effective.ini").string());
    f << text;
    std::fputs(text.c_str(), stdout);
}

void finish_stage(const TrainReport& report, const fs::path& out_dir) {
    write_metrics_log(report, (out_dir / "metrics.log").string());
    std::printf("steps %zu  final loss %.4f  wall %.1fs\n", report.loss_series.size(),
                report.loss_series.empty() ? 0.0 : report.loss_series.back(), report.wall_time_sec);
    std::printf("checkpoint %s\n", report.checkpoint_path.c_str());
    std::printf("metrics %s\n", (out_dir / "metrics.log").string().c_str());
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
    std::string out = "data";
    std::string describe;
    std::uint64_t seed = 0;
    int docs = 0, scenes = 0, rec = 0, vqa = 0, caption = 0, nlp = 0;
    int page_px = 64;
    int min_lines = -1, max_lines = -1;
    std::string alphabet;
    int img_px = 64;
    int min_objects = 1, max_objects = 3;
    bool held_out = false;
};

int cmd_gen_data(const GenDataArgs& a) {
    if (!a.describe.empty()) {
        auto records = read_manifest(a.describe);
        std::map<std::string, int> kinds;
        int with_image = 0;
        for (const auto& r : records) {
            ++kinds[task_kind_name(r.kind)];
            with_image += r.has_image();
        }
        std::printf("manifest %s\n  records %zu  with_image %d\n", a.describe.c_str(), records.size(), with_image);
        for (const auto& [k, n] : kinds) std::printf("  %-10s %d\n", k.c_str(), n);
        return 0;
    }
    if (a.docs + a.scenes + a.rec + a.vqa + a.caption + a.nlp == 0)
        throw InputError("nothing to generate; pass --docs/--scenes/--rec/--vqa/--caption/--nlp counts");
    if (a.min_objects < 1 || a.max_objects < a.min_objects)
        throw ConfigError("bad --min-objects/--max-objects range");

    fs::create_directories(a.out);
    SceneRecipe recipe = SceneRecipe::standard();
    recipe.img_px = a.img_px;
    if (a.held_out) recipe.classes = {SceneRecipe::held_out_class()};

    auto emit = [&](const char* name, const std::vector<TaskRecord>& records) {
        if (records.empty()) return;
        const std::string path = (fs::path(a.out) / (std::string(name) + ".jsonl")).string();
        write_manifest(path, records);
        std::printf("corpus %-10s %6zu records -> %s\n", name, records.size(), path.c_str());
    };

    DocumentConfig doc_cfg;
    doc_cfg.page_px = a.page_px;
    if (a.min_lines > 0) doc_cfg.min_lines = a.min_lines;
    if (a.max_lines > 0) doc_cfg.max_lines = a.max_lines;
    if (!a.alphabet.empty()) doc_cfg.alphabet = a.alphabet;
    {
        Rng rng(derive_seed(a.seed, "docs", 0));
        std::vector<TaskRecord> ocr, markdown;
        for (int i = 0; i < a.docs; ++i) {
            Document doc = gen_document(rng, doc_cfg);
            auto img = std::make_shared<Image>(doc.image);
            if (auto r = build_pdf_record(doc.text, img, false)) ocr.push_back(std::move(*r));
            Document doc2 = gen_document(rng, doc_cfg);
            auto img2 = std::make_shared<Image>(doc2.image);
            if (auto r = build_pdf_record(doc2.markdown, img2, true)) markdown.push_back(std::move(*r));
        }
        emit("pdf_ocr", ocr);
        emit("markdown", markdown);
    }
    {
        Rng rng(derive_seed(a.seed, "scenes", 0));
        DetectionPolicy policy;
        std::vector<TaskRecord> detection;
        for (int i = 0; i < a.scenes; ++i) {
            const int n = static_cast<int>(rng.uniform_int(a.min_objects, a.max_objects));
            Scene scene = gen_scene(rng, recipe, n);
            if (auto r = reorganize_detection(scene, policy, rng)) detection.push_back(std::move(*r));
        }
        // crowded scenes exercise the REC reorganization path
        SceneRecipe crowded = recipe;
        crowded.img_px = std::max(a.img_px, 256);
        crowded.max_size = 16;
        for (int i = 0; i < a.rec; ++i) {
            Scene scene = gen_scene(rng, crowded, policy.max_boxes + 1 + static_cast<int>(rng.uniform_int(0, 4)));
            if (auto r = reorganize_detection(scene, policy, rng)) detection.push_back(std::move(*r));
        }
        emit("detection", detection);
    }
    {
        Rng rng(derive_seed(a.seed, "vqa", 0));
        std::vector<TaskRecord> records;
        for (int i = 0; i < a.vqa; ++i) {
            Scene scene = gen_scene(rng, recipe, static_cast<int>(rng.uniform_int(a.min_objects, a.max_objects)));
            records.push_back(gen_vqa_sample(scene, rng));
        }
        emit("vqa", records);
    }
    {
        Rng rng(derive_seed(a.seed, "caption", 0));
        std::vector<TaskRecord> records;
        for (int i = 0; i < a.caption; ++i) {
            Scene scene = gen_scene(rng, recipe, static_cast<int>(rng.uniform_int(a.min_objects, a.max_objects)));
            records.push_back(gen_caption_sample(scene, rng));
        }
        emit("caption", records);
    }
    {
        Rng rng(derive_seed(a.seed, "nlp", 0));
        std::vector<TaskRecord> records;
        for (int i = 0; i < a.nlp; ++i) records.push_back(gen_nlp_sample(rng));
        emit("nlp", records);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// training stages
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::vector<std::string> data;
    std::string out = "run";
    std::string config_file;
    std::string vocab_ckpt;  // train-toy
    std::string clip_ckpt;   // train-toy, optional
    std::string ckpt;        // sft
    std::uint64_t init_seed = 0;
    bool verbose = false;
    StageFlags flags;
};

int run_training(StageKind kind, const TrainArgs& a) {
    const fs::path out_dir = default_out_dir(a.out);
    fs::create_directories(out_dir);
    ConfigSections file;
    if (!a.config_file.empty()) file = parse_config_file(a.config_file);

    StageConfig stage;
    ModelConfig model_cfg;
    std::optional<Vlm> model;
    switch (kind) {
        case StageKind::TinyPlus: {
            stage = StageConfig::paper_tiny_plus();
            model_cfg = resolve_model(ModelConfig::toy_tiny_plus(), file);
            if (model_cfg.dual_branch)
                throw ConfigError("train-vocab uses the single-branch topology; set dual_branch = 0");
            model.emplace(model_cfg, a.init_seed);
            break;
        }
        case StageKind::Pretrain: {
            stage = StageConfig::paper_pretrain();
            model_cfg = resolve_model(ModelConfig::toy(), file);
            if (!model_cfg.dual_branch) throw ConfigError("train-toy needs the dual-branch topology");
            auto vocab = read_checkpoint(a.vocab_ckpt);
            if (a.clip_ckpt.empty()) {
                model.emplace(build_composite<float>(vocab, nullptr, model_cfg, a.init_seed));
            } else {
                auto clip = read_checkpoint(a.clip_ckpt);
                model.emplace(build_composite<float>(vocab, &clip, model_cfg, a.init_seed));
            }
            break;
        }
        case StageKind::Sft: {
            stage = StageConfig::paper_sft();
            auto ckpt = read_checkpoint(a.ckpt);
            model_cfg = resolve_model(ckpt.meta.config, file);
            if (model_cfg != ckpt.meta.config)
                throw ConfigError("sft cannot change the model topology recorded in the checkpoint");
            model.emplace(model_cfg, a.init_seed);
            init_from_checkpoint(*model, ckpt, true);
            break;
        }
    }

    auto corpora = load_corpora(a.data);
    stage = resolve_stage(stage, file, a.flags);
    stage.mixture = resolve_mixture(a.flags, corpora);
    write_effective_config(out_dir, model_cfg, stage);

    const std::string ckpt_path = (out_dir / "checkpoint.ckpt").string();
    auto report = run_stage<float>(stage, *model, corpora, ckpt_path, nullptr, a.verbose);
    finish_stage(report, out_dir);
    return 0;
}

// ---------------------------------------------------------------------------
// eval / infer / inspect
// ---------------------------------------------------------------------------

Vlm load_model(const std::string& ckpt_path) {
    auto ckpt = read_checkpoint(ckpt_path);
    Vlm model(ckpt.meta.config, 0);
    init_from_checkpoint(model, ckpt, true);
    return model;
}

struct EvalArgs {
    std::string ckpt;
    std::string data;
    std::string metric = "anls";
    std::string out;
    std::string tmpl = "vicuna";
    int max_new = 64;
    int limit = 0;
    bool fix_typos = false;
};

int cmd_eval(const EvalArgs& a) {
    Vlm model = load_model(a.ckpt);
    auto records = read_manifest(a.data);
    if (a.limit > 0 && static_cast<int>(records.size()) > a.limit) records.resize(a.limit);
    const MetricKind metric = metric_from_name(a.metric);
    const TemplateKind tmpl = template_from_name(a.tmpl);

    GenerateFn generate = [&](TaskRecord& rec) {
        const Image* img = rec.has_image() ? &load_record_image(rec) : nullptr;
        return model.generate(rec.prompt, img, tmpl, a.max_new, rec.kind).text;
    };
    auto report = eval_dataset(generate, std::move(records), metric, fs::path(a.data).stem().string());
    std::fputs(report_to_table(report).c_str(), stdout);
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        const std::string path = (fs::path(a.out) / "report.json").string();
        std::ofstream f(path);
        if (!f) throw IoError("cannot write " + path);
        f << report_to_json(report) << "\n";
        std::printf("report %s\n", path.c_str());
    }
    return 0;
}

struct InferArgs {
    std::string ckpt;
    std::string image;
    std::string prompt;
    std::string tmpl = "vicuna";
    std::string kind = "vqa";
    int max_new = 64;
};

int cmd_infer(const InferArgs& a) {
    Vlm model = load_model(a.ckpt);
    std::optional<Image> img;
    if (!a.image.empty()) img = read_ppm(a.image);
    auto out = model.generate(a.prompt, img ? &*img : nullptr, template_from_name(a.tmpl), a.max_new,
                              task_kind_from_name(a.kind));
    std::printf("%s\n", out.text.c_str());
    if (out.truncated) std::fprintf(stderr, "note: generation hit the --max-new budget\n");
    return 0;
}

int cmd_inspect(const std::string& path, bool list_params) {
    auto ckpt = read_checkpoint(path);
    std::printf("checkpoint %s\n", path.c_str());
    std::printf("version %u  stage %s\n", kCheckpointVersion, ckpt.meta.stage_tag.c_str());
    std::printf("[model]\n%s", ckpt.meta.config.to_text().c_str());
    std::size_t total = 0;
    std::map<std::string, std::size_t> groups;
    for (const auto& [name, entry] : ckpt.tensors) {
        const auto& [shape, data] = entry;
        total += data.size();
        groups[name.substr(0, name.find('.'))] += data.size();
    }
    std::printf("tensors %zu  scalars %zu\n", ckpt.tensors.size(), total);
    for (const auto& [g, n] : groups) std::printf("  group %-14s %10zu scalars\n", g.c_str(), n);
    if (list_params)
        for (const auto& name : ckpt.meta.param_names) {
            const auto& shape = ckpt.tensors.at(name).first;
            std::printf("  %-36s %s\n", name.c_str(), shape_str(shape).c_str());
        }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    apply_thread_env();

    CLI::App app{"two-branch vision-language model: data generation, staged training, evaluation"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate synthetic corpora as JSONL manifests + PPM images");
    gen_cmd->add_option("--out", gen.out, "output directory")->capture_default_str();
    gen_cmd->add_option("--describe", gen.describe, "summarize an existing manifest instead of generating");
    gen_cmd->add_option("--seed", gen.seed, "generation seed");
    gen_cmd->add_option("--docs", gen.docs, "glyph documents (OCR + markdown corpora)");
    gen_cmd->add_option("--scenes", gen.scenes, "detection scenes");
    gen_cmd->add_option("--rec", gen.rec, "crowded scenes routed to the REC task");
    gen_cmd->add_option("--vqa", gen.vqa, "VQA samples");
    gen_cmd->add_option("--caption", gen.caption, "caption samples");
    gen_cmd->add_option("--nlp", gen.nlp, "text-only samples");
    gen_cmd->add_option("--page-px", gen.page_px, "document page size")->capture_default_str();
    gen_cmd->add_option("--min-lines", gen.min_lines, "minimum lines per document page");
    gen_cmd->add_option("--max-lines", gen.max_lines, "maximum lines per document page");
    gen_cmd->add_option("--alphabet", gen.alphabet, "characters document words draw from");
    gen_cmd->add_option("--img-px", gen.img_px, "scene image size")->capture_default_str();
    gen_cmd->add_option("--min-objects", gen.min_objects, "")->capture_default_str();
    gen_cmd->add_option("--max-objects", gen.max_objects, "")->capture_default_str();
    gen_cmd->add_flag("--held-out", gen.held_out, "use only the held-out scene class");

    TrainArgs tv;
    auto* tv_cmd = app.add_subcommand("train-vocab", "stage 1: train the vocabulary network (single branch)");
    tv_cmd->add_option("--data", tv.data, "corpus manifests, id=path or path")->required();
    tv_cmd->add_option("--out", tv.out, "output directory")->capture_default_str();
    tv_cmd->add_option("--config", tv.config_file, "config file with [model]/[stage] sections");
    tv_cmd->add_option("--init-seed", tv.init_seed, "parameter init seed");
    tv_cmd->add_flag("--verbose", tv.verbose, "per-step progress");
    add_stage_flags(tv_cmd, tv.flags);

    TrainArgs tt;
    auto* tt_cmd = app.add_subcommand("train-toy", "stage 2: pretrain the composed model (branches frozen)");
    tt_cmd->add_option("--vocab-ckpt", tt.vocab_ckpt, "stage-1 checkpoint")->required();
    tt_cmd->add_option("--clip-ckpt", tt.clip_ckpt, "optional second-branch checkpoint");
    tt_cmd->add_option("--data", tt.data, "corpus manifests, id=path or path")->required();
    tt_cmd->add_option("--out", tt.out, "output directory")->capture_default_str();
    tt_cmd->add_option("--config", tt.config_file, "config file with [model]/[stage] sections");
    tt_cmd->add_option("--init-seed", tt.init_seed, "parameter init seed");
    tt_cmd->add_flag("--verbose", tt.verbose, "per-step progress");
    add_stage_flags(tt_cmd, tt.flags);

    TrainArgs sf;
    auto* sf_cmd = app.add_subcommand("sft", "stage 3: supervised fine-tuning (branches frozen)");
    sf_cmd->add_option("--ckpt", sf.ckpt, "stage-2 checkpoint")->required();
    sf_cmd->add_option("--data", sf.data, "corpus manifests, id=path or path")->required();
    sf_cmd->add_option("--out", sf.out, "output directory")->capture_default_str();
    sf_cmd->add_option("--config", sf.config_file, "config file with [stage] section");
    sf_cmd->add_flag("--verbose", sf.verbose, "per-step progress");
    add_stage_flags(sf_cmd, sf.flags);

    EvalArgs ev;
    auto* ev_cmd = app.add_subcommand("eval", "run a metric over a manifest");
    ev_cmd->add_option("--ckpt", ev.ckpt, "model checkpoint")->required();
    ev_cmd->add_option("--data", ev.data, "manifest to evaluate")->required();
    ev_cmd->add_option("--metric", ev.metric, "anls | relaxed_accuracy | acc_at_iou50")->capture_default_str();
    ev_cmd->add_option("--out", ev.out, "directory for report.json");
    ev_cmd->add_option("--template", ev.tmpl, "chat template: vicuna or qwen")->capture_default_str();
    ev_cmd->add_option("--max-new", ev.max_new, "generation budget")->capture_default_str();
    ev_cmd->add_option("--limit", ev.limit, "evaluate only the first N records");

    InferArgs in;
    auto* in_cmd = app.add_subcommand("infer", "greedy generation for one prompt");
    in_cmd->add_option("--ckpt", in.ckpt, "model checkpoint")->required();
    in_cmd->add_option("--image", in.image, "PPM image (optional)");
    in_cmd->add_option("--prompt", in.prompt, "user prompt")->required();
    in_cmd->add_option("--template", in.tmpl, "chat template: vicuna or qwen")->capture_default_str();
    in_cmd->add_option("--kind", in.kind, "task kind hint for image prompts")->capture_default_str();
    in_cmd->add_option("--max-new", in.max_new, "generation budget")->capture_default_str();

    std::string inspect_path;
    bool inspect_params = false;
    auto* is_cmd = app.add_subcommand("inspect-checkpoint", "print checkpoint metadata");
    is_cmd->add_option("--ckpt", inspect_path, "checkpoint path")->required();
    is_cmd->add_flag("--params", inspect_params, "list every tensor");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen_cmd->parsed()) return cmd_gen_data(gen);
        if (tv_cmd->parsed()) return run_training(StageKind::TinyPlus, tv);
        if (tt_cmd->parsed()) return run_training(StageKind::Pretrain, tt);
        if (sf_cmd->parsed()) return run_training(StageKind::Sft, sf);
        if (ev_cmd->parsed()) return cmd_eval(ev);
        if (in_cmd->parsed()) return cmd_infer(in);
        if (is_cmd->parsed()) return cmd_inspect(inspect_path, inspect_params);
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const GenerationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const DimensionError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 5;
    }
    return 0;
}
