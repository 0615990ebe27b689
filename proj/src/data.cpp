#include "toyvlm/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "toyvlm/errors.hpp"

namespace toyvlm {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::PdfOcr: return "pdf_ocr";
        case TaskKind::Markdown: return "markdown";
        case TaskKind::Detection: return "detection";
        case TaskKind::Rec: return "rec";
        case TaskKind::Caption: return "caption";
        case TaskKind::Nlp: return "nlp";
        case TaskKind::Vqa: return "vqa";
    }
    throw ConfigError("task_kind_name: bad enum value");
}

TaskKind task_kind_from_name(const std::string& name) {
    for (TaskKind k : {TaskKind::PdfOcr, TaskKind::Markdown, TaskKind::Detection, TaskKind::Rec,
                       TaskKind::Caption, TaskKind::Nlp, TaskKind::Vqa})
        if (name == task_kind_name(k)) return k;
    throw ConfigError("unknown task kind: " + name);
}

void validate_record(const TaskRecord& rec) {
    if (rec.kind == TaskKind::Nlp) {
        if (rec.has_image()) throw FormatError("nlp record must not carry an image");
    } else {
        if (!rec.has_image()) throw FormatError(std::string(task_kind_name(rec.kind)) + " record requires an image");
    }
    if (rec.prompt.empty()) throw FormatError("record has empty prompt");
}

// ---------------------------------------------------------------------------

std::optional<TaskRecord> build_pdf_record(const std::string& page_text, std::shared_ptr<Image> page_image,
                                           bool markdown) {
    const bool blank = std::all_of(page_text.begin(), page_text.end(),
                                   [](unsigned char c) { return std::isspace(c); });
    if (blank) return std::nullopt;
    TaskRecord rec;
    rec.kind = markdown ? TaskKind::Markdown : TaskKind::PdfOcr;
    rec.image = std::move(page_image);
    rec.prompt = markdown ? kMarkdownPrompt : kOcrPrompt;
    rec.response = page_text;
    return rec;
}

std::optional<TaskRecord> reorganize_detection(const Scene& scene, const DetectionPolicy& policy, Rng& rng) {
    if (scene.objects.empty()) return std::nullopt;
    TaskRecord rec;
    rec.image = std::make_shared<Image>(scene.image);
    const int w = scene.image.width, h = scene.image.height;
    if (static_cast<int>(scene.objects.size()) <= policy.max_boxes) {
        rec.kind = TaskKind::Detection;
        rec.prompt = kDetectAllPrompt;
        rec.response = render_box_text(scene.objects, w, h);
        return rec;
    }
    // REC: name a random class subset, answer with all boxes of exactly
    // those classes.
    std::vector<std::string> classes;
    for (const auto& obj : scene.objects)
        if (std::find(classes.begin(), classes.end(), obj.class_name) == classes.end())
            classes.push_back(obj.class_name);
    const int take = static_cast<int>(
        rng.uniform_int(1, std::min<std::int64_t>(policy.max_rec_classes, static_cast<std::int64_t>(classes.size()))));
    // partial Fisher-Yates, without replacement
    for (int i = 0; i < take; ++i) {
        const auto j = rng.uniform_int(i, static_cast<std::int64_t>(classes.size()) - 1);
        std::swap(classes[i], classes[j]);
    }
    classes.resize(take);
    rec.kind = TaskKind::Rec;
    std::string prompt = "Detect ";
    for (const auto& c : classes) prompt += c + ", ";
    prompt += "in this image";
    rec.prompt = prompt;
    std::vector<ObjectAnnotation> selected;
    for (const auto& obj : scene.objects)
        if (std::find(classes.begin(), classes.end(), obj.class_name) != classes.end()) selected.push_back(obj);
    rec.response = render_box_text(selected, w, h);
    return rec;
}

// ---------------------------------------------------------------------------

namespace {
int norm_coord(double x, int extent) {
    // round half up, then clamp
    const int v = static_cast<int>(std::floor(x / extent * 1000.0 + 0.5));
    return std::clamp(v, 0, 1000);
}
}  // namespace

NormBox normalize_box(const BBox& box, int width, int height) {
    if (width <= 0 || height <= 0) throw InputError("normalize_box: non-positive image size");
    if (!(box.x1 < box.x2) || !(box.y1 < box.y2))
        throw InputError("normalize_box: degenerate box");
    return NormBox{norm_coord(box.x1, width), norm_coord(box.y1, height), norm_coord(box.x2, width),
                   norm_coord(box.y2, height)};
}

BBox denormalize_box(const NormBox& box, int width, int height) {
    return BBox{box.x1 * width / 1000.0, box.y1 * height / 1000.0, box.x2 * width / 1000.0,
                box.y2 * height / 1000.0};
}

std::string render_box_text(const std::vector<ObjectAnnotation>& objects, int width, int height) {
    std::string out;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const NormBox nb = normalize_box(objects[i].box, width, height);
        if (i) out += '\n';
        out += objects[i].class_name + ": [" + std::to_string(nb.x1) + ", " + std::to_string(nb.y1) + ", " +
               std::to_string(nb.x2) + ", " + std::to_string(nb.y2) + "]";
    }
    return out;
}

namespace {
bool parse_box_line(const std::string& line, ParsedBox& out) {
    const auto colon = line.find(": [");
    if (colon == std::string::npos || colon == 0) return false;
    out.class_name = line.substr(0, colon);
    std::size_t pos = colon + 3;
    int coords[4];
    for (int i = 0; i < 4; ++i) {
        std::size_t end = line.find(i < 3 ? ", " : "]", pos);
        if (end == std::string::npos || end == pos) return false;
        const std::string num = line.substr(pos, end - pos);
        if (num.empty() || !std::all_of(num.begin(), num.end(), [](unsigned char c) { return std::isdigit(c); }))
            return false;
        coords[i] = std::stoi(num);
        pos = end + (i < 3 ? 2 : 1);
    }
    if (pos != line.size()) return false;
    out.box = NormBox{coords[0], coords[1], coords[2], coords[3]};
    return true;
}
}  // namespace

std::vector<ParsedBox> parse_box_text(const std::string& text) {
    std::vector<ParsedBox> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        ParsedBox pb;
        if (!parse_box_line(line, pb))
            throw ParseError("malformed box line: \"" + line + "\"", lineno);
        out.push_back(std::move(pb));
    }
    return out;
}

// ---------------------------------------------------------------------------

RenderedParts render_template_parts(const TaskRecord& rec, TemplateKind kind, bool fix_typos) {
    if (rec.has_image() && rec.prompt.empty()) throw FormatError("image record with empty prompt");
    const bool img = rec.kind != TaskKind::Nlp;
    RenderedParts parts;
    if (kind == TemplateKind::VicunaV1) {
        const char* assistant = fix_typos ? "ASSISTANT" : "ASSITANT";
        parts.prefix = "USER: ";
        if (img) parts.prefix += "<img>\"<image>\"</img> ";
        parts.prefix += "\"" + rec.prompt + "\" " + assistant + ": ";
        parts.response = "\"" + rec.response + "\" </s>";
    } else {
        parts.prefix = "<|im_start|>user: ";
        if (img) parts.prefix += "<img>\"<image>\"</img> ";
        parts.prefix += "\"" + rec.prompt + "\"<|im_end|> <|im_start|>assistant: ";
        parts.response = "\"" + rec.response + "\" <|im_end|>";
    }
    return parts;
}

std::string render_template(const TaskRecord& rec, TemplateKind kind, bool fix_typos) {
    const RenderedParts p = render_template_parts(rec, kind, fix_typos);
    return p.prefix + p.response;
}

// ---------------------------------------------------------------------------

BudgetCheck check_token_budget(const std::string& rendered, const Tokenizer& tok, int n_img_tokens, int limit) {
    const std::vector<int> ids = tok.encode(rendered);
    int count = 0;
    for (int id : ids) count += (id == Tokenizer::kImagePlaceholder) ? n_img_tokens : 1;
    return BudgetCheck{count <= limit, count};
}

// ---------------------------------------------------------------------------

MixtureSampler::MixtureSampler(const MixtureSpec& spec, const std::map<std::string, std::vector<TaskRecord>>& corpora)
    : rng_(spec.seed) {
    double cum = 0;
    bool any_positive = false;
    for (const auto& [id, weight] : spec.entries) {
        if (weight < 0) throw ConfigError("mixture weight for '" + id + "' is negative");
        auto it = corpora.find(id);
        if (it == corpora.end()) throw ConfigError("mixture references unknown corpus '" + id + "'");
        if (it->second.empty()) throw ConfigError("corpus '" + id + "' is empty");
        cum += weight;
        if (weight > 0) {
            any_positive = true;
            entries_.push_back(Entry{&it->second, cum});
            epoch_size_ += it->second.size();
        }
    }
    if (!any_positive) throw ConfigError("mixture has no positive weight");
    total_weight_ = cum;
}

const TaskRecord& MixtureSampler::next() {
    const double u = rng_.uniform() * total_weight_;
    Entry* chosen = &entries_.back();
    for (auto& e : entries_) {
        if (u < e.cum_weight) {
            chosen = &e;
            break;
        }
    }
    const TaskRecord& rec = (*chosen->records)[chosen->cursor];
    chosen->cursor = (chosen->cursor + 1) % chosen->records->size();
    return rec;
}

// ---------------------------------------------------------------------------

void write_manifest(const std::string& manifest_path, const std::vector<TaskRecord>& records) {
    const fs::path mpath(manifest_path);
    const fs::path dir = mpath.parent_path().empty() ? fs::path(".") : mpath.parent_path();
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream out(manifest_path);
    if (!out) throw IoError("write_manifest: cannot open " + manifest_path);
    const std::string stem = mpath.stem().string();
    int img_idx = 0;
    for (const auto& rec : records) {
        validate_record(rec);
        json j;
        j["kind"] = task_kind_name(rec.kind);
        if (rec.kind != TaskKind::Nlp) {
            std::string rel;
            if (rec.image) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "_%06d.ppm", img_idx++);
                rel = stem + buf;
                write_ppm(*rec.image, (dir / rel).string());
            } else {
                rel = *rec.image_path;
            }
            j["image_path"] = rel;
        }
        j["prompt"] = rec.prompt;
        j["response"] = rec.response;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write_manifest: write failed for " + manifest_path);
}

std::vector<TaskRecord> read_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("read_manifest: cannot open " + manifest_path);
    const fs::path dir = fs::path(manifest_path).parent_path();
    std::vector<TaskRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("read_manifest: bad JSON in " + manifest_path + ": " + e.what(), lineno);
        }
        TaskRecord rec;
        rec.kind = task_kind_from_name(j.at("kind").get<std::string>());
        if (j.contains("image_path"))
            rec.image_path = (dir / j["image_path"].get<std::string>()).string();
        rec.prompt = j.at("prompt").get<std::string>();
        rec.response = j.at("response").get<std::string>();
        validate_record(rec);
        records.push_back(std::move(rec));
    }
    return records;
}

const Image& load_record_image(TaskRecord& rec) {
    if (!rec.image) {
        if (!rec.image_path) throw IoError("record has no image to load");
        rec.image = std::make_shared<Image>(read_ppm(*rec.image_path));
    }
    return *rec.image;
}

}  // namespace toyvlm
