#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "toyvlm/image.hpp"
#include "toyvlm/rng.hpp"
#include "toyvlm/tokenizer.hpp"

namespace toyvlm {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// Pixel-space box, x1 < x2 and y1 < y2.
struct BBox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// Box in the 0..1000 normalized integer frame.
struct NormBox {
    int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

struct ObjectAnnotation {
    std::string class_name;
    BBox box;
};

struct Scene {
    Image image;
    std::vector<ObjectAnnotation> objects;
};

enum class TaskKind { PdfOcr, Markdown, Detection, Rec, Caption, Nlp, Vqa };

const char* task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& name);

// One training example. Nlp records carry no image; every other kind
// carries exactly one (in memory, on disk, or both).
struct TaskRecord {
    TaskKind kind = TaskKind::Nlp;
    std::optional<std::string> image_path;
    std::shared_ptr<Image> image;
    std::string prompt;
    std::string response;

    bool has_image() const { return image_path.has_value() || image != nullptr; }
};

void validate_record(const TaskRecord& rec);

enum class TemplateKind { VicunaV1, QwenChat };

struct MixtureSpec {
    std::vector<std::pair<std::string, double>> entries;  // corpus id -> weight
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Record construction
// ---------------------------------------------------------------------------

inline constexpr const char* kOcrPrompt = "Provide the OCR results of this image.";
inline constexpr const char* kMarkdownPrompt = "Convert the image to markdown format.";
inline constexpr const char* kDetectAllPrompt = "Detect all objects in this image";
inline constexpr const char* kCaptionPrompt = "Describe the content of this image in a sentence.";
inline constexpr const char* kVqaSuffix = "Answer using a single word or phrase.";

// nullopt = skip (empty / whitespace-only page text).
std::optional<TaskRecord> build_pdf_record(const std::string& page_text, std::shared_ptr<Image> page_image,
                                           bool markdown = false);

struct DetectionPolicy {
    int max_boxes = 30;       // at most this many objects -> full detection task
    int max_rec_classes = 5;  // REC prompts name 1..max_rec_classes random classes
};

// Scenes with <= max_boxes objects become a Detection record listing every
// object; larger scenes become a REC record over a random class subset.
// nullopt = skip (empty scene).
std::optional<TaskRecord> reorganize_detection(const Scene& scene, const DetectionPolicy& policy, Rng& rng);

// ---------------------------------------------------------------------------
// Box coordinate text
// ---------------------------------------------------------------------------

// x -> round(x / W * 1000), half-up, clamped to [0, 1000].
NormBox normalize_box(const BBox& box, int width, int height);
BBox denormalize_box(const NormBox& box, int width, int height);

// One object per line: `class_name: [x1, y1, x2, y2]` with normalized
// integer coordinates, input order preserved.
std::string render_box_text(const std::vector<ObjectAnnotation>& objects, int width, int height);

struct ParsedBox {
    std::string class_name;
    NormBox box;
};

// Exact inverse of render_box_text on well-formed strings. Throws
// ParseError (with the 1-based line number) on any malformed line.
std::vector<ParsedBox> parse_box_text(const std::string& text);

// ---------------------------------------------------------------------------
// Chat templates
// ---------------------------------------------------------------------------

struct RenderedParts {
    std::string prefix;    // up to and including the assistant role marker
    std::string response;  // quoted response plus end token
};

// Byte-exact template rendering. The Vicuna form keeps the source spelling
// "ASSITANT" unless fix_typos is set.
RenderedParts render_template_parts(const TaskRecord& rec, TemplateKind kind, bool fix_typos = false);
std::string render_template(const TaskRecord& rec, TemplateKind kind, bool fix_typos = false);

// ---------------------------------------------------------------------------
// Token budget
// ---------------------------------------------------------------------------

struct BudgetCheck {
    bool fits = true;
    int actual = 0;  // token count with the image block expanded
};

// Counts tokens of the rendered string under the tokenizer, with the image
// placeholder expanded to n_img_tokens embeddings. The limit is inclusive:
// a record at exactly `limit` fits.
BudgetCheck check_token_budget(const std::string& rendered, const Tokenizer& tok, int n_img_tokens,
                               int limit = 4096);

// ---------------------------------------------------------------------------
// Mixture sampling
// ---------------------------------------------------------------------------

// Deterministic weighted stream over named corpora. Each draw picks a
// corpus with probability proportional to its weight, then advances that
// corpus's cursor (wrapping).
class MixtureSampler {
public:
    MixtureSampler(const MixtureSpec& spec, const std::map<std::string, std::vector<TaskRecord>>& corpora);

    const TaskRecord& next();

    // Sum of the sizes of all referenced corpora; one "epoch" of a stream.
    std::size_t epoch_size() const { return epoch_size_; }

private:
    struct Entry {
        const std::vector<TaskRecord>* records;
        double cum_weight;
        std::size_t cursor = 0;
    };
    std::vector<Entry> entries_;
    double total_weight_ = 0;
    std::size_t epoch_size_ = 0;
    Rng rng_;
};

// ---------------------------------------------------------------------------
// Manifests (line-delimited JSON + PPM images beside)
// ---------------------------------------------------------------------------

// Writes records to `manifest_path`; any in-memory image is saved as
// <stem>_NNNNNN.ppm next to the manifest and referenced by relative path.
void write_manifest(const std::string& manifest_path, const std::vector<TaskRecord>& records);

// Reads records; image_path entries are resolved relative to the manifest
// directory but pixels are not loaded (see load_record_image).
std::vector<TaskRecord> read_manifest(const std::string& manifest_path);

// Loads rec.image from rec.image_path if not already in memory.
const Image& load_record_image(TaskRecord& rec);

}  // namespace toyvlm
