#pragma once

#include <string>
#include <vector>

#include "toyvlm/data.hpp"
#include "toyvlm/image.hpp"
#include "toyvlm/rng.hpp"

namespace toyvlm {

// ---------------------------------------------------------------------------
// Glyph-grid documents (stand-in for rasterized PDF pages)
// ---------------------------------------------------------------------------

// Checked-in 5x7 bitmap font for A-Z, 0-9 and a little punctuation.
// Glyphs are laid out on a fixed cell grid so the rendered page is exactly
// decodable back to its text.
namespace glyph {
inline constexpr int kGlyphW = 5;
inline constexpr int kGlyphH = 7;
inline constexpr int kCellW = 6;  // glyph + 1px gap
inline constexpr int kCellH = 8;

bool has_glyph(char c);
// 5x7 bitmap, row-major, true = ink.
const bool* bitmap(char c);
}  // namespace glyph

struct DocumentConfig {
    int page_px = 64;     // square page
    int min_lines = 2;
    int max_lines = 6;
    int min_word_len = 2;
    int max_word_len = 5;
    // Characters words draw from; must all have glyphs.
    std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";
};

struct Document {
    std::string text;      // plain OCR ground truth, lines joined by '\n'
    std::string markdown;  // same content with markdown markers added
    Image image;           // renders exactly `text`
};

// Random uppercase words on the glyph grid. Deterministic in rng state.
Document gen_document(Rng& rng, const DocumentConfig& cfg);

// Renders arbitrary supported text onto a fresh page. Throws
// GenerationError when the text does not fit the page.
Image render_text_page(const std::string& text, int page_px);

// Reads the glyph cells back out of a rendered page; the inverse of
// render_text_page on supported text.
std::string decode_text_page(const Image& img, int page_px);

// ---------------------------------------------------------------------------
// Colored-shape detection scenes
// ---------------------------------------------------------------------------

struct SceneRecipe {
    int img_px = 64;
    int min_size = 10;
    int max_size = 22;
    double max_pairwise_iou = 0.05;
    int placement_retries = 200;
    int grid_snap = 1;  // snap positions/sizes to multiples of this
    std::vector<std::string> classes;  // "color shape" names

    // 4 colors x 3 shapes minus one held-out class for generalization
    // tests.
    static SceneRecipe standard();
    static const char* held_out_class();  // excluded from standard()
};

// Places n_objects shapes under the overlap policy; annotations carry the
// exact class name and the tight box of the painted pixels.
Scene gen_scene(Rng& rng, const SceneRecipe& recipe, int n_objects);

// ---------------------------------------------------------------------------
// VQA / caption / NLP samples
// ---------------------------------------------------------------------------

TaskRecord gen_vqa_sample(const Scene& scene, Rng& rng);
TaskRecord gen_caption_sample(const Scene& scene, Rng& rng);
TaskRecord gen_nlp_sample(Rng& rng);

}  // namespace toyvlm
