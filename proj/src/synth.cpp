#include "toyvlm/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "toyvlm/errors.hpp"

namespace toyvlm {

// ---------------------------------------------------------------------------
// Font
// ---------------------------------------------------------------------------

namespace glyph {

namespace {

struct GlyphDef {
    char c;
    const char* rows[7];
};

// clang-format off
const GlyphDef kFont[] = {
    {'A', {".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
    {'B', {"####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."}},
    {'C', {".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."}},
    {'D', {"####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."}},
    {'E', {"#####", "#....", "#....", "####.", "#....", "#....", "#####"}},
    {'F', {"#####", "#....", "#....", "####.", "#....", "#....", "#...."}},
    {'G', {".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".###."}},
    {'H', {"#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
    {'I', {".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."}},
    {'J', {"..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."}},
    {'K', {"#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"}},
    {'L', {"#....", "#....", "#....", "#....", "#....", "#....", "#####"}},
    {'M', {"#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"}},
    {'N', {"#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"}},
    {'O', {".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
    {'P', {"####.", "#...#", "#...#", "####.", "#....", "#....", "#...."}},
    {'Q', {".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"}},
    {'R', {"####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"}},
    {'S', {".####", "#....", "#....", ".###.", "....#", "....#", "####."}},
    {'T', {"#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."}},
    {'U', {"#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
    {'V', {"#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."}},
    {'W', {"#...#", "#...#", "#...#", "#.#.#", "#.#.#", "##.##", "#...#"}},
    {'X', {"#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"}},
    {'Y', {"#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."}},
    {'Z', {"#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"}},
    {'0', {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."}},
    {'1', {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."}},
    {'2', {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"}},
    {'3', {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."}},
    {'4', {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."}},
    {'5', {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."}},
    {'6', {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."}},
    {'7', {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."}},
    {'8', {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."}},
    {'9', {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."}},
    {'.', {".....", ".....", ".....", ".....", ".....", ".##..", ".##.."}},
    {',', {".....", ".....", ".....", ".....", ".##..", "..#..", ".#..."}},
    {':', {".....", ".##..", ".##..", ".....", ".##..", ".##..", "....."}},
    {'-', {".....", ".....", ".....", "#####", ".....", ".....", "....."}},
    {'?', {".###.", "#...#", "....#", "...#.", "..#..", ".....", "..#.."}},
    {'!', {"..#..", "..#..", "..#..", "..#..", "..#..", ".....", "..#.."}},
    {' ', {".....", ".....", ".....", ".....", ".....", ".....", "....."}},
};
// clang-format on

// Expanded bitmaps, built once.
const std::map<char, std::array<bool, kGlyphW * kGlyphH>>& table() {
    static const auto t = [] {
        std::map<char, std::array<bool, kGlyphW * kGlyphH>> m;
        for (const auto& g : kFont) {
            std::array<bool, kGlyphW * kGlyphH> bits{};
            for (int r = 0; r < kGlyphH; ++r)
                for (int c = 0; c < kGlyphW; ++c) bits[r * kGlyphW + c] = g.rows[r][c] == '#';
            m[g.c] = bits;
        }
        return m;
    }();
    return t;
}

}  // namespace

bool has_glyph(char c) { return table().count(c) != 0; }

const bool* bitmap(char c) {
    auto it = table().find(c);
    if (it == table().end()) throw InputError(std::string("no glyph for character '") + c + "'");
    return it->second.data();
}

}  // namespace glyph

// ---------------------------------------------------------------------------
// Document rendering
// ---------------------------------------------------------------------------

Image render_text_page(const std::string& text, int page_px) {
    const int cols = page_px / glyph::kCellW;
    const int rows = page_px / glyph::kCellH;
    std::vector<std::string> lines;
    {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
    }
    if (static_cast<int>(lines.size()) > rows)
        throw GenerationError("render_text_page: " + std::to_string(lines.size()) + " lines exceed page rows " +
                              std::to_string(rows));
    for (const auto& line : lines)
        if (static_cast<int>(line.size()) > cols)
            throw GenerationError("render_text_page: line \"" + line + "\" exceeds page columns " +
                                  std::to_string(cols));

    Image img = Image::filled(page_px, page_px, 255, 255, 255);
    for (int r = 0; r < static_cast<int>(lines.size()); ++r) {
        for (int c = 0; c < static_cast<int>(lines[r].size()); ++c) {
            const bool* bits = glyph::bitmap(lines[r][c]);
            for (int gy = 0; gy < glyph::kGlyphH; ++gy)
                for (int gx = 0; gx < glyph::kGlyphW; ++gx)
                    if (bits[gy * glyph::kGlyphW + gx]) {
                        std::uint8_t* px = img.at(r * glyph::kCellH + gy, c * glyph::kCellW + gx);
                        px[0] = px[1] = px[2] = 0;
                    }
        }
    }
    return img;
}

std::string decode_text_page(const Image& img, int page_px) {
    const int cols = page_px / glyph::kCellW;
    const int rows = page_px / glyph::kCellH;
    std::vector<std::string> lines;
    for (int r = 0; r < rows; ++r) {
        std::string line;
        for (int c = 0; c < cols; ++c) {
            std::array<bool, glyph::kGlyphW * glyph::kGlyphH> cell{};
            for (int gy = 0; gy < glyph::kGlyphH; ++gy)
                for (int gx = 0; gx < glyph::kGlyphW; ++gx)
                    cell[gy * glyph::kGlyphW + gx] = img.at(r * glyph::kCellH + gy, c * glyph::kCellW + gx)[0] < 128;
            char best = 0;
            for (char cand : std::string("ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789.,:-?! ")) {
                if (std::memcmp(glyph::bitmap(cand), cell.data(), cell.size() * sizeof(bool)) == 0) {
                    best = cand;
                    break;
                }
            }
            if (best == 0) throw InputError("decode_text_page: unrecognized glyph cell");
            line.push_back(best);
        }
        // trailing pad cells decode as spaces
        while (!line.empty() && line.back() == ' ') line.pop_back();
        lines.push_back(std::move(line));
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out += '\n';
        out += lines[i];
    }
    return out;
}

Document gen_document(Rng& rng, const DocumentConfig& cfg) {
    if (cfg.max_lines <= 0 || cfg.max_word_len <= 0 || cfg.min_lines <= 0 || cfg.min_word_len <= 0)
        throw GenerationError("gen_document: line/word limits must be positive");
    if (cfg.alphabet.empty()) throw GenerationError("gen_document: empty alphabet");
    for (char c : cfg.alphabet)
        if (!glyph::has_glyph(c) || c == ' ')
            throw GenerationError(std::string("gen_document: unsupported alphabet character '") + c + "'");
    const int cols = cfg.page_px / glyph::kCellW;
    const int rows = cfg.page_px / glyph::kCellH;
    if (cols < cfg.min_word_len || rows < cfg.min_lines)
        throw GenerationError("gen_document: page too small for configured limits");
    const int n_lines = static_cast<int>(rng.uniform_int(cfg.min_lines, std::min(cfg.max_lines, rows)));
    std::vector<std::string> lines;
    for (int li = 0; li < n_lines; ++li) {
        std::string line;
        while (true) {
            const int len = static_cast<int>(rng.uniform_int(cfg.min_word_len, cfg.max_word_len));
            const int needed = static_cast<int>(line.size()) + (line.empty() ? 0 : 1) + len;
            if (needed > cols) break;
            if (!line.empty()) line += ' ';
            for (int i = 0; i < len; ++i)
                line += cfg.alphabet[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(cfg.alphabet.size()) - 1))];
            if (cols - static_cast<int>(line.size()) < cfg.min_word_len + 1) break;
        }
        lines.push_back(line);
    }
    Document doc;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) doc.text += '\n';
        doc.text += lines[i];
    }
    // Markdown ground truth: first line is a header, one random word of
    // a later line is emphasized. The rendered image shows plain text only.
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) doc.markdown += '\n';
        if (i == 0) {
            doc.markdown += "# " + lines[i];
        } else if (i == 1 && !lines[i].empty()) {
            std::string emphasized = lines[i];
            const auto sp = emphasized.find(' ');
            const std::string first = emphasized.substr(0, sp == std::string::npos ? emphasized.size() : sp);
            doc.markdown += "*" + first + "*" + emphasized.substr(first.size());
        } else {
            doc.markdown += lines[i];
        }
    }
    doc.image = render_text_page(doc.text, cfg.page_px);
    return doc;
}

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

namespace {

struct Color {
    const char* name;
    std::uint8_t r, g, b;
};

const Color kColors[] = {
    {"red", 220, 40, 40},
    {"green", 40, 170, 60},
    {"blue", 40, 70, 220},
    {"yellow", 230, 210, 40},
};

const char* kShapes[] = {"square", "circle", "triangle"};

// Paints a shape and returns the tight box of the painted pixels.
BBox draw_shape(Image& img, const std::string& shape, const Color& col, int x0, int y0, int size) {
    int minx = img.width, miny = img.height, maxx = -1, maxy = -1;
    auto paint = [&](int y, int x) {
        std::uint8_t* px = img.at(y, x);
        px[0] = col.r;
        px[1] = col.g;
        px[2] = col.b;
        minx = std::min(minx, x);
        maxx = std::max(maxx, x);
        miny = std::min(miny, y);
        maxy = std::max(maxy, y);
    };
    if (shape == "square") {
        for (int y = y0; y < y0 + size; ++y)
            for (int x = x0; x < x0 + size; ++x) paint(y, x);
    } else if (shape == "circle") {
        const double c = (size - 1) / 2.0;
        const double r2 = (size / 2.0) * (size / 2.0);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                if ((x - c) * (x - c) + (y - c) * (y - c) <= r2) paint(y0 + y, x0 + x);
    } else {  // triangle, apex up
        for (int y = 0; y < size; ++y) {
            const double half = (size / 2.0) * (y + 1) / size;
            const double cx = (size - 1) / 2.0;
            for (int x = 0; x < size; ++x)
                if (std::abs(x - cx) <= half) paint(y0 + y, x0 + x);
        }
    }
    // Tight box: [min, max+1) so width/height equal the painted extent.
    return BBox{static_cast<double>(minx), static_cast<double>(miny), static_cast<double>(maxx + 1),
                static_cast<double>(maxy + 1)};
}

double box_iou(const BBox& a, const BBox& b) {
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    return uni > 0 ? inter / uni : 0.0;
}

}  // namespace

SceneRecipe SceneRecipe::standard() {
    SceneRecipe r;
    for (const auto& c : kColors)
        for (const auto* s : kShapes) {
            const std::string name = std::string(c.name) + " " + s;
            if (name != held_out_class()) r.classes.push_back(name);
        }
    return r;
}

const char* SceneRecipe::held_out_class() { return "yellow triangle"; }

Scene gen_scene(Rng& rng, const SceneRecipe& recipe, int n_objects) {
    if (n_objects < 1) throw GenerationError("gen_scene: n_objects must be >= 1");
    if (recipe.classes.empty()) throw GenerationError("gen_scene: recipe has no classes");
    Scene scene;
    scene.image = Image::filled(recipe.img_px, recipe.img_px, 255, 255, 255);
    const int snap = std::max(1, recipe.grid_snap);
    std::vector<BBox> placed;
    for (int i = 0; i < n_objects; ++i) {
        bool ok = false;
        for (int attempt = 0; attempt < recipe.placement_retries && !ok; ++attempt) {
            int size = static_cast<int>(rng.uniform_int(recipe.min_size, recipe.max_size));
            size = std::max(recipe.min_size, size / snap * snap);
            const int max_pos = recipe.img_px - size - 1;
            if (max_pos < 1) throw GenerationError("gen_scene: shapes too large for image");
            int x0 = static_cast<int>(rng.uniform_int(1, max_pos)) / snap * snap;
            int y0 = static_cast<int>(rng.uniform_int(1, max_pos)) / snap * snap;
            x0 = std::max(1, x0);
            y0 = std::max(1, y0);
            const BBox cand{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x0 + size),
                            static_cast<double>(y0 + size)};
            bool clash = false;
            for (const auto& p : placed)
                if (box_iou(cand, p) > recipe.max_pairwise_iou) {
                    clash = true;
                    break;
                }
            if (clash) continue;
            const std::string& cls =
                recipe.classes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(recipe.classes.size()) - 1))];
            const auto sp = cls.find(' ');
            const std::string color_name = cls.substr(0, sp);
            const std::string shape_name = cls.substr(sp + 1);
            const Color* col = nullptr;
            for (const auto& c : kColors)
                if (color_name == c.name) col = &c;
            if (!col) throw GenerationError("gen_scene: unknown color in class '" + cls + "'");
            const BBox tight = draw_shape(scene.image, shape_name, *col, x0, y0, size);
            placed.push_back(cand);
            scene.objects.push_back(ObjectAnnotation{cls, tight});
            ok = true;
        }
        if (!ok)
            throw GenerationError("gen_scene: could not place object " + std::to_string(i + 1) + " of " +
                                  std::to_string(n_objects) + " under the overlap policy");
    }
    return scene;
}

// ---------------------------------------------------------------------------
// VQA / caption / NLP
// ---------------------------------------------------------------------------

TaskRecord gen_vqa_sample(const Scene& scene, Rng& rng) {
    if (scene.objects.empty()) throw GenerationError("gen_vqa_sample: empty scene");
    TaskRecord rec;
    rec.kind = TaskKind::Vqa;
    rec.image = std::make_shared<Image>(scene.image);
    const int which = static_cast<int>(rng.uniform_int(0, 2));
    std::string question, answer;
    if (which == 0) {
        // count instances of a class present in the scene
        const auto& cls = scene.objects[static_cast<std::size_t>(
                                            rng.uniform_int(0, static_cast<std::int64_t>(scene.objects.size()) - 1))]
                              .class_name;
        int count = 0;
        for (const auto& o : scene.objects) count += o.class_name == cls;
        question = "How many " + cls + " objects are in this image?";
        answer = std::to_string(count);
    } else if (which == 1) {
        // leftmost object by box left edge
        const ObjectAnnotation* best = &scene.objects[0];
        for (const auto& o : scene.objects)
            if (o.box.x1 < best->box.x1) best = &o;
        question = "Which object is leftmost in this image?";
        answer = best->class_name;
    } else {
        // total object count
        question = "How many objects are in this image?";
        answer = std::to_string(scene.objects.size());
    }
    rec.prompt = question + " " + kVqaSuffix;
    rec.response = answer;
    return rec;
}

TaskRecord gen_caption_sample(const Scene& scene, Rng& /*rng*/) {
    if (scene.objects.empty()) throw GenerationError("gen_caption_sample: empty scene");
    TaskRecord rec;
    rec.kind = TaskKind::Caption;
    rec.image = std::make_shared<Image>(scene.image);
    rec.prompt = kCaptionPrompt;
    std::string body = "A picture with ";
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        if (i) body += (i + 1 == scene.objects.size()) ? " and " : ", ";
        body += "a " + scene.objects[i].class_name;
    }
    rec.response = body + ".";
    return rec;
}

TaskRecord gen_nlp_sample(Rng& rng) {
    TaskRecord rec;
    rec.kind = TaskKind::Nlp;
    if (rng.uniform_int(0, 1) == 0) {
        const int a = static_cast<int>(rng.uniform_int(0, 20));
        const int b = static_cast<int>(rng.uniform_int(0, 20));
        rec.prompt = "What is " + std::to_string(a) + " plus " + std::to_string(b) + "?";
        rec.response = std::to_string(a + b);
    } else {
        std::string word;
        const int len = static_cast<int>(rng.uniform_int(3, 6));
        for (int i = 0; i < len; ++i) word += static_cast<char>('A' + rng.uniform_int(0, 25));
        rec.prompt = "Repeat the word: " + word;
        rec.response = word;
    }
    return rec;
}

}  // namespace toyvlm
