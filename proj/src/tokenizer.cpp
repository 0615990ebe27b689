#include "toyvlm/tokenizer.hpp"

#include <array>

#include "toyvlm/errors.hpp"

namespace toyvlm {

namespace {

struct Special {
    int id;
    std::string text;
};

// Ordered longest-first so "<image>" wins over a hypothetical shorter prefix
// and "<|im_start|>" is matched before byte fallback.
const std::array<Special, 6>& specials() {
    static const std::array<Special, 6> s = {{
        {Tokenizer::kImStart, "<|im_start|>"},
        {Tokenizer::kImEnd, "<|im_end|>"},
        {Tokenizer::kImagePlaceholder, "<image>"},
        {Tokenizer::kImgClose, "</img>"},
        {Tokenizer::kImgOpen, "<img>"},
        {Tokenizer::kEos, "</s>"},
    }};
    return s;
}

}  // namespace

const std::string& Tokenizer::special_string(int id) {
    for (const auto& s : specials())
        if (s.id == id) return s.text;
    throw IndexError("Tokenizer: id " + std::to_string(id) + " is not a special token");
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        bool matched = false;
        if (text[i] == '<') {
            for (const auto& s : specials()) {
                if (text.compare(i, s.text.size(), s.text) == 0) {
                    ids.push_back(s.id);
                    i += s.text.size();
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) {
            ids.push_back(static_cast<unsigned char>(text[i]));
            ++i;
        }
    }
    return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id >= 0 && id < 256) {
            out.push_back(static_cast<char>(id));
        } else if (id < kVocabSize) {
            out += special_string(id);
        } else {
            throw IndexError("Tokenizer::decode: id " + std::to_string(id) + " out of range");
        }
    }
    return out;
}

}  // namespace toyvlm
