#pragma once

#include <string>
#include <vector>

namespace toyvlm {

// Byte-level tokenizer: ids 0..255 are raw bytes, followed by reserved ids
// for the chat-format special tokens. Round-trips arbitrary byte content.
class Tokenizer {
public:
    static constexpr int kImgOpen = 256;      // <img>
    static constexpr int kImgClose = 257;     // </img>
    static constexpr int kEos = 258;          // </s>
    static constexpr int kImStart = 259;      // <|im_start|>
    static constexpr int kImEnd = 260;        // <|im_end|>
    static constexpr int kImagePlaceholder = 261;  // <image>

    static constexpr int kVocabSize = 262;

    int vocab_size() const { return kVocabSize; }

    // Special-token substrings become single ids (longest match wins);
    // everything else is bytes.
    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;

    static const std::string& special_string(int id);
};

}  // namespace toyvlm
