#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "toyvlm/errors.hpp"
#include "toyvlm/image.hpp"
#include "toyvlm/rng.hpp"
#include "toyvlm/tokenizer.hpp"

using namespace toyvlm;

TEST_CASE("tokenizer round-trips plain text byte for byte") {
    Tokenizer tok;
    const std::string s = "Detect all objects in this image";
    auto ids = tok.encode(s);
    CHECK(ids.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i)
        CHECK(ids[i] == static_cast<int>(static_cast<unsigned char>(s[i])));
    CHECK(tok.decode(ids) == s);
}

TEST_CASE("tokenizer maps special strings to single ids") {
    Tokenizer tok;
    CHECK(tok.encode("<img>") == std::vector<int>{Tokenizer::kImgOpen});
    CHECK(tok.encode("</img>") == std::vector<int>{Tokenizer::kImgClose});
    CHECK(tok.encode("</s>") == std::vector<int>{Tokenizer::kEos});
    CHECK(tok.encode("<|im_start|>") == std::vector<int>{Tokenizer::kImStart});
    CHECK(tok.encode("<|im_end|>") == std::vector<int>{Tokenizer::kImEnd});
    CHECK(tok.encode("<image>") == std::vector<int>{Tokenizer::kImagePlaceholder});

    auto ids = tok.encode("a<img>\"<image>\"</img>b");
    CHECK(ids == std::vector<int>{'a', Tokenizer::kImgOpen, '"', Tokenizer::kImagePlaceholder, '"',
                                  Tokenizer::kImgClose, 'b'});
    CHECK(tok.decode(ids) == "a<img>\"<image>\"</img>b");
}

TEST_CASE("tokenizer longest match wins and near-misses stay bytes") {
    Tokenizer tok;
    // "<im" is a prefix of two specials but matches neither.
    auto ids = tok.encode("<im g>");
    CHECK(ids.size() == 6);
    // "</s>x" keeps the trailing byte.
    auto ids2 = tok.encode("</s>x");
    CHECK(ids2 == std::vector<int>{Tokenizer::kEos, 'x'});
    // "<imgx" must not consume a partial special.
    auto ids3 = tok.encode("<imgx");
    CHECK(ids3 == std::vector<int>{'<', 'i', 'm', 'g', 'x'});
}

TEST_CASE("tokenizer round-trips random byte strings") {
    Tokenizer tok;
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        std::string s;
        const int len = static_cast<int>(rng.uniform_int(0, 40));
        for (int i = 0; i < len; ++i) s.push_back(static_cast<char>(rng.uniform_int(0, 255)));
        CHECK(tok.decode(tok.encode(s)) == s);
    }
}

TEST_CASE("vocab size covers bytes plus specials") {
    Tokenizer tok;
    CHECK(tok.vocab_size() == 262);
    CHECK(Tokenizer::special_string(Tokenizer::kImagePlaceholder) == "<image>");
}

TEST_CASE("ppm write/read round-trips exactly") {
    Rng rng(3);
    Image img = Image::filled(5, 7, 0, 0, 0);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    const std::string path = (std::filesystem::temp_directory_path() / "toyvlm_ppm_test.ppm").string();
    write_ppm(img, path);
    Image back = read_ppm(path);
    CHECK(back.height == 5);
    CHECK(back.width == 7);
    CHECK(back.pixels == img.pixels);
    std::remove(path.c_str());
}

TEST_CASE("read_ppm rejects missing and malformed files") {
    CHECK_THROWS_AS(read_ppm("/nonexistent/toyvlm.ppm"), IoError);
    const std::string path = (std::filesystem::temp_directory_path() / "toyvlm_bad.ppm").string();
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("P3\n2 2\n255\n", f);
    std::fclose(f);
    CHECK_THROWS_AS(read_ppm(path), FormatError);
    std::remove(path.c_str());
}

TEST_CASE("bilinear resize preserves constant images and interpolates a step") {
    Image flat = Image::filled(8, 8, 40, 120, 200);
    Image out = resize_bilinear(flat, 3, 5);
    CHECK(out.height == 3);
    CHECK(out.width == 5);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x) {
            CHECK(out.at(y, x)[0] == 40);
            CHECK(out.at(y, x)[1] == 120);
            CHECK(out.at(y, x)[2] == 200);
        }

    // Left half black, right half white: downsampled center column must land
    // strictly between the extremes.
    Image step = Image::filled(4, 8, 0, 0, 0);
    for (int y = 0; y < 4; ++y)
        for (int x = 4; x < 8; ++x)
            step.at(y, x)[0] = step.at(y, x)[1] = step.at(y, x)[2] = 255;
    Image small = resize_bilinear(step, 4, 3);
    CHECK(small.at(1, 0)[0] < 30);
    CHECK(small.at(1, 2)[0] > 225);
    CHECK(small.at(1, 1)[0] > 60);
    CHECK(small.at(1, 1)[0] < 200);

    // Identity resize is a copy.
    Image same = resize_bilinear(step, 4, 8);
    CHECK(same.pixels == step.pixels);
}

TEST_CASE("short-side resize and center crop picks the middle square") {
    // 6x12 image whose central 6x6 block carries a sentinel color.
    Image img = Image::filled(6, 12, 10, 10, 10);
    for (int y = 0; y < 6; ++y)
        for (int x = 3; x < 9; ++x) {
            img.at(y, x)[0] = 250;
            img.at(y, x)[1] = 0;
            img.at(y, x)[2] = 0;
        }
    Image crop = resize_short_side_center_crop(img, 6);
    CHECK(crop.height == 6);
    CHECK(crop.width == 6);
    // Every cropped pixel should come from the sentinel block.
    CHECK(crop.at(3, 3)[0] > 200);
    CHECK(crop.at(0, 0)[0] > 200);
    CHECK(crop.at(5, 5)[0] > 200);
}

TEST_CASE("resize rejects degenerate shapes") {
    Image img = Image::filled(4, 4, 0, 0, 0);
    CHECK_THROWS_AS(resize_bilinear(img, 0, 4), InputError);
    Image empty;
    CHECK_THROWS_AS(resize_bilinear(empty, 2, 2), InputError);
}
