#include "lmde/apg.hpp"
#include "lmde/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

using namespace lmde;
namespace fs = std::filesystem;

namespace {

RgbImage gray_image(const std::vector<double>& values) {
    RgbImage img(1, static_cast<Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i)
        for (int c = 0; c < 3; ++c) img.at(0, static_cast<Index>(i), c) = values[i];
    return img;
}

}  // namespace

TEST(Apg, StatsMatchSortOracle) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int h : {3, 4}) {
        RgbImage img(h, 5);
        for (auto& v : img.data) v = u(rng);
        std::vector<double> lum;
        for (Index y = 0; y < img.height; ++y)
            for (Index x = 0; x < img.width; ++x)
                lum.push_back(0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2));
        std::sort(lum.begin(), lum.end());
        double mean = 0;
        for (double v : lum) mean += v;
        mean /= static_cast<double>(lum.size());
        const PixelStats s = compute_pixel_stats(img);
        EXPECT_NEAR(s.min, lum.front(), 1e-12);
        EXPECT_NEAR(s.max, lum.back(), 1e-12);
        EXPECT_NEAR(s.median, lum[(lum.size() - 1) / 2], 1e-12);
        EXPECT_NEAR(s.mean, mean, 1e-12);
    }
}

TEST(Apg, EvenCountTakesLowerMiddle) {
    const PixelStats s = compute_pixel_stats(gray_image({0.9, 0.1, 0.4, 0.6}));
    EXPECT_NEAR(s.median, 0.4, 1e-12);
}

TEST(Apg, ClassBinsAndEdges) {
    auto cls = [](double m) {
        PixelStats s;
        s.median = m;
        return classify_image(s);
    };
    EXPECT_EQ(cls(0.0), ClassLabel::giant);
    EXPECT_EQ(cls(1.0 / 7.0), ClassLabel::giant);
    EXPECT_EQ(cls(1.0 / 7.0 + 1e-9), ClassLabel::extremely_close);
    EXPECT_EQ(cls(0.5), ClassLabel::not_in_distance);
    EXPECT_EQ(cls(6.0 / 7.0), ClassLabel::far);
    EXPECT_EQ(cls(1.0), ClassLabel::unseen);
    for (int b = 0; b < 7; ++b) EXPECT_EQ(cls((b + 0.5) / 7.0), static_cast<ClassLabel>(b));
    EXPECT_EQ(label_name(ClassLabel::a_little_remote), "a little remote");
}

TEST(Apg, PromptModes) {
    const Tokenizer tok(512);
    const RgbImage img = gray_image({0.2, 0.25, 0.3});
    const PromptBundle apg = build_prompt_bundle(img, "nyu", tok, PromptMode::apg);
    EXPECT_EQ(apg.dataset_text, "dataset nyu indoor monocular images");
    EXPECT_EQ(apg.pixel_text, "pixel statistics min 0.200 max 0.300 median 0.250");
    EXPECT_EQ(apg.class_text, "overall scene distance class extremely close");
    for (int id : apg.token_ids) EXPECT_NE(id, Tokenizer::kUnknownId);

    const PromptBundle fixed = build_prompt_bundle(img, "nyu", tok, PromptMode::fixed);
    EXPECT_EQ(fixed.pixel_text, "pixel statistics min unknown max unknown median unknown");
    EXPECT_EQ(fixed.class_text, "overall scene distance class unknown");
    EXPECT_EQ(fixed.task_text, apg.task_text);
    // fixed prompts do not depend on the image
    EXPECT_EQ(build_prompt_bundle(gray_image({0.9, 0.9, 0.9}), "nyu", tok, PromptMode::fixed).token_ids,
              fixed.token_ids);
    EXPECT_NE(build_prompt_bundle(gray_image({0.9, 0.9, 0.9}), "nyu", tok, PromptMode::apg).token_ids, apg.token_ids);

    const PromptBundle none = build_prompt_bundle(img, "nyu", tok, PromptMode::none);
    EXPECT_TRUE(none.token_ids.empty());
    EXPECT_TRUE(none.pixel_text.empty());

    EXPECT_EQ(parse_prompt_mode("fixed"), PromptMode::fixed);
    EXPECT_EQ(to_string(PromptMode::none), "none");
    EXPECT_THROW(parse_prompt_mode("auto"), ConfigError);
}

TEST(Apg, DigitsAreSingleTokens) {
    const Tokenizer tok(512);
    EXPECT_EQ(Tokenizer::split_words("Min 0.254, far!"),
              (std::vector<std::string>{"min", "0", "2", "5", "4", "far"}));
    const auto ids = tok.tokenize("0.25");
    ASSERT_EQ(ids.size(), 3u);
    EXPECT_EQ(ids[0], tok.id("0"));
    EXPECT_EQ(ids[1], tok.id("2"));
    EXPECT_EQ(tok.id("0"), 2);
    EXPECT_EQ(tok.id("9"), 11);
    EXPECT_EQ(tok.tokenize("zebra"), std::vector<int>{Tokenizer::kUnknownId});
    EXPECT_EQ(tokenize_prompts(tok, "far"), tok.tokenize("far"));
}

TEST(Apg, TokenizerVocabularyIsDeterministicAndBounded) {
    const Tokenizer a(512), b(512);
    EXPECT_EQ(a.word_count(), b.word_count());
    EXPECT_EQ(a.id("depth"), b.id("depth"));
    EXPECT_THROW(Tokenizer(10), ConfigError);
    EXPECT_NO_THROW(Tokenizer(static_cast<int>(a.word_count())));
}

TEST(Apg, TemplateFileLoading) {
    const fs::path dir = fs::temp_directory_path() / "lmde_test_apg";
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "pos.txt");
        os << "data {name}\n\ntask here\npix {min} {max} {median}\ncls {class}\n";
    }
    const PromptTemplates p = PromptTemplates::load(dir / "pos.txt");
    EXPECT_EQ(p.dataset, "data {name}");
    EXPECT_EQ(p.scene_class, "cls {class}");
    {
        std::ofstream os(dir / "keyed.txt");
        os << "class: \"class is {class}\"\ntask: do it\n";
    }
    const PromptTemplates k = PromptTemplates::load(dir / "keyed.txt");
    EXPECT_EQ(k.scene_class, "class is {class}");
    EXPECT_EQ(k.task, "do it");
    EXPECT_EQ(k.dataset, PromptTemplates{}.dataset);
    {
        std::ofstream os(dir / "many.txt");
        os << "a\nb\nc\nd\ne\n";
    }
    EXPECT_THROW(PromptTemplates::load(dir / "many.txt"), ConfigError);
    EXPECT_THROW(PromptTemplates::load(dir / "absent.txt"), IoError);

    const Tokenizer tok(512, p);
    const PromptBundle b = build_prompt_bundle(gray_image({0.5}), "nyu", tok, PromptMode::apg, p);
    EXPECT_EQ(b.dataset_text, "data nyu");
    EXPECT_EQ(b.class_text, "cls not in distance");
}
