#include "lmde/apg.hpp"

#include "lmde/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

namespace lmde {

PixelStats compute_pixel_stats(const RgbImage& image) {
    std::vector<double> lum = luminance(image);
    if (lum.empty()) throw ShapeError("compute_pixel_stats: empty image");
    PixelStats s;
    double total = 0.0;
    for (double v : lum) total += v;
    s.mean = total / static_cast<double>(lum.size());
    const auto mid = lum.begin() + static_cast<long>((lum.size() - 1) / 2);
    std::nth_element(lum.begin(), mid, lum.end());
    s.median = *mid;
    const auto [lo, hi] = std::minmax_element(lum.begin(), lum.end());
    s.min = *lo;
    s.max = *hi;
    return s;
}

std::string_view label_name(ClassLabel label) { return kClassLabelNames[static_cast<std::size_t>(label)]; }

ClassLabel classify_image(const PixelStats& stats) {
    for (int bin = 0; bin < 6; ++bin) {
        if (stats.median <= static_cast<double>(bin + 1) / 7.0) return static_cast<ClassLabel>(bin);
    }
    return ClassLabel::unseen;
}

std::string_view to_string(PromptMode mode) {
    switch (mode) {
        case PromptMode::apg: return "apg";
        case PromptMode::fixed: return "fixed";
        case PromptMode::none: return "none";
    }
    return "apg";
}

PromptMode parse_prompt_mode(std::string_view name) {
    if (name == "apg") return PromptMode::apg;
    if (name == "fixed") return PromptMode::fixed;
    if (name == "none") return PromptMode::none;
    throw ConfigError("unknown prompt mode '" + std::string(name) + "'");
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open prompt template file: " + path.string());
    PromptTemplates t;
    std::string* positional[] = {&t.dataset, &t.task, &t.pixel, &t.scene_class};
    const std::pair<const char*, std::string*> keyed[] = {
        {"dataset:", &t.dataset}, {"task:", &t.task}, {"pixel:", &t.pixel}, {"class:", &t.scene_class}};
    std::size_t next = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        bool matched = false;
        for (const auto& [key, slot] : keyed) {
            if (line.rfind(key, 0) == 0) {
                std::string body = line.substr(std::char_traits<char>::length(key));
                body.erase(0, body.find_first_not_of(" \t"));
                if (body.size() >= 2 && body.front() == '"' && body.back() == '"') body = body.substr(1, body.size() - 2);
                *slot = body;
                matched = true;
            }
        }
        if (matched) continue;
        if (next >= 4) throw ConfigError("prompt template file has more than four templates");
        *positional[next++] = line;
    }
    return t;
}

std::vector<std::string> Tokenizer::split_words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isdigit(c)) {
            flush();
            out.emplace_back(1, ch);
        } else if (std::isalpha(c) || c >= 0x80) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

namespace {

std::string strip_placeholders(std::string t) {
    for (std::size_t b = t.find('{'); b != std::string::npos; b = t.find('{')) {
        const std::size_t e = t.find('}', b);
        if (e == std::string::npos) break;
        t.replace(b, e - b + 1, " ");
    }
    return t;
}

std::string fill(std::string t, const std::string& key, const std::string& value) {
    const std::string ph = "{" + key + "}";
    for (std::size_t at = t.find(ph); at != std::string::npos; at = t.find(ph, at + value.size())) {
        t.replace(at, ph.size(), value);
    }
    return t;
}

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

}  // namespace

Tokenizer::Tokenizer(int vocab_size, const PromptTemplates& templates, const std::vector<std::string>& extra_words)
    : vocab_size_(vocab_size) {
    add_word("[pad]");
    add_word("[unk]");
    for (char d = '0'; d <= '9'; ++d) add_word(std::string(1, d));
    add_word("unknown");
    for (const auto* t : {&templates.dataset, &templates.task, &templates.pixel, &templates.scene_class}) {
        for (auto& w : split_words(strip_placeholders(*t))) add_word(w);
    }
    for (auto name : kClassLabelNames) {
        for (auto& w : split_words(name)) add_word(w);
    }
    for (const auto& extra : extra_words) {
        for (auto& w : split_words(extra)) add_word(w);
    }
    if (static_cast<int>(words_.size()) > vocab_size_) {
        throw ConfigError("tokenizer needs " + std::to_string(words_.size()) + " ids but the vocabulary holds " +
                          std::to_string(vocab_size_));
    }
}

void Tokenizer::add_word(const std::string& w) {
    if (ids_.count(w)) return;
    ids_.emplace(w, static_cast<int>(words_.size()));
    words_.push_back(w);
}

int Tokenizer::id(const std::string& word) const {
    auto it = ids_.find(word);
    return it == ids_.end() ? kUnknownId : it->second;
}

std::vector<int> Tokenizer::tokenize(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& w : split_words(text)) ids.push_back(id(w));
    return ids;
}

std::vector<int> tokenize_prompts(const Tokenizer& tokenizer, std::string_view text) {
    return tokenizer.tokenize(text);
}

PromptBundle build_prompt_bundle(const RgbImage& image, const std::string& dataset_name, const Tokenizer& tokenizer,
                                 PromptMode mode, const PromptTemplates& templates) {
    PromptBundle b;
    if (mode == PromptMode::none) return b;
    std::string mn = "unknown", mx = "unknown", md = "unknown", cls = "unknown";
    if (mode == PromptMode::apg) {
        const PixelStats s = compute_pixel_stats(image);
        mn = fmt3(s.min);
        mx = fmt3(s.max);
        md = fmt3(s.median);
        cls = std::string(label_name(classify_image(s)));
    }
    b.dataset_text = fill(templates.dataset, "name", dataset_name);
    b.task_text = templates.task;
    b.pixel_text = fill(fill(fill(templates.pixel, "min", mn), "max", mx), "median", md);
    b.class_text = fill(templates.scene_class, "class", cls);
    b.token_ids = tokenizer.tokenize(b.dataset_text + " " + b.task_text + " " + b.pixel_text + " " + b.class_text);
    return b;
}

}  // namespace lmde
