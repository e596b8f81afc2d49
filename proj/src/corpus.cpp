#include "flatkit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "flatkit/error.hpp"
#include "flatkit/jsonl.hpp"

namespace flatkit {

namespace {

bool is_ascii_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

// UTF-8 code point starting at i; advances len. Invalid bytes decode as
// themselves so the splitter never stalls on malformed input.
std::uint32_t decode_utf8(const std::string& s, std::size_t i, std::size_t& len) {
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    len = 1;
    if (b0 < 0x80) return b0;
    std::size_t n = 0;
    std::uint32_t cp = 0;
    if ((b0 & 0xe0) == 0xc0) { n = 1; cp = b0 & 0x1f; }
    else if ((b0 & 0xf0) == 0xe0) { n = 2; cp = b0 & 0x0f; }
    else if ((b0 & 0xf8) == 0xf0) { n = 3; cp = b0 & 0x07; }
    else return b0;
    for (std::size_t k = 1; k <= n; ++k) {
        if (i + k >= s.size()) return b0;
        unsigned char b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xc0) != 0x80) return b0;
        cp = (cp << 6) | (b & 0x3f);
    }
    len = n + 1;
    return cp;
}

bool is_closing_mark(std::uint32_t cp) {
    switch (cp) {
    case '"': case '\'': case ')': case ']': case '}':
    case 0x2019: // right single quote
    case 0x201d: // right double quote
    case 0x00bb: // right guillemet
        return true;
    default:
        return false;
    }
}

// Character classes that can open the next sentence.
bool starts_sentence(std::uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return true;
    switch (cp) {
    case '"': case '\'': case '(': case '[':
    case 0x2018: // left single quote
    case 0x201c: // left double quote
    case 0x00ab: // left guillemet
        return true;
    default:
        return false;
    }
}

std::string normalize_whitespace(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (char c : raw) {
        if (is_ascii_space(c)) {
            if (!out.empty()) pending_space = true;
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(c);
        }
    }
    return out;
}

} // namespace

std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> sentences;
    std::size_t start = 0;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        if (!is_terminal(text[i])) {
            ++i;
            continue;
        }
        // Skip closing quotes/brackets attached to the terminal mark.
        std::size_t j = i + 1;
        while (j < n) {
            std::size_t len = 0;
            std::uint32_t cp = decode_utf8(text, j, len);
            if (!is_closing_mark(cp)) break;
            j += len;
        }
        // Require whitespace, then a sentence-opening character.
        std::size_t k = j;
        while (k < n && is_ascii_space(text[k])) ++k;
        if (k == j || k >= n) {
            i = j;
            continue;
        }
        std::size_t len = 0;
        std::uint32_t cp = decode_utf8(text, k, len);
        if (!starts_sentence(cp)) {
            i = j;
            continue;
        }
        std::string sentence = normalize_whitespace(text.substr(start, j - start));
        if (!sentence.empty()) sentences.push_back(std::move(sentence));
        start = k;
        i = k;
    }
    std::string tail = normalize_whitespace(text.substr(start));
    if (!tail.empty()) sentences.push_back(std::move(tail));
    return sentences;
}

std::string join_sentences(const std::vector<std::string>& sentences) {
    std::string out;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out += sentences[i];
    }
    return out;
}

CutSpec::CutSpec(int percent) : percent_(percent) {
    if (percent <= 0 || percent >= 100) {
        throw Error(ErrorCode::parse_error,
                    "cut percent must lie strictly between 0 and 100, got " +
                        std::to_string(percent));
    }
}

const std::vector<int>& CutSpec::canonical_percents() {
    static const std::vector<int> p = {40, 60, 80, 90};
    return p;
}

std::string ContinuationKey::to_string() const {
    return "(" + story_id + ", " + domain + ", " + source + ", " +
           std::to_string(cut_percent) + ", " + std::to_string(sample_id) + ")";
}

CutResult make_cut(const StoryRecord& story, const CutSpec& cut) {
    const std::size_t total = story.sentences.size();
    if (total < 2) {
        throw Error(ErrorCode::story_too_short,
                    "story " + story.story_id + " has " + std::to_string(total) +
                        " sentence(s); need at least 2 to cut");
    }
    auto n = static_cast<std::size_t>(
        std::floor(cut.fraction() * static_cast<double>(total)));
    n = std::max<std::size_t>(1, std::min(n, total - 1));
    CutResult result;
    result.prefix.assign(story.sentences.begin(), story.sentences.begin() + n);
    result.continuation.assign(story.sentences.begin() + n, story.sentences.end());
    return result;
}

std::string ValidationReport::to_text() const {
    std::ostringstream os;
    os << "stories: " << n_stories << "\n";
    for (const auto& [domain, count] : stories_per_domain) {
        os << "  " << domain << ": " << count << "\n";
    }
    os << "continuations: " << n_continuations << "\n";
    for (const auto& [domain, by_source] : continuation_counts) {
        for (const auto& [source, by_cut] : by_source) {
            for (const auto& [cut, count] : by_cut) {
                os << "  " << domain << " / " << source << " / cut " << cut << ": "
                   << count << "\n";
            }
        }
    }
    if (!unknown_domains.empty()) {
        os << "unknown domains:";
        for (const auto& d : unknown_domains) os << " " << d;
        os << "\n";
    }
    return os.str();
}

const StoryRecord* Dataset::find_story(const std::string& domain,
                                       const std::string& story_id) const {
    auto it = story_index_.find({domain, story_id});
    if (it == story_index_.end()) return nullptr;
    return &stories_[it->second];
}

std::vector<std::string> Dataset::domains() const {
    std::set<std::string> s;
    for (const auto& c : continuations_) s.insert(c.key.domain);
    return {s.begin(), s.end()};
}

std::vector<std::string> Dataset::sources() const {
    std::set<std::string> s;
    for (const auto& c : continuations_) s.insert(c.key.source);
    return {s.begin(), s.end()};
}

std::vector<int> Dataset::cuts() const {
    std::set<int> s;
    for (const auto& c : continuations_) s.insert(c.key.cut_percent);
    return {s.begin(), s.end()};
}

Dataset load_dataset(const std::string& stories_path,
                     const std::string& continuations_path) {
    Dataset ds;
    std::set<std::string> unknown;

    for_each_jsonl(stories_path, [&](std::size_t line_no, const nlohmann::json& obj) {
        StoryRecord story;
        try {
            story.story_id = obj.at("story_id").get<std::string>();
            story.domain = obj.at("domain").get<std::string>();
            story.text = obj.at("text").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse_error,
                        stories_path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        story.sentences = split_sentences(story.text);
        auto key = std::make_pair(story.domain, story.story_id);
        if (ds.story_index_.count(key)) {
            throw Error(ErrorCode::duplicate_key,
                        "story (" + story.domain + ", " + story.story_id + ") at " +
                            stories_path + ":" + std::to_string(line_no));
        }
        const auto& canon = canonical_domains();
        if (std::find(canon.begin(), canon.end(), story.domain) == canon.end()) {
            unknown.insert(story.domain);
        }
        ds.story_index_[key] = ds.stories_.size();
        ds.report_.stories_per_domain[story.domain]++;
        ds.stories_.push_back(std::move(story));
    });
    ds.report_.n_stories = ds.stories_.size();

    if (!continuations_path.empty()) {
        std::set<ContinuationKey> seen;
        for_each_jsonl(continuations_path, [&](std::size_t line_no,
                                               const nlohmann::json& obj) {
            ContinuationRecord rec;
            try {
                rec.key.story_id = obj.at("story_id").get<std::string>();
                rec.key.domain = obj.at("domain").get<std::string>();
                rec.key.source = obj.at("source").get<std::string>();
                rec.key.cut_percent = obj.at("cut").get<int>();
                rec.key.sample_id = obj.at("sample_id").get<int>();
                rec.sentences = obj.at("sentences").get<std::vector<std::string>>();
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorCode::parse_error,
                            continuations_path + ":" + std::to_string(line_no) + ": " +
                                e.what());
            }
            const std::string at =
                continuations_path + ":" + std::to_string(line_no);
            const auto& cuts = CutSpec::canonical_percents();
            if (std::find(cuts.begin(), cuts.end(), rec.key.cut_percent) == cuts.end()) {
                throw Error(ErrorCode::parse_error,
                            at + ": cut must be one of 40|60|80|90, got " +
                                std::to_string(rec.key.cut_percent));
            }
            if (rec.key.source == kHumanSource && rec.key.sample_id != 0) {
                throw Error(ErrorCode::parse_error,
                            at + ": human rows must have sample_id=0, got " +
                                std::to_string(rec.key.sample_id));
            }
            if (!seen.insert(rec.key).second) {
                throw Error(ErrorCode::duplicate_key,
                            "continuation key " + rec.key.to_string() + " at " + at);
            }
            if (!ds.story_index_.count({rec.key.domain, rec.key.story_id})) {
                throw Error(ErrorCode::referential_error,
                            at + ": continuation references unknown story (" +
                                rec.key.domain + ", " + rec.key.story_id + ")");
            }
            const auto& canon = canonical_domains();
            if (std::find(canon.begin(), canon.end(), rec.key.domain) == canon.end()) {
                unknown.insert(rec.key.domain);
            }
            ds.report_.continuation_counts[rec.key.domain][rec.key.source]
                                          [rec.key.cut_percent]++;
            ds.continuations_.push_back(std::move(rec));
        });
    }
    ds.report_.n_continuations = ds.continuations_.size();
    ds.report_.unknown_domains.assign(unknown.begin(), unknown.end());
    return ds;
}

} // namespace flatkit
