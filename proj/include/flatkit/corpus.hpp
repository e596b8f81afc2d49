#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace flatkit {

// Canonical domain labels. Free-form labels are accepted everywhere and only
// flagged in the validation report when they fall outside this set.
inline const std::vector<std::string>& canonical_domains() {
    static const std::vector<std::string> d = {"professional", "prompt_guided",
                                               "public_platform"};
    return d;
}

struct StoryRecord {
    std::string story_id;
    std::string domain;
    std::string text;
    std::vector<std::string> sentences; // derived via split_sentences
};

// A prefix cut point, stored as an integer percent (40 means 40%).
class CutSpec {
public:
    explicit CutSpec(int percent);

    int percent() const { return percent_; }
    double fraction() const { return percent_ / 100.0; }

    auto operator<=>(const CutSpec&) const = default;

    static const std::vector<int>& canonical_percents(); // {40, 60, 80, 90}

private:
    int percent_;
};

inline const std::string kHumanSource = "Human";

struct ContinuationKey {
    std::string story_id;
    std::string domain;
    std::string source; // "Human" or a stage name (Base/SFT/DPO/RLVR/...)
    int cut_percent = 0;
    int sample_id = 0;

    auto operator<=>(const ContinuationKey&) const = default;
    std::string to_string() const;
};

struct ContinuationRecord {
    ContinuationKey key;
    std::vector<std::string> sentences;

    bool is_human() const { return key.source == kHumanSource; }
};

// Rule-based sentence splitter. A boundary is placed after terminal
// punctuation (., !, ?), optionally followed by closing quotes or brackets,
// when the next characters are whitespace and then an uppercase letter, a
// quotation mark, an opening parenthesis, or an opening bracket. The rule is
// applied verbatim, known abbreviation failure mode included ("Dr. Smith"
// splits). Whitespace inside each sentence collapses to single spaces.
std::vector<std::string> split_sentences(const std::string& text);

// Joins sentences with single spaces (the inverse of the splitter's
// whitespace normalization).
std::string join_sentences(const std::vector<std::string>& sentences);

struct CutResult {
    std::vector<std::string> prefix;
    std::vector<std::string> continuation;
};

// Prefix = first floor(c * T) sentences, clamped to [1, T-1]; the suffix is
// never empty. Throws StoryTooShort when the story has fewer than 2 sentences.
CutResult make_cut(const StoryRecord& story, const CutSpec& cut);

struct ValidationReport {
    std::size_t n_stories = 0;
    std::size_t n_continuations = 0;
    std::map<std::string, std::size_t> stories_per_domain;
    // (domain, source, cut) -> count
    std::map<std::string, std::map<std::string, std::map<int, std::size_t>>> continuation_counts;
    std::vector<std::string> unknown_domains;

    std::string to_text() const;
};

class Dataset {
public:
    const std::vector<StoryRecord>& stories() const { return stories_; }
    const std::vector<ContinuationRecord>& continuations() const { return continuations_; }
    const ValidationReport& report() const { return report_; }

    const StoryRecord* find_story(const std::string& domain, const std::string& story_id) const;

    // Sorted unique labels present in the continuations.
    std::vector<std::string> domains() const;
    std::vector<std::string> sources() const;
    std::vector<int> cuts() const;

    friend Dataset load_dataset(const std::string& stories_path,
                                const std::string& continuations_path);

private:
    std::vector<StoryRecord> stories_;
    std::vector<ContinuationRecord> continuations_;
    std::map<std::pair<std::string, std::string>, std::size_t> story_index_;
    ValidationReport report_;
};

// Loads and cross-validates the line-delimited stories and continuations
// files. An empty continuations_path loads stories only. Throws ParseError,
// ReferentialError or DuplicateKeyError; anything loaded is discarded.
Dataset load_dataset(const std::string& stories_path,
                     const std::string& continuations_path);

} // namespace flatkit
