#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "flatkit/corpus.hpp"

namespace flatkit {

inline constexpr std::size_t kAffectLabelCount = 28;

// Canonical GoEmotions label order. File headers and probability vectors are
// validated against this exact sequence.
const std::array<std::string, kAffectLabelCount>& affect_labels();

// Index of a label name in the canonical order; throws UnknownLabel.
std::size_t affect_label_index(const std::string& label);

struct AffectVector {
    std::array<double, kAffectLabelCount> probs{};
};

enum class FamilySchemeId { main4, robust7 };

// A total mapping from the 28 labels to coarse affect families.
struct FamilyScheme {
    FamilySchemeId id;
    std::string name;
    std::vector<std::string> families;              // declared family order
    std::array<std::size_t, kAffectLabelCount> label_to_family{};

    static const FamilyScheme& main4();
    static const FamilyScheme& robust7();
    static const FamilyScheme& get(FamilySchemeId id);
};

// Argmax with ties broken toward the lowest canonical index. Requires all
// entries non-negative and at least one positive.
std::size_t top1_label(const AffectVector& v);

// Family of a label under a scheme; throws UnknownLabel for out-of-range
// indices or unrecognized names.
const std::string& family_of(std::size_t label_index, const FamilyScheme& scheme);
const std::string& family_of(const std::string& label, const FamilyScheme& scheme);

struct PrevalenceProfile {
    FamilySchemeId scheme;
    std::map<std::string, double> family_shares;    // sums to 1
    std::size_t n_sentences = 0;
    // Top-1 counts per label, kept so charge variants can sum label-level
    // shares without a third mapping scheme.
    std::array<std::size_t, kAffectLabelCount> label_counts{};
    bool has_label_counts = false;

    double share(const std::string& family) const;
    double label_share(std::size_t label_index) const;
};

// Per-family sentence shares of top-1 labels. Throws EmptyContinuation.
PrevalenceProfile prevalence(const std::vector<AffectVector>& sentence_affects,
                             const FamilyScheme& scheme);

enum class ChargeVariant { main, threat_inclusive, expanded };

const char* charge_variant_name(ChargeVariant v);

// Summed share of the variant's component labels:
//   main             = surprise_curiosity + conflict
//   threat_inclusive = main + fear + nervousness
//   expanded         = threat_inclusive + sadness/loss labels
//                      + excitement, joy, amusement, desire
// Variants beyond main need label-level counts; throws SchemeMismatch when
// the profile lacks them.
double affective_charge(const PrevalenceProfile& profile, ChargeVariant variant);

// One sentence row of the affect file.
struct AffectRow {
    ContinuationKey key;
    int sentence_index = 0;
    AffectVector affect;
};

// Loads the line-delimited affect file. The first line is a header object
// {"affect_labels": [...]} which must match the canonical order exactly.
std::vector<AffectRow> load_affect_file(const std::string& path);

void save_affect_file(const std::string& path, const std::vector<AffectRow>& rows);

} // namespace flatkit
