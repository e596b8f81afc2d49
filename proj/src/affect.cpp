#include "flatkit/affect.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "flatkit/error.hpp"
#include "flatkit/jsonl.hpp"

namespace flatkit {

const std::array<std::string, kAffectLabelCount>& affect_labels() {
    static const std::array<std::string, kAffectLabelCount> labels = {
        "admiration",  "amusement",   "anger",        "annoyance",
        "approval",    "caring",      "confusion",    "curiosity",
        "desire",      "disappointment", "disapproval", "disgust",
        "embarrassment", "excitement", "fear",         "gratitude",
        "grief",       "joy",         "love",         "nervousness",
        "optimism",    "pride",       "realization",  "relief",
        "remorse",     "sadness",     "surprise",     "neutral"};
    return labels;
}

std::size_t affect_label_index(const std::string& label) {
    const auto& labels = affect_labels();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) return i;
    }
    throw Error(ErrorCode::unknown_label, label);
}

namespace {

FamilyScheme build_scheme(FamilySchemeId id, std::string name,
                          std::vector<std::string> families,
                          const std::map<std::string, std::string>& overrides,
                          const std::string& default_family) {
    FamilyScheme scheme;
    scheme.id = id;
    scheme.name = std::move(name);
    scheme.families = std::move(families);
    auto family_index = [&](const std::string& f) {
        for (std::size_t i = 0; i < scheme.families.size(); ++i) {
            if (scheme.families[i] == f) return i;
        }
        throw Error(ErrorCode::unknown_label, "family " + f);
    };
    const auto& labels = affect_labels();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = overrides.find(labels[i]);
        scheme.label_to_family[i] =
            family_index(it != overrides.end() ? it->second : default_family);
    }
    return scheme;
}

} // namespace

const FamilyScheme& FamilyScheme::main4() {
    static const FamilyScheme scheme = build_scheme(
        FamilySchemeId::main4, "Main4",
        {"surprise_curiosity", "conflict", "neutral", "other"},
        {
            {"confusion", "surprise_curiosity"},
            {"curiosity", "surprise_curiosity"},
            {"realization", "surprise_curiosity"},
            {"surprise", "surprise_curiosity"},
            {"anger", "conflict"},
            {"annoyance", "conflict"},
            {"disapproval", "conflict"},
            {"disgust", "conflict"},
            {"neutral", "neutral"},
        },
        "other");
    return scheme;
}

const FamilyScheme& FamilyScheme::robust7() {
    static const FamilyScheme scheme = build_scheme(
        FamilySchemeId::robust7, "Robust7",
        {"surprise_curiosity", "conflict", "threat_anxiety", "neutral",
         "sadness_loss", "warmth_affiliation", "other"},
        {
            {"confusion", "surprise_curiosity"},
            {"curiosity", "surprise_curiosity"},
            {"realization", "surprise_curiosity"},
            {"surprise", "surprise_curiosity"},
            {"anger", "conflict"},
            {"annoyance", "conflict"},
            {"disapproval", "conflict"},
            {"disgust", "conflict"},
            {"fear", "threat_anxiety"},
            {"nervousness", "threat_anxiety"},
            {"neutral", "neutral"},
            {"sadness", "sadness_loss"},
            {"grief", "sadness_loss"},
            {"disappointment", "sadness_loss"},
            {"remorse", "sadness_loss"},
            {"admiration", "warmth_affiliation"},
            {"approval", "warmth_affiliation"},
            {"caring", "warmth_affiliation"},
            {"gratitude", "warmth_affiliation"},
            {"love", "warmth_affiliation"},
            {"joy", "warmth_affiliation"},
        },
        "other");
    return scheme;
}

const FamilyScheme& FamilyScheme::get(FamilySchemeId id) {
    return id == FamilySchemeId::main4 ? main4() : robust7();
}

std::size_t top1_label(const AffectVector& v) {
    std::size_t best = 0;
    double best_p = -1.0;
    bool any_positive = false;
    for (std::size_t i = 0; i < kAffectLabelCount; ++i) {
        double p = v.probs[i];
        if (p < 0.0) {
            throw Error(ErrorCode::parse_error,
                        "negative affect probability at index " + std::to_string(i));
        }
        if (p > 0.0) any_positive = true;
        if (p > best_p) {
            best_p = p;
            best = i;
        }
    }
    if (!any_positive) {
        throw Error(ErrorCode::parse_error, "affect vector is all zeros");
    }
    return best;
}

const std::string& family_of(std::size_t label_index, const FamilyScheme& scheme) {
    if (label_index >= kAffectLabelCount) {
        throw Error(ErrorCode::unknown_label,
                    "label index " + std::to_string(label_index));
    }
    return scheme.families[scheme.label_to_family[label_index]];
}

const std::string& family_of(const std::string& label, const FamilyScheme& scheme) {
    return family_of(affect_label_index(label), scheme);
}

double PrevalenceProfile::share(const std::string& family) const {
    auto it = family_shares.find(family);
    return it == family_shares.end() ? 0.0 : it->second;
}

double PrevalenceProfile::label_share(std::size_t label_index) const {
    if (!has_label_counts || n_sentences == 0) return 0.0;
    return static_cast<double>(label_counts[label_index]) /
           static_cast<double>(n_sentences);
}

PrevalenceProfile prevalence(const std::vector<AffectVector>& sentence_affects,
                             const FamilyScheme& scheme) {
    if (sentence_affects.empty()) {
        throw Error(ErrorCode::empty_continuation,
                    "prevalence needs at least one sentence");
    }
    PrevalenceProfile profile;
    profile.scheme = scheme.id;
    profile.n_sentences = sentence_affects.size();
    profile.has_label_counts = true;
    std::vector<std::size_t> family_counts(scheme.families.size(), 0);
    for (const auto& affect : sentence_affects) {
        std::size_t label = top1_label(affect);
        profile.label_counts[label]++;
        family_counts[scheme.label_to_family[label]]++;
    }
    for (std::size_t f = 0; f < scheme.families.size(); ++f) {
        profile.family_shares[scheme.families[f]] =
            static_cast<double>(family_counts[f]) /
            static_cast<double>(profile.n_sentences);
    }
    return profile;
}

const char* charge_variant_name(ChargeVariant v) {
    switch (v) {
    case ChargeVariant::main: return "main";
    case ChargeVariant::threat_inclusive: return "threat_inclusive";
    case ChargeVariant::expanded: return "expanded";
    }
    return "?";
}

double affective_charge(const PrevalenceProfile& profile, ChargeVariant variant) {
    double charge = profile.share("surprise_curiosity") + profile.share("conflict");
    if (variant == ChargeVariant::main) return charge;
    if (!profile.has_label_counts) {
        throw Error(ErrorCode::scheme_mismatch,
                    std::string(charge_variant_name(variant)) +
                        " charge needs label-level counts");
    }
    static const std::size_t fear = affect_label_index("fear");
    static const std::size_t nervousness = affect_label_index("nervousness");
    charge += profile.label_share(fear) + profile.label_share(nervousness);
    if (variant == ChargeVariant::threat_inclusive) return charge;
    for (const char* label : {"sadness", "grief", "disappointment", "remorse",
                              "excitement", "joy", "amusement", "desire"}) {
        charge += profile.label_share(affect_label_index(label));
    }
    return charge;
}

std::vector<AffectRow> load_affect_file(const std::string& path) {
    std::vector<AffectRow> rows;
    bool header_seen = false;
    for_each_jsonl(path, [&](std::size_t line_no, const nlohmann::json& obj) {
        if (!header_seen) {
            header_seen = true;
            std::vector<std::string> declared;
            try {
                declared = obj.at("affect_labels").get<std::vector<std::string>>();
            } catch (const nlohmann::json::exception&) {
                throw Error(ErrorCode::parse_error,
                            path + ":1: first line must be the affect_labels header");
            }
            const auto& canon = affect_labels();
            if (declared.size() != canon.size() ||
                !std::equal(declared.begin(), declared.end(), canon.begin())) {
                throw Error(ErrorCode::parse_error,
                            path + ":1: affect label order does not match the "
                                   "canonical inventory");
            }
            return;
        }
        AffectRow row;
        try {
            row.key.story_id = obj.at("story_id").get<std::string>();
            row.key.domain = obj.at("domain").get<std::string>();
            row.key.source = obj.at("source").get<std::string>();
            row.key.cut_percent = obj.at("cut").get<int>();
            row.key.sample_id = obj.at("sample_id").get<int>();
            row.sentence_index = obj.at("sentence_index").get<int>();
            auto probs = obj.at("probs").get<std::vector<double>>();
            if (probs.size() != kAffectLabelCount) {
                throw Error(ErrorCode::parse_error,
                            path + ":" + std::to_string(line_no) + ": expected " +
                                std::to_string(kAffectLabelCount) +
                                " probabilities, got " + std::to_string(probs.size()));
            }
            std::copy(probs.begin(), probs.end(), row.affect.probs.begin());
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse_error,
                        path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        rows.push_back(std::move(row));
    });
    if (!header_seen) {
        throw Error(ErrorCode::parse_error, path + ": missing affect_labels header");
    }
    return rows;
}

void save_affect_file(const std::string& path, const std::vector<AffectRow>& rows) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
    nlohmann::json header;
    header["affect_labels"] = affect_labels();
    out << header.dump() << "\n";
    for (const auto& row : rows) {
        nlohmann::json obj;
        obj["story_id"] = row.key.story_id;
        obj["domain"] = row.key.domain;
        obj["source"] = row.key.source;
        obj["cut"] = row.key.cut_percent;
        obj["sample_id"] = row.key.sample_id;
        obj["sentence_index"] = row.sentence_index;
        obj["probs"] = row.affect.probs;
        out << obj.dump() << "\n";
    }
}

} // namespace flatkit
