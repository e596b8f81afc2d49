#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "flatkit/affect.hpp"
#include "flatkit/error.hpp"
#include "flatkit/rng.hpp"

using namespace flatkit;

namespace {

AffectVector one_hot(const std::string& label, double p = 1.0) {
    AffectVector v;
    v.probs[affect_label_index(label)] = p;
    return v;
}

} // namespace

TEST_CASE("top1_label picks the argmax") {
    CHECK(top1_label(one_hot("curiosity")) == affect_label_index("curiosity"));
    AffectVector close;
    close.probs[affect_label_index("neutral")] = 0.51;
    close.probs[affect_label_index("sadness")] = 0.49;
    CHECK(top1_label(close) == affect_label_index("neutral"));
}

TEST_CASE("top1_label breaks ties toward the lowest canonical index") {
    AffectVector uniform;
    for (auto& p : uniform.probs) p = 1.0 / 28.0;
    CHECK(top1_label(uniform) == 0);
    CHECK(affect_labels()[0] == "admiration");
}

TEST_CASE("top1_label rejects invalid vectors") {
    AffectVector zeros;
    CHECK_THROWS_AS(top1_label(zeros), Error);
    AffectVector negative;
    negative.probs[0] = -0.1;
    negative.probs[1] = 0.2;
    CHECK_THROWS_AS(top1_label(negative), Error);
}

TEST_CASE("family_of follows the main mapping table") {
    const auto& main4 = FamilyScheme::main4();
    CHECK(family_of("curiosity", main4) == "surprise_curiosity");
    CHECK(family_of("confusion", main4) == "surprise_curiosity");
    CHECK(family_of("realization", main4) == "surprise_curiosity");
    CHECK(family_of("surprise", main4) == "surprise_curiosity");
    CHECK(family_of("anger", main4) == "conflict");
    CHECK(family_of("annoyance", main4) == "conflict");
    CHECK(family_of("disapproval", main4) == "conflict");
    CHECK(family_of("disgust", main4) == "conflict");
    CHECK(family_of("neutral", main4) == "neutral");
    CHECK(family_of("fear", main4) == "other");
    CHECK(family_of("sadness", main4) == "other");
}

TEST_CASE("family_of follows the robustness mapping table") {
    const auto& robust7 = FamilyScheme::robust7();
    CHECK(family_of("fear", robust7) == "threat_anxiety");
    CHECK(family_of("nervousness", robust7) == "threat_anxiety");
    CHECK(family_of("neutral", robust7) == "neutral");
    CHECK(family_of("sadness", robust7) == "sadness_loss");
    CHECK(family_of("grief", robust7) == "sadness_loss");
    CHECK(family_of("disappointment", robust7) == "sadness_loss");
    CHECK(family_of("remorse", robust7) == "sadness_loss");
    for (const char* l : {"admiration", "approval", "caring", "gratitude", "love", "joy"}) {
        CHECK(family_of(l, robust7) == "warmth_affiliation");
    }
    for (const char* l : {"amusement", "desire", "embarrassment", "excitement",
                          "optimism", "pride", "relief"}) {
        CHECK(family_of(l, robust7) == "other");
    }
}

TEST_CASE("family mapping is total and covers every family") {
    for (const auto* scheme : {&FamilyScheme::main4(), &FamilyScheme::robust7()}) {
        std::map<std::string, int> seen;
        for (std::size_t i = 0; i < kAffectLabelCount; ++i) {
            seen[family_of(i, *scheme)]++;
        }
        for (const auto& family : scheme->families) {
            CHECK(seen[family] > 0);
        }
    }
    CHECK_THROWS_AS(family_of(28, FamilyScheme::main4()), Error);
    CHECK_THROWS_AS(family_of("not_a_label", FamilyScheme::main4()), Error);
}

TEST_CASE("prevalence splits evenly across four families") {
    std::vector<AffectVector> sentences = {one_hot("curiosity"), one_hot("neutral"),
                                           one_hot("anger"), one_hot("joy")};
    auto profile = prevalence(sentences, FamilyScheme::main4());
    CHECK(profile.share("surprise_curiosity") == doctest::Approx(0.25));
    CHECK(profile.share("conflict") == doctest::Approx(0.25));
    CHECK(profile.share("neutral") == doctest::Approx(0.25));
    CHECK(profile.share("other") == doctest::Approx(0.25));
    CHECK(profile.n_sentences == 4);
}

TEST_CASE("prevalence of an all-neutral continuation") {
    std::vector<AffectVector> sentences(3, one_hot("neutral"));
    auto profile = prevalence(sentences, FamilyScheme::main4());
    CHECK(profile.share("neutral") == 1.0);
    CHECK(profile.share("conflict") == 0.0);
}

TEST_CASE("prevalence maps kindred labels into one family") {
    std::vector<AffectVector> sentences = {one_hot("surprise"), one_hot("realization"),
                                           one_hot("confusion")};
    auto profile = prevalence(sentences, FamilyScheme::main4());
    CHECK(profile.share("surprise_curiosity") == 1.0);
}

TEST_CASE("prevalence rejects empty continuations") {
    CHECK_THROWS_AS(prevalence({}, FamilyScheme::main4()), Error);
}

TEST_CASE("affective charge sums the focal families") {
    // 100 sentences: 21 surprise-curiosity, 20 conflict
    std::vector<AffectVector> sentences;
    for (int i = 0; i < 21; ++i) sentences.push_back(one_hot("curiosity"));
    for (int i = 0; i < 20; ++i) sentences.push_back(one_hot("anger"));
    for (int i = 0; i < 59; ++i) sentences.push_back(one_hot("neutral"));
    auto profile = prevalence(sentences, FamilyScheme::main4());
    CHECK(affective_charge(profile, ChargeVariant::main) == doctest::Approx(0.41));
}

TEST_CASE("all-neutral continuation has zero charge under every variant") {
    auto profile = prevalence({one_hot("neutral"), one_hot("neutral")},
                              FamilyScheme::main4());
    CHECK(affective_charge(profile, ChargeVariant::main) == 0.0);
    CHECK(affective_charge(profile, ChargeVariant::threat_inclusive) == 0.0);
    CHECK(affective_charge(profile, ChargeVariant::expanded) == 0.0);
}

TEST_CASE("threat-inclusive charge adds fear and nervousness") {
    auto profile = prevalence({one_hot("fear"), one_hot("anger")},
                              FamilyScheme::main4());
    CHECK(affective_charge(profile, ChargeVariant::main) == doctest::Approx(0.5));
    CHECK(affective_charge(profile, ChargeVariant::threat_inclusive) ==
          doctest::Approx(1.0));
}

TEST_CASE("expanded charge includes sadness-loss and high-arousal positives") {
    auto profile = prevalence({one_hot("sadness"), one_hot("excitement"),
                               one_hot("desire"), one_hot("neutral")},
                              FamilyScheme::main4());
    CHECK(affective_charge(profile, ChargeVariant::main) == doctest::Approx(0.0));
    CHECK(affective_charge(profile, ChargeVariant::threat_inclusive) ==
          doctest::Approx(0.0));
    CHECK(affective_charge(profile, ChargeVariant::expanded) == doctest::Approx(0.75));
    // optimism stays out of the expanded variant
    auto opt = prevalence({one_hot("optimism")}, FamilyScheme::main4());
    CHECK(affective_charge(opt, ChargeVariant::expanded) == 0.0);
}

TEST_CASE("charge without label counts raises SchemeMismatch") {
    PrevalenceProfile profile;
    profile.scheme = FamilySchemeId::main4;
    profile.family_shares = {{"surprise_curiosity", 0.5}, {"conflict", 0.5}};
    profile.n_sentences = 2;
    profile.has_label_counts = false;
    CHECK(affective_charge(profile, ChargeVariant::main) == doctest::Approx(1.0));
    CHECK_THROWS_AS(affective_charge(profile, ChargeVariant::threat_inclusive), Error);
}

TEST_CASE("partition and monotonicity properties over random continuations") {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 1 + rng.below(30);
        std::vector<AffectVector> sentences;
        for (std::size_t i = 0; i < n; ++i) {
            AffectVector v;
            for (auto& p : v.probs) p = rng.uniform01();
            sentences.push_back(v);
        }
        for (const auto* scheme : {&FamilyScheme::main4(), &FamilyScheme::robust7()}) {
            auto profile = prevalence(sentences, *scheme);
            double total = 0.0;
            for (const auto& [family, share] : profile.family_shares) {
                total += share;
                // each share is k / n for integer k
                double scaled = share * static_cast<double>(n);
                CHECK(std::abs(scaled - std::round(scaled)) < 1e-9);
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        }
        auto profile = prevalence(sentences, FamilyScheme::main4());
        double main = affective_charge(profile, ChargeVariant::main);
        double threat = affective_charge(profile, ChargeVariant::threat_inclusive);
        double expanded = affective_charge(profile, ChargeVariant::expanded);
        CHECK(main <= threat + 1e-12);
        CHECK(threat <= expanded + 1e-12);
        CHECK(expanded <= 1.0 + 1e-12);

        // scaling every vector by the same constant changes nothing
        std::vector<AffectVector> scaled = sentences;
        for (auto& v : scaled) {
            for (auto& p : v.probs) p *= 3.7;
        }
        auto scaled_profile = prevalence(scaled, FamilyScheme::main4());
        for (const auto& [family, share] : profile.family_shares) {
            CHECK(scaled_profile.share(family) == share);
        }
    }
}

TEST_CASE("affect file round-trip with header validation") {
    auto dir = std::filesystem::temp_directory_path() / "flatkit_affect_tests";
    std::filesystem::create_directories(dir);
    auto path = (dir / "affect.jsonl").string();

    std::vector<AffectRow> rows(2);
    rows[0].key = {"s1", "professional", "Human", 40, 0};
    rows[0].sentence_index = 0;
    rows[0].affect = one_hot("joy", 0.9);
    rows[1].key = {"s1", "professional", "Human", 40, 0};
    rows[1].sentence_index = 1;
    rows[1].affect = one_hot("fear", 0.8);
    save_affect_file(path, rows);

    auto loaded = load_affect_file(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].key == rows[0].key);
    CHECK(loaded[1].affect.probs[affect_label_index("fear")] == doctest::Approx(0.8));

    // A shuffled header must be rejected.
    auto bad_path = (dir / "affect_bad.jsonl").string();
    {
        std::ofstream out(bad_path);
        out << R"({"affect_labels":["neutral","admiration"]})" << "\n";
    }
    CHECK_THROWS_AS(load_affect_file(bad_path), Error);
}
