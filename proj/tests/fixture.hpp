#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Synthetic matched-continuation fixture with a known amount of flattening
// planted in the model rows: jump spread scaled down, affect mass shifted
// toward neutral, style centroids shrunk toward their mean. Paired draws
// keep the planted effects tight across human/model rows.
struct FixtureSpec {
    std::size_t n_stories = 40;
    int sentences_per_continuation = 25;
    int theme_dim = 8;
    int style_dim = 16;
    double human_jump_sd = 0.2;
    double model_jump_scale = 0.5;  // model jump sd = human sd * this
    double human_neutral = 0.30;
    double neutral_shift = 0.20;    // model neutral share - human share
    double centroid_shrink = 0.5;   // model centroid deviation scale
    double style_within_sd = 0.02;
    std::vector<int> cuts = {60};
    std::vector<std::string> domains = {"professional"};
    std::string model_source = "RLVR";
    std::uint64_t seed = 1;
};

struct FixturePaths {
    std::string dir;
    std::string stories;
    std::string continuations;
    std::string affect;
    std::string theme_embeddings;
    std::string style_embeddings;
};

FixturePaths write_flattening_fixture(const std::string& dir, const FixtureSpec& spec);
