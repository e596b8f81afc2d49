#include "fixture.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "flatkit/affect.hpp"
#include "flatkit/embedding.hpp"
#include "flatkit/error.hpp"
#include "flatkit/rng.hpp"

namespace {

using namespace flatkit;

std::string story_id_of(const std::string& domain, std::size_t index) {
    return domain.substr(0, 3) + "-" + std::to_string(1000 + index);
}

std::size_t marked_label(double v) {
    // A fixed palette of non-neutral labels covering several families.
    if (v < 0.30) return affect_label_index("curiosity");
    if (v < 0.55) return affect_label_index("anger");
    if (v < 0.75) return affect_label_index("sadness");
    if (v < 0.90) return affect_label_index("joy");
    return affect_label_index("fear");
}

} // namespace

FixturePaths write_flattening_fixture(const std::string& dir, const FixtureSpec& spec) {
    std::filesystem::create_directories(dir);
    FixturePaths paths;
    paths.dir = dir;
    paths.stories = dir + "/stories.jsonl";
    paths.continuations = dir + "/continuations.jsonl";
    paths.affect = dir + "/affect.jsonl";
    paths.theme_embeddings = dir + "/theme_embeddings.jsonl";
    paths.style_embeddings = dir + "/style_embeddings.jsonl";

    std::ofstream stories(paths.stories);
    std::ofstream continuations(paths.continuations);
    if (!stories || !continuations) {
        throw Error(ErrorCode::io_error, "cannot write fixture under " + dir);
    }
    std::vector<AffectRow> affect_rows;
    std::vector<EmbeddingRow> theme_rows;
    std::vector<EmbeddingRow> style_rows;

    const int n_sent = spec.sentences_per_continuation;
    for (std::size_t d = 0; d < spec.domains.size(); ++d) {
        const std::string& domain = spec.domains[d];
        for (std::size_t s = 0; s < spec.n_stories; ++s) {
            std::string story_id = story_id_of(domain, s);
            std::string text;
            for (int k = 0; k < 10; ++k) {
                if (k > 0) text += " ";
                text += "Story sentence number " + std::to_string(k + 1) + ".";
            }
            nlohmann::json story;
            story["story_id"] = story_id;
            story["domain"] = domain;
            story["text"] = text;
            stories << story.dump() << "\n";

            Rng rng(mix_seed(spec.seed, (d << 40) | s));
            // Style base: one deviation per story, model gets it shrunk.
            std::vector<double> style_base(spec.style_dim);
            for (auto& v : style_base) v = rng.normal();

            for (int cut : spec.cuts) {
                for (int which = 0; which < 2; ++which) {
                    const bool human = which == 0;
                    ContinuationKey key;
                    key.story_id = story_id;
                    key.domain = domain;
                    key.source = human ? std::string(kHumanSource) : spec.model_source;
                    key.cut_percent = cut;
                    key.sample_id = 0;

                    std::vector<std::string> sentences;
                    for (int k = 0; k < n_sent; ++k) {
                        sentences.push_back((human ? "Human" : "Model") +
                                            std::string(" continuation sentence ") +
                                            std::to_string(k + 1) + ".");
                    }
                    nlohmann::json cont;
                    cont["story_id"] = story_id;
                    cont["domain"] = domain;
                    cont["source"] = key.source;
                    cont["cut"] = cut;
                    cont["sample_id"] = 0;
                    cont["sentences"] = sentences;
                    continuations << cont.dump() << "\n";

                    // Shared draws per (story, cut): human and model rows are
                    // paired so the planted contrasts stay tight.
                    Rng pair_rng(mix_seed(spec.seed,
                                          0x70000000ULL + ((d * 131 + s) << 8) +
                                              static_cast<std::uint64_t>(cut)));
                    std::vector<double> theme_pos(spec.theme_dim, 0.0);
                    theme_pos[0] = 1.0;
                    for (int k = 0; k < n_sent; ++k) {
                        if (k > 0) {
                            double g = pair_rng.normal();
                            double sd = human ? spec.human_jump_sd
                                              : spec.human_jump_sd * spec.model_jump_scale;
                            double step = 1.0 + sd * g;
                            int axis = 1 + ((k - 1) % (spec.theme_dim - 1));
                            theme_pos[static_cast<std::size_t>(axis)] += step;
                        }
                        theme_rows.push_back({key, k, theme_pos});

                        double u = pair_rng.uniform01();
                        double p_neutral = human ? spec.human_neutral
                                                 : spec.human_neutral + spec.neutral_shift;
                        std::size_t label;
                        if (u < p_neutral) {
                            label = affect_label_index("neutral");
                        } else {
                            label = marked_label((u - p_neutral) / (1.0 - p_neutral));
                        }
                        AffectRow row;
                        row.key = key;
                        row.sentence_index = k;
                        for (auto& p : row.affect.probs) p = 0.1 / 27.0;
                        row.affect.probs[label] = 0.9;
                        affect_rows.push_back(std::move(row));

                        std::vector<double> style(spec.style_dim);
                        double scale = human ? 1.0 : spec.centroid_shrink;
                        for (int j = 0; j < spec.style_dim; ++j) {
                            style[static_cast<std::size_t>(j)] =
                                scale * style_base[static_cast<std::size_t>(j)] +
                                spec.style_within_sd * pair_rng.normal();
                        }
                        style_rows.push_back({key, k, std::move(style)});
                    }
                }
            }
        }
    }
    save_affect_file(paths.affect, affect_rows);
    save_embedding_file(paths.theme_embeddings, Facet::theme, spec.theme_dim, theme_rows);
    save_embedding_file(paths.style_embeddings, Facet::style, spec.style_dim, style_rows);
    return paths;
}
