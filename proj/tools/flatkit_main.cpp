// Command-line front end: validate/segment corpora, drive generation and
// embedding through an OpenAI-compatible endpoint, and run the analysis.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flatkit/affect.hpp"
#include "flatkit/corpus.hpp"
#include "flatkit/embedding.hpp"
#include "flatkit/error.hpp"
#include "flatkit/genclient.hpp"
#include "flatkit/pipeline.hpp"
#include "flatkit/table.hpp"

namespace {

using namespace flatkit;

std::vector<int> parse_cuts(const std::string& spec) {
    std::vector<int> cuts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) cuts.push_back(std::stoi(item));
    }
    if (cuts.empty()) cuts = CutSpec::canonical_percents();
    return cuts;
}

int cmd_validate(const std::string& stories, const std::string& continuations) {
    Dataset ds = load_dataset(stories, continuations);
    std::cout << ds.report().to_text();
    nlohmann::json counts;
    counts["stories"] = ds.report().n_stories;
    counts["continuations"] = ds.report().n_continuations;
    counts["unknown_domains"] = ds.report().unknown_domains;
    std::cout << counts.dump() << "\n";
    return 0;
}

int cmd_segment(const std::string& stories, const std::string& cuts_spec,
                const std::string& out_path) {
    Dataset ds = load_dataset(stories, "");
    std::ofstream out(out_path);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + out_path);
    std::size_t written = 0, skipped = 0;
    for (int cut_pct : parse_cuts(cuts_spec)) {
        CutSpec cut(cut_pct);
        for (const auto& story : ds.stories()) {
            CutResult split;
            try {
                split = make_cut(story, cut);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::story_too_short) {
                    ++skipped;
                    continue;
                }
                throw;
            }
            nlohmann::json row;
            row["story_id"] = story.story_id;
            row["domain"] = story.domain;
            row["source"] = kHumanSource;
            row["cut"] = cut_pct;
            row["sample_id"] = 0;
            row["sentences"] = split.continuation;
            out << row.dump() << "\n";
            ++written;
        }
    }
    std::cerr << "wrote " << written << " human continuation rows";
    if (skipped > 0) std::cerr << " (" << skipped << " too-short story/cut pairs skipped)";
    std::cerr << "\n";
    return 0;
}

int cmd_generate(const std::string& stories, const std::string& cuts_spec,
                 const std::string& source, const std::string& interface_name,
                 int samples, const EndpointConfig& endpoint,
                 const std::string& out_path, const std::string& meta_path) {
    Dataset ds = load_dataset(stories, "");
    PromptInterface interface = prompt_interface_from_name(interface_name);
    std::ofstream out(out_path);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + out_path);
    std::ofstream meta(meta_path);
    if (!meta) throw Error(ErrorCode::io_error, "cannot write " + meta_path);
    DecodingConfig decoding;
    for (int cut_pct : parse_cuts(cuts_spec)) {
        CutSpec cut(cut_pct);
        for (const auto& story : ds.stories()) {
            CutResult split;
            try {
                split = make_cut(story, cut);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::story_too_short) continue;
                throw;
            }
            // Target length = word count of the held-out human suffix.
            int target_words = 0;
            for (const auto& s : split.continuation) {
                std::stringstream ws(s);
                std::string w;
                while (ws >> w) ++target_words;
            }
            RequestPayload payload = build_prompt(split.prefix, target_words, interface);
            for (int sample = 0; sample < samples; ++sample) {
                GenerationResult gen = fetch_continuation(endpoint, payload, decoding);
                nlohmann::json row;
                row["story_id"] = story.story_id;
                row["domain"] = story.domain;
                row["source"] = source;
                row["cut"] = cut_pct;
                row["sample_id"] = sample;
                row["sentences"] = split_sentences(gen.text);
                out << row.dump() << "\n";
                nlohmann::json m;
                m["story_id"] = story.story_id;
                m["domain"] = story.domain;
                m["source"] = source;
                m["cut"] = cut_pct;
                m["sample_id"] = sample;
                m["response_id"] = gen.response_id;
                m["finish_reason"] = gen.finish_reason;
                m["truncated"] = gen.truncated;
                m["retries"] = gen.retries;
                m["prompt_tokens"] = gen.prompt_tokens;
                m["completion_tokens"] = gen.completion_tokens;
                m["raw_text"] = gen.text;
                meta << m.dump() << "\n";
            }
        }
    }
    return 0;
}

int cmd_embed(const std::string& continuations, const std::string& facet_name_arg,
              const EndpointConfig& endpoint, int dim, int batch_size,
              const std::string& out_path) {
    // Continuations do not need a stories file here; parse rows directly.
    Facet facet = facet_from_name(facet_name_arg);
    EmbeddingFacet client_facet =
        facet == Facet::theme ? EmbeddingFacet::theme : EmbeddingFacet::style;
    if (dim == 0) dim = canonical_dim(facet);

    std::ifstream in(continuations);
    if (!in) throw Error(ErrorCode::io_error, "cannot open " + continuations);
    std::vector<EmbeddingRow> rows;
    std::vector<std::string> batch;
    std::vector<std::pair<ContinuationKey, int>> batch_keys;
    auto flush = [&]() {
        if (batch.empty()) return;
        auto vectors = fetch_embeddings(endpoint, batch, client_facet, dim);
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            rows.push_back({batch_keys[i].first, batch_keys[i].second,
                            std::move(vectors[i])});
        }
        batch.clear();
        batch_keys.clear();
    };
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
            ContinuationKey key;
            key.story_id = obj.at("story_id").get<std::string>();
            key.domain = obj.at("domain").get<std::string>();
            key.source = obj.at("source").get<std::string>();
            key.cut_percent = obj.at("cut").get<int>();
            key.sample_id = obj.at("sample_id").get<int>();
            auto sentences = obj.at("sentences").get<std::vector<std::string>>();
            for (std::size_t s = 0; s < sentences.size(); ++s) {
                batch.push_back(sentences[s]);
                batch_keys.emplace_back(key, static_cast<int>(s));
                if (static_cast<int>(batch.size()) >= batch_size) flush();
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse_error,
                        continuations + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    flush();
    save_embedding_file(out_path, facet, dim, rows);
    std::cerr << "wrote " << rows.size() << " sentence vectors\n";
    return 0;
}

int cmd_analyze(const std::string& config_path, std::optional<std::uint64_t> seed,
                const std::optional<std::string>& out_dir) {
    RunConfig config = load_run_config(config_path);
    apply_config_overrides(config, seed, out_dir);
    RunResult result = run(config);
    for (const auto& path : result.written_files) {
        std::cout << path << "\n";
    }
    return 0;
}

int cmd_report(const std::string& results_path, const std::string& out_dir) {
    auto tables = load_tables_json(results_path);
    for (const auto& path : emit_tables(tables, out_dir)) {
        std::cout << path << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"narrative-flattening corpus analysis toolkit"};
    app.require_subcommand(1);

    std::string stories, continuations, cuts = "40,60,80,90", out_path, meta_path;
    std::string config_path, facet = "theme", source = "Model", interface_name = "chat";
    std::string results_path, out_dir_str;
    int samples = 5, dim = 0, batch_size = 64;
    std::uint64_t seed_value = 0;
    bool seed_given = false;
    EndpointConfig endpoint;

    auto* validate = app.add_subcommand("validate", "load and cross-check input files");
    validate->add_option("--stories", stories)->required();
    validate->add_option("--continuations", continuations);

    auto* segment = app.add_subcommand(
        "segment", "emit matched human continuations at the given cut points");
    segment->add_option("--stories", stories)->required();
    segment->add_option("--cuts", cuts, "comma-separated percents");
    segment->add_option("--out", out_path)->required();

    auto* generate = app.add_subcommand(
        "generate", "sample continuations through an OpenAI-compatible endpoint");
    generate->add_option("--stories", stories)->required();
    generate->add_option("--cuts", cuts);
    generate->add_option("--source", source, "stage label for the output rows");
    generate->add_option("--interface", interface_name,
                         "raw_prefix | chat | prompt_control");
    generate->add_option("--samples", samples);
    generate->add_option("--endpoint", endpoint.base_url)->required();
    generate->add_option("--model", endpoint.completion_model)->required();
    generate->add_option("--auth-env", endpoint.auth_env_var,
                         "environment variable holding the bearer token");
    generate->add_option("--retries", endpoint.max_retries);
    generate->add_option("--out", out_path)->required();
    generate->add_option("--meta", meta_path, "response metadata sidecar")->required();

    auto* embed = app.add_subcommand("embed", "fetch sentence embeddings");
    embed->add_option("--continuations", continuations)->required();
    embed->add_option("--facet", facet, "theme | style");
    embed->add_option("--endpoint", endpoint.base_url)->required();
    embed->add_option("--model", endpoint.embedding_model);
    embed->add_option("--auth-env", endpoint.auth_env_var);
    embed->add_option("--dim", dim, "0 = facet default (3072 theme / 768 style)");
    embed->add_option("--batch", batch_size);
    embed->add_option("--out", out_path)->required();

    auto* analyze = app.add_subcommand("analyze", "run the full metric pipeline");
    analyze->add_option("--config", config_path)->required();
    analyze->add_option("--seed", seed_value)->each([&](const std::string&) {
        seed_given = true;
    });
    analyze->add_option("--out", out_dir_str);

    auto* report = app.add_subcommand("report", "re-emit CSV tables from tables.json");
    report->add_option("--results", results_path)->required();
    report->add_option("--out", out_dir_str)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(stories, continuations);
        if (segment->parsed()) return cmd_segment(stories, cuts, out_path);
        if (generate->parsed()) {
            return cmd_generate(stories, cuts, source, interface_name, samples,
                                endpoint, out_path, meta_path);
        }
        if (embed->parsed()) {
            return cmd_embed(continuations, facet, endpoint, dim, batch_size, out_path);
        }
        if (analyze->parsed()) {
            return cmd_analyze(config_path,
                               seed_given ? std::optional(seed_value) : std::nullopt,
                               out_dir_str.empty() ? std::nullopt
                                                   : std::optional(out_dir_str));
        }
        if (report->parsed()) return cmd_report(results_path, out_dir_str);
    } catch (const flatkit::Error& e) {
        std::cerr << e.what() << "\n";
        return e.code() == flatkit::ErrorCode::config_error ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
