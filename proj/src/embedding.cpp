#include "flatkit/embedding.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "flatkit/error.hpp"
#include "flatkit/jsonl.hpp"

namespace flatkit {

const char* facet_name(Facet f) { return f == Facet::theme ? "theme" : "style"; }

Facet facet_from_name(const std::string& name) {
    if (name == "theme") return Facet::theme;
    if (name == "style") return Facet::style;
    throw Error(ErrorCode::parse_error, "unknown facet " + name);
}

void EmbeddingStore::add(const ContinuationKey& key, int sentence_index,
                         const Eigen::VectorXd& vector) {
    if (vector.size() != dim_) {
        throw Error(ErrorCode::dimension_mismatch,
                    "expected dim " + std::to_string(dim_) + ", got " +
                        std::to_string(vector.size()) + " for " + key.to_string());
    }
    by_key_[key][sentence_index] = vector;
}

bool EmbeddingStore::contains(const ContinuationKey& key) const {
    return by_key_.count(key) > 0;
}

Eigen::MatrixXd EmbeddingStore::vectors_for(const ContinuationKey& key) const {
    auto it = by_key_.find(key);
    if (it == by_key_.end()) {
        throw Error(ErrorCode::missing_embedding,
                    "no vectors for continuation " + key.to_string());
    }
    const auto& by_sentence = it->second;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(by_sentence.size()), dim_);
    int expected = 0;
    Eigen::Index row = 0;
    for (const auto& [index, vector] : by_sentence) {
        if (index != expected) {
            throw Error(ErrorCode::missing_embedding,
                        "missing sentence " + std::to_string(expected) + " of " +
                            key.to_string());
        }
        m.row(row++) = vector;
        ++expected;
    }
    return m;
}

EmbeddingStore load_embedding_file(const std::string& path) {
    EmbeddingStore* store = nullptr;
    EmbeddingStore loaded(Facet::theme, 1);
    bool header_seen = false;
    for_each_jsonl(path, [&](std::size_t line_no, const nlohmann::json& obj) {
        if (!header_seen) {
            header_seen = true;
            try {
                Facet facet = facet_from_name(obj.at("facet").get<std::string>());
                int dim = obj.at("dim").get<int>();
                if (dim < 1) {
                    throw Error(ErrorCode::parse_error, path + ":1: dim must be >= 1");
                }
                loaded = EmbeddingStore(facet, dim);
                store = &loaded;
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorCode::parse_error,
                            path + ":1: header must declare facet and dim: " +
                                e.what());
            }
            return;
        }
        ContinuationKey key;
        int sentence_index = 0;
        std::vector<double> values;
        try {
            key.story_id = obj.at("story_id").get<std::string>();
            key.domain = obj.at("domain").get<std::string>();
            key.source = obj.at("source").get<std::string>();
            key.cut_percent = obj.at("cut").get<int>();
            key.sample_id = obj.at("sample_id").get<int>();
            sentence_index = obj.at("sentence_index").get<int>();
            values = obj.at("vector").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse_error,
                        path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(
            values.data(), static_cast<Eigen::Index>(values.size()));
        store->add(key, sentence_index, v);
    });
    if (!header_seen) {
        throw Error(ErrorCode::parse_error, path + ": missing facet/dim header");
    }
    return loaded;
}

namespace {

void write_header(std::ofstream& out, Facet facet, int dim) {
    nlohmann::json header;
    header["facet"] = facet_name(facet);
    header["dim"] = dim;
    out << header.dump() << "\n";
}

void write_row(std::ofstream& out, const ContinuationKey& key, int sentence_index,
               const std::vector<double>& values) {
    nlohmann::json obj;
    obj["story_id"] = key.story_id;
    obj["domain"] = key.domain;
    obj["source"] = key.source;
    obj["cut"] = key.cut_percent;
    obj["sample_id"] = key.sample_id;
    obj["sentence_index"] = sentence_index;
    obj["vector"] = values;
    out << obj.dump() << "\n";
}

} // namespace

void save_embedding_file(const std::string& path, Facet facet, int dim,
                         const std::vector<EmbeddingRow>& rows) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
    write_header(out, facet, dim);
    for (const auto& row : rows) {
        write_row(out, row.key, row.sentence_index, row.vector);
    }
}

} // namespace flatkit
