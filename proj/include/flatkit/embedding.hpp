#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flatkit/corpus.hpp"

namespace flatkit {

enum class Facet { theme, style };

const char* facet_name(Facet f);
Facet facet_from_name(const std::string& name);

// Canonical production dimensions; files may declare other dimensions (small
// fixtures, alternate encoders) and the declared value wins at load time.
inline int canonical_dim(Facet f) { return f == Facet::theme ? 3072 : 768; }

// Per-sentence vectors for one facet, keyed by continuation. Vectors are
// stored in sentence order; lookup is by full continuation key.
class EmbeddingStore {
public:
    EmbeddingStore(Facet facet, int dim) : facet_(facet), dim_(dim) {}

    Facet facet() const { return facet_; }
    int dim() const { return dim_; }

    void add(const ContinuationKey& key, int sentence_index,
             const Eigen::VectorXd& vector);

    bool contains(const ContinuationKey& key) const;

    // Sentence vectors as rows, in sentence order. Throws MissingEmbedding if
    // the continuation is absent or has gaps in its sentence indices.
    Eigen::MatrixXd vectors_for(const ContinuationKey& key) const;

    std::size_t n_continuations() const { return by_key_.size(); }

private:
    Facet facet_;
    int dim_;
    std::map<ContinuationKey, std::map<int, Eigen::VectorXd>> by_key_;
};

// Line-delimited embeddings file. The first line is a header object
// {"facet": "theme"|"style", "dim": N}; each following line carries the
// continuation key fields, sentence_index, and vector.
EmbeddingStore load_embedding_file(const std::string& path);

struct EmbeddingRow {
    ContinuationKey key;
    int sentence_index = 0;
    std::vector<double> vector;
};

void save_embedding_file(const std::string& path, Facet facet, int dim,
                         const std::vector<EmbeddingRow>& rows);

} // namespace flatkit
