#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flatkit/stats.hpp"

namespace flatkit {

// A table cell: text, a plain number, an interval estimate, or a p-value.
// Empty cells stay blank in the CSV.
struct PValueCell {
    double value = 1.0;
};

using TableCell = std::variant<std::monostate, std::string, double, MetricEstimate, PValueCell>;

enum class ColumnKind { text, number, estimate, p_value };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::number;
    bool percent = false; // scale x100 at emission only
};

struct Provenance {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string code_version;
};

struct ReportTable {
    std::string id; // e.g. stage_progression, cross_domain, ...
    std::vector<ColumnSpec> columns;
    std::vector<std::vector<TableCell>> rows;
    Provenance provenance;

    std::size_t column_index(const std::string& name) const;
    const TableCell& cell(std::size_t row, const std::string& column) const;
};

// Stable 64-bit content hash (FNV-1a) used for the config hash and for
// deriving per-metric seed streams from string keys.
std::uint64_t fnv1a_64(const std::string& content);
std::string fnv1a_hex(const std::string& content);

// Writes <id>.csv per table plus a combined tables.json mirror. Estimate
// columns expand to value/ci_low/ci_high/method; percent columns scale x100;
// p-values below .001 display as "<.001" in the CSV with the raw value
// preserved in the JSON. Returns the written file paths.
std::vector<std::string> emit_tables(const std::vector<ReportTable>& tables,
                                     const std::string& out_dir);

// Reads the JSON mirror back into tables (the `report` subcommand).
std::vector<ReportTable> load_tables_json(const std::string& path);

} // namespace flatkit
