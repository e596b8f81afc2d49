#include "flatkit/table.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "flatkit/error.hpp"
#include "flatkit/jsonl.hpp"

namespace flatkit {

namespace {

std::string format_number(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// Percent cells always carry a decimal point ("41.0", not "41").
std::string format_percent(double v) {
    std::string s = format_number(v * 100.0);
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("inf") == std::string::npos && s.find("nan") == std::string::npos) {
        s += ".0";
    }
    return s;
}

std::string format_p_display(double p) {
    if (p < 0.001) return "<.001";
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.3f", p);
    return buf;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::string scaled(const ColumnSpec& col, double v) {
    return col.percent ? format_percent(v) : format_number(v);
}

void write_csv(const ReportTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
    bool first = true;
    for (const auto& col : table.columns) {
        if (!first) out << ",";
        first = false;
        switch (col.kind) {
        case ColumnKind::estimate:
            out << csv_escape(col.name) << "," << csv_escape(col.name + "_ci_low")
                << "," << csv_escape(col.name + "_ci_high") << ","
                << csv_escape(col.name + "_method");
            break;
        default:
            out << csv_escape(col.name);
            break;
        }
    }
    out << "\n";
    for (const auto& row : table.rows) {
        first = true;
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            const auto& col = table.columns[c];
            const TableCell& cell = c < row.size() ? row[c] : TableCell{};
            if (!first) out << ",";
            first = false;
            if (col.kind == ColumnKind::estimate) {
                if (const auto* est = std::get_if<MetricEstimate>(&cell)) {
                    out << scaled(col, est->value) << "," << scaled(col, est->ci_low)
                        << "," << scaled(col, est->ci_high) << ","
                        << ci_method_name(est->method);
                } else if (const auto* num = std::get_if<double>(&cell)) {
                    out << scaled(col, *num) << ",,,";
                } else {
                    out << ",,,";
                }
            } else if (const auto* text = std::get_if<std::string>(&cell)) {
                out << csv_escape(*text);
            } else if (const auto* num = std::get_if<double>(&cell)) {
                out << scaled(col, *num);
            } else if (const auto* est = std::get_if<MetricEstimate>(&cell)) {
                out << scaled(col, est->value);
            } else if (const auto* p = std::get_if<PValueCell>(&cell)) {
                out << format_p_display(p->value);
            }
        }
        out << "\n";
    }
}

nlohmann::json cell_to_json(const ColumnSpec& col, const TableCell& cell) {
    if (std::holds_alternative<std::monostate>(cell)) return nullptr;
    if (const auto* text = std::get_if<std::string>(&cell)) return *text;
    if (const auto* num = std::get_if<double>(&cell)) return *num;
    if (const auto* p = std::get_if<PValueCell>(&cell)) {
        return {{"p", p->value}, {"display", format_p_display(p->value)}};
    }
    const auto& est = std::get<MetricEstimate>(cell);
    nlohmann::json j;
    j["value"] = est.value;
    j["ci_low"] = est.ci_low;
    j["ci_high"] = est.ci_high;
    j["n_units"] = est.n_units;
    j["method"] = ci_method_name(est.method);
    j["seed"] = est.seed;
    (void)col;
    return j;
}

TableCell cell_from_json(const ColumnSpec& col, const nlohmann::json& j) {
    if (j.is_null()) return std::monostate{};
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number()) return j.get<double>();
    if (j.is_object() && j.contains("p")) return PValueCell{j["p"].get<double>()};
    if (j.is_object() && j.contains("value")) {
        MetricEstimate est;
        est.value = j["value"].get<double>();
        est.ci_low = j["ci_low"].get<double>();
        est.ci_high = j["ci_high"].get<double>();
        est.n_units = j.value("n_units", std::size_t{0});
        est.seed = j.value("seed", std::uint64_t{0});
        std::string method = j.value("method", "point_only");
        if (method == "story_bootstrap") est.method = CiMethod::story_bootstrap;
        else if (method == "sentence_bootstrap") est.method = CiMethod::sentence_bootstrap;
        else if (method == "component_bound") est.method = CiMethod::component_bound;
        else est.method = CiMethod::point_only;
        return est;
    }
    (void)col;
    return std::monostate{};
}

} // namespace

std::size_t ReportTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].name == name) return i;
    }
    throw Error(ErrorCode::io_error, "table " + id + " has no column " + name);
}

const TableCell& ReportTable::cell(std::size_t row, const std::string& column) const {
    return rows.at(row).at(column_index(column));
}

std::uint64_t fnv1a_64(const std::string& content) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : content) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string fnv1a_hex(const std::string& content) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a_64(content)));
    return buf;
}

std::vector<std::string> emit_tables(const std::vector<ReportTable>& tables,
                                     const std::string& out_dir) {
    if (tables.empty()) {
        throw Error(ErrorCode::io_error, "no tables to emit");
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    std::vector<std::string> written;
    nlohmann::json mirror = nlohmann::json::object();
    for (const auto& table : tables) {
        std::string csv_path = out_dir + "/" + table.id + ".csv";
        write_csv(table, csv_path);
        written.push_back(csv_path);

        nlohmann::json jt;
        jt["columns"] = nlohmann::json::array();
        for (const auto& col : table.columns) {
            jt["columns"].push_back({{"name", col.name},
                                     {"kind", static_cast<int>(col.kind)},
                                     {"percent", col.percent}});
        }
        jt["rows"] = nlohmann::json::array();
        for (const auto& row : table.rows) {
            nlohmann::json jrow = nlohmann::json::array();
            for (std::size_t c = 0; c < table.columns.size(); ++c) {
                jrow.push_back(cell_to_json(table.columns[c],
                                            c < row.size() ? row[c] : TableCell{}));
            }
            jt["rows"].push_back(std::move(jrow));
        }
        jt["provenance"] = {{"config_hash", table.provenance.config_hash},
                            {"seed", table.provenance.seed},
                            {"code_version", table.provenance.code_version}};
        mirror[table.id] = std::move(jt);
    }
    std::string json_path = out_dir + "/tables.json";
    std::ofstream out(json_path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + json_path);
    out << mirror.dump(2) << "\n";
    written.push_back(json_path);
    return written;
}

std::vector<ReportTable> load_tables_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
    nlohmann::json mirror;
    try {
        in >> mirror;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse_error, path + ": " + e.what());
    }
    std::vector<ReportTable> tables;
    for (auto it = mirror.begin(); it != mirror.end(); ++it) {
        ReportTable table;
        table.id = it.key();
        const auto& jt = it.value();
        for (const auto& jc : jt.at("columns")) {
            ColumnSpec col;
            col.name = jc.at("name").get<std::string>();
            col.kind = static_cast<ColumnKind>(jc.at("kind").get<int>());
            col.percent = jc.at("percent").get<bool>();
            table.columns.push_back(std::move(col));
        }
        for (const auto& jrow : jt.at("rows")) {
            std::vector<TableCell> row;
            for (std::size_t c = 0; c < table.columns.size(); ++c) {
                row.push_back(cell_from_json(table.columns[c], jrow.at(c)));
            }
            table.rows.push_back(std::move(row));
        }
        const auto& jp = jt.at("provenance");
        table.provenance.config_hash = jp.at("config_hash").get<std::string>();
        table.provenance.seed = jp.at("seed").get<std::uint64_t>();
        table.provenance.code_version = jp.at("code_version").get<std::string>();
        tables.push_back(std::move(table));
    }
    return tables;
}

} // namespace flatkit
