#include "flatkit/jsonl.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "flatkit/error.hpp"

namespace flatkit {

void for_each_jsonl(const std::string& path,
                    const std::function<void(std::size_t, const nlohmann::json&)>& fn) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open " + path);
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorCode::parse_error,
                        path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        fn(line_no, obj);
    }
}

} // namespace flatkit
