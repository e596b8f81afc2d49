#pragma once

#include <functional>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace flatkit {

// Streams a line-delimited JSON file. The callback receives the 1-based line
// number and the parsed object; blank lines are skipped. Malformed lines
// raise ParseError naming the file and line; a missing file raises IoError.
void for_each_jsonl(const std::string& path,
                    const std::function<void(std::size_t, const nlohmann::json&)>& fn);

} // namespace flatkit
