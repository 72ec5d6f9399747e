#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace medeval {

// RFC 4180-ish parser: quoted fields, doubled-quote escapes, embedded
// commas/newlines, CRLF line endings. Good enough for the MMLU CSVs.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

std::string csv_escape(std::string_view field);

}  // namespace medeval
