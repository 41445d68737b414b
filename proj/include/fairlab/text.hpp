#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fairlab::text {

// Shortest representation that parses back to the same double.
std::string format_double(double v);
// Fixed-point with the given number of decimals, for human-facing tables.
std::string format_fixed(double v, int decimals);

// Strict parses: the whole token must be consumed. Throw DataError naming `what` on failure.
double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

// FNV-1a over bytes, used for content hashes in run manifests.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace fairlab::text
