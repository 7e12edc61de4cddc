#pragma once

#include <json.hpp>

#include <cstdint>
#include <initializer_list>
#include <string>

namespace gdtre {

using Json = nlohmann::ordered_json;

/// Serializes with the stored key order and deterministic number formatting:
/// integers as integers, doubles with up to 17 significant digits. The
/// output re-parses to bit-identical values and re-serializes to identical
/// bytes.
std::string canonical_dump(const Json& j);

/// canonical_dump with two-space indentation, same number formatting.
std::string canonical_dump_pretty(const Json& j);

std::string format_double(double v);

std::uint64_t fnv1a64(const std::string& bytes);
std::string fnv1a64_hex(const std::string& bytes);

/// Throws Error(ParseError) when obj is not an object, misses a required
/// key, or carries a key outside required+optional.
void require_keys(const Json& obj, std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional,
                  const std::string& context);

double get_number(const Json& j, const std::string& context);
long get_integer(const Json& j, const std::string& context);

}  // namespace gdtre
