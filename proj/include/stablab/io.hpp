#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "stablab/family.hpp"

namespace stablab {

using Json = nlohmann::json;

/// {"k":1,"d":2,"coeffs":[[[[re,im],...],...],...],"domain":{"re":[a,b],"im":[c,d]}};
/// coeffs[i][m][p] multiplies lambda^p in monomial m (graded-lex) of component i.
Json to_json(const FamilySpec& family);
FamilySpec family_from_json(const Json& j);

Json to_json(const Rect& r);
Rect rect_from_json(const Json& j);

Json complex_json(Complex z);
Complex complex_from_json(const Json& j);

/// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t h);

/// Binary 16-bit PGM (P5, big endian). Row 0 is the top of the picture, i.e.
/// the largest imaginary part. pixel = round(65535 (v - lo) / (hi - lo)),
/// clamped; non-finite values map to 0. The mapping is written as a header
/// comment together with the extra comment lines.
void write_pgm16(std::ostream& os, const std::vector<double>& values, int nx, int ny, double lo, double hi,
                 const std::vector<std::string>& comments = {});

struct Pgm16 {
  int nx = 0, ny = 0;
  std::vector<std::uint16_t> pixels;  // row-major from the top row
  std::vector<std::string> comments;
};
Pgm16 read_pgm16(std::istream& is);

/// Checks a document against the subset of JSON Schema used by the published
/// schemas: type, properties, required, additionalProperties (boolean), items,
/// enum, const, minimum, exclusiveMinimum, maximum, minItems, maxItems and
/// local "$ref" into "definitions". Returns one message per violation.
std::vector<std::string> validate_schema(const Json& doc, const Json& schema);

/// Schemas compiled into the library from schemas/*.schema.json.
const Json& published_schema(const std::string& name);
std::vector<std::string> published_schema_names();

Json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline; keys in sorted order.
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace stablab
