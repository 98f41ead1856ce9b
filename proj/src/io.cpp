#include "stablab/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace stablab {

namespace {

void fail(const std::string& what) { throw LabError(ErrorKind::Config, what); }

std::string join_path(const std::string& base, const std::string& key) { return base + "/" + key; }

bool has_type(const Json& doc, const std::string& type) {
  if (type == "object") return doc.is_object();
  if (type == "array") return doc.is_array();
  if (type == "string") return doc.is_string();
  if (type == "boolean") return doc.is_boolean();
  if (type == "null") return doc.is_null();
  if (type == "integer") return doc.is_number_integer();
  if (type == "number") return doc.is_number();
  return false;
}

void validate_at(const Json& doc, const Json& schema, const Json& root, const std::string& path,
                 std::vector<std::string>& errors) {
  if (schema.contains("$ref")) {
    const std::string ref = schema["$ref"].get<std::string>();
    const std::string prefix = "#/definitions/";
    if (ref.rfind(prefix, 0) != 0 || !root.contains("definitions") ||
        !root["definitions"].contains(ref.substr(prefix.size()))) {
      errors.push_back(path + ": unresolved reference " + ref);
      return;
    }
    validate_at(doc, root["definitions"][ref.substr(prefix.size())], root, path, errors);
    return;
  }
  if (schema.contains("type")) {
    const Json& t = schema["type"];
    bool ok = false;
    if (t.is_string()) ok = has_type(doc, t.get<std::string>());
    for (const auto& alt : t.is_array() ? t : Json::array()) ok = ok || has_type(doc, alt.get<std::string>());
    if (!ok) {
      errors.push_back(path + ": expected type " + t.dump());
      return;
    }
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& v : schema["enum"]) found = found || v == doc;
    if (!found) errors.push_back(path + ": value not in " + schema["enum"].dump());
  }
  if (schema.contains("const") && schema["const"] != doc) errors.push_back(path + ": expected " + schema["const"].dump());
  if (doc.is_number()) {
    const double x = doc.get<double>();
    if (schema.contains("minimum") && x < schema["minimum"].get<double>())
      errors.push_back(path + ": below minimum " + schema["minimum"].dump());
    if (schema.contains("exclusiveMinimum") && x <= schema["exclusiveMinimum"].get<double>())
      errors.push_back(path + ": must exceed " + schema["exclusiveMinimum"].dump());
    if (schema.contains("maximum") && x > schema["maximum"].get<double>())
      errors.push_back(path + ": above maximum " + schema["maximum"].dump());
  }
  if (doc.is_object()) {
    for (const auto& key : schema.value("required", Json::array()))
      if (!doc.contains(key.get<std::string>())) errors.push_back(path + ": missing required key " + key.dump());
    const Json props = schema.value("properties", Json::object());
    for (const auto& [key, value] : doc.items()) {
      if (props.contains(key))
        validate_at(value, props[key], root, join_path(path, key), errors);
      else if (schema.contains("additionalProperties") && schema["additionalProperties"] == false)
        errors.push_back(path + ": unexpected key \"" + key + "\"");
    }
  }
  if (doc.is_array()) {
    if (schema.contains("minItems") && doc.size() < schema["minItems"].get<std::size_t>())
      errors.push_back(path + ": fewer than " + schema["minItems"].dump() + " items");
    if (schema.contains("maxItems") && doc.size() > schema["maxItems"].get<std::size_t>())
      errors.push_back(path + ": more than " + schema["maxItems"].dump() + " items");
    if (schema.contains("items"))
      for (std::size_t i = 0; i < doc.size(); ++i)
        validate_at(doc[i], schema["items"], root, join_path(path, std::to_string(i)), errors);
  }
}

}  // namespace

Json complex_json(Complex z) { return Json::array({z.real(), z.imag()}); }

Complex complex_from_json(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    fail("complex numbers are [re, im] pairs or plain reals");
  return {j[0].get<double>(), j[1].get<double>()};
}

Json to_json(const Rect& r) { return {{"re", {r.re_min, r.re_max}}, {"im", {r.im_min, r.im_max}}}; }

Rect rect_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("re") || !j.contains("im") || j["re"].size() != 2 || j["im"].size() != 2)
    fail("rectangles are {\"re\": [min, max], \"im\": [min, max]}");
  Rect r{j["re"][0].get<double>(), j["re"][1].get<double>(), j["im"][0].get<double>(), j["im"][1].get<double>()};
  if (!(r.re_min < r.re_max && r.im_min < r.im_max)) fail("empty rectangle " + j.dump());
  return r;
}

Json to_json(const FamilySpec& family) {
  Json coeffs = Json::array();
  for (const auto& comp : family.coeffs) {
    Json jc = Json::array();
    for (const auto& mono : comp) {
      Json jm = Json::array();
      for (Complex a : mono) jm.push_back(complex_json(a));
      jc.push_back(jm);
    }
    coeffs.push_back(jc);
  }
  return {{"k", family.k}, {"d", family.d}, {"coeffs", coeffs}, {"domain", to_json(family.domain)}};
}

FamilySpec family_from_json(const Json& j) {
  if (!j.is_object()) fail("family must be an object");
  FamilySpec f;
  try {
    f.k = j.at("k").get<int>();
    f.d = j.at("d").get<int>();
    for (const auto& jc : j.at("coeffs")) {
      auto& comp = f.coeffs.emplace_back();
      for (const auto& jm : jc) {
        auto& mono = comp.emplace_back();
        for (const auto& a : jm) mono.push_back(complex_from_json(a));
      }
    }
    if (j.contains("domain")) f.domain = rect_from_json(j["domain"]);
  } catch (const Json::exception& e) {
    fail(std::string("malformed family: ") + e.what());
  }
  try {
    f.validate();
  } catch (const LabError& e) {
    fail(std::string("invalid family: ") + e.what());
  }
  return f;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_pgm16(std::ostream& os, const std::vector<double>& values, int nx, int ny, double lo, double hi,
                 const std::vector<std::string>& comments) {
  if (values.size() != static_cast<std::size_t>(nx) * ny) throw LabError(ErrorKind::InvalidArgument, "raster size");
  if (!(hi > lo)) hi = lo + 1.0;
  std::ostringstream mapping;
  mapping << std::setprecision(17) << "value = " << lo << " + " << (hi - lo) << " * pixel / 65535; non-finite -> 0";
  os << "P5\n# " << mapping.str() << '\n';
  for (const auto& c : comments) os << "# " << c << '\n';
  os << nx << ' ' << ny << "\n65535\n";
  std::vector<char> row(static_cast<std::size_t>(nx) * 2);
  for (int iy = ny - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const double v = values[static_cast<std::size_t>(iy) * nx + ix];
      double t = std::isfinite(v) ? (v - lo) / (hi - lo) : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const auto p = static_cast<std::uint16_t>(std::lround(t * 65535.0));
      row[2 * ix] = static_cast<char>(p >> 8);
      row[2 * ix + 1] = static_cast<char>(p & 0xff);
    }
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

Pgm16 read_pgm16(std::istream& is) {
  Pgm16 img;
  std::string magic;
  is >> magic;
  if (magic != "P5") fail("not a binary PGM");
  auto next_int = [&] {
    for (;;) {
      is >> std::ws;
      if (is.peek() == '#') {
        std::string line;
        std::getline(is, line);
        img.comments.push_back(line.substr(line.find_first_not_of("# ")));
        continue;
      }
      int v = 0;
      is >> v;
      return v;
    }
  };
  img.nx = next_int();
  img.ny = next_int();
  if (next_int() != 65535) fail("PGM is not 16 bit");
  is.get();
  img.pixels.resize(static_cast<std::size_t>(img.nx) * img.ny);
  for (auto& p : img.pixels) {
    const int hi = is.get(), lo = is.get();
    if (!is) fail("truncated PGM");
    p = static_cast<std::uint16_t>((hi << 8) | lo);
  }
  return img;
}

std::vector<std::string> validate_schema(const Json& doc, const Json& schema) {
  std::vector<std::string> errors;
  validate_at(doc, schema, schema, "", errors);
  for (auto& e : errors)
    if (e.empty() || e[0] == ':') e = "(root)" + e;
  return errors;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    fail(path.string() + ": " + e.what());
  }
  return {};
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LabError(ErrorKind::Config, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace stablab
