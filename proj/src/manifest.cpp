#include "plfm/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "plfm/common.hpp"

namespace plfm {

namespace {
using nlohmann::json;
}

std::string manifest_to_json(const RunManifest& m) {
  json inputs = json::array();
  for (const auto& [path, hash] : m.inputs) inputs.push_back({{"path", path}, {"hash", hash}});
  const json j{{"command", m.command},
               {"config", json::parse(m.config_json.empty() ? "{}" : m.config_json)},
               {"master_seed", m.master_seed},
               {"inputs", inputs},
               {"artifacts", m.artifacts},
               {"wall_seconds", m.wall_seconds},
               {"version", m.version}};
  return j.dump(2);
}

RunManifest manifest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("MalformedManifest", e.what());
  }
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.config_json = j.at("config").dump();
    m.master_seed = j.at("master_seed").get<uint64_t>();
    for (const auto& in : j.at("inputs"))
      m.inputs.emplace_back(in.at("path").get<std::string>(), in.at("hash").get<std::string>());
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    m.wall_seconds = j.at("wall_seconds").get<double>();
    m.version = j.at("version").get<std::string>();
  } catch (const json::exception& e) {
    throw Error("MalformedManifest", e.what());
  }
  return m;
}

void write_manifest(const std::string& path, const RunManifest& m) {
  if (std::ifstream probe(path); probe.good())
    throw Error("ManifestExists", path + " already exists (manifests are append-only)");
  std::ofstream out(path);
  if (!out) throw Error("FileNotFound", "cannot write " + path);
  out << manifest_to_json(m) << "\n";
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("FileNotFound", path);
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str());
}

uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("FileNotFound", path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[8192];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= uint8_t(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (got < std::streamsize(sizeof buf)) break;
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

namespace {

bool type_matches(const json& doc, const std::string& type) {
  if (type == "object") return doc.is_object();
  if (type == "array") return doc.is_array();
  if (type == "string") return doc.is_string();
  if (type == "number") return doc.is_number();
  if (type == "integer") return doc.is_number_integer();
  if (type == "boolean") return doc.is_boolean();
  if (type == "null") return doc.is_null();
  return false;
}

bool check_schema(const json& doc, const json& schema, const std::string& where,
                  std::string* error) {
  auto fail = [&](const std::string& why) {
    if (error) *error = where + ": " + why;
    return false;
  };
  if (schema.contains("type") && !type_matches(doc, schema.at("type").get<std::string>()))
    return fail("expected type " + schema.at("type").get<std::string>());
  if (schema.contains("enum")) {
    bool ok = false;
    for (const auto& v : schema.at("enum"))
      if (v == doc) ok = true;
    if (!ok) return fail("value not in enum");
  }
  if (schema.contains("minimum") && doc.is_number() &&
      doc.get<double>() < schema.at("minimum").get<double>())
    return fail("below minimum");
  if (doc.is_object()) {
    if (schema.contains("required"))
      for (const auto& key : schema.at("required"))
        if (!doc.contains(key.get<std::string>()))
          return fail("missing required key '" + key.get<std::string>() + "'");
    if (schema.contains("properties"))
      for (auto it = schema.at("properties").begin(); it != schema.at("properties").end(); ++it)
        if (doc.contains(it.key()))
          if (!check_schema(doc.at(it.key()), it.value(), where + "." + it.key(), error))
            return false;
  }
  if (doc.is_array() && schema.contains("items")) {
    for (size_t i = 0; i < doc.size(); ++i)
      if (!check_schema(doc[i], schema.at("items"), where + "[" + std::to_string(i) + "]",
                        error))
        return false;
  }
  return true;
}

}  // namespace

bool validate_json_schema(const std::string& doc_json, const std::string& schema_json,
                          std::string* error) {
  json doc, schema;
  try {
    doc = json::parse(doc_json);
    schema = json::parse(schema_json);
  } catch (const json::exception& e) {
    if (error) *error = e.what();
    return false;
  }
  return check_schema(doc, schema, "$", error);
}

}  // namespace plfm
