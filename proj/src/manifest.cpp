#include "pensieve/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "pensieve/errors.hpp"

namespace pensieve {

using nlohmann::json;

std::uint64_t fnv1a(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string digest_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for digesting");
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string data = ss.str();
  const std::uint64_t h = fnv1a(
      {reinterpret_cast<const unsigned char*>(data.data()), data.size()});
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a:%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

void RunManifest::write(const std::string& path) const {
  json obj;
  obj["tool_version"] = kToolVersion;
  obj["command"] = command;
  if (!config_json.empty()) {
    try {
      obj["config"] = json::parse(config_json);
    } catch (const json::exception&) {
      obj["config"] = config_json;
    }
  }
  obj["inputs"] = json::array();
  for (const auto& [name, file] : inputs) {
    obj["inputs"].push_back(
        {{"name", name}, {"path", file}, {"digest", digest_file(file)}});
  }
  if (has_seed) obj["seed"] = seed;
  char stamp[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm);
  obj["created_utc"] = stamp;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << obj.dump(2) << '\n';
  if (!os) throw IoError("write failed for '" + path + "'");
}

}  // namespace pensieve
