#include "pixprop/manifest.hpp"

#include <fstream>
#include <sstream>

#include "pixprop/errors.hpp"
#include "pixprop/hashing.hpp"

namespace pixprop {

void Manifest::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

std::optional<std::string> Manifest::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  return std::nullopt;
}

const std::string& Manifest::require(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw DataError("manifest is missing '" + key + "'");
}

std::string Manifest::to_string() const {
  std::ostringstream s;
  for (const auto& [k, v] : entries_) s << k << " = " << v << "\n";
  return s.str();
}

Manifest Manifest::parse(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find(" = ");
    if (eq == std::string::npos) throw DataError("malformed manifest line: " + line);
    m.entries_.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }
  return m;
}

void Manifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << to_string();
}

Manifest Manifest::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing manifest " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse(s.str());
}

void record_file_hash(Manifest& m, const std::string& key, const std::filesystem::path& file) {
  m.set("hash." + key, sha256_file(file));
}

void verify_file_hash(const Manifest& m, const std::string& key, const std::filesystem::path& file) {
  const auto want = m.get("hash." + key);
  if (!want) throw DataError("manifest has no hash for " + key);
  if (!std::filesystem::exists(file)) throw DataError("missing artifact " + file.string());
  if (sha256_file(file) != *want)
    throw DataError("stale artifact " + file.string() + ": content differs from its manifest");
}

}  // namespace pixprop
