#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pixprop {

inline constexpr const char* kToolVersion = "pixprop 1.0.0";

// Ordered "key = value" text file recording how an artifact was produced.
class Manifest {
 public:
  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
  const std::string& require(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string to_string() const;
  static Manifest parse(const std::string& text);

  void write(const std::filesystem::path& path) const;
  static Manifest read(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Records sha256 of `file` under "hash.<key>".
void record_file_hash(Manifest& m, const std::string& key, const std::filesystem::path& file);
// Throws DataError naming the file when its content no longer matches the
// hash recorded in the manifest.
void verify_file_hash(const Manifest& m, const std::string& key, const std::filesystem::path& file);

}  // namespace pixprop
