#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace floodseg::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kDivergence = 4 };

struct KeySpec {
  std::string name;
  std::string default_value;
  std::string help;
};

// key=value configuration for one subcommand. Values come from the key
// defaults, then an optional config file, then --set overrides. Unknown keys
// are rejected; relative paths resolve against the directory of the file that
// set them (the working directory for overrides and defaults).
class RunSpec {
 public:
  explicit RunSpec(std::vector<KeySpec> keys);

  void load_file(const std::filesystem::path& path);
  void set(const std::string& assignment, const std::filesystem::path& base = {});
  void set(const std::string& key, const std::string& value, const std::filesystem::path& base);

  bool has_key(const std::string& key) const;
  const std::string& str(const std::string& key) const;
  bool is_set(const std::string& key) const { return !str(key).empty(); }
  long integer(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  std::vector<double> real_list(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;
  // Empty value gives an empty path.
  std::filesystem::path path(const std::string& key) const;

  // Every accepted key with its effective value, in declaration order.
  std::string echo() const;
  const std::vector<KeySpec>& keys() const noexcept { return keys_; }

 private:
  struct Value {
    std::string text;
    std::filesystem::path base;
  };
  const Value& value(const std::string& key) const;

  std::vector<KeySpec> keys_;
  std::map<std::string, Value> values_;
};

// Keys accepted by a subcommand; throws ConfigError for an unknown name.
std::vector<KeySpec> subcommand_keys(const std::string& name);
std::vector<std::string> subcommand_names();

// Entry point behind the floodseg executable; returns the process exit code.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace floodseg::cli
