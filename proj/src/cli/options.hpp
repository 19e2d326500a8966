#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

namespace setscreen::cli {

namespace fs = std::filesystem;

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// Flat config document: one "key = value" per line, '#' starts a comment.
/// Keys are long option names without the leading dashes.
ConfigEntries parse_config_text(const std::string& text, const std::string& origin);
ConfigEntries read_config_file(const fs::path& path);

/// Environment variable consulted for a path option, e.g. "region-map" ->
/// SETSCREEN_REGION_MAP.
std::string env_name(const std::string& option);

/// Registers the options of one subcommand and remembers how to print each
/// semantic (non-path) value canonically for the config hash.
class OptionSet {
 public:
  OptionSet(CLI::App* app, std::string command);

  CLI::Option* path(const std::string& name, fs::path& target, const std::string& desc);
  CLI::Option* real(const std::string& name, double& target, const std::string& desc);
  CLI::Option* integer(const std::string& name, int& target, const std::string& desc);
  CLI::Option* count(const std::string& name, std::size_t& target, const std::string& desc);
  CLI::Option* seed(const std::string& name, std::uint64_t& target, const std::string& desc);
  CLI::Option* text(const std::string& name, std::string& target, const std::string& desc);
  CLI::Option* reals(const std::string& name, std::vector<double>& target,
                     const std::string& desc);
  /// Takes an explicit value: --name=true or --name=false.
  CLI::Option* boolean(const std::string& name, bool& target, const std::string& desc);
  /// Not part of the config hash (scheduling only).
  CLI::Option* threads(int& target);

  CLI::App* app() const { return app_; }
  const std::string& command() const { return command_; }
  bool knows(const std::string& name) const;
  bool is_path(const std::string& name) const;
  std::vector<std::string> path_names() const;
  bool given(const std::string& name) const;

  /// "command=<name>;key=value;..." over semantic options in registration order.
  std::string canonical() const;

 private:
  enum class Kind { Path, Semantic, Scheduling };
  struct Entry {
    std::string name;
    Kind kind;
    CLI::Option* option;
    std::function<std::string()> print;
  };
  CLI::Option* add(const std::string& name, Kind kind, CLI::Option* opt,
                   std::function<std::string()> print);
  const Entry* find(const std::string& name) const;

  CLI::App* app_;
  std::string command_;
  std::vector<Entry> entries_;
};

/// Final argument list for one subcommand invocation. Precedence: command
/// line, then environment (path options only), then the config file named by
/// --config. Unknown config keys throw a ValidationError.
std::vector<std::string> merge_sources(const OptionSet& options, std::span<const std::string> args);

}  // namespace setscreen::cli
