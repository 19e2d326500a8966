#include "options.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "setscreen/error.hpp"

namespace setscreen::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string print_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x == 0.0 ? 0.0 : x);
  return buf;
}

/// Name of the long option an argument sets, or "" if it is not one.
std::string option_of(const std::string& arg) {
  if (!arg.starts_with("--") || arg.size() == 2) return {};
  const auto eq = arg.find('=');
  return arg.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
}

}  // namespace

ConfigEntries parse_config_text(const std::string& text, const std::string& origin) {
  ConfigEntries out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string at = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ValidationError(at + ": expected 'key = value'", "ConfigError");
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ValidationError(at + ": empty key or value", "ConfigError");
    if (!seen.insert(key).second)
      throw ValidationError(at + ": key '" + key + "' set twice", "ConfigError");
    out.emplace_back(key, value);
  }
  return out;
}

ConfigEntries read_config_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

std::string env_name(const std::string& option) {
  std::string out = "SETSCREEN_";
  for (char c : option) out += c == '-' ? '_' : static_cast<char>(std::toupper(c));
  return out;
}

// ---------------------------------------------------------------------------

OptionSet::OptionSet(CLI::App* app, std::string command) : app_(app), command_(std::move(command)) {}

CLI::Option* OptionSet::add(const std::string& name, Kind kind, CLI::Option* opt,
                            std::function<std::string()> print) {
  entries_.push_back({name, kind, opt, std::move(print)});
  return opt;
}

CLI::Option* OptionSet::path(const std::string& name, fs::path& target, const std::string& desc) {
  return add(name, Kind::Path, app_->add_option("--" + name, target, desc), nullptr);
}

CLI::Option* OptionSet::real(const std::string& name, double& target, const std::string& desc) {
  return add(name, Kind::Semantic, app_->add_option("--" + name, target, desc)->capture_default_str(),
             [&target] { return print_real(target); });
}

CLI::Option* OptionSet::integer(const std::string& name, int& target, const std::string& desc) {
  return add(name, Kind::Semantic, app_->add_option("--" + name, target, desc)->capture_default_str(),
             [&target] { return std::to_string(target); });
}

CLI::Option* OptionSet::count(const std::string& name, std::size_t& target,
                              const std::string& desc) {
  return add(name, Kind::Semantic, app_->add_option("--" + name, target, desc)->capture_default_str(),
             [&target] { return std::to_string(target); });
}

CLI::Option* OptionSet::seed(const std::string& name, std::uint64_t& target,
                             const std::string& desc) {
  return add(name, Kind::Semantic, app_->add_option("--" + name, target, desc)->capture_default_str(),
             [&target] { return std::to_string(target); });
}

CLI::Option* OptionSet::text(const std::string& name, std::string& target,
                             const std::string& desc) {
  return add(name, Kind::Semantic, app_->add_option("--" + name, target, desc)->capture_default_str(),
             [&target] { return target; });
}

CLI::Option* OptionSet::reals(const std::string& name, std::vector<double>& target,
                              const std::string& desc) {
  auto* opt = app_->add_option("--" + name, target, desc)->delimiter(',')->capture_default_str();
  // Values given on the command line replace the defaults instead of appending.
  opt->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  return add(name, Kind::Semantic, opt, [&target] {
    std::string s;
    for (std::size_t i = 0; i < target.size(); ++i) s += (i ? "," : "") + print_real(target[i]);
    return s;
  });
}

CLI::Option* OptionSet::boolean(const std::string& name, bool& target, const std::string& desc) {
  return add(name, Kind::Semantic, app_->add_flag("--" + name, target, desc)->capture_default_str(),
             [&target] { return std::string(target ? "true" : "false"); });
}

CLI::Option* OptionSet::threads(int& target) {
  auto* opt = app_->add_option("--threads", target, "worker threads")
                  ->capture_default_str()
                  ->check(CLI::Range(1, 1024));
  return add("threads", Kind::Scheduling, opt, nullptr);
}

const OptionSet::Entry* OptionSet::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

bool OptionSet::knows(const std::string& name) const { return find(name) != nullptr; }
bool OptionSet::is_path(const std::string& name) const {
  const auto* e = find(name);
  return e && e->kind == Kind::Path;
}
std::vector<std::string> OptionSet::path_names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.kind == Kind::Path) out.push_back(e.name);
  return out;
}

bool OptionSet::given(const std::string& name) const {
  const auto* e = find(name);
  return e && e->option->count() > 0;
}

std::string OptionSet::canonical() const {
  std::string s = "command=" + command_;
  for (const auto& e : entries_)
    if (e.kind == Kind::Semantic) s += ";" + e.name + "=" + e.print();
  return s;
}

// ---------------------------------------------------------------------------

std::vector<std::string> merge_sources(const OptionSet& options,
                                       std::span<const std::string> args) {
  std::set<std::string> on_cmdline;
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string name = option_of(args[i]);
    if (name.empty()) continue;
    on_cmdline.insert(name);
    if (name == "config") {
      const auto eq = args[i].find('=');
      if (eq != std::string::npos)
        config_path = args[i].substr(eq + 1);
      else if (i + 1 < args.size())
        config_path = args[i + 1];
    }
  }

  ConfigEntries config;
  if (!config_path.empty()) config = read_config_file(config_path);
  for (const auto& entry : config) {
    if (!options.knows(entry.first) || entry.first == "config")
      throw ValidationError("unknown config key '" + entry.first + "' for command " +
                                options.command(),
                            "ConfigError");
  }

  std::vector<std::string> injected;
  std::set<std::string> handled = on_cmdline;
  for (const auto& name : options.path_names()) {
    if (handled.count(name)) continue;
    if (const char* v = std::getenv(env_name(name).c_str()); v && *v) {
      injected.push_back("--" + name + "=" + v);
      handled.insert(name);
    }
  }
  for (const auto& [key, value] : config) {
    if (handled.count(key)) continue;
    injected.push_back("--" + key + "=" + value);
    handled.insert(key);
  }
  std::vector<std::string> out = std::move(injected);
  out.insert(out.end(), args.begin(), args.end());
  return out;
}

}  // namespace setscreen::cli
