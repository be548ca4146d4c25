#pragma once

// Helpers for tests that drive the command-line tool.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <utility>
#include <vector>

namespace cityscale::testing {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    path_ = fs::temp_directory_path() /
            ("cityscale-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  static int& counter() {
    static int n = 0;
    return n;
  }
  fs::path path_;
};

inline std::string quote(const std::string& arg) {
  std::string out = "'";
  for (char c : arg) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

// Runs the CLI with `args` (already quoted where needed); returns its exit code.
inline int run_cli(const std::string& args, const std::string& log = "/dev/null") {
  const std::string cmd = quote(CITYSCALE_CLI) + " " + args + " > " + quote(log) + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

inline std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void spit(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

// Relative path -> contents for every regular file below `root`.
inline std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) out[fs::relative(entry.path(), root).string()] = slurp(entry.path());
  }
  return out;
}

// Config for a synthetic world written by `synth` into `world_dir`, with
// `sources` as (events path, dataset tag) pairs.
inline std::string pipeline_config(const fs::path& world_dir,
                                   const std::vector<std::pair<fs::path, std::string>>& sources,
                                   const fs::path& output_dir) {
  std::string out = "{\n  \"event_sources\": [";
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (i) out += ",";
    out += "\n    {\"path\": \"" + sources[i].first.string() + "\", \"format\": \"csv\", \"dataset_tag\": \"" +
           sources[i].second + "\"}";
  }
  out += "\n  ],\n";
  out += "  \"country_layer\": \"" + (world_dir / "countries.geojson").string() + "\",\n";
  out += "  \"city_layers\": [\"" + (world_dir / "cities.geojson").string() + "\"],\n";
  out += "  \"target_country\": \"ES\",\n";
  out += "  \"output_dir\": \"" + output_dir.string() + "\"\n}\n";
  return out;
}

}  // namespace cityscale::testing
