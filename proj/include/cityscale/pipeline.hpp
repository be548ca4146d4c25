#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cityscale/error.hpp"
#include "cityscale/event.hpp"

namespace cityscale {

struct EventSource {
  std::string path;
  EventFormat format = EventFormat::csv;
  std::string dataset_tag;
};

struct PipelineConfig {
  std::vector<EventSource> event_sources;
  std::string country_layer_path;
  std::vector<std::string> city_layer_paths;
  std::string target_country = "ES";
  std::int64_t min_events = 1;
  std::size_t bins = 5;
  std::string output_dir;

  // Throws InvalidArgument when an invariant fails.
  void validate() const;
};

// Relative paths inside the file resolve against the config's directory.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
std::string config_to_json(const PipelineConfig& config);

// Failure tagged with the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Unreadable or missing inputs; nothing is written.
class InputError : public StageError {
 public:
  explicit InputError(const std::string& message) : StageError("input-error", message) {}
};

struct PipelineOptions {
  unsigned threads = 1;
  bool strict = false;
};

struct PipelineSummary {
  std::vector<std::string> datasets;
  std::vector<std::string> layers;
  std::vector<std::string> outputs;  // paths relative to output_dir, sorted
};

// Runs ingestion through correlation and writes every artifact under
// config.output_dir. Outputs are staged and only moved into place when all
// stages succeed. Throws InputError or StageError.
PipelineSummary run_pipeline(const PipelineConfig& config, const PipelineOptions& options = {});

// Hex SHA-256 of a file's bytes.
std::string file_sha256(const std::filesystem::path& path);

// Directory-safe form of a dataset or layer label.
std::string path_label(const std::string& label);

}  // namespace cityscale
