#include "cityscale/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "cityscale/geo.hpp"
#include "cityscale/home.hpp"
#include "cityscale/numfmt.hpp"
#include "cityscale/scaling.hpp"
#include "cityscale/temporal.hpp"

namespace cityscale {

namespace fs = std::filesystem;

namespace {

using json = nlohmann::json;

constexpr const char* kStagingDir = ".incomplete-run";

const char* format_label(EventFormat format) { return format == EventFormat::csv ? "csv" : "jsonl"; }

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

// Collects files written during a run, relative to the staging root.
class OutputWriter {
 public:
  explicit OutputWriter(fs::path root) : root_(std::move(root)) {}

  void write(const std::string& relative, const std::string& content) {
    const fs::path target = root_ / relative;
    fs::create_directories(target.parent_path());
    std::ofstream out(target, std::ios::binary);
    out << content;
    if (!out) throw Error("cannot write " + target.string());
    written_.push_back(relative);
  }

  template <typename Fn>
  void write_with(const std::string& relative, Fn&& fn) {
    std::ostringstream buffer;
    fn(buffer);
    write(relative, buffer.str());
  }

  const fs::path& root() const { return root_; }
  std::vector<std::string> written() const {
    auto out = written_;
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  fs::path root_;
  std::vector<std::string> written_;
};

struct Dataset {
  std::string tag;
  std::vector<EventRecord> events;
  IngestReport report;
  OriginMap origins;
};

struct LayerRun {
  std::string label;
  RegionLayer layer;
};

void require_readable(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (path.empty() || !in) throw InputError("cannot read " + what + " '" + path + "'");
}

std::string utc_now() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  return format_timestamp(Timestamp{now.time_since_epoch()});
}

void publish(const fs::path& staging, const fs::path& output_dir) {
  for (const auto& entry : fs::directory_iterator(staging)) {
    const fs::path target = output_dir / entry.path().filename();
    if (fs::exists(target)) fs::remove_all(target);
    fs::rename(entry.path(), target);
  }
  fs::remove_all(staging);
}

}  // namespace

void PipelineConfig::validate() const {
  if (event_sources.empty()) throw InvalidArgument("config: event_sources is empty");
  for (const auto& src : event_sources) {
    if (src.path.empty()) throw InvalidArgument("config: event source with empty path");
    if (src.dataset_tag.empty()) throw InvalidArgument("config: event source without dataset_tag");
  }
  if (country_layer_path.empty()) throw InvalidArgument("config: country_layer is empty");
  if (city_layer_paths.empty()) throw InvalidArgument("config: city_layers is empty");
  for (const auto& p : city_layer_paths) {
    if (p.empty()) throw InvalidArgument("config: empty city layer path");
  }
  if (!is_country_code(target_country)) {
    throw InvalidArgument("config: target_country must be an ISO alpha-2 code");
  }
  if (min_events < 1) throw InvalidArgument("config: min_events must be >= 1");
  if (bins < 1) throw InvalidArgument("config: bins must be >= 1");
  if (output_dir.empty()) throw InvalidArgument("config: output_dir is empty");
}

PipelineConfig config_from_json(const std::string& text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
  }
  auto resolve = [&](const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute() || base_dir.empty()) return p;
    return (base_dir / p).lexically_normal().string();
  };
  PipelineConfig config;
  try {
    for (const auto& src : doc.at("event_sources")) {
      EventSource source;
      source.path = resolve(src.at("path").get<std::string>());
      source.format = parse_event_format(src.value("format", std::string("csv")));
      source.dataset_tag = src.at("dataset_tag").get<std::string>();
      config.event_sources.push_back(std::move(source));
    }
    config.country_layer_path = resolve(doc.at("country_layer").get<std::string>());
    for (const auto& p : doc.at("city_layers")) {
      config.city_layer_paths.push_back(resolve(p.get<std::string>()));
    }
    config.target_country = doc.value("target_country", config.target_country);
    config.min_events = doc.value("min_events", config.min_events);
    config.bins = doc.value("bins", config.bins);
    config.output_dir = resolve(doc.at("output_dir").get<std::string>());
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  config.validate();
  return config;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read config '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return config_from_json(buffer.str(), path.parent_path());
}

std::string config_to_json(const PipelineConfig& config) {
  json sources = json::array();
  for (const auto& src : config.event_sources) {
    sources.push_back(
        {{"path", src.path}, {"format", format_label(src.format)}, {"dataset_tag", src.dataset_tag}});
  }
  json doc = {{"event_sources", sources},
              {"country_layer", config.country_layer_path},
              {"city_layers", config.city_layer_paths},
              {"target_country", config.target_country},
              {"min_events", config.min_events},
              {"bins", config.bins},
              {"output_dir", config.output_dir}};
  return doc.dump(2);
}

std::string path_label(const std::string& label) {
  std::string out;
  for (char c : label) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '-' || c == '_' || c == '.';
    out.push_back(keep ? c : '_');
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path.string() + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

PipelineSummary run_pipeline(const PipelineConfig& config, const PipelineOptions& options) {
  try {
    config.validate();
  } catch (const InvalidArgument& e) {
    throw InputError(e.what());
  }
  // Every input must be readable before anything is written.
  for (const auto& src : config.event_sources) require_readable(src.path, "event source");
  require_readable(config.country_layer_path, "country layer");
  for (const auto& p : config.city_layer_paths) require_readable(p, "city layer");

  const unsigned threads = std::max(1u, options.threads);

  const RegionLayer countries = stage("load-layer", [&] {
    return load_layer_file(config.country_layer_path);
  });
  const CountryLocator locator = stage("load-layer", [&] { return CountryLocator(countries); });
  std::vector<LayerRun> layers;
  for (const auto& p : config.city_layer_paths) {
    RegionLayer layer = stage("load-layer", [&] { return load_layer_file(p); });
    const std::string label = path_label(layer.label());
    for (const auto& existing : layers) {
      if (existing.label == label) throw InputError("two city layers share label '" + label + "'");
    }
    layers.push_back({label, std::move(layer)});
  }

  std::vector<Dataset> datasets;
  for (const auto& src : config.event_sources) {
    auto parsed = stage("ingest", [&] {
      std::ifstream in(src.path, std::ios::binary);
      try {
        return parse_events(in, src.format, options.strict);
      } catch (const ParseError& e) {
        throw Error(src.path + ": " + e.what());
      }
    });
    auto it = std::find_if(datasets.begin(), datasets.end(),
                           [&](const Dataset& d) { return d.tag == src.dataset_tag; });
    if (it == datasets.end()) {
      datasets.push_back({src.dataset_tag, {}, {}, {}});
      it = std::prev(datasets.end());
    }
    std::move(parsed.records.begin(), parsed.records.end(), std::back_inserter(it->events));
    it->report.accepted += parsed.report.accepted;
    it->report.rejected += parsed.report.rejected;
    for (const auto& [reason, count] : parsed.report.rejection_reasons) {
      it->report.rejection_reasons[reason] += count;
    }
  }

  const fs::path output_dir(config.output_dir);
  const fs::path staging = output_dir / kStagingDir;
  PipelineSummary summary;
  try {
    fs::create_directories(output_dir);
    if (fs::exists(staging)) fs::remove_all(staging);
    fs::create_directories(staging);
    OutputWriter writer(staging);

    // residuals[layer][dataset]
    std::map<std::string, std::map<std::string, std::vector<ResidualScore>>> residual_sets;
    for (auto& ds : datasets) {
      const std::string ds_dir = path_label(ds.tag);
      summary.datasets.push_back(ds.tag);
      writer.write(ds_dir + "/ingest_report.json", ds.report.to_json() + "\n");
      auto homes = stage("infer-home", [&] {
        return infer_homes(ds.events, locator, config.min_events, threads);
      });
      writer.write_with(ds_dir + "/homes.csv", [&](std::ostream& out) { write_homes_csv(out, homes); });
      ds.origins = to_origin_map(homes);

      for (const auto& run : layers) {
        const std::string dir = ds_dir + "/" + run.label + "/";
        auto assignment = stage("assign", [&] { return assign_events(ds.events, run.layer, threads); });
        auto table = stage("attractiveness", [&] {
          return compute_attractiveness(ds.events, assignment.region_of, ds.origins,
                                        config.target_country, run.layer, ds.tag);
        });
        writer.write_with(dir + "attractiveness.csv",
                          [&](std::ostream& out) { write_table_csv(out, table); });
        auto fit = stage("fit", [&] { return fit_power_law(table); });
        writer.write(dir + "fit.json", fit_to_json(fit, ds.tag, run.layer.label()) + "\n");
        auto trend = stage("bin", [&] { return log_bin(table, config.bins); });
        writer.write_with(dir + "binned.csv", [&](std::ostream& out) { write_binned_csv(out, trend); });
        if (trend.bins.size() >= 3) {
          auto binned_fit = stage("bin", [&] { return fit_binned(trend); });
          writer.write(dir + "binned_fit.json",
                       fit_to_json(binned_fit, ds.tag, run.layer.label()) + "\n");
        }
        writer.write_with(dir + "scatter.csv",
                          [&](std::ostream& out) { write_scatter_csv(out, table, fit, trend); });
        auto scores = stage("residuals", [&] { return residuals(table, fit); });
        writer.write_with(dir + "residuals.csv",
                          [&](std::ostream& out) { write_residuals_csv(out, scores); });
        residual_sets[run.label][ds.tag] = std::move(scores);
        auto series = stage("temporal", [&] {
          return window_exponents(ds.events, assignment.region_of, ds.origins, run.layer,
                                  config.target_country, ds.tag, threads);
        });
        writer.write_with(dir + "temporal.csv",
                          [&](std::ostream& out) { write_temporal_csv(out, series); });
        writer.write(dir + "temporal.json", temporal_to_json(series, ds.tag, run.layer.label()) + "\n");
      }
    }

    stage("correlate", [&] {
      writer.write_with("correlation.csv", [&](std::ostream& out) {
        out << "layer";
        for (std::size_t i = 0; i < datasets.size(); ++i) {
          for (std::size_t j = i + 1; j < datasets.size(); ++j) {
            out << ',' << datasets[i].tag << '/' << datasets[j].tag;
          }
        }
        out << '\n';
        for (const auto& run : layers) {
          out << run.layer.label();
          const auto& sets = residual_sets[run.label];
          for (std::size_t i = 0; i < datasets.size(); ++i) {
            for (std::size_t j = i + 1; j < datasets.size(); ++j) {
              out << ',';
              try {
                out << format_number(
                    correlate_residuals(sets.at(datasets[i].tag), sets.at(datasets[j].tag)).r);
              } catch (const Error&) {
                out << "NA";
              }
            }
          }
          out << '\n';
        }
      });
    });

    for (const auto& run : layers) summary.layers.push_back(run.layer.label());
    summary.outputs = writer.written();
    summary.outputs.push_back("manifest.json");
    std::sort(summary.outputs.begin(), summary.outputs.end());

    json inputs = json::array();
    auto digest = [&](const std::string& role, const std::string& path) {
      inputs.push_back({{"role", role},
                        {"path", path},
                        {"bytes", fs::file_size(path)},
                        {"sha256", file_sha256(path)}});
    };
    for (const auto& src : config.event_sources) digest("events:" + src.dataset_tag, src.path);
    digest("country_layer", config.country_layer_path);
    for (const auto& p : config.city_layer_paths) digest("city_layer", p);
    json manifest = {{"tool", "cityscale"},
                     {"created_utc", utc_now()},
                     {"threads", threads},
                     {"strict", options.strict},
                     {"config", json::parse(config_to_json(config))},
                     {"inputs", inputs},
                     {"outputs", summary.outputs}};
    writer.write("manifest.json", manifest.dump(2) + "\n");
    publish(staging, output_dir);
  } catch (const StageError&) {
    std::error_code ignored;
    fs::remove_all(staging, ignored);
    throw;
  } catch (const std::exception& e) {
    std::error_code ignored;
    fs::remove_all(staging, ignored);
    throw StageError("write", e.what());
  }
  return summary;
}

}  // namespace cityscale
