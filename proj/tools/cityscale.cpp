// cityscale: command-line front end for the attractiveness scaling pipeline.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cityscale/event.hpp"
#include "cityscale/geo.hpp"
#include "cityscale/home.hpp"
#include "cityscale/numfmt.hpp"
#include "cityscale/pipeline.hpp"
#include "cityscale/scaling.hpp"
#include "cityscale/synthetic.hpp"
#include "cityscale/temporal.hpp"

namespace fs = std::filesystem;
using namespace cityscale;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitStage = 3;

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  return in;
}

// Writes to `path`, or stdout when the path is empty or "-".
void emit(const std::string& path, const std::function<void(std::ostream&)>& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("write", "cannot write '" + path + "'");
  fn(out);
}

EventFormat guess_format(const std::string& path, const std::string& label) {
  if (!label.empty()) return parse_event_format(label);
  return fs::path(path).extension() == ".jsonl" ? EventFormat::jsonl : EventFormat::csv;
}

std::vector<EventRecord> read_events(const std::string& path, const std::string& format,
                                     bool strict) {
  auto in = open_input(path);
  try {
    return parse_events(in, guess_format(path, format), strict).records;
  } catch (const Error& e) {
    throw StageError("ingest", path + ": " + e.what());
  }
}

RegionLayer read_layer(const std::string& path) {
  auto in = open_input(path);
  try {
    return load_layer(in);
  } catch (const Error& e) {
    throw StageError("load-layer", path + ": " + e.what());
  }
}

AttractivenessTable read_table(const std::string& path, const std::string& dataset,
                               const std::string& layer) {
  auto in = open_input(path);
  try {
    return read_table_csv(in, dataset, layer);
  } catch (const Error& e) {
    throw StageError("read-table", path + ": " + e.what());
  }
}

OriginMap read_origins(const std::string& path) {
  auto in = open_input(path);
  try {
    return to_origin_map(read_homes_csv(in));
  } catch (const Error& e) {
    throw StageError("read-homes", path + ": " + e.what());
  }
}

template <typename Fn>
auto tagged(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"City attractiveness scaling pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  unsigned threads = 1;
  bool strict = false;
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  app.add_flag("--strict", strict, "Abort on the first malformed input row");

  std::function<void()> action;

  // ingest
  std::string ingest_input, ingest_format, ingest_output, ingest_report;
  auto* ingest = app.add_subcommand("ingest", "Parse an event file into canonical CSV");
  ingest->add_option("--input", ingest_input)->required();
  ingest->add_option("--format", ingest_format, "csv or jsonl (default: by extension)");
  ingest->add_option("--output", ingest_output, "Canonical CSV (default: none)");
  ingest->add_option("--report", ingest_report, "Ingest report JSON (default: stdout)");
  ingest->callback([&] {
    action = [&] {
      auto in = open_input(ingest_input);
      auto parsed = tagged("ingest", [&] {
        return parse_events(in, guess_format(ingest_input, ingest_format), strict);
      });
      if (!ingest_output.empty()) {
        emit(ingest_output, [&](std::ostream& out) { write_events_csv(out, parsed.records); });
      }
      emit(ingest_report, [&](std::ostream& out) { out << parsed.report.to_json() << '\n'; });
    };
  });

  // infer-home
  std::string home_events, home_format, home_countries, home_output;
  std::int64_t min_events = 1;
  auto* infer = app.add_subcommand("infer-home", "Assign each user a home country");
  infer->add_option("--events", home_events)->required();
  infer->add_option("--format", home_format);
  infer->add_option("--countries", home_countries, "Country layer GeoJSON")->required();
  infer->add_option("--min-events", min_events)->check(CLI::PositiveNumber);
  infer->add_option("--output", home_output);
  infer->callback([&] {
    action = [&] {
      auto events = read_events(home_events, home_format, strict);
      auto countries = read_layer(home_countries);
      auto homes = tagged("infer-home", [&] {
        CountryLocator locator(countries);
        return infer_homes(events, locator, min_events, threads);
      });
      emit(home_output, [&](std::ostream& out) { write_homes_csv(out, homes); });
    };
  });

  // assign
  std::string assign_events_path, assign_format, assign_layer, assign_output;
  auto* assign = app.add_subcommand("assign", "Assign events to regions of a layer");
  assign->add_option("--events", assign_events_path)->required();
  assign->add_option("--format", assign_format);
  assign->add_option("--layer", assign_layer)->required();
  assign->add_option("--output", assign_output);
  assign->callback([&] {
    action = [&] {
      auto events = read_events(assign_events_path, assign_format, strict);
      auto layer = read_layer(assign_layer);
      auto result = tagged("assign", [&] { return assign_events(events, layer, threads); });
      emit(assign_output, [&](std::ostream& out) { write_assignment_csv(out, result, layer); });
      if (result.overlap_count > 0) {
        std::cerr << "assign: " << result.overlap_count
                  << " event(s) fell in overlapping regions; first region in layer order kept\n";
      }
    };
  });

  // attractiveness / temporal share their inputs
  std::string attr_events, attr_format, attr_homes, attr_layer, attr_output, target = "ES",
                                                                          dataset = "dataset";
  auto* attr = app.add_subcommand("attractiveness", "Foreign-visitor share per region");
  attr->add_option("--events", attr_events)->required();
  attr->add_option("--format", attr_format);
  attr->add_option("--homes", attr_homes, "CSV from infer-home")->required();
  attr->add_option("--layer", attr_layer)->required();
  attr->add_option("--target", target, "Target country (default ES)");
  attr->add_option("--dataset", dataset);
  attr->add_option("--output", attr_output);
  attr->callback([&] {
    action = [&] {
      auto events = read_events(attr_events, attr_format, strict);
      auto origins = read_origins(attr_homes);
      auto layer = read_layer(attr_layer);
      auto table = tagged("attractiveness", [&] {
        auto assignment = assign_events(events, layer, threads);
        return compute_attractiveness(events, assignment.region_of, origins, target, layer, dataset);
      });
      emit(attr_output, [&](std::ostream& out) { write_table_csv(out, table); });
      if (!table.missing_population.empty()) {
        std::cerr << "attractiveness: " << table.missing_population.size()
                  << " region(s) without population excluded\n";
      }
    };
  });

  std::string temporal_csv, temporal_json;
  auto* temporal = app.add_subcommand("temporal", "Scaling exponent over moving three-month seasons");
  temporal->add_option("--events", attr_events)->required();
  temporal->add_option("--format", attr_format);
  temporal->add_option("--homes", attr_homes)->required();
  temporal->add_option("--layer", attr_layer)->required();
  temporal->add_option("--target", target);
  temporal->add_option("--dataset", dataset);
  temporal->add_option("--output", temporal_csv);
  temporal->add_option("--json", temporal_json, "JSON summary");
  temporal->callback([&] {
    action = [&] {
      auto events = read_events(attr_events, attr_format, strict);
      auto origins = read_origins(attr_homes);
      auto layer = read_layer(attr_layer);
      auto series = tagged("temporal", [&] {
        auto assignment = assign_events(events, layer, threads);
        return window_exponents(events, assignment.region_of, origins, layer, target, dataset,
                                threads);
      });
      emit(temporal_csv, [&](std::ostream& out) { write_temporal_csv(out, series); });
      if (!temporal_json.empty()) {
        emit(temporal_json, [&](std::ostream& out) {
          out << temporal_to_json(series, dataset, layer.label()) << '\n';
        });
      }
    };
  });

  // fit / bin / residuals
  std::string table_path, table_output, layer_label;
  std::size_t k = 5;
  auto* fit = app.add_subcommand("fit", "Power-law fit of an attractiveness table");
  fit->add_option("--table", table_path)->required();
  fit->add_option("--dataset", dataset);
  fit->add_option("--layer-label", layer_label);
  fit->add_option("--output", table_output);
  fit->callback([&] {
    action = [&] {
      auto table = read_table(table_path, dataset, layer_label);
      auto result = tagged("fit", [&] { return fit_power_law(table); });
      emit(table_output, [&](std::ostream& out) {
        out << fit_to_json(result, dataset, layer_label) << '\n';
      });
    };
  });

  auto* bin = app.add_subcommand("bin", "Log-binned attractiveness trend");
  bin->add_option("--table", table_path)->required();
  bin->add_option("--k", k, "Number of bins")->check(CLI::PositiveNumber);
  bin->add_option("--output", table_output);
  bin->callback([&] {
    action = [&] {
      auto table = read_table(table_path, dataset, layer_label);
      auto trend = tagged("bin", [&] { return log_bin(table, k); });
      emit(table_output, [&](std::ostream& out) { write_binned_csv(out, trend); });
    };
  });

  auto* resid = app.add_subcommand("residuals", "Scale-free residual score per region");
  resid->add_option("--table", table_path)->required();
  resid->add_option("--output", table_output);
  resid->callback([&] {
    action = [&] {
      auto table = read_table(table_path, dataset, layer_label);
      auto scores = tagged("residuals", [&] { return residuals(table, fit_power_law(table)); });
      emit(table_output, [&](std::ostream& out) { write_residuals_csv(out, scores); });
    };
  });

  // correlate
  std::string res_a, res_b, corr_output;
  auto* corr = app.add_subcommand("correlate", "Pearson correlation of two residual lists");
  corr->add_option("--a", res_a, "residuals CSV")->required();
  corr->add_option("--b", res_b, "residuals CSV")->required();
  corr->add_option("--output", corr_output);
  corr->callback([&] {
    action = [&] {
      auto in_a = open_input(res_a);
      auto in_b = open_input(res_b);
      auto result = tagged("correlate", [&] {
        return correlate_residuals(read_residuals_csv(in_a), read_residuals_csv(in_b));
      });
      nlohmann::json doc = {{"r", round12(result.r)},
                            {"common", result.common},
                            {"only_in_a", result.only_in_a},
                            {"only_in_b", result.only_in_b}};
      emit(corr_output, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
    };
  });

  // synth
  SyntheticSpec spec;
  std::string synth_config, synth_dir, origin_mode;
  std::uint64_t seed = spec.seed;
  bool table_only = false;
  auto* synth = app.add_subcommand("synth", "Generate ground-truth cities and events");
  synth->add_option("--config", synth_config, "Synthetic spec JSON");
  synth->add_option("--seed", seed);
  synth->add_option("--regions", spec.n_regions);
  synth->add_option("--b", spec.b_true, "Ground-truth exponent");
  synth->add_option("--sigma", spec.noise_sigma, "Lognormal noise (log10 units)");
  synth->add_option("--p-min", spec.p_min);
  synth->add_option("--p-max", spec.p_max);
  synth->add_option("--total-events", spec.total_events);
  synth->add_option("--resident-share", spec.resident_share);
  synth->add_option("--target", spec.target_country);
  synth->add_option("--origin-mode", origin_mode, "inferred or declared");
  synth->add_option("--dataset", spec.dataset_tag);
  synth->add_option("--year", spec.year);
  synth->add_option("--output-dir", synth_dir)->required();
  synth->add_flag("--table-only", table_only, "Write only the attractiveness table and truth");
  synth->callback([&] {
    action = [&] {
      if (!synth_config.empty()) {
        auto in = open_input(synth_config);
        std::stringstream buffer;
        buffer << in.rdbuf();
        SyntheticSpec from_file = tagged("synth", [&] { return spec_from_json(buffer.str()); });
        // Explicit flags override the file.
        auto override_if = [&](const char* flag, auto& field, const auto& value) {
          if (synth->count(flag) > 0) field = value;
        };
        override_if("--regions", from_file.n_regions, spec.n_regions);
        override_if("--b", from_file.b_true, spec.b_true);
        override_if("--sigma", from_file.noise_sigma, spec.noise_sigma);
        override_if("--p-min", from_file.p_min, spec.p_min);
        override_if("--p-max", from_file.p_max, spec.p_max);
        override_if("--total-events", from_file.total_events, spec.total_events);
        override_if("--resident-share", from_file.resident_share, spec.resident_share);
        override_if("--target", from_file.target_country, spec.target_country);
        override_if("--dataset", from_file.dataset_tag, spec.dataset_tag);
        override_if("--year", from_file.year, spec.year);
        if (synth->count("--seed") == 0) seed = from_file.seed;
        if (synth->count("--origin-mode") == 0) origin_mode.clear();
        spec = from_file;
      }
      spec.seed = seed;
      if (origin_mode == "declared") {
        spec.origin_mode = OriginMode::declared;
      } else if (origin_mode == "inferred") {
        spec.origin_mode = OriginMode::inferred;
      } else if (!origin_mode.empty()) {
        throw InputError("--origin-mode must be 'inferred' or 'declared'");
      }
      tagged("synth", [&] { spec.validate(); });
      const fs::path dir(synth_dir);
      auto world = tagged("synth", [&] { return generate_world(spec); });
      emit((dir / "table.csv").string(),
           [&](std::ostream& out) { write_table_csv(out, world.truth.table); });
      if (table_only) {
        emit((dir / "truth.json").string(),
             [&](std::ostream& out) { out << truth_to_json(spec, world, nullptr) << '\n'; });
        return;
      }
      auto generated = tagged("synth", [&] { return generate_events(spec, world, threads); });
      emit((dir / "events.csv").string(),
           [&](std::ostream& out) { write_events_csv(out, generated.events); });
      emit((dir / "cities.geojson").string(),
           [&](std::ostream& out) { write_layer_geojson(out, world.cities); });
      emit((dir / "countries.geojson").string(),
           [&](std::ostream& out) { write_layer_geojson(out, world.countries); });
      emit((dir / "truth.json").string(),
           [&](std::ostream& out) { out << truth_to_json(spec, world, &generated) << '\n'; });
    };
  });

  // pipeline
  std::string config_path;
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage from a config file");
  pipeline->add_option("--config", config_path)->required();
  pipeline->callback([&] {
    action = [&] {
      auto config = load_config(config_path);
      auto summary = run_pipeline(config, {threads, strict});
      std::cout << "wrote " << summary.outputs.size() << " files to " << config.output_dir << '\n';
    };
  });

  CLI11_PARSE(app, argc, argv);

  try {
    action();
  } catch (const InputError& e) {
    std::cerr << e.what() << '\n';
    return kExitInput;
  } catch (const StageError& e) {
    std::cerr << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}
