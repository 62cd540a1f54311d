#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "rcmcal/errors.hpp"
#include "rcmcal/io.hpp"

namespace rcmcal {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::string input;
  std::string result;
  std::string output;
  std::string output_dir;
  std::string format = "csv";
  std::optional<std::uint64_t> seed;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Json load(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing --") + what);
  if (!fs::is_regular_file(path)) throw Error(ErrorKind::io, std::string(what) + " file not found: " + path);
  return read_json_file(path);
}

CalibrationConfig calibration_from(const Json& doc) {
  if (doc.is_object() && doc.contains("calibration")) return calibration_config_from_json(doc.at("calibration"));
  return {};
}

ScenarioConfig scenario_from(const Options& o) {
  ScenarioConfig cfg = scenario_from_json(load(o.config, "config"));
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

// Destination for a document: --output wins, then --output-dir/<name>, else
// the caller's stream.
std::optional<fs::path> destination(const Options& o, const std::string& name) {
  if (!o.output.empty()) return fs::path(o.output);
  if (!o.output_dir.empty()) {
    fs::create_directories(o.output_dir);
    return fs::path(o.output_dir) / name;
  }
  return std::nullopt;
}

void emit(const std::optional<fs::path>& path, const std::string& text, std::ostream& out) {
  if (path) {
    write_text_file(*path, text);
  } else {
    out << text;
  }
}

std::string render_metrics(const MetricsReport& m, const std::string& format) {
  return format == "json" ? to_json(m).dump(2) + "\n" : metrics_to_csv(m);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void print_summary(const CalibrationResult& r, std::ostream& out) {
  out << "frames_used " << r.frames_used << "\n"
      << "alignment_rmsd_mm " << fmt(r.alignment_rmsd) << "\n"
      << "rcm_distance_phase1_mm " << fmt(r.diagnostics.mean_rcm_distance_phase1) << "\n"
      << "rcm_distance_phase2_mm " << fmt(r.diagnostics.mean_rcm_distance_phase2) << "\n";
}

int run_simulate(const Options& o, std::ostream& out) {
  const ScenarioConfig cfg = scenario_from(o);
  const auto frames = generate_sequence(cfg);
  emit(destination(o, "sequence.json"), to_json(make_sequence(cfg, frames)).dump(2) + "\n", out);
  return kExitOk;
}

int run_calibrate(const Options& o, std::ostream& out) {
  const Sequence seq = sequence_from_json(load(o.input, "input"));
  const CalibrationConfig config = o.config.empty() ? CalibrationConfig{} : calibration_from(load(o.config, "config"));
  const CalibrationResult r = calibrate(seq, config);
  const auto path = destination(o, "result.json");
  emit(path, to_json(r).dump(2) + "\n", out);
  if (path) print_summary(r, out);
  return kExitOk;
}

int run_evaluate(const Options& o, std::ostream& out) {
  const Sequence seq = sequence_from_json(load(o.input, "input"));
  const CalibrationResult r = result_from_json(load(o.result, "result"));
  const MetricsReport m = evaluate(r, seq);
  emit(destination(o, o.format == "json" ? "metrics.json" : "metrics.csv"), render_metrics(m, o.format), out);
  return kExitOk;
}

int run_pipeline(const Options& o, std::ostream& out) {
  const Json doc = load(o.config, "config");
  ScenarioConfig cfg = scenario_from_json(doc);
  if (o.seed) cfg.seed = *o.seed;
  const CalibrationConfig config = calibration_from(doc);

  const auto frames = generate_sequence(cfg);
  const Sequence seq = make_sequence(cfg, frames);
  const CalibrationResult r = calibrate(seq, config);
  const MetricsReport after = evaluate(r, seq);
  const MetricsReport before = evaluate_transform(cfg.camera_from_base, seq);

  if (!o.output_dir.empty()) {
    fs::create_directories(o.output_dir);
    const fs::path dir(o.output_dir);
    write_json_file(dir / "sequence.json", to_json(seq));
    write_json_file(dir / "result.json", to_json(r));
    write_text_file(dir / (o.format == "json" ? "metrics.json" : "metrics.csv"), render_metrics(after, o.format));
  }

  const RigidTransform truth = ground_truth_bundle(cfg, frames).effective_camera_from_base;
  const double rotation_error = rotation_distance(r.camera_from_base, truth);
  print_summary(r, out);
  out << "rotation_error_rad " << fmt(rotation_error) << "\n"
      << "rotation_error_deg " << fmt(rotation_error * 180.0 / 3.14159265358979323846) << "\n"
      << "translation_error_mm " << fmt((r.camera_from_base.translation() - truth.translation()).norm()) << "\n"
      << "median_err3d_mm_uncorrected " << fmt(before.err3d_mm.median) << "\n"
      << "median_err3d_mm_corrected " << fmt(after.err3d_mm.median) << "\n"
      << "median_err2d_px_corrected " << fmt(after.err2d_px.median) << "\n";
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Markerless hand-eye calibration for RCM-constrained instruments"};
  app.require_subcommand(1);
  Options o;

  const auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Override the scenario seed");
  };
  const auto add_outputs = [&](CLI::App* sub) {
    sub->add_option("--output", o.output, "Output file (default: stdout)");
    sub->add_option("--output-dir", o.output_dir, "Directory for output files");
  };
  const auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", o.format, "Metrics format")->check(CLI::IsMember({"json", "csv"}));
  };

  CLI::App* simulate = app.add_subcommand("simulate", "Scenario config JSON -> sequence JSON");
  simulate->add_option("--config", o.config, "Scenario config JSON")->required();
  add_seed(simulate);
  add_outputs(simulate);

  CLI::App* calibrate_cmd = app.add_subcommand("calibrate", "Sequence JSON -> result JSON with diagnostics");
  calibrate_cmd->add_option("--input", o.input, "Sequence JSON")->required();
  calibrate_cmd->add_option("--config", o.config, "Config JSON; its \"calibration\" member is used");
  add_outputs(calibrate_cmd);

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "Result + sequence -> tool-tip metrics");
  evaluate_cmd->add_option("--input", o.input, "Sequence JSON")->required();
  evaluate_cmd->add_option("--result", o.result, "Result JSON")->required();
  add_format(evaluate_cmd);
  add_outputs(evaluate_cmd);

  CLI::App* pipeline = app.add_subcommand("pipeline", "Simulate, calibrate and evaluate from one config");
  pipeline->add_option("--config", o.config, "Scenario config JSON")->required();
  add_seed(pipeline);
  add_format(pipeline);
  pipeline->add_option("--output-dir", o.output_dir, "Directory for sequence, result and metrics files");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) return run_simulate(o, out);
    if (calibrate_cmd->parsed()) return run_calibrate(o, out);
    if (evaluate_cmd->parsed()) return run_evaluate(o, out);
    return run_pipeline(o, out);
  } catch (const UsageError& e) {
    err << "error: usage: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    const bool usage = e.kind() == ErrorKind::io || e.kind() == ErrorKind::invalid_config;
    return usage ? kExitUsage : kExitRuntime;
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace rcmcal
