#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "symalign/symalign.hpp"

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace symalign;

enum Exit : int { exit_ok = 0, exit_failure = 1, exit_not_converged = 2, exit_io = 3, exit_config = 4 };

class ConfigInvalid : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// "1deg", "0.0175rad" -> radians. A unit is mandatory.
double parse_angle(const std::string& text) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  const auto r = std::from_chars(begin, end, value);
  if (r.ec != std::errc() || r.ptr == begin) throw ConfigInvalid("angle '" + text + "' is not a number");
  const std::string unit(r.ptr, end);
  if (!std::isfinite(value)) throw ConfigInvalid("angle '" + text + "' is not finite");
  if (unit == "deg") return deg_to_rad(value);
  if (unit == "rad") return value;
  throw ConfigInvalid("angle '" + text + "' needs a deg or rad suffix");
}

// Config paths per subcommand, filled by CLI11 and applied after parsing.
std::map<CLI::App*, std::string>& config_paths() {
  static std::map<CLI::App*, std::string> paths;
  return paths;
}

void attach_config(CLI::App* sub) {
  sub->add_option("--config", config_paths()[sub], "key: value file; command-line flags take precedence");
}

// Each key names a long option of the subcommand. Values given on the
// command line win; unknown keys are rejected.
void apply_config(CLI::App* sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatErrorCode::Io, "cannot open config " + path);
  std::vector<std::pair<std::string, std::string>> items;
  try {
    items = parse_key_values(in);
  } catch (const FormatError& e) {
    throw ConfigInvalid(std::string("config ") + path + ": " + e.what());
  }
  for (const auto& [key, value] : items) {
    CLI::Option* opt = key == "config" || key == "help" ? nullptr : sub->get_option_no_throw("--" + key);
    if (opt == nullptr) throw ConfigInvalid("config " + path + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

void require_path(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigInvalid(std::string(flag) + " is required");
}

void write_text(const fs::path& path, const std::string& text) { detail::write_file(path, text); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json trace_json(const AlignmentResult& r) {
  json out = json::array();
  for (const TraceEntry& e : r.trace) {
    out.push_back({{"k", e.k}, {"h_px", e.h}, {"eta_deg", rad_to_deg(e.eta)}, {"loss", e.loss}});
  }
  return out;
}

json report_json(const std::string& command, const std::string& input, const AlignmentResult& r,
                 std::optional<double> pixel_size_mm, double seconds, json config) {
  json j;
  j["command"] = command;
  j["input"] = input;
  j["method"] = std::string(to_string(r.method));
  j["h_px"] = r.h;
  j["h_mm"] = pixel_size_mm ? json(r.h * *pixel_size_mm) : json(nullptr);
  j["eta_deg"] = rad_to_deg(r.eta);
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["mse"] = r.mse;
  j["seconds"] = seconds;
  j["trace"] = trace_json(r);
  j["config"] = std::move(config);
  return j;
}

int emit_report(const json& report, const std::string& report_path, bool converged) {
  const std::string text = report.dump(2) + "\n";
  if (!report_path.empty()) write_text(report_path, text);
  std::cout << text;
  return converged ? exit_ok : exit_not_converged;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string mode = "fan";
  std::size_t n = 256;
  std::uint64_t seed = 1;
  double h = 10.0;
  std::string eta = "0deg";
  double alpha = 0.0;
  std::size_t features = 30;
  double enclosing_radius = 0.8;
  double source_radius = 2.0;
  std::size_t aperture = 1;
  std::string out;
  std::string truth;
  bool sidecar = false;
  std::optional<double> pixel_size_mm;
};

void add_simulate(CLI::App& app, SimulateArgs& a) {
  auto* sub = app.add_subcommand("simulate", "Write simulated misaligned data plus a ground-truth sidecar");
  sub->add_option("--mode", a.mode, "fan or cone")->check(CLI::IsMember({"fan", "cone"}))->capture_default_str();
  sub->add_option("--n", a.n, "Detector samples per axis and number of views")->capture_default_str();
  sub->add_option("--seed", a.seed, "Phantom seed")->capture_default_str();
  sub->add_option("--h", a.h, "Detector shift in effective pixels")->capture_default_str();
  sub->add_option("--eta", a.eta, "In-plane detector rotation (cone), e.g. 1deg")->capture_default_str();
  sub->add_option("--alpha", a.alpha, "Beam instability amplitude")->capture_default_str();
  sub->add_option("--features", a.features, "Number of void disks or spheres")->capture_default_str();
  sub->add_option("--enclosing-radius", a.enclosing_radius, "Radius of the enclosing disk or cylinder")
      ->capture_default_str();
  sub->add_option("--source-radius", a.source_radius, "Source distance r")->capture_default_str();
  sub->add_option("--aperture", a.aperture, "Cone: n x n line integrals averaged per pixel")->capture_default_str();
  sub->add_option("--out", a.out, "Output data file (required)");
  sub->add_option("--truth", a.truth, "Ground-truth JSON (default: <out>.truth.json)");
  sub->add_flag("--sidecar", a.sidecar, "Write the payload to <out>.raw");
  sub->add_option("--pixel-size-mm", a.pixel_size_mm, "Effective pixel size recorded in the header");
  attach_config(sub);
}

int run_simulate(const SimulateArgs& a) {
  require_path(a.out, "--out");
  const double eta = parse_angle(a.eta);
  if (a.n < 2) throw ConfigInvalid("--n must be >= 2");
  WriteOptions opts{a.sidecar, a.pixel_size_mm};
  json truth;
  truth["mode"] = a.mode;
  truth["seed"] = a.seed;
  truth["h_px"] = a.h;
  truth["eta_deg"] = rad_to_deg(eta);
  truth["alpha"] = a.alpha;
  truth["n"] = a.n;
  truth["features"] = a.features;
  truth["enclosing_radius"] = a.enclosing_radius;
  truth["source_radius"] = a.source_radius;

  if (a.mode == "fan") {
    if (eta != 0.0) throw ConfigInvalid("--eta applies to cone mode only");
    FanProtocol p;
    p.n_s = p.n_beta = a.n;
    p.source_radius = a.source_radius;
    p.n_disks = a.features;
    p.enclosing_radius = a.enclosing_radius;
    p.h_px = a.h;
    p.alpha = a.alpha;
    p.seed = a.seed;
    write_sinogram(a.out, p.simulate(), opts);
  } else {
    ConeProtocol p;
    p.n = a.n;
    p.source_radius = a.source_radius;
    p.n_spheres = a.features;
    p.cylinder_radius = a.enclosing_radius;
    p.h_px = a.h;
    p.eta = eta;
    p.alpha = a.alpha;
    p.aperture = a.aperture;
    p.seed = a.seed;
    truth["aperture"] = a.aperture;
    write_stack(a.out, p.simulate(), opts);
  }
  write_text(a.truth.empty() ? a.out + ".truth.json" : a.truth, truth.dump(2) + "\n");
  return exit_ok;
}

// --------------------------------------------------------------- align-fan

struct FanArgs {
  std::string input;
  std::string method = "2dr";
  int K = 10;
  int max_iter = 20;
  double tol_h = 0.01;
  int upsample = default_upsample;
  std::size_t beta_index = 0;
  std::string report;
  std::optional<double> pixel_size_mm;
};

void add_fan_options(CLI::App* sub, FanArgs& a) {
  sub->add_option("--K", a.K, "Number of fixed-point runs for fpk")->capture_default_str();
  sub->add_option("--max-iter", a.max_iter, "Fixed-point iteration cap")->capture_default_str();
  sub->add_option("--tol-h", a.tol_h, "Fixed-point tolerance in pixels")->capture_default_str();
  sub->add_option("--upsample", a.upsample, "Registration upsampling factor")->capture_default_str();
}

FanAlignConfig fan_config(const FanArgs& a) {
  FanAlignConfig c;
  c.K = a.K;
  c.max_iter = a.max_iter;
  c.tol_h = a.tol_h;
  c.upsample = a.upsample;
  c.beta_index = a.beta_index;
  return c;
}

json fan_config_json(const FanArgs& a) {
  return {{"K", a.K}, {"max_iter", a.max_iter}, {"tol_h", a.tol_h}, {"upsample", a.upsample}};
}

void add_align_fan(CLI::App& app, FanArgs& a) {
  auto* sub = app.add_subcommand("align-fan", "Estimate the detector shift of a fan-beam sinogram");
  sub->add_option("--input", a.input, "Sinogram file (required)");
  sub->add_option("--method", a.method, "yang, ly, 2dr, fp or fpk")
      ->check(CLI::IsMember({"yang", "ly", "2dr", "fp", "fpk"}))
      ->capture_default_str();
  add_fan_options(sub, a);
  sub->add_option("--beta-index", a.beta_index, "Starting view for fp")->capture_default_str();
  sub->add_option("--report", a.report, "Also write the JSON report here");
  sub->add_option("--pixel-size-mm", a.pixel_size_mm, "Overrides the header's pixel size");
  attach_config(sub);
}

int run_align_fan(const FanArgs& a) {
  require_path(a.input, "--input");
  FanAlignConfig cfg = fan_config(a);
  cfg.method = parse_method(a.method);
  cfg.validate();
  const DataSet ds = read_dataset(a.input);
  if (!ds.is_fan()) throw ConfigInvalid("align-fan needs a fan sinogram; use align-cone");
  const auto t0 = std::chrono::steady_clock::now();
  const AlignmentResult r = align_fan(ds.fan(), cfg);
  const double seconds = seconds_since(t0);
  json config = fan_config_json(a);
  config["method"] = a.method;
  config["beta_index"] = a.beta_index;
  const auto px = a.pixel_size_mm ? a.pixel_size_mm : ds.pixel_size_mm;
  return emit_report(report_json("align-fan", a.input, r, px, seconds, config), a.report, r.converged);
}

// -------------------------------------------------------------- align-cone

struct ConeArgs {
  FanArgs fan;
  std::string inner = "2dr";
  std::string eta0 = "0deg";
  std::string delta_eta = "0.001rad";
  double gamma0 = 1.0;
  double armijo_c = 1e-4;
  int max_outer = 20;
  std::string tol_eta = "0.0001rad";
  bool plain_steps = false;
};

void add_align_cone(CLI::App& app, ConeArgs& a) {
  auto* sub = app.add_subcommand("align-cone", "Estimate detector shift and in-plane rotation of a cone-beam stack");
  sub->add_option("--input", a.fan.input, "Projection stack file (required)");
  sub->add_option("--inner", a.inner, "Inner shift solver: 2dr or fpk")
      ->check(CLI::IsMember({"2dr", "fpk"}))
      ->capture_default_str();
  sub->add_option("--eta0", a.eta0, "Initial angle")->capture_default_str();
  sub->add_option("--delta-eta", a.delta_eta, "Finite-difference step")->capture_default_str();
  sub->add_option("--gamma0", a.gamma0, "Initial step size")->capture_default_str();
  sub->add_option("--armijo-c", a.armijo_c, "Sufficient-decrease constant")->capture_default_str();
  sub->add_option("--max-outer", a.max_outer, "Gradient-descent iteration cap")->capture_default_str();
  sub->add_option("--tol-eta", a.tol_eta, "Angular convergence threshold")->capture_default_str();
  sub->add_flag("--plain-steps", a.plain_steps, "Start every line search at gamma0 (no curvature cap)");
  add_fan_options(sub, a.fan);
  sub->add_option("--report", a.fan.report, "Also write the JSON report here");
  sub->add_option("--pixel-size-mm", a.fan.pixel_size_mm, "Overrides the header's pixel size");
  attach_config(sub);
}

int run_align_cone(const ConeArgs& a) {
  require_path(a.fan.input, "--input");
  VPConfig cfg;
  cfg.inner = a.inner == "fpk" ? Method::FPK : Method::TwoDR;
  cfg.eta0 = parse_angle(a.eta0);
  cfg.delta_eta = parse_angle(a.delta_eta);
  cfg.gamma0 = a.gamma0;
  cfg.armijo_c = a.armijo_c;
  cfg.max_outer = a.max_outer;
  cfg.tol_eta = parse_angle(a.tol_eta);
  cfg.curvature_step = !a.plain_steps;
  cfg.fan = fan_config(a.fan);
  cfg.validate();
  const DataSet ds = read_dataset(a.fan.input);
  if (ds.is_fan()) throw ConfigInvalid("align-cone needs a cone stack; use align-fan");
  const auto t0 = std::chrono::steady_clock::now();
  const AlignmentResult r = variable_projection(ds.cone(), cfg);
  const double seconds = seconds_since(t0);
  json config = fan_config_json(a.fan);
  config["inner"] = a.inner;
  config["eta0_deg"] = rad_to_deg(cfg.eta0);
  config["delta_eta_rad"] = cfg.delta_eta;
  config["gamma0"] = cfg.gamma0;
  config["armijo_c"] = cfg.armijo_c;
  config["max_outer"] = cfg.max_outer;
  config["tol_eta_rad"] = cfg.tol_eta;
  config["curvature_step"] = cfg.curvature_step;
  const auto px = a.fan.pixel_size_mm ? a.fan.pixel_size_mm : ds.pixel_size_mm;
  return emit_report(report_json("align-cone", a.fan.input, r, px, seconds, config), a.fan.report, r.converged);
}

// ------------------------------------------------------------------ metric

struct MetricArgs {
  std::string input;
  double h = 0.0;
  std::string eta = "0deg";
};

void add_metric(CLI::App& app, MetricArgs& a) {
  auto* sub = app.add_subcommand("metric", "Symmetry MSE of a data set at a candidate centre");
  sub->add_option("--input", a.input, "Sinogram or stack file (required)");
  sub->add_option("--h", a.h, "Candidate shift in effective pixels")->capture_default_str();
  sub->add_option("--eta", a.eta, "Candidate rotation for cone data")->capture_default_str();
  attach_config(sub);
}

int run_metric(const MetricArgs& a) {
  require_path(a.input, "--input");
  const double eta = parse_angle(a.eta);
  const DataSet ds = read_dataset(a.input);
  double mse = 0.0;
  if (ds.is_fan()) {
    if (eta != 0.0) throw ConfigInvalid("--eta applies to cone data only");
    mse = symmetry_mse(ds.fan(), a.h);
  } else {
    mse = symmetry_mse(tilted_fan(ds.cone(), eta), a.h);
  }
  json j{{"input", a.input}, {"h_px", a.h}, {"eta_deg", rad_to_deg(eta)}, {"mse", mse}};
  std::cout << j.dump(2) << "\n";
  return exit_ok;
}

// ------------------------------------------------------------------- sweep

struct SweepArgs {
  std::size_t n = 256;
  std::uint64_t seed = 1;
  double h = 10.0;
  std::size_t features = 30;
  double enclosing_radius = 0.8;
  std::vector<double> alphas{0.0, 0.002, 0.004, 0.006, 0.008, 0.01};
  std::vector<std::string> methods{"yang", "ly", "2dr", "fp", "fpk"};
  int K = 10;
  std::string out;
  bool no_timing = false;
};

void add_sweep(CLI::App& app, SweepArgs& a) {
  auto* sub = app.add_subcommand("sweep", "Shift error against beam instability, one CSV row per (alpha, method)");
  sub->add_option("--n", a.n, "Detector samples and views")->capture_default_str();
  sub->add_option("--seed", a.seed, "Phantom seed")->capture_default_str();
  sub->add_option("--h", a.h, "True shift in effective pixels")->capture_default_str();
  sub->add_option("--features", a.features, "Number of void disks")->capture_default_str();
  sub->add_option("--enclosing-radius", a.enclosing_radius, "Radius of the enclosing disk")->capture_default_str();
  sub->add_option("--alphas", a.alphas, "Instability amplitudes")->delimiter(',')->capture_default_str();
  sub->add_option("--methods", a.methods, "Fan methods")
      ->delimiter(',')
      ->check(CLI::IsMember({"yang", "ly", "2dr", "fp", "fpk"}))
      ->capture_default_str();
  sub->add_option("--K", a.K, "Runs for fpk")->capture_default_str();
  sub->add_option("--out", a.out, "CSV path (default: stdout)");
  sub->add_flag("--no-timing", a.no_timing, "Write 0 in the seconds column (byte-reproducible output)");
  attach_config(sub);
}

std::string format_number(double x) {
  std::ostringstream ss;
  ss.precision(10);
  ss << x;
  return ss.str();
}

int run_sweep(const SweepArgs& a) {
  FanProtocol p;
  p.n_s = p.n_beta = a.n;
  p.seed = a.seed;
  p.h_px = a.h;
  p.n_disks = a.features;
  p.enclosing_radius = a.enclosing_radius;
  const Phantom2D phantom = p.phantom();
  const FanGeometry geom = p.geometry();

  std::string csv = "alpha,method,abs_error_px,seconds\n";
  for (double alpha : a.alphas) {
    const Sinogram sino = fan_project(phantom, geom, p.h_px, InstabilityModel{alpha});
    for (const std::string& name : a.methods) {
      FanAlignConfig cfg;
      cfg.method = parse_method(name);
      cfg.K = a.K;
      cfg.evaluate_mse = false;
      const auto t0 = std::chrono::steady_clock::now();
      const AlignmentResult r = align_fan(sino, cfg);
      const double seconds = a.no_timing ? 0.0 : seconds_since(t0);
      csv += format_number(alpha) + "," + name + "," + format_number(std::abs(r.h - p.h_px)) + "," +
             format_number(seconds) + "\n";
    }
  }
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    write_text(a.out, csv);
  }
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detector misalignment estimation from fan- and cone-beam symmetry"};
  // --h is the shift, so help has no short form (subcommands inherit this).
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);

  SimulateArgs sim;
  FanArgs fan;
  ConeArgs cone;
  MetricArgs metric;
  SweepArgs sweep;
  add_simulate(app, sim);
  add_align_fan(app, fan);
  add_align_cone(app, cone);
  add_metric(app, metric);
  add_sweep(app, sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config;
  }

  try {
    for (CLI::App* sub : app.get_subcommands()) {
      const std::string& path = config_paths()[sub];
      if (!path.empty()) apply_config(sub, path);
    }
    if (app.got_subcommand("simulate")) return run_simulate(sim);
    if (app.got_subcommand("align-fan")) return run_align_fan(fan);
    if (app.got_subcommand("align-cone")) return run_align_cone(cone);
    if (app.got_subcommand("metric")) return run_metric(metric);
    if (app.got_subcommand("sweep")) return run_sweep(sweep);
  } catch (const CLI::Error& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return exit_config;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_io;
  } catch (const ConfigInvalid& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_config;
  } catch (const RegistrationError& e) {
    std::cerr << "error: estimator did not produce a result: " << e.what() << "\n";
    return exit_not_converged;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid configuration: " << e.what() << "\n";
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_failure;
  }
  return exit_failure;
}
