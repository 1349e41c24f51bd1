#include "rfkit/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "rfkit/arch_format.hpp"
#include "rfkit/erf_engine.hpp"
#include "rfkit/erf_io.hpp"
#include "rfkit/presets.hpp"
#include "rfkit/rf_analysis.hpp"
#include "rfkit/transforms.hpp"

namespace rfkit::cli {

namespace {

// Flag-level input problems (bad sizes, unknown presets, unreadable files).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Source {
  std::string arch;
  std::string preset;

  void add_to(CLI::App* cmd) {
    cmd->add_option("arch", arch, "Architecture description file");
    cmd->add_option("--preset", preset, "Built-in preset name");
  }
};

struct Resolved {
  std::optional<NetworkSpec> net;
  std::optional<Axis2> reference_rf;  // constant-only presets
  std::string name;
};

Resolved resolve(const Source& src, bool need_network) {
  if (src.arch.empty() == src.preset.empty())
    throw InputError("give exactly one of an architecture file or --preset");
  Resolved r;
  if (!src.preset.empty()) {
    const auto& cat = presets::catalog();
    auto it = cat.find(src.preset);
    if (it == cat.end()) {
      std::string names;
      for (const auto& [name, entry] : cat) names += (names.empty() ? "" : ", ") + name;
      throw InputError("unknown preset '" + src.preset + "' (available: " + names + ")");
    }
    r.name = src.preset;
    if (it->second.build) {
      r.net = it->second.build();
    } else {
      if (need_network) throw InputError("preset '" + src.preset + "' has no architecture, only a reference RF");
      r.reference_rf = it->second.reference_rf;
    }
    return r;
  }
  std::ifstream probe(src.arch);
  if (!probe) throw InputError("cannot open architecture file '" + src.arch + "'");
  try {
    r.net = load_network_file(src.arch);
  } catch (const ParseError& e) {
    throw InputError(src.arch + ":" + e.what());
  }
  r.name = r.net->name;
  return r;
}

Axis2 parse_axis_flag(const std::string& s, const char* flag) {
  Axis2 a;
  auto x = s.find('x');
  auto num = [&](std::string_view v, int& out) {
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    return ec == std::errc{} && p == v.data() + v.size() && !v.empty() && out >= 1;
  };
  if (x == std::string::npos || !num(std::string_view(s).substr(0, x), a.freq) ||
      !num(std::string_view(s).substr(x + 1), a.time))
    throw InputError(std::string(flag) + " expects <freq>x<time> with positive sizes, got '" + s + "'");
  return a;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << contents;
}

// --------------------------------------------------------------------------

struct RfCmd {
  Source src;
  double fps = 43.0;
  int mel_bins = 256;
};

int do_rf(const RfCmd& c, std::ostream& out) {
  if (c.fps <= 0 || c.mel_bins < 1) throw InputError("--fps must be > 0 and --mel-bins >= 1");
  Resolved r = resolve(c.src, false);
  const SpectrogramContext ctx{c.fps, c.mel_bins};
  out << "network " << r.name << "\n";
  Axis2 rf;
  if (r.net) {
    const RfTrace trace = rf_trace(*r.net);
    rf = trace.final.rf;
    out << "RF " << rf << "\n";
    out << "cumulative stride " << trace.final.cum_stride << "\n";
    out << "params " << count_params(*r.net).total << "\n";
  } else {
    rf = *r.reference_rf;
    out << "RF " << rf << "\n";
  }
  const RfContext ctx_rf = context_of_rf(rf, ctx);
  out << "time span " << fixed(ctx_rf.seconds, 2) << " s (" << rf.time << " frames at "
      << erf::format_double(c.fps) << " fps)\n";
  out << "frequency coverage " << fixed(100.0 * ctx_rf.mel_coverage, 1) << "% (" << rf.freq
      << " of " << c.mel_bins << " mel bins)\n";
  return kExitOk;
}

struct TraceCmd {
  Source src;
  bool csv = false;
};

int do_trace(const TraceCmd& c, std::ostream& out) {
  Resolved r = resolve(c.src, true);
  const RfTrace trace = rf_trace(*r.net);
  if (c.csv) {
    out << "index,layer,S_f,S_t,RF_f,RF_t\n";
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
      const RfStep& s = trace.steps[i];
      out << (i + 1) << ',' << s.description << ',' << s.state.cum_stride.freq << ','
          << s.state.cum_stride.time << ',' << s.state.rf.freq << ',' << s.state.rf.time << '\n';
    }
    return kExitOk;
  }
  out << std::left << std::setw(6) << "#" << std::setw(7) << "layer" << std::setw(24) << "op"
      << std::setw(10) << "stride" << "RF\n";
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const RfStep& s = trace.steps[i];
    out << std::setw(6) << (i + 1) << std::setw(7) << s.layer << std::setw(24) << s.description
        << std::setw(10) << s.state.cum_stride.str() << s.state.rf << '\n';
  }
  out << "final RF " << trace.final.rf << ", cumulative stride " << trace.final.cum_stride << '\n';
  return kExitOk;
}

struct TransformCmd {
  Source src;
  std::string strategy;
  std::string target;
  std::optional<int> count;
  std::vector<std::size_t> insert_after;
  std::vector<std::size_t> remove;
  std::string output;
};

int do_transform(const TransformCmd& c, std::ostream& out) {
  Resolved r = resolve(c.src, true);
  const NetworkSpec& net = *r.net;
  NetworkSpec result;

  auto need_target = [&] {
    if (c.target.empty()) throw InputError("--strategy " + c.strategy + " needs --target");
    return parse_axis_flag(c.target, "--target");
  };
  if (c.strategy == "truncate") {
    result = truncate_tail(net, need_target());
  } else if (c.strategy == "pooling") {
    result = edit_pooling(net, c.insert_after, c.remove);
  } else {
    const AxisSel axes = c.strategy == "convert_time"   ? AxisSel::time
                         : c.strategy == "convert_freq" ? AxisSel::freq
                                                        : AxisSel::both;
    const SolveStrategy solve = c.strategy == "convert_time"   ? SolveStrategy::convert_time
                                : c.strategy == "convert_freq" ? SolveStrategy::convert_freq
                                                               : SolveStrategy::convert_both;
    if (c.count)
      result = convert_tail_filters(net, *c.count, axes);
    else
      result = solve_target_rf(net, need_target(), solve);
  }

  write_file(c.output, serialize_network(result));
  out << "before: RF " << network_rf(net) << " params " << count_params(net).total << "\n";
  out << "after:  RF " << network_rf(result) << " params " << count_params(result).total << "\n";
  out << "wrote " << c.output << "\n";
  return kExitOk;
}

struct SweepCmd {
  Source src;
  std::string strategy;
  double fps = 43.0;
  int mel_bins = 256;
  std::string output;
};

int do_sweep(const SweepCmd& c, std::ostream& out) {
  Resolved r = resolve(c.src, true);
  const SweepStrategy strategy = c.strategy == "convert_time"   ? SweepStrategy::convert_time
                                 : c.strategy == "convert_freq" ? SweepStrategy::convert_freq
                                 : c.strategy == "pooling"      ? SweepStrategy::pooling
                                                                : SweepStrategy::convert_both;
  const SpectrogramContext ctx{c.fps, c.mel_bins};
  std::ostringstream csv;
  csv << "label,count,rf_f,rf_t,params,seconds,mel_coverage\n";
  for (const SweepPoint& p : sweep(*r.net, strategy)) {
    const RfContext rc = context_of_rf(p.rf, ctx);
    csv << p.label << ',' << p.count << ',' << p.rf.freq << ',' << p.rf.time << ',' << p.params << ','
        << erf::format_double(rc.seconds) << ',' << erf::format_double(rc.mel_coverage) << '\n';
  }
  if (c.output.empty())
    out << csv.str();
  else
    write_file(c.output, csv.str());
  return kExitOk;
}

struct ErfCmd {
  Source src;
  std::optional<std::uint64_t> seed;
  bool ones = false;
  double scale = 1.0;
  std::string input = "256x431";
  std::string input_kind = "random";
  std::optional<std::uint64_t> input_seed;
  std::size_t batch = 1;
  std::string at;
  std::optional<std::size_t> channel;
  unsigned workers = 1;
  std::string csv_path;
  std::string pgm_path;
};

int do_erf(const ErfCmd& c, std::ostream& out, std::ostream& err) {
  Resolved r = resolve(c.src, true);
  const NetworkSpec& net = *r.net;
  if (c.ones == c.seed.has_value()) throw InputError("give exactly one of --seed or --ones");
  if (c.batch < 1) throw InputError("--batch must be >= 1");
  const Axis2 size = parse_axis_flag(c.input, "--input");

  const erf::WeightInit init =
      c.ones ? erf::WeightInit{erf::AllOnes{}} : erf::WeightInit{erf::Seeded{*c.seed, c.scale}};
  const auto F = static_cast<std::size_t>(size.freq), T = static_cast<std::size_t>(size.time);
  const auto C = static_cast<std::size_t>(net.input_channels);
  Tensor4 inputs;
  if (c.input_kind == "constant")
    inputs = erf::constant_input(c.batch, C, F, T, 1.0);
  else
    inputs = erf::random_input(c.batch, C, F, T, c.input_seed.value_or(c.seed.value_or(0)));

  erf::ErfOptions opts;
  opts.workers = c.workers;
  if (!c.at.empty()) {
    auto comma = c.at.find(',');
    std::size_t f = 0, t = 0;
    bool ok = comma != std::string::npos;
    if (ok) {
      auto [p1, e1] = std::from_chars(c.at.data(), c.at.data() + comma, f);
      auto [p2, e2] = std::from_chars(c.at.data() + comma + 1, c.at.data() + c.at.size(), t);
      ok = e1 == std::errc{} && e2 == std::errc{} && p1 == c.at.data() + comma &&
           p2 == c.at.data() + c.at.size();
    }
    if (!ok) throw InputError("--at expects <freq>,<time>, got '" + c.at + "'");
    opts.location = erf::Pixel2{f, t};
  }
  if (c.channel) opts.channels = erf::SingleChannel{*c.channel};

  const erf::ErfMap map = erf::estimate_erf(net, init, inputs, opts);
  if (map.degenerate) {
    err << "error: all-zero gradient, ERF is degenerate\n";
    return kExitDegenerate;
  }
  if (!c.csv_path.empty()) {
    std::ostringstream os;
    erf::write_grid_csv(os, map.grid);
    write_file(c.csv_path, os.str());
  }
  if (!c.pgm_path.empty()) {
    std::ostringstream os;
    erf::write_grid_pgm(os, map.grid);
    write_file(c.pgm_path, os.str());
  }

  const Axis2 rf = network_rf(net);
  const bool within = map.support.extent.fits_within(rf);
  out << "peak (" << map.peak.freq << ", " << map.peak.time << ")\n";
  out << "support " << map.support.extent << " at (" << map.support.origin.freq << ", "
      << map.support.origin.time << ")\n";
  out << "analytic RF " << rf << ", support within RF: " << (within ? "yes" : "NO") << "\n";
  if (!within) {
    err << "error: ERF support exceeds the analytic receptive field\n";
    return kExitInternal;
  }
  return kExitOk;
}

struct ShowCmd {
  Source src;
};

int do_show(const ShowCmd& c, std::ostream& out) {
  Resolved r = resolve(c.src, true);
  out << serialize_network(*r.net);
  return kExitOk;
}

int do_presets(std::ostream& out) {
  for (const auto& [name, entry] : presets::catalog()) {
    out << std::left << std::setw(12) << name << entry.description;
    if (entry.build) {
      const NetworkSpec net = entry.build();
      out << " [RF " << network_rf(net) << ", " << count_params(net).total << " params]";
    } else if (entry.reference_rf) {
      out << " [RF " << *entry.reference_rf << "]";
    }
    out << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Receptive-field analysis for spectrogram CNNs", "rfkit");
  app.require_subcommand(1);

  const std::vector<std::string> convert_names = {"convert_both", "convert_time", "convert_freq"};

  RfCmd rf;
  auto* rf_app = app.add_subcommand("rf", "Print the receptive field of a network");
  rf.src.add_to(rf_app);
  rf_app->add_option("--fps", rf.fps, "Spectrogram frames per second")->capture_default_str();
  rf_app->add_option("--mel-bins", rf.mel_bins, "Number of mel bins")->capture_default_str();

  TraceCmd trace;
  auto* trace_app = app.add_subcommand("trace", "Per-layer cumulative stride and RF");
  trace.src.add_to(trace_app);
  trace_app->add_flag("--csv", trace.csv, "Machine-readable output");

  TransformCmd transform;
  auto* transform_app = app.add_subcommand("transform", "Rewrite a network to change its RF");
  transform.src.add_to(transform_app);
  transform_app->add_option("--strategy", transform.strategy)
      ->required()
      ->check(CLI::IsMember({"truncate", "convert_both", "convert_time", "convert_freq", "pooling"}));
  transform_app->add_option("--target", transform.target, "Target RF <freq>x<time>");
  transform_app->add_option("--count", transform.count, "Number of tail convs to convert");
  transform_app->add_option("--insert-after", transform.insert_after, "Insert 2x2 max pools after these layers")
      ->delimiter(',');
  transform_app->add_option("--remove", transform.remove, "Remove the pools at these layers")->delimiter(',');
  transform_app->add_option("-o,--output", transform.output, "Output architecture file")->required();

  SweepCmd sw;
  auto* sweep_app = app.add_subcommand("sweep", "CSV of systematically modified networks");
  sw.src.add_to(sweep_app);
  sweep_app->add_option("--strategy", sw.strategy)
      ->required()
      ->check(CLI::IsMember({"convert_both", "convert_time", "convert_freq", "pooling"}));
  sweep_app->add_option("--fps", sw.fps)->capture_default_str();
  sweep_app->add_option("--mel-bins", sw.mel_bins)->capture_default_str();
  sweep_app->add_option("-o,--output", sw.output, "Write CSV here instead of stdout");

  ErfCmd erf_cmd;
  auto* erf_app = app.add_subcommand("erf", "Estimate the effective receptive field");
  erf_cmd.src.add_to(erf_app);
  erf_app->add_option("--seed", erf_cmd.seed, "Seeded uniform weights");
  erf_app->add_flag("--ones", erf_cmd.ones, "All weights set to one");
  erf_app->add_option("--scale", erf_cmd.scale, "Seeded weight scale")->capture_default_str();
  erf_app->add_option("--input", erf_cmd.input, "Input size <freq>x<time>")->capture_default_str();
  erf_app->add_option("--input-kind", erf_cmd.input_kind)
      ->check(CLI::IsMember({"random", "constant"}))
      ->capture_default_str();
  erf_app->add_option("--input-seed", erf_cmd.input_seed, "Seed for random inputs (default: --seed)");
  erf_app->add_option("--batch", erf_cmd.batch, "Number of input samples")->capture_default_str();
  erf_app->add_option("--at", erf_cmd.at, "Output pixel <freq>,<time> (default: center)");
  erf_app->add_option("--channel", erf_cmd.channel, "Seed a single output channel");
  erf_app->add_option("--workers", erf_cmd.workers, "Worker threads")->capture_default_str();
  erf_app->add_option("--csv", erf_cmd.csv_path, "Write the normalized grid as CSV");
  erf_app->add_option("--pgm", erf_cmd.pgm_path, "Write the normalized grid as PGM");

  ShowCmd show;
  auto* show_app = app.add_subcommand("show", "Print the canonical architecture description");
  show.src.add_to(show_app);

  auto* presets_app = app.add_subcommand("presets", "List built-in presets");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    // --help and friends exit cleanly; every other flag problem is a parse error.
    return app.exit(e, out, err) == 0 ? kExitOk : kExitParse;
  }

  try {
    if (rf_app->parsed()) return do_rf(rf, out);
    if (trace_app->parsed()) return do_trace(trace, out);
    if (transform_app->parsed()) return do_transform(transform, out);
    if (sweep_app->parsed()) return do_sweep(sw, out);
    if (erf_app->parsed()) return do_erf(erf_cmd, out, err);
    if (show_app->parsed()) return do_show(show, out);
    if (presets_app->parsed()) return do_presets(out);
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const ValidationError& e) {
    err << "invalid network:\n";
    for (const Diagnostic& d : e.diagnostics()) err << "  layer " << d.layer << ": " << d.message << "\n";
    return kExitValidation;
  } catch (const TransformError& e) {
    err << "transform failed: " << e.what() << "\n";
    return kExitTransform;
  } catch (const erf::EngineError& e) {
    err << "error: " << e.what() << "\n";
    return kExitParse;
  }
  return kExitOk;
}

}  // namespace rfkit::cli
