// Acceptance gate: one PASS/FAIL line per criterion; exit status is non-zero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "rfkit/arch_format.hpp"
#include "rfkit/cli.hpp"
#include "rfkit/erf_engine.hpp"
#include "rfkit/presets.hpp"
#include "rfkit/rf_analysis.hpp"
#include "rfkit/transforms.hpp"
#include "support/random_nets.hpp"

using namespace rfkit;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail = what;
      pass = false;
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

// Hand-traced before implementation: stem 5x5/2 then the residual table.
constexpr int kHandTracedRf = 135;

Outcome rf_equality() {
  Outcome o;
  std::string timings;
  for (auto [name, build] : {std::pair{"rn1", presets::build_rn1}, std::pair{"rn2", presets::build_rn2},
                             std::pair{"rn3", presets::build_rn3}}) {
    const auto net = build();
    const auto t0 = Clock::now();
    const Axis2 rf = network_rf(net);
    const double ms = seconds_since(t0) * 1e3;
    o.require(rf == Axis2::square(kHandTracedRf), std::string(name) + " RF " + rf.str());
    o.require(ms < 1.0, std::string(name) + " took " + fmt(ms) + " ms");
    timings += std::string(timings.empty() ? "" : ", ") + name + " " + rf.str() + " in " + fmt(ms) + " ms";
  }
  if (o.pass) o.detail = timings;
  return o;
}

Outcome structure() {
  Outcome o;
  const auto b1 = block_spans(presets::build_rn1()).size();
  const auto b2 = block_spans(presets::build_rn2()).size();
  o.require(b1 == 5, "RN1 has " + std::to_string(b1) + " blocks");
  o.require(b2 == 12, "RN2 has " + std::to_string(b2) + " blocks");
  if (o.pass) o.detail = "RN1 5 blocks, RN2 12 blocks";
  return o;
}

Outcome param_ordering() {
  Outcome o;
  const auto rn1 = count_params(presets::build_rn1()).total;
  const auto rn2 = count_params(presets::build_rn2()).total;
  const auto dn1 = count_params(presets::build_dn1()).total;
  o.require(rn2 > dn1 && dn1 > rn1, "ordering violated");
  o.detail = "RN2 " + std::to_string(rn2) + " (delta vs published " + std::to_string(rn2 - 6053780) + ") > DN1 " +
             std::to_string(dn1) + " (delta " + std::to_string(dn1 - 5269902) + ") > RN1 " + std::to_string(rn1) +
             " (delta " + std::to_string(rn1 - 3258772) + ")";
  return o;
}

Outcome pooling_invariance() {
  Outcome o;
  const auto base = presets::build_rn_base();
  const auto before = count_params(base).total;
  std::vector<std::size_t> pools, slots{0};
  for (std::size_t i = 0; i < base.layers.size(); ++i)
    if (base.layers[i].is<Pool>()) pools.push_back(i);
  for (const auto& s : block_spans(base)) slots.push_back(s.end);

  std::mt19937_64 rng(4);
  int edits = 0;
  while (edits < 20) {
    std::vector<std::size_t> ins, rem;
    for (std::size_t s : slots)
      if (testing::uniform(rng, 0, 4) == 0) ins.push_back(s);
    for (std::size_t p : pools)
      if (testing::uniform(rng, 0, 2) == 0) rem.push_back(p);
    if (ins.empty() && rem.empty()) continue;
    const auto out = edit_pooling(base, ins, rem);
    o.require(validate_network(out).empty(), "edit " + std::to_string(edits) + " does not validate");
    o.require(count_params(out).total == before, "edit " + std::to_string(edits) + " changed params");
    ++edits;
  }
  if (o.pass) o.detail = "20 edits, params " + std::to_string(before) + " each";
  return o;
}

bool fits_on(Axis2 rf, Axis2 target, AxisSel axes) {
  const bool f = rf.freq <= target.freq, t = rf.time <= target.time;
  return axes == AxisSel::both ? f && t : axes == AxisSel::time ? t : f;
}

Outcome solver_tightness() {
  Outcome o;
  const auto base = presets::build_rn_base();
  const Axis2 target{135, 135};
  std::string summary;

  // truncate: re-adding the first removed unit must overshoot
  {
    const auto out = solve_target_rf(base, target, SolveStrategy::truncate);
    const auto spans = block_spans(base);
    const std::size_t kept = block_spans(out).size();
    NetworkSpec longer = out;
    std::size_t e = spans[kept].end + 1;
    while (e < base.layers.size() && base.layers[e].is<Pool>()) ++e;
    longer.layers.insert(longer.layers.end() - 2, base.layers.begin() + static_cast<std::ptrdiff_t>(spans[kept].begin),
                         base.layers.begin() + static_cast<std::ptrdiff_t>(e));
    o.require(network_rf(out).fits_within(target), "truncate misses target");
    o.require(!network_rf(longer).fits_within(target), "truncate is not tight");
    summary += "truncate " + network_rf(out).str() + " (+1 block " + network_rf(longer).str() + ")";
  }

  // convert strategies: single-axis ones start from the base with the other axis already at target
  for (auto [s, axes, name] : {std::tuple{SolveStrategy::convert_both, AxisSel::both, "convert_both"},
                               std::tuple{SolveStrategy::convert_time, AxisSel::time, "convert_time"},
                               std::tuple{SolveStrategy::convert_freq, AxisSel::freq, "convert_freq"}}) {
    NetworkSpec start = base;
    if (axes == AxisSel::time)
      start = solve_target_rf(base, {135, 459}, SolveStrategy::convert_freq);
    else if (axes == AxisSel::freq)
      start = solve_target_rf(base, {459, 135}, SolveStrategy::convert_time);
    const auto out = solve_target_rf(start, target, s);
    int converted = 0;
    for (std::size_t i = 0; i < start.layers.size(); ++i)
      if (start.layers[i].is<Conv>()) converted += !(start.layers[i] == out.layers[i]);
    const Axis2 rf = network_rf(out);
    const Axis2 undone = network_rf(convert_tail_filters(start, converted - 1, axes));
    o.require(rf.fits_within(target), std::string(name) + " misses target: " + rf.str());
    o.require(converted > 0 && !fits_on(undone, target, axes), std::string(name) + " is not tight");
    summary += std::string("; ") + name + " " + rf.str() + " (one fewer " + undone.str() + ")";
  }
  o.detail = summary;
  return o;
}

Outcome axis_sweeps() {
  Outcome o;
  const auto base = presets::build_rn_base();
  const auto time_pts = sweep(base, SweepStrategy::convert_time);
  const auto freq_pts = sweep(base, SweepStrategy::convert_freq);
  for (const auto& p : time_pts) o.require(p.rf.freq == time_pts.front().rf.freq, "frequency RF moved in " + p.label);
  for (const auto& p : freq_pts) o.require(p.rf.time == freq_pts.front().rf.time, "time RF moved in " + p.label);
  o.require(time_pts.back().rf.time < time_pts.front().rf.time, "convert_time sweep changed nothing");
  if (o.pass)
    o.detail = std::to_string(time_pts.size()) + " points each; time RF " + time_pts.front().rf.str() + " -> " +
               time_pts.back().rf.str();
  return o;
}

Outcome erf_within_rf() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2718);
  for (int n = 0; n < 50; ++n) {
    const auto net = testing::random_network(rng);
    const auto inputs = erf::random_input(1, static_cast<std::size_t>(net.input_channels), 64, 64, static_cast<std::uint64_t>(n));
    const auto map = erf::estimate_erf(net, erf::Seeded{static_cast<std::uint64_t>(n), 1.0}, inputs);
    o.require(map.support.extent.fits_within(network_rf(net)),
              "net " + std::to_string(n) + ": support " + map.support.extent.str() + " > RF " + network_rf(net).str());
  }
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "took " + fmt(secs) + " s");
  if (o.pass) o.detail = "50 networks in " + fmt(secs) + " s";
  return o;
}

Outcome path_counts() {
  Outcome o;
  for (int layers = 1; layers <= 4; ++layers) {
    NetworkBuilder b("ones", 1);
    for (int i = 0; i < layers; ++i) b.conv({3, 3}, {1, 1}, 1, {{1, 1}, false, false, Activation::linear});
    const auto oracle = testing::ones_convolution(layers);
    const std::size_t size = 2 * oracle.size() + 1, off = (size - oracle.size()) / 2;
    const auto map = erf::estimate_erf(b.build(), erf::AllOnes{}, erf::constant_input(1, 1, size, size));
    for (std::size_t f = 0; f < size; ++f)
      for (std::size_t t = 0; t < size; ++t) {
        const bool in = f >= off && f < off + oracle.size() && t >= off && t < off + oracle.size();
        const double want = in ? oracle[f - off][t - off] : 0.0;
        o.require(map.raw.at(f, t) == want, std::to_string(layers) + " layers: mismatch at (" + std::to_string(f) +
                                                "," + std::to_string(t) + ")");
      }
    if (layers == 2) o.require(map.raw.at(size / 2, size / 2) == 9.0, "2-layer center is not 9");
  }
  if (o.pass) o.detail = "1-4 layers exact; 2-layer center 9";
  return o;
}

Outcome gradient_check() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(31337);
  int lin = 0, relu = 0;
  double worst_lin = 0.0, worst_relu = 0.0;
  for (int n = 0; n < 24; ++n) {
    const bool use_relu = n % 2 == 1;
    testing::RandomNetOptions opt;
    opt.max_spatial_layers = 6;
    opt.max_channels = 3;
    opt.linear = !use_relu;
    opt.tail = false;
    const auto net = testing::random_network(rng, opt);
    const erf::WeightInit init = use_relu ? erf::WeightInit{erf::AllOnes{}}
                                          : erf::WeightInit{erf::Seeded{static_cast<std::uint64_t>(n), 1.0}};
    auto w = std::make_shared<const erf::NetworkWeights>(erf::materialize_weights(net, init));
    const std::size_t size = 12, C = static_cast<std::size_t>(net.input_channels);
    const auto input = use_relu ? erf::random_input(1, C, size, size, 100 + n, 0.5, 1.5)
                                : erf::random_input(1, C, size, size, 100 + n, -1.0, 1.0);
    const auto fwd = erf::forward(net, w, input);
    const auto loc = erf::center_location(net, size, size);
    const auto grad = erf::backward_from_pixel(fwd.tape, loc);
    for (int s = 0; s < 10; ++s) {
      const auto ch = static_cast<std::size_t>(testing::uniform(rng, 0, net.input_channels - 1));
      const erf::Pixel2 px{static_cast<std::size_t>(testing::uniform(rng, 0, 11)),
                           static_cast<std::size_t>(testing::uniform(rng, 0, 11))};
      const double fd = erf::finite_diff_gradient(net, w, input, loc, ch, px);
      const double bw = grad.at(0, ch, px.freq, px.time);
      const double err = std::abs(fd - bw) / std::max({std::abs(fd), std::abs(bw), 1.0});
      if (use_relu) {
        worst_relu = std::max(worst_relu, err);
        ++relu;
      } else {
        worst_lin = std::max(worst_lin, err);
        ++lin;
      }
    }
  }
  const double secs = seconds_since(t0);
  o.require(worst_lin < 1e-6, "linear rel. error " + std::to_string(worst_lin));
  o.require(worst_relu < 1e-4, "relu rel. error " + std::to_string(worst_relu));
  o.require(lin + relu >= 100, "too few pixels");
  o.require(secs < 30.0, "took " + fmt(secs) + " s");
  std::ostringstream d;
  d << lin + relu << " pixels, worst rel. error linear " << worst_lin << ", relu " << worst_relu << ", " << fmt(secs)
    << " s";
  if (o.pass) o.detail = d.str();
  return o;
}

Outcome determinism() {
  Outcome o;
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("rfkit_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  auto run = [&](const std::string& tag, const std::string& workers) {
    std::ostringstream out, err;
    return cli::run({"erf", "--preset", "rn1", "--seed", "7", "--input", "64x96", "--batch", "4", "--workers", workers,
                     "--csv", (dir / (tag + ".csv")).string(), "--pgm", (dir / (tag + ".pgm")).string()},
                    out, err);
  };
  o.require(run("a", "1") == 0 && run("b", "1") == 0 && run("c", "4") == 0, "erf command failed");
  for (const char* ext : {".csv", ".pgm"}) {
    const auto a = slurp(dir / (std::string("a") + ext));
    o.require(!a.empty(), std::string("empty ") + ext);
    o.require(a == slurp(dir / (std::string("b") + ext)), std::string("repeat run differs in ") + ext);
    o.require(a == slurp(dir / (std::string("c") + ext)), std::string("worker count changes ") + ext);
  }
  fs::remove_all(dir);
  if (o.pass) o.detail = "rn1 seed 7, 1/1/4 workers: CSV and PGM byte-identical";
  return o;
}

Outcome round_trip() {
  Outcome o;
  int presets_checked = 0;
  for (const auto& [name, entry] : presets::catalog()) {
    if (!entry.build) continue;
    const auto net = entry.build();
    o.require(parse_network(serialize_network(net)) == net, "preset " + name);
    ++presets_checked;
  }
  std::mt19937_64 rng(20240611);
  for (int i = 0; i < 200; ++i) {
    const auto net = testing::random_network(rng);
    o.require(parse_network(serialize_network(net)) == net, "random network " + std::to_string(i));
  }
  if (o.pass) o.detail = std::to_string(presets_checked) + " presets, 200 random networks";
  return o;
}

Outcome context_arithmetic() {
  Outcome o;
  const auto c = context_of_rf({135, 135}, {43.0, 256});
  const double s = 135.0 / 43.0, m = 135.0 / 256.0;
  o.require(std::abs(c.seconds - s) <= 1e-9 * s, "seconds " + std::to_string(c.seconds));
  o.require(std::abs(c.mel_coverage - m) <= 1e-9 * m, "coverage " + std::to_string(c.mel_coverage));
  std::ostringstream d;
  d.precision(10);
  d << c.seconds << " s, " << c.mel_coverage << " of mel bins";
  if (o.pass) o.detail = d.str();
  return o;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"RF equality of RN1/RN2/RN3", rf_equality},
      {"structural fidelity", structure},
      {"parameter-count ordering", param_ordering},
      {"pooling-edit parameter invariance", pooling_invariance},
      {"solver tightness", solver_tightness},
      {"axis-restricted sweeps", axis_sweeps},
      {"ERF within RF", erf_within_rf},
      {"path-count oracle", path_counts},
      {"gradient check", gradient_check},
      {"determinism", determinism},
      {"round-trip", round_trip},
      {"context arithmetic", context_arithmetic},
  };
  int failures = 0, index = 0;
  for (const auto& [name, check] : criteria) {
    ++index;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += o.pass ? 0 : 1;
    std::cout << "criterion " << index << " [" << (o.pass ? "PASS" : "FAIL") << "] " << name << ": " << o.detail
              << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
