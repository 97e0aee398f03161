// Experiment driver: generate traces, run single simulations, compare
// coherence mechanisms, sweep the pipelined GEMM workload, and analyze
// offload targets.
//
// Exit codes: 0 success, 2 bad configuration or malformed input schema,
// 3 simulation error, 4 I/O error.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pimsim/analyzer.hpp"
#include "pimsim/engine.hpp"
#include "pimsim/trace_gen.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kBadConfig = 2;
constexpr int kSimFailed = 3;
constexpr int kIoFailed = 4;

struct CliError {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, const std::string& message) {
  throw CliError{code, message};
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(kIoFailed, "cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spill(const std::string& path, const std::string& data) {
  if (path.empty() || path == "-") {
    std::cout << data;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(kIoFailed, "cannot open " + path + " for writing");
  f << data;
  if (!f) fail(kIoFailed, "write failed: " + path);
}

pimsim::MachineConfig load_config(const std::string& path) {
  if (path.empty()) return pimsim::MachineConfig{};
  std::istringstream in(slurp(path));
  try {
    return pimsim::parse_machine_config(in);
  } catch (const pimsim::ConfigError& e) {
    fail(kBadConfig, std::string("config ") + path + ": " + e.what());
  }
}

pimsim::Trace load_trace_file(const std::string& path) {
  std::string text = slurp(path);
  try {
    return pimsim::parse_trace_string(text);
  } catch (const pimsim::TraceParseError& e) {
    fail(kBadConfig, std::string("trace ") + path + ": " + e.what());
  }
}

pimsim::Mechanism parse_mech(const std::string& s) {
  auto m = pimsim::mechanism_from_name(s);
  if (!m) fail(kBadConfig, "unknown mechanism '" + s + "' (fg, cg, nc, conda, ideal)");
  return *m;
}

pimsim::PageTableMode parse_xlat(const std::string& s) {
  if (s == "conventional") return pimsim::PageTableMode::Conventional4Level;
  if (s == "region") return pimsim::PageTableMode::RegionBased;
  fail(kBadConfig, "unknown xlat mode '" + s + "' (conventional, region)");
}

pimsim::OffloadPlan make_plan(const pimsim::Trace& t, const std::vector<std::string>& names) {
  for (const std::string& n : names) {
    bool known = false;
    for (const auto& [id, name] : t.kernel_names) known = known || name == n;
    if (!known) fail(kBadConfig, "offload target '" + n + "' matches no kernel in the trace");
  }
  return pimsim::OffloadPlan::by_names(t, names);
}

// grammar: kind:key=value[,key=value...]
std::map<std::string, std::string> parse_kv(const std::string& s) {
  std::map<std::string, std::string> kv;
  if (s.empty()) return kv;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i != s.size() && s[i] != ',') continue;
    std::string item = s.substr(start, i - start);
    start = i + 1;
    std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
      fail(kBadConfig, "bad generator parameter '" + item + "' (want key=value)");
    if (!kv.emplace(item.substr(0, eq), item.substr(eq + 1)).second)
      fail(kBadConfig, "duplicate generator parameter '" + item.substr(0, eq) + "'");
  }
  return kv;
}

std::uint64_t want_u64(std::map<std::string, std::string>& kv, const std::string& key,
                       std::int64_t fallback = -1) {
  auto it = kv.find(key);
  if (it == kv.end()) {
    if (fallback >= 0) return static_cast<std::uint64_t>(fallback);
    fail(kBadConfig, "generator spec is missing required parameter '" + key + "'");
  }
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(it->second, &pos, 0);
    if (pos != it->second.size()) throw std::invalid_argument(it->second);
    kv.erase(it);
    return v;
  } catch (const std::exception&) {
    fail(kBadConfig, "generator parameter " + key + ": bad integer '" + it->second + "'");
  }
}

double want_f64(std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) fail(kBadConfig, "generator spec is missing required parameter '" + key + "'");
  try {
    std::size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(it->second);
    kv.erase(it);
    return v;
  } catch (const std::exception&) {
    fail(kBadConfig, "generator parameter " + key + ": bad number '" + it->second + "'");
  }
}

pimsim::Trace generate(const std::string& spec, std::uint64_t seed) {
  std::size_t colon = spec.find(':');
  std::string kind = colon == std::string::npos ? spec : spec.substr(0, colon);
  auto kv = parse_kv(colon == std::string::npos ? "" : spec.substr(colon + 1));
  pimsim::Trace t;
  try {
    if (kind == "quantize") {
      std::uint64_t n = want_u64(kv, "n");
      t = pimsim::gen_quantize_trace(n, seed);
    } else if (kind == "pack") {
      std::uint64_t rows = want_u64(kv, "rows");
      std::uint64_t cols = want_u64(kv, "cols");
      std::uint64_t block = want_u64(kv, "block", 8);
      t = pimsim::gen_pack_trace(static_cast<std::uint32_t>(rows),
                                 static_cast<std::uint32_t>(cols),
                                 static_cast<std::uint32_t>(block), seed);
    } else if (kind == "gemm") {
      std::uint64_t nops = want_u64(kv, "nops");
      std::uint64_t elems = want_u64(kv, "elems");
      t = pimsim::gen_gemm_pipeline_trace(static_cast<std::uint32_t>(nops), elems, seed);
    } else if (kind == "pointer") {
      std::uint64_t n = want_u64(kv, "n");
      std::uint64_t stride = want_u64(kv, "stride", 64);
      t = pimsim::gen_pointer_chase_trace(n, seed, stride);
    } else if (kind == "shared") {
      std::uint64_t n = want_u64(kv, "n");
      double share = want_f64(kv, "share");
      t = pimsim::gen_shared_trace(n, share, seed);
    } else {
      fail(kBadConfig,
           "unknown generator '" + kind + "' (quantize, pack, gemm, pointer, shared)");
    }
  } catch (const std::invalid_argument& e) {
    fail(kBadConfig, std::string("generator: ") + e.what());
  }
  if (!kv.empty()) fail(kBadConfig, "unknown generator parameter '" + kv.begin()->first + "'");
  return t;
}

pimsim::MetricsReport run_one(const pimsim::MachineConfig& cfg, const pimsim::Trace& trace,
                              pimsim::Mechanism mech, const pimsim::OffloadPlan& plan,
                              pimsim::PageTableMode xlat, std::uint64_t seed, bool cpu_only) {
  try {
    return pimsim::simulate(cfg, trace, mech, plan, xlat, seed, cpu_only);
  } catch (const std::invalid_argument& e) {
    fail(kBadConfig, e.what());
  } catch (const pimsim::SimError& e) {
    fail(kSimFailed, std::string("simulation: ") + e.what());
  }
}

std::string render_report(const pimsim::MetricsReport& r, const std::string& format) {
  if (format == "json") return r.to_json().dump(2) + "\n";
  if (format == "csv") return pimsim::MetricsReport::csv_header() + "\n" + r.csv_row() + "\n";
  if (format == "text") return r.to_text();
  fail(kBadConfig, "unknown format '" + format + "' (json, csv, text)");
}

std::string render_compare(const std::vector<pimsim::MetricsReport>& rows,
                           const std::string& format) {
  const double base = static_cast<double>(rows.front().total_cycles);
  if (format == "json") {
    nlohmann::ordered_json j;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : rows) j["rows"].push_back(r.to_json());
    nlohmann::ordered_json sp;
    for (const auto& r : rows)
      sp[r.mechanism] = base / static_cast<double>(r.total_cycles);
    j["speedup_vs_cpu_only"] = sp;
    return j.dump(2) + "\n";
  }
  if (format == "csv") {
    std::string out = pimsim::MetricsReport::csv_header() + ",speedup\n";
    for (const auto& r : rows)
      out += r.csv_row() + "," +
             pimsim::format_double(base / static_cast<double>(r.total_cycles)) + "\n";
    return out;
  }
  if (format == "text") {
    std::ostringstream o;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-10s %14s %9s %12s %8s %10s %9s\n", "mechanism", "cycles",
                  "speedup", "energy", "dm%", "messages", "rollbacks");
    o << buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%-10s %14llu %9.3f %12.4g %7.1f%% %10llu %9llu\n",
                    r.mechanism.c_str(), static_cast<unsigned long long>(r.total_cycles),
                    base / static_cast<double>(r.total_cycles), r.energy.total(),
                    100.0 * r.energy.data_movement_fraction(),
                    static_cast<unsigned long long>(r.counters.coherence_messages),
                    static_cast<unsigned long long>(r.counters.rollbacks));
      o << buf;
    }
    return o.str();
  }
  fail(kBadConfig, "unknown format '" + format + "' (json, csv, text)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trace-driven CPU + stacked-memory PIM simulator"};
  app.require_subcommand(1);

  // shared option storage
  std::string spec, trace_path, config_path, out_path, profile_path, thresholds_path;
  std::string emit_profile_path;
  std::string mech_s = "conda", xlat_s = "region", format = "json";
  std::uint64_t seed = 0, elems = 16384;
  std::vector<std::string> offload;
  std::vector<std::uint64_t> nops_list;
  bool cpu_only = false;

  CLI::App* gen = app.add_subcommand("gen", "generate a workload trace");
  gen->add_option("--spec", spec, "generator spec, kind:key=value,... ")->required();
  gen->add_option("--seed", seed, "rng seed")->required();
  gen->add_option("--out", out_path, "output trace file (default stdout)");

  CLI::App* run = app.add_subcommand("run", "simulate one trace under one mechanism");
  run->add_option("--trace", trace_path, "trace file")->required();
  run->add_option("--config", config_path, "machine config file");
  run->add_option("--mech", mech_s, "fg | cg | nc | conda | ideal");
  run->add_option("--xlat", xlat_s, "conventional | region");
  run->add_option("--seed", seed, "rng seed")->required();
  run->add_option("--offload", offload, "kernel function names to offload")->delimiter(',');
  run->add_flag("--cpu-only", cpu_only, "run everything on the host");
  run->add_option("--format", format, "json | csv | text");
  run->add_option("--out", out_path, "output file (default stdout)");

  CLI::App* cmp = app.add_subcommand("compare", "run every mechanism plus a host-only baseline");
  cmp->add_option("--trace", trace_path, "trace file")->required();
  cmp->add_option("--config", config_path, "machine config file");
  cmp->add_option("--xlat", xlat_s, "conventional | region");
  cmp->add_option("--seed", seed, "rng seed")->required();
  cmp->add_option("--offload", offload, "kernel function names to offload")->delimiter(',');
  cmp->add_option("--format", format, "json | csv | text");
  cmp->add_option("--out", out_path, "output file (default stdout)");

  CLI::App* sweep = app.add_subcommand("sweep-gemm", "speedup of the pipelined GEMM workload");
  sweep->add_option("--nops", nops_list, "GEMM operation counts")->delimiter(',');
  sweep->add_option("--elems", elems, "matrix elements per operand");
  sweep->add_option("--config", config_path, "machine config file");
  sweep->add_option("--mech", mech_s, "fg | cg | nc | conda | ideal");
  sweep->add_option("--xlat", xlat_s, "conventional | region");
  sweep->add_option("--seed", seed, "rng seed")->required();
  sweep->add_option("--offload", offload, "kernel names to offload (default pack,quantize,unpack)")
      ->delimiter(',');
  sweep->add_option("--format", format, "json | csv | text");
  sweep->add_option("--out", out_path, "output file (default stdout)");

  CLI::App* an = app.add_subcommand("analyze", "identify and filter offload targets");
  an->add_option("--profile", profile_path, "function profile csv (skip simulation)");
  an->add_option("--trace", trace_path, "trace file (profile by simulation)");
  an->add_option("--config", config_path, "machine config file");
  an->add_option("--mech", mech_s, "mechanism used for the offloaded profiling runs");
  an->add_option("--xlat", xlat_s, "conventional | region");
  an->add_option("--seed", seed, "rng seed (required with --trace)");
  an->add_option("--thresholds", thresholds_path, "thresholds json file");
  an->add_option("--emit-profile", emit_profile_path, "also write the profile csv here");
  an->add_option("--format", format, "json | csv | text");
  an->add_option("--out", out_path, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kBadConfig;
  }

  try {
    if (gen->parsed()) {
      pimsim::Trace t = generate(spec, seed);
      std::ostringstream ss;
      pimsim::write_trace(ss, t);
      spill(out_path, ss.str());
      return kOk;
    }

    if (run->parsed()) {
      pimsim::MachineConfig cfg = load_config(config_path);
      pimsim::Trace t = load_trace_file(trace_path);
      pimsim::OffloadPlan plan = make_plan(t, offload);
      pimsim::MetricsReport r = run_one(cfg, t, parse_mech(mech_s), plan, parse_xlat(xlat_s),
                                        seed, cpu_only);
      spill(out_path, render_report(r, format));
      return kOk;
    }

    if (cmp->parsed()) {
      pimsim::MachineConfig cfg = load_config(config_path);
      pimsim::Trace t = load_trace_file(trace_path);
      pimsim::OffloadPlan plan = make_plan(t, offload);
      pimsim::PageTableMode xm = parse_xlat(xlat_s);
      std::vector<pimsim::MetricsReport> rows;
      try {
        rows = pimsim::compare_mechanisms(cfg, t, plan, xm, seed);
      } catch (const std::invalid_argument& e) {
        fail(kBadConfig, e.what());
      } catch (const pimsim::SimError& e) {
        fail(kSimFailed, std::string("simulation: ") + e.what());
      }
      spill(out_path, render_compare(rows, format));
      return kOk;
    }

    if (sweep->parsed()) {
      pimsim::MachineConfig cfg = load_config(config_path);
      pimsim::Mechanism mech = parse_mech(mech_s);
      pimsim::PageTableMode xm = parse_xlat(xlat_s);
      if (nops_list.empty()) nops_list = {1, 2, 4, 8, 16};
      if (offload.empty()) offload = {"pack", "quantize", "unpack"};
      nlohmann::ordered_json rows = nlohmann::ordered_json::array();
      std::string csv = "nops,baseline_cycles,offloaded_cycles,speedup\n";
      std::ostringstream text;
      for (std::uint64_t nops : nops_list) {
        if (nops == 0) fail(kBadConfig, "sweep-gemm: nops values must be > 0");
        pimsim::Trace t =
            pimsim::gen_gemm_pipeline_trace(static_cast<std::uint32_t>(nops), elems, seed);
        pimsim::OffloadPlan plan = make_plan(t, offload);
        pimsim::MetricsReport base =
            run_one(cfg, t, mech, plan, xm, seed, /*cpu_only=*/true);
        pimsim::MetricsReport off = run_one(cfg, t, mech, plan, xm, seed, /*cpu_only=*/false);
        double sp = static_cast<double>(base.total_cycles) / static_cast<double>(off.total_cycles);
        nlohmann::ordered_json row;
        row["nops"] = nops;
        row["baseline_cycles"] = base.total_cycles;
        row["offloaded_cycles"] = off.total_cycles;
        row["speedup"] = sp;
        rows.push_back(row);
        csv += std::to_string(nops) + "," + std::to_string(base.total_cycles) + "," +
               std::to_string(off.total_cycles) + "," + pimsim::format_double(sp) + "\n";
        char buf[120];
        std::snprintf(buf, sizeof buf, "nops %3llu: %12llu -> %12llu cycles, speedup %.3f\n",
                      static_cast<unsigned long long>(nops),
                      static_cast<unsigned long long>(base.total_cycles),
                      static_cast<unsigned long long>(off.total_cycles), sp);
        text << buf;
      }
      if (format == "json") {
        nlohmann::ordered_json j;
        j["sweep"] = rows;
        spill(out_path, j.dump(2) + "\n");
      } else if (format == "csv") {
        spill(out_path, csv);
      } else if (format == "text") {
        spill(out_path, text.str());
      } else {
        fail(kBadConfig, "unknown format '" + format + "' (json, csv, text)");
      }
      return kOk;
    }

    if (an->parsed()) {
      if (profile_path.empty() == trace_path.empty())
        fail(kBadConfig, "analyze needs exactly one of --profile or --trace");
      pimsim::Thresholds th;
      if (!thresholds_path.empty()) {
        std::string text = slurp(thresholds_path);
        try {
          th = pimsim::parse_thresholds_json(nlohmann::json::parse(text));
        } catch (const nlohmann::json::exception& e) {
          fail(kBadConfig, std::string("thresholds: ") + e.what());
        } catch (const std::invalid_argument& e) {
          fail(kBadConfig, std::string("thresholds: ") + e.what());
        }
      }
      std::vector<pimsim::FunctionProfile> rows;
      if (!profile_path.empty()) {
        std::istringstream in(slurp(profile_path));
        try {
          rows = pimsim::parse_profiles_csv(in);
        } catch (const pimsim::ProfileParseError& e) {
          fail(kBadConfig, e.what());
        }
      } else {
        if (!an->count("--seed")) fail(kBadConfig, "analyze --trace requires --seed");
        pimsim::MachineConfig cfg = load_config(config_path);
        pimsim::Trace t = load_trace_file(trace_path);
        try {
          rows = pimsim::profile_from_simulation(cfg, t, parse_mech(mech_s), parse_xlat(xlat_s),
                                                 seed);
        } catch (const std::invalid_argument& e) {
          fail(kBadConfig, e.what());
        } catch (const pimsim::SimError& e) {
          fail(kSimFailed, std::string("simulation: ") + e.what());
        }
      }
      if (!emit_profile_path.empty()) {
        std::ostringstream ss;
        pimsim::write_profiles_csv(ss, rows);
        spill(emit_profile_path, ss.str());
      }
      std::vector<pimsim::Verdict> verdicts;
      try {
        verdicts = pimsim::evaluate_targets(rows, th);
      } catch (const std::invalid_argument& e) {
        fail(kBadConfig, e.what());
      }
      if (format == "json") {
        spill(out_path, pimsim::verdicts_to_json(verdicts).dump(2) + "\n");
      } else if (format == "csv") {
        std::string out = "name,candidate,offload,C1,C2,C3,C4,D1,D2,D3\n";
        for (const auto& v : verdicts) {
          out += v.name + "," + (v.candidate ? "1" : "0") + "," + (v.offload ? "1" : "0");
          for (const auto& r : v.rules) out += std::string(",") + (r.pass ? "1" : "0");
          out += "\n";
        }
        spill(out_path, out);
      } else if (format == "text") {
        std::ostringstream o;
        for (const auto& v : verdicts) {
          o << v.name << ": " << (v.offload ? "offload" : v.candidate ? "candidate, discarded"
                                                                      : "not a candidate")
            << "\n";
          for (const auto& r : v.rules) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "  %-3s %-40s %-4s value %.6g threshold %.6g\n",
                          r.rule.c_str(), r.what.c_str(), r.pass ? "yes" : "no", r.value,
                          r.threshold);
            o << buf;
          }
        }
        spill(out_path, o.str());
      } else {
        fail(kBadConfig, "unknown format '" + format + "' (json, csv, text)");
      }
      return kOk;
    }
  } catch (const CliError& e) {
    std::cerr << "pimsim: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "pimsim: " << e.what() << "\n";
    return kSimFailed;
  }
  return kOk;
}
