#pragma once

#include <limits>
#include <sstream>

#include <json.hpp>

#include "pimsim/engine.hpp"

namespace pimsim {

// One row per function label, aggregated over every kernel instance carrying
// that label. The workload column repeats the whole-run figure so a profile
// file stands alone.
struct FunctionProfile {
  std::string name;
  double energy_total = 0.0;
  double energy_data_movement = 0.0;
  double mpki = 0.0;
  double pim_runtime_ratio = 0.0;  // offloaded runtime over host runtime
  double est_area_mm2 = 0.0;
  std::uint64_t shared_lines = 0;   // lines also touched outside this function
  std::uint64_t lines_touched = 0;
  double workload_energy_total = 0.0;

  bool operator==(const FunctionProfile&) const = default;
};

inline constexpr const char* kProfileCsvHeader =
    "name,energy_total,energy_data_movement,mpki,pim_runtime_ratio,est_area_mm2,"
    "shared_lines,lines_touched,workload_energy_total";

inline void write_profiles_csv(std::ostream& os, const std::vector<FunctionProfile>& rows) {
  os << kProfileCsvHeader << "\n";
  for (const FunctionProfile& p : rows) {
    if (p.name.find(',') != std::string::npos || p.name.find('\n') != std::string::npos)
      throw std::invalid_argument("function name may not contain ',' or newline: " + p.name);
    os << p.name << ',' << format_double(p.energy_total) << ','
       << format_double(p.energy_data_movement) << ',' << format_double(p.mpki) << ','
       << format_double(p.pim_runtime_ratio) << ',' << format_double(p.est_area_mm2) << ','
       << p.shared_lines << ',' << p.lines_touched << ','
       << format_double(p.workload_energy_total) << "\n";
  }
}

struct ProfileParseError : std::runtime_error {
  ProfileParseError(std::size_t line, const std::string& m)
      : std::runtime_error("profile csv line " + std::to_string(line) + ": " + m), lineno(line) {}
  std::size_t lineno;
};

inline std::vector<FunctionProfile> parse_profiles_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw ProfileParseError(1, "missing header");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kProfileCsvHeader) throw ProfileParseError(1, "unexpected header: " + line);
  std::vector<FunctionProfile> rows;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i)
      if (i == line.size() || line[i] == ',') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    if (f.size() != 9) throw ProfileParseError(lineno, "expected 9 fields, got " + std::to_string(f.size()));
    auto num = [&](const std::string& s) {
      errno = 0;
      char* end = nullptr;
      double v = std::strtod(s.c_str(), &end);
      if (end == s.c_str() || *end != '\0' || errno == ERANGE)
        throw ProfileParseError(lineno, "bad number: " + s);
      return v;
    };
    auto cnt = [&](const std::string& s) {
      errno = 0;
      char* end = nullptr;
      unsigned long long v = std::strtoull(s.c_str(), &end, 10);
      if (end == s.c_str() || *end != '\0' || errno == ERANGE)
        throw ProfileParseError(lineno, "bad count: " + s);
      return static_cast<std::uint64_t>(v);
    };
    FunctionProfile p;
    p.name = f[0];
    if (p.name.empty()) throw ProfileParseError(lineno, "empty function name");
    p.energy_total = num(f[1]);
    p.energy_data_movement = num(f[2]);
    p.mpki = num(f[3]);
    p.pim_runtime_ratio = num(f[4]);
    p.est_area_mm2 = num(f[5]);
    p.shared_lines = cnt(f[6]);
    p.lines_touched = cnt(f[7]);
    p.workload_energy_total = num(f[8]);
    rows.push_back(std::move(p));
  }
  return rows;
}

// Candidate and discard thresholds. The sharing limit is either an absolute
// line count or a fraction of the lines the function touches.
struct Thresholds {
  double c2_dm_fraction = 0.20;
  double c3_mpki = 10.0;
  double c4_dm_share = 0.5;
  double d1_max_runtime_ratio = 1.0;
  double d2_area_budget_mm2 = 3.5;
  bool d3_is_fraction = true;
  double d3_sharing = 0.01;
  bool conventional_coherence = true;  // D3 only bites without optimistic coherence

  double d3_limit(std::uint64_t lines_touched) const {
    return d3_is_fraction ? d3_sharing * static_cast<double>(lines_touched) : d3_sharing;
  }
};

inline Thresholds parse_thresholds_json(const nlohmann::json& j) {
  Thresholds t;
  bool frac_seen = false, abs_seen = false;
  for (const auto& [key, val] : j.items()) {
    if (key == "c2_dm_fraction") t.c2_dm_fraction = val.get<double>();
    else if (key == "c3_mpki") t.c3_mpki = val.get<double>();
    else if (key == "c4_dm_share") t.c4_dm_share = val.get<double>();
    else if (key == "d1_max_runtime_ratio") t.d1_max_runtime_ratio = val.get<double>();
    else if (key == "d2_area_budget_mm2") t.d2_area_budget_mm2 = val.get<double>();
    else if (key == "d3_sharing_fraction") { t.d3_is_fraction = true; t.d3_sharing = val.get<double>(); frac_seen = true; }
    else if (key == "d3_sharing_lines") { t.d3_is_fraction = false; t.d3_sharing = val.get<double>(); abs_seen = true; }
    else if (key == "conventional_coherence") t.conventional_coherence = val.get<bool>();
    else throw std::invalid_argument("unknown thresholds key: " + key);
  }
  if (frac_seen && abs_seen)
    throw std::invalid_argument("d3_sharing_fraction and d3_sharing_lines are mutually exclusive");
  return t;
}

struct RuleResult {
  std::string rule;    // C1..C4, D1..D3
  std::string what;
  bool pass = false;   // for C rules: fires; for D rules: survives
  double value = 0.0;
  double threshold = 0.0;
};

struct Verdict {
  std::string name;
  bool candidate = false;
  bool offload = false;
  std::vector<RuleResult> rules;  // all seven, in order, each exactly once
};

// Applies the candidate rules (any hit makes the function a candidate) and the
// discard rules (any failure drops it) to every profiled function.
inline std::vector<Verdict> evaluate_targets(const std::vector<FunctionProfile>& rows,
                                             const Thresholds& t) {
  if (rows.empty()) throw std::invalid_argument("no function profiles to evaluate");
  double max_energy = 0.0;
  for (const FunctionProfile& p : rows) {
    if (p.workload_energy_total <= 0.0)
      throw std::invalid_argument("workload energy must be positive (function " + p.name + ")");
    max_energy = std::max(max_energy, p.energy_total);
  }
  std::vector<Verdict> out;
  for (const FunctionProfile& p : rows) {
    Verdict v;
    v.name = p.name;
    const double dm_of_workload = p.energy_data_movement / p.workload_energy_total;
    const double dm_share = p.energy_total > 0.0 ? p.energy_data_movement / p.energy_total : 0.0;
    const double d3_lim = t.d3_limit(p.lines_touched);

    RuleResult c1{"C1", "highest energy function", p.energy_total >= max_energy, p.energy_total,
                  max_energy};
    RuleResult c2{"C2", "data movement fraction of workload energy",
                  dm_of_workload > t.c2_dm_fraction, dm_of_workload, t.c2_dm_fraction};
    RuleResult c3{"C3", "misses per kilo instruction", p.mpki > t.c3_mpki, p.mpki, t.c3_mpki};
    RuleResult c4{"C4", "data movement share of own energy", dm_share > t.c4_dm_share, dm_share,
                  t.c4_dm_share};
    RuleResult d1{"D1", "offloaded runtime ratio", p.pim_runtime_ratio <= t.d1_max_runtime_ratio,
                  p.pim_runtime_ratio, t.d1_max_runtime_ratio};
    RuleResult d2{"D2", "estimated logic area", p.est_area_mm2 <= t.d2_area_budget_mm2,
                  p.est_area_mm2, t.d2_area_budget_mm2};
    bool d3_pass = !t.conventional_coherence ||
                   static_cast<double>(p.shared_lines) <= d3_lim;
    RuleResult d3{"D3", "lines shared with other code", d3_pass,
                  static_cast<double>(p.shared_lines), d3_lim};

    v.candidate = c1.pass || c2.pass || c3.pass || c4.pass;
    v.offload = v.candidate && d1.pass && d2.pass && d3.pass;
    v.rules = {c1, c2, c3, c4, d1, d2, d3};
    out.push_back(std::move(v));
  }
  return out;
}

inline nlohmann::ordered_json verdicts_to_json(const std::vector<Verdict>& vs) {
  nlohmann::ordered_json root;
  root["functions"] = nlohmann::ordered_json::array();
  for (const Verdict& v : vs) {
    nlohmann::ordered_json f;
    f["name"] = v.name;
    f["candidate"] = v.candidate;
    f["offload"] = v.offload;
    f["rules"] = nlohmann::ordered_json::array();
    for (const RuleResult& r : v.rules) {
      nlohmann::ordered_json jr;
      jr["rule"] = r.rule;
      jr["what"] = r.what;
      jr["pass"] = r.pass;
      jr["value"] = r.value;
      jr["threshold"] = r.threshold;
      f["rules"].push_back(jr);
    }
    root["functions"].push_back(f);
  }
  return root;
}

// Builds one profile row per function label by running the workload once
// entirely on the host and then once per function with that function
// offloaded. Line sharing is computed statically from the trace.
inline std::vector<FunctionProfile> profile_from_simulation(const MachineConfig& cfg,
                                                            const Trace& trace, Mechanism mech,
                                                            PageTableMode mode,
                                                            std::uint64_t seed) {
  std::vector<std::string> names;  // first-appearance order by kernel id
  for (const auto& [id, name] : trace.kernel_names)
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);

  auto check_labeled = [&](const std::vector<TraceEvent>& ev) {
    for (const TraceEvent& e : ev)
      if (e.op == TraceOp::KernelBegin && !trace.kernel_names.count(e.kernel_id))
        throw std::invalid_argument("kernel " + std::to_string(e.kernel_id) +
                                    " has no function label");
  };
  check_labeled(trace.cpu);
  check_labeled(trace.pim);
  if (names.empty()) throw std::invalid_argument("trace defines no labeled kernels");

  // static sharing analysis over virtual lines
  std::map<Line, std::set<std::string>> touchers;
  auto scan = [&](const std::vector<TraceEvent>& ev) {
    std::vector<std::string> open;
    for (const TraceEvent& e : ev) {
      if (e.op == TraceOp::KernelBegin) open.push_back(trace.kernel_names.at(e.kernel_id));
      else if (e.op == TraceOp::KernelEnd) open.pop_back();
      else if (e.op == TraceOp::Load || e.op == TraceOp::Store || e.op == TraceOp::Pei) {
        Line l = e.vaddr / cfg.line_size;
        if (open.empty()) touchers[l].insert("");
        else
          for (const std::string& n : open) touchers[l].insert(n);
      }
    }
  };
  scan(trace.cpu);
  scan(trace.pim);

  MetricsReport base =
      simulate(cfg, trace, mech, OffloadPlan{}, mode, seed, /*cpu_only=*/true);

  std::vector<FunctionProfile> rows;
  for (const std::string& name : names) {
    FunctionProfile p;
    p.name = name;
    p.workload_energy_total = base.energy.total();
    std::uint64_t instr = 0, misses = 0;
    Cycles host_cycles = 0;
    for (const KernelStats& ks : base.kernels)
      if (ks.name == name) {
        p.energy_total += ks.energy.total();
        p.energy_data_movement += ks.energy.data_movement();
        instr += ks.instructions;
        misses += ks.dram_misses;
        host_cycles += ks.cycles;
      }
    p.mpki = instr ? 1000.0 * static_cast<double>(misses) / static_cast<double>(instr) : 0.0;

    MetricsReport off = simulate(cfg, trace, mech, OffloadPlan::by_names(trace, {name}), mode,
                                 seed, /*cpu_only=*/false);
    Cycles pim_cycles = 0;
    bool ran_on_pim = false;
    for (const KernelStats& ks : off.kernels)
      if (ks.name == name && ks.site == 'p') {
        pim_cycles += ks.cycles;
        ran_on_pim = true;
      }
    if (!ran_on_pim)
      p.pim_runtime_ratio = std::numeric_limits<double>::infinity();
    else if (host_cycles == 0)
      p.pim_runtime_ratio = pim_cycles == 0 ? 1.0 : std::numeric_limits<double>::infinity();
    else
      p.pim_runtime_ratio = static_cast<double>(pim_cycles) / static_cast<double>(host_cycles);

    p.est_area_mm2 = cfg.pim_logic_area_mm2;
    for (const auto& [l, who] : touchers)
      if (who.count(name)) {
        ++p.lines_touched;
        if (who.size() > 1) ++p.shared_lines;
      }
    rows.push_back(std::move(p));
  }
  return rows;
}

}  // namespace pimsim
