#ifndef NBSC_EXPERIMENT_HPP
#define NBSC_EXPERIMENT_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "analysis.hpp"
#include "modset.hpp"
#include "optimize.hpp"
#include "presets.hpp"
#include "prc.hpp"
#include "receiver.hpp"
#include "sim.hpp"

// Experiment description (JSON), CSV and manifest emission, and the invariant
// checks behind the `validate` command.

namespace nbsc {

/// Thrown for anything wrong with a user-supplied configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int csv_schema_version = 1;

struct ExperimentSpec {
    SimConfig sim;
    std::filesystem::path output_dir = "out";
    bool optimize_theta = false;
    double theta_snr_db = 13.0;
    ThetaSearch theta_search;
    double theta0 = 0.0;  // OMA rotation in use; Θ = {θ_0, 0, ..., 0}
};

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Shortest round-trip-stable text for a double in CSV and file names.
inline std::string format_number(double v)
{
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

/// RFC 4180 field quoting.
inline std::string csv_field(std::string_view s)
{
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& obj, std::initializer_list<std::string_view> known, std::string_view where)
{
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (auto k : known) ok |= key == k;
        if (!ok) throw ConfigError("unknown key '" + key + "' in " + std::string(where));
    }
}

template <class T>
T get_as(const json& j, std::string_view key, std::string_view where)
{
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("key '" + std::string(key) + "' in " + std::string(where) + " has the wrong type");
    }
}

inline Modulation order_from_json(const json& j, std::string_view key)
{
    const int v = get_as<int>(j, key, "modes");
    try {
        return modulation_from_order(v);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string(e.what()) + ": " + std::to_string(v));
    }
}

inline ModeTable table_from_json(const json& modes)
{
    if (!modes.is_array() || modes.empty()) throw ConfigError("'modes' must be a non-empty array");
    std::vector<ModulationMode> out;
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const auto& m = modes[i];
        const std::string where = "modes[" + std::to_string(i) + "]";
        if (!m.is_object()) throw ConfigError(where + " must be an object");
        reject_unknown(m, {"far_order", "near_order", "power_far", "power_near"}, where);
        for (auto req : {"far_order", "power_far", "power_near"})
            if (!m.contains(req)) throw ConfigError(where + " is missing '" + req + "'");
        ModulationMode mode;
        mode.id = static_cast<int>(i);
        mode.far_mod = order_from_json(m.at("far_order"), "far_order");
        if (m.contains("near_order") && !m.at("near_order").is_null())
            mode.near_mod = order_from_json(m.at("near_order"), "near_order");
        mode.power_far = get_as<double>(m.at("power_far"), "power_far", where);
        mode.power_near = get_as<double>(m.at("power_near"), "power_near", where);
        const double sum = mode.power_far + mode.power_near;
        if (std::abs(sum - 1.0) > 1e-9)
            throw ConfigError(where + ": power_far + power_near = " + format_number(sum) + ", expected 1");
        mode.pilot_rotation = two_pi * static_cast<double>(i) / static_cast<double>(modes.size());
        out.push_back(mode);
    }
    try {
        return ModeTable(std::move(out));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid mode table: ") + e.what());
    }
}

inline json table_to_json(const ModeTable& t)
{
    json arr = json::array();
    for (const auto& m : t.modes()) {
        json j;
        j["far_order"] = order_of(m.far_mod);
        j["near_order"] = m.near_mod ? json(order_of(*m.near_mod)) : json(nullptr);
        j["power_far"] = m.power_far;
        j["power_near"] = m.power_near;
        arr.push_back(j);
    }
    return arr;
}

inline Role role_from_name(std::string_view s)
{
    if (s == "near") return Role::near;
    if (s == "far") return Role::far;
    throw ConfigError("truth_role must be 'near' or 'far'");
}

inline SicPolicy sic_policy_from_name(std::string_view s)
{
    if (s == "matched_index") return SicPolicy::matched_index;
    if (s == "nearest") return SicPolicy::nearest;
    throw ConfigError("sic_policy must be 'matched_index' or 'nearest'");
}

inline const char* sic_policy_name(SicPolicy p) { return p == SicPolicy::nearest ? "nearest" : "matched_index"; }

} // namespace detail

inline PhaseRule phase_rule_from_name(std::string_view s)
{
    if (s == "uniform") return PhaseRule::uniform;
    if (s == "nonuniform") return PhaseRule::nonuniform;
    throw ConfigError("phase rule must be 'uniform' or 'nonuniform'");
}

inline const char* phase_rule_name(PhaseRule r) { return r == PhaseRule::uniform ? "uniform" : "nonuniform"; }

/// Inclusive grid min, min + step, ... ≤ max (with 1e-9 slack on the end).
inline std::vector<double> snr_grid(double lo, double hi, double step)
{
    if (!(step > 0.0)) throw ConfigError("SNR step must be positive");
    if (hi < lo) throw ConfigError("SNR max must not be below SNR min");
    std::vector<double> g;
    for (std::size_t i = 0;; ++i) {
        const double v = lo + step * static_cast<double>(i);
        if (v > hi + 1e-9) break;
        g.push_back(std::round(v * 1e9) / 1e9);
    }
    return g;
}

/// Preset defaults: the case table, its OMA rotation and optimization SNR.
inline ExperimentSpec preset_spec(std::string_view preset)
{
    ExperimentSpec s;
    try {
        s.sim.table = presets::by_name(preset);
        s.theta0 = presets::prm_theta0(preset);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    s.sim.preset = std::string(preset);
    s.theta_snr_db = preset == "case1" ? 13.0 : 20.0;
    s.sim.snr_db = snr_grid(0.0, 30.0, 1.0);
    s.sim.thetas = oma_only_rotation(s.sim.table, s.theta0);
    return s;
}

/// Parses and validates a JSON experiment description. Unknown keys are errors.
inline ExperimentSpec parse_config(const nlohmann::json& j)
{
    using detail::get_as;
    using json = nlohmann::json;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    detail::reject_unknown(j,
                           {"preset", "modes", "snr_db", "snr", "trials", "symbols", "seed", "classifiers",
                            "phase_rule", "region_weights", "theta", "theta_search", "fixed_mode", "truth_role",
                            "sic_policy", "capacity_samples", "output_dir"},
                           "config");

    const std::string preset = j.contains("preset") ? get_as<std::string>(j.at("preset"), "preset", "config")
                                                    : (j.contains("modes") ? "custom" : "case1");
    ExperimentSpec s;
    if (preset == "custom") {
        if (!j.contains("modes")) throw ConfigError("preset 'custom' needs a 'modes' array");
        s.sim.table = detail::table_from_json(j.at("modes"));
        s.sim.preset = "custom";
        s.sim.snr_db = snr_grid(0.0, 30.0, 1.0);
        s.theta0 = 0.0;
        s.sim.thetas = oma_only_rotation(s.sim.table, 0.0);
    } else {
        s = preset_spec(preset);
        if (j.contains("modes") && detail::table_to_json(detail::table_from_json(j.at("modes"))) !=
                                       detail::table_to_json(s.sim.table))
            throw ConfigError("'modes' differs from preset '" + preset + "'; use preset 'custom'");
    }

    if (j.contains("snr_db") && j.contains("snr")) throw ConfigError("give either 'snr_db' or 'snr', not both");
    if (j.contains("snr_db")) {
        s.sim.snr_db = get_as<std::vector<double>>(j.at("snr_db"), "snr_db", "config");
        if (s.sim.snr_db.empty()) throw ConfigError("'snr_db' must not be empty");
    } else if (j.contains("snr")) {
        const auto& g = j.at("snr");
        if (!g.is_object()) throw ConfigError("'snr' must be an object");
        detail::reject_unknown(g, {"min", "max", "step"}, "snr");
        s.sim.snr_db = snr_grid(get_as<double>(g.value("min", json(0.0)), "min", "snr"),
                                get_as<double>(g.value("max", json(30.0)), "max", "snr"),
                                get_as<double>(g.value("step", json(1.0)), "step", "snr"));
    }
    if (j.contains("trials")) {
        const auto t = get_as<long long>(j.at("trials"), "trials", "config");
        if (t < 1) throw ConfigError("trials must be at least 1");
        s.sim.trials = static_cast<std::size_t>(t);
    }
    if (j.contains("symbols")) {
        const auto k = get_as<long long>(j.at("symbols"), "symbols", "config");
        if (k < 1) throw ConfigError("symbols must be at least 1");
        s.sim.symbols = static_cast<std::size_t>(k);
    }
    if (j.contains("seed")) s.sim.seed = get_as<std::uint64_t>(j.at("seed"), "seed", "config");
    if (j.contains("classifiers")) {
        const auto names = get_as<std::vector<std::string>>(j.at("classifiers"), "classifiers", "config");
        s.sim.schemes.clear();
        for (const auto& n : names) {
            try {
                s.sim.schemes.push_back(scheme_from_name(n));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        }
    }
    if (j.contains("phase_rule"))
        s.sim.phase_rule = phase_rule_from_name(get_as<std::string>(j.at("phase_rule"), "phase_rule", "config"));
    if (j.contains("region_weights")) {
        const auto& w = j.at("region_weights");
        if (!w.is_object()) throw ConfigError("'region_weights' must be an object");
        detail::reject_unknown(w, {"oma", "qpsk", "qam16", "qam64"}, "region_weights");
        RegionWeights rw;
        rw.oma = get_as<double>(w.value("oma", json(0.0)), "oma", "region_weights");
        rw.qpsk = get_as<double>(w.value("qpsk", json(0.0)), "qpsk", "region_weights");
        rw.qam16 = get_as<double>(w.value("qam16", json(0.0)), "qam16", "region_weights");
        rw.qam64 = get_as<double>(w.value("qam64", json(0.0)), "qam64", "region_weights");
        s.sim.region_weights = rw;
    }
    if (j.contains("theta")) {
        const auto& t = j.at("theta");
        if (t.is_string()) {
            if (t.get<std::string>() != "optimize") throw ConfigError("'theta' string must be \"optimize\"");
            s.optimize_theta = true;
        } else if (t.is_number()) {
            s.theta0 = t.get<double>();
            s.sim.thetas = oma_only_rotation(s.sim.table, s.theta0);
        } else if (t.is_array()) {
            s.sim.thetas = get_as<std::vector<double>>(t, "theta", "config");
            if (s.sim.thetas.size() != static_cast<std::size_t>(s.sim.table.size()))
                throw ConfigError("'theta' array needs one rotation per mode");
            s.theta0 = s.sim.thetas.front();
        } else {
            throw ConfigError("'theta' must be a number, an array or \"optimize\"");
        }
    }
    if (j.contains("theta_search")) {
        const auto& t = j.at("theta_search");
        if (!t.is_object()) throw ConfigError("'theta_search' must be an object");
        detail::reject_unknown(t, {"snr_db", "step", "trials"}, "theta_search");
        if (t.contains("snr_db")) s.theta_snr_db = get_as<double>(t.at("snr_db"), "snr_db", "theta_search");
        if (t.contains("step")) s.theta_search.step = get_as<double>(t.at("step"), "step", "theta_search");
        if (t.contains("trials")) s.theta_search.trials = get_as<std::size_t>(t.at("trials"), "trials", "theta_search");
        if (!(s.theta_search.step > 0.0)) throw ConfigError("theta_search.step must be positive");
        if (s.theta_search.trials < 1) throw ConfigError("theta_search.trials must be at least 1");
    }
    if (j.contains("fixed_mode") && !j.at("fixed_mode").is_null()) s.sim.fixed_mode = get_as<int>(j.at("fixed_mode"), "fixed_mode", "config");
    if (j.contains("truth_role"))
        s.sim.truth_role = detail::role_from_name(get_as<std::string>(j.at("truth_role"), "truth_role", "config"));
    if (j.contains("sic_policy"))
        s.sim.sic_policy =
            detail::sic_policy_from_name(get_as<std::string>(j.at("sic_policy"), "sic_policy", "config"));
    if (j.contains("capacity_samples"))
        s.sim.capacity_samples = get_as<std::size_t>(j.at("capacity_samples"), "capacity_samples", "config");
    if (j.contains("output_dir"))
        s.output_dir = get_as<std::string>(j.at("output_dir"), "output_dir", "config");

    try {
        s.sim.validate();
        (void)make_plan(s.sim);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return s;
}

inline ExperimentSpec load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_config(j);
}

/// Fully resolved configuration; its serialization feeds the config hash.
inline nlohmann::json resolved_config(const ExperimentSpec& s)
{
    nlohmann::json j;
    j["preset"] = s.sim.preset;
    j["modes"] = detail::table_to_json(s.sim.table);
    j["snr_db"] = s.sim.snr_db;
    j["trials"] = s.sim.trials;
    j["symbols"] = s.sim.symbols;
    j["seed"] = s.sim.seed;
    std::vector<std::string> names;
    for (auto sc : s.sim.schemes) names.emplace_back(scheme_name(sc));
    j["classifiers"] = names;
    j["phase_rule"] = phase_rule_name(s.sim.phase_rule);
    if (s.sim.region_weights) {
        const auto& w = *s.sim.region_weights;
        j["region_weights"] = {{"oma", w.oma}, {"qpsk", w.qpsk}, {"qam16", w.qam16}, {"qam64", w.qam64}};
    }
    j["theta"] = s.sim.thetas.empty() ? std::vector<double>(static_cast<std::size_t>(s.sim.table.size()), 0.0)
                                      : s.sim.thetas;
    j["fixed_mode"] = s.sim.fixed_mode ? nlohmann::json(*s.sim.fixed_mode) : nlohmann::json(nullptr);
    j["truth_role"] = role_name(s.sim.truth_role);
    j["sic_policy"] = detail::sic_policy_name(s.sim.sic_policy);
    j["capacity_samples"] = s.sim.capacity_samples;
    return j;
}

inline std::string config_hash(const ExperimentSpec& s) { return hex64(fnv1a64(resolved_config(s).dump())); }

inline std::string version_string()
{
#ifdef NBSC_VERSION
    return NBSC_VERSION;
#else
    return "unknown";
#endif
}

/// curves.csv: one row per (SNR, classifier).
inline void write_curves_csv(std::ostream& os, const std::vector<CurvePoint>& pts)
{
    os << "schema_version,snr_db,classifier,trials,"
          "oma_noma_error_rate,oma_noma_ci_low,oma_noma_ci_high,"
          "near_far_error_rate,near_far_ci_low,near_far_ci_high,near_far_trials,"
          "mc_error_rate,mc_ci_low,mc_ci_high,mc_trials,"
          "frame_loss_rate,frame_loss_ci_low,frame_loss_ci_high,"
          "ser,ser_ci_low,ser_ci_high,"
          "capacity,capacity_ci,capacity_matrix,capacity_delta_vs_genie,capacity_delta_ci\n";
    auto prop = [&](const Proportion& p) {
        os << ',' << format_number(p.value) << ',' << format_number(p.lower) << ',' << format_number(p.upper);
    };
    for (const auto& pt : pts) {
        for (const auto& m : pt.schemes) {
            os << csv_schema_version << ',' << format_number(pt.snr_db) << ',' << csv_field(scheme_name(m.scheme))
               << ',' << m.counts.trials;
            prop(m.oma_noma);
            prop(m.near_far);
            os << ',' << m.near_far.trials;
            prop(m.mc);
            os << ',' << m.mc.trials;
            prop(m.frame_loss);
            prop(m.ser);
            os << ',' << format_number(m.capacity.mean) << ',' << format_number(m.capacity.half_width) << ','
               << format_number(m.capacity_matrix) << ',' << format_number(m.delta_vs_genie.mean) << ','
               << format_number(m.delta_vs_genie.half_width) << '\n';
        }
    }
}

/// confusion_<snr>.csv: counts of decided mode (0 = OMA) per true mode.
inline void write_confusion_csv(std::ostream& os, const CurvePoint& pt, int modes)
{
    os << "schema_version,snr_db,classifier,true_mode,decided_mode,count,rate\n";
    const auto n = static_cast<std::size_t>(modes);
    for (const auto& m : pt.schemes) {
        for (std::size_t l = 0; l < n; ++l) {
            std::uint64_t row = 0;
            for (std::size_t d = 0; d < n; ++d) row += m.counts.confusion[l * n + d];
            for (std::size_t d = 0; d < n; ++d) {
                const auto c = m.counts.confusion[l * n + d];
                os << csv_schema_version << ',' << format_number(pt.snr_db) << ',' << scheme_name(m.scheme) << ','
                   << l << ',' << d << ',' << c << ','
                   << format_number(row ? static_cast<double>(c) / static_cast<double>(row) : 0.0) << '\n';
            }
        }
    }
}

/// capacity.csv: measured and matrix-form capacity per (SNR, classifier).
inline void write_capacity_csv(std::ostream& os, const std::vector<CurvePoint>& pts)
{
    os << "schema_version,snr_db,classifier,capacity,capacity_ci,capacity_matrix,delta_vs_genie,delta_ci,"
          "relative_gap_to_genie\n";
    for (const auto& pt : pts) {
        const double genie = pt.schemes.empty()
                                 ? 0.0
                                 : pt.schemes.front().capacity.mean - pt.schemes.front().delta_vs_genie.mean;
        for (const auto& m : pt.schemes) {
            const double gap = genie > 0.0 ? -m.delta_vs_genie.mean / genie : 0.0;
            os << csv_schema_version << ',' << format_number(pt.snr_db) << ',' << scheme_name(m.scheme) << ','
               << format_number(m.capacity.mean) << ',' << format_number(m.capacity.half_width) << ','
               << format_number(m.capacity_matrix) << ',' << format_number(m.delta_vs_genie.mean) << ','
               << format_number(m.delta_vs_genie.half_width) << ',' << format_number(gap) << '\n';
        }
    }
}

inline std::string confusion_file_name(double snr_db) { return "confusion_" + format_number(snr_db) + ".csv"; }

inline nlohmann::json manifest(const ExperimentSpec& s, const std::vector<std::string>& files)
{
    nlohmann::json j;
    j["tool"] = "nbsc";
    j["version"] = version_string();
    j["csv_schema_version"] = csv_schema_version;
    j["seed"] = s.sim.seed;
    j["config_hash"] = config_hash(s);
    j["config"] = resolved_config(s);
    j["files"] = files;
    return j;
}

/// Structural problems in sweep results; empty when all hold.
inline std::vector<std::string> check_curve_invariants(const std::vector<CurvePoint>& pts)
{
    std::vector<std::string> bad;
    auto in_unit = [&](const Proportion& p, const std::string& what) {
        if (!(p.value >= 0.0 && p.value <= 1.0) || !(p.lower <= p.value + 1e-12) || !(p.upper + 1e-12 >= p.value) ||
            p.half_width() < 0.0)
            bad.push_back(what + " outside [0,1] or inconsistent interval");
    };
    for (const auto& pt : pts) {
        const std::string at = " at " + format_number(pt.snr_db) + " dB";
        std::uint64_t trials = pt.schemes.empty() ? 0 : pt.schemes.front().counts.trials;
        for (const auto& m : pt.schemes) {
            const std::string who = std::string(scheme_name(m.scheme)) + at;
            in_unit(m.oma_noma, who + " OMA/NOMA rate");
            in_unit(m.near_far, who + " near/far rate");
            in_unit(m.mc, who + " MC rate");
            in_unit(m.frame_loss, who + " frame-loss rate");
            in_unit(m.ser, who + " SER");
            if (m.counts.trials != trials) bad.push_back(who + " has a different trial count");
            if (m.capacity.half_width < 0.0 || !std::isfinite(m.capacity.mean)) bad.push_back(who + " capacity");
            if (m.scheme == Scheme::genie &&
                (m.counts.oma_noma_errors || m.counts.near_far_errors || m.counts.mc_errors || m.counts.frames_lost))
                bad.push_back(who + " genie reports classification errors");
        }
    }
    return bad;
}

/// Library self-checks run by `validate`; returns the failures.
inline std::vector<std::string> validate_invariants(std::size_t frames_per_case = 200)
{
    std::vector<std::string> bad;
    for (auto m : {Modulation::qpsk, Modulation::qam16, Modulation::qam64}) {
        const auto c = base_constellation(m);
        if (c.size() != static_cast<std::size_t>(order_of(m))) bad.push_back("base set size");
        if (std::abs(c.avg_power() - 1.0) > 1e-12) bad.push_back("base set power");
    }
    for (const char* name : {"case1", "case2", "case3"}) {
        const auto table = presets::by_name(name);
        for (auto rule : {PhaseRule::uniform, PhaseRule::nonuniform}) {
            const auto plan = rule == PhaseRule::uniform ? assign_uniform(table) : assign_nonuniform(table);
            for (int l = 0; l < table.size(); ++l) {
                const auto d = classify_prc(plan.rotations()[static_cast<std::size_t>(l)], plan);
                if ((l == 0) != (d.access == Access::oma) || (l > 0 && d.mode != l))
                    bad.push_back(std::string(name) + " " + phase_rule_name(rule) + ": φ_" + std::to_string(l) +
                                  " not decided as its own mode");
            }
        }
        SimConfig cfg;
        cfg.table = table;
        cfg.preset = name;
        cfg.snr_db = {90.0};
        cfg.trials = frames_per_case;
        cfg.thetas = oma_only_rotation(table, presets::prm_theta0(name));
        cfg.capacity_samples = 1;
        const auto pt = Simulator(cfg).run_point(90.0);
        for (const auto& m : pt.schemes)
            if (m.counts.oma_noma_errors || m.counts.near_far_errors || m.counts.mc_errors || m.counts.symbol_errors)
                bad.push_back(std::string(name) + ": " + scheme_name(m.scheme) + " errs on noiseless frames");
        for (const auto& msg : check_curve_invariants({pt})) bad.push_back(std::string(name) + ": " + msg);
    }
    return bad;
}

} // namespace nbsc

#endif // NBSC_EXPERIMENT_HPP
