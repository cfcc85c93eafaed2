// nbsc: command-line driver for the NOMA signal classification simulator.
//
//   nbsc sweep --preset case1 --snr-min 0 --snr-max 20 --trials 10000 --out run1
//   nbsc optimize-theta --preset case1 --snr 13
//   nbsc analyze --preset case3 --out tables
//   nbsc validate
//
// Exit status: 0 success, 1 configuration error, 2 invariant failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nbsc/nbsc.hpp"

namespace {

using nlohmann::json;

constexpr int exit_config = 1;
constexpr int exit_invariant = 2;

struct CommonOptions {
    std::string config;
    std::optional<std::string> preset;
    std::optional<double> snr_min, snr_max, snr_step;
    std::optional<long long> trials;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> classifiers;
    std::optional<std::string> phase_rule;
    std::optional<std::string> theta;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonOptions& o)
{
    cmd->add_option("--config", o.config, "JSON experiment description")->check(CLI::ExistingFile);
    cmd->add_option("--preset", o.preset, "case1 | case2 | case3 | custom");
    cmd->add_option("--snr-min", o.snr_min, "first SNR in dB");
    cmd->add_option("--snr-max", o.snr_max, "last SNR in dB");
    cmd->add_option("--snr-step", o.snr_step, "SNR step in dB");
    cmd->add_option("--trials", o.trials, "Monte Carlo trials per SNR point");
    cmd->add_option("--seed", o.seed, "master seed");
    cmd->add_option("--classifiers", o.classifiers, "comma list of mlc,prm,prc,genie");
    cmd->add_option("--phase-rule", o.phase_rule, "uniform | nonuniform");
    cmd->add_option("--theta", o.theta, "OMA rotation θ_0 in radians, or 'optimize'");
    cmd->add_option("--out", o.out, "output directory");
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

/// Config file contents with command-line overrides applied.
nbsc::ExperimentSpec resolve(const CommonOptions& o)
{
    json j = json::object();
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) throw nbsc::ConfigError("cannot open config file: " + o.config);
        try {
            in >> j;
        } catch (const json::parse_error& e) {
            throw nbsc::ConfigError("config is not valid JSON: " + std::string(e.what()));
        }
        if (!j.is_object()) throw nbsc::ConfigError("config must be a JSON object");
    }
    if (o.preset) {
        j["preset"] = *o.preset;
        if (*o.preset != "custom") j.erase("modes");
    }
    if (o.snr_min || o.snr_max || o.snr_step) {
        json g = j.contains("snr") ? j["snr"] : json::object();
        if (o.snr_min) g["min"] = *o.snr_min;
        if (o.snr_max) g["max"] = *o.snr_max;
        if (o.snr_step) g["step"] = *o.snr_step;
        j.erase("snr_db");
        j["snr"] = g;
    }
    if (o.trials) j["trials"] = *o.trials;
    if (o.seed) j["seed"] = *o.seed;
    if (o.classifiers) j["classifiers"] = split_list(*o.classifiers);
    if (o.phase_rule) j["phase_rule"] = *o.phase_rule;
    if (o.theta) {
        if (*o.theta == "optimize") {
            j["theta"] = "optimize";
        } else {
            try {
                j["theta"] = std::stod(*o.theta);
            } catch (const std::exception&) {
                throw nbsc::ConfigError("--theta must be a number or 'optimize'");
            }
        }
    }
    if (o.out) j["output_dir"] = *o.out;
    return nbsc::parse_config(j);
}

void write_file(const std::filesystem::path& p, const std::string& content)
{
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << content;
}

void print_theta(const nbsc::ThetaResult& r)
{
    std::printf("theta0 = %.2f rad, capacity = %.6f +/- %.6f bit/s/Hz\n", r.theta, r.capacity.mean,
                r.capacity.half_width);
}

int run_sweep(const CommonOptions& o)
{
    auto spec = resolve(o);
    if (spec.optimize_theta) {
        auto search = spec.theta_search;
        search.seed = spec.sim.seed;
        const auto r = nbsc::optimize_theta(spec.sim.table, spec.theta_snr_db, search);
        print_theta(r);
        spec.theta0 = r.theta;
        spec.sim.thetas = nbsc::oma_only_rotation(spec.sim.table, r.theta);
    }

    const nbsc::Simulator sim(spec.sim);
    const auto points = sim.run_sweep([](const nbsc::CurvePoint& p) {
        std::fprintf(stderr, "snr %6.2f dB done\n", p.snr_db);
    });

    std::filesystem::create_directories(spec.output_dir);
    std::vector<std::string> files{"curves.csv", "capacity.csv"};
    std::ostringstream curves, cap;
    nbsc::write_curves_csv(curves, points);
    nbsc::write_capacity_csv(cap, points);
    write_file(spec.output_dir / "curves.csv", curves.str());
    write_file(spec.output_dir / "capacity.csv", cap.str());
    for (const auto& p : points) {
        std::ostringstream c;
        nbsc::write_confusion_csv(c, p, spec.sim.table.size());
        const auto name = nbsc::confusion_file_name(p.snr_db);
        write_file(spec.output_dir / name, c.str());
        files.push_back(name);
    }
    files.push_back("manifest.json");
    write_file(spec.output_dir / "manifest.json", nbsc::manifest(spec, files).dump(2) + "\n");

    const auto bad = nbsc::check_curve_invariants(points);
    for (const auto& b : bad) std::fprintf(stderr, "invariant violated: %s\n", b.c_str());
    std::printf("wrote %zu files to %s\n", files.size(), spec.output_dir.string().c_str());
    return bad.empty() ? 0 : exit_invariant;
}

int run_optimize(const CommonOptions& o, std::optional<double> snr, double step, std::size_t trials)
{
    const auto spec = resolve(o);
    nbsc::ThetaSearch search;
    search.step = step;
    search.trials = trials;
    search.seed = spec.sim.seed;
    search.symbols = spec.sim.symbols;
    if (!(step > 0.0)) throw nbsc::ConfigError("--step must be positive");
    if (trials < 1) throw nbsc::ConfigError("--search-trials must be at least 1");
    const auto r = nbsc::optimize_theta(spec.sim.table, snr.value_or(spec.theta_snr_db), search);
    print_theta(r);
    if (o.out) {
        std::filesystem::create_directories(*o.out);
        std::ostringstream os;
        os << "schema_version,theta0,capacity,capacity_ci\n";
        for (const auto& g : r.grid)
            os << nbsc::csv_schema_version << ',' << nbsc::format_number(g.theta) << ','
               << nbsc::format_number(g.capacity.mean) << ',' << nbsc::format_number(g.capacity.half_width) << '\n';
        write_file(std::filesystem::path(*o.out) / "theta_search.csv", os.str());
    }
    return 0;
}

int run_analyze(const CommonOptions& o, std::size_t samples)
{
    const auto spec = resolve(o);
    const auto& table = spec.sim.table;
    const nbsc::SinrModel model(table, spec.sim.sic_policy);
    std::ostringstream sinr, err, cap;
    sinr << "schema_version,snr_db,true_mode,decided_mode,eta,sinr_condition,interference_far,interference_near\n";
    err << "schema_version,snr_db,mode_a,mode_b,mc_error_exact,mc_error_approx\n";
    cap << "schema_version,snr_db,capacity_perfect\n";
    for (double snr : spec.sim.snr_db) {
        nbsc::ChannelRealization chan;
        chan.sigma2 = nbsc::noise_variance(snr);
        const auto s = nbsc::format_number(snr);
        for (int l = 1; l < table.size(); ++l) {
            for (int m = 1; m < table.size(); ++m) {
                const auto& t = model.terms(l, m);
                sinr << nbsc::csv_schema_version << ',' << s << ',' << l << ',' << m << ','
                     << nbsc::format_number(model.eta(l, m, chan)) << ','
                     << (nbsc::sinr_condition(table, l, m, chan, spec.sim.sic_policy) ? 1 : 0) << ','
                     << nbsc::format_number(t.far) << ',' << nbsc::format_number(t.near) << '\n';
            }
        }
        for (int a = 0; a < table.size(); ++a)
            for (int b = 0; b < table.size(); ++b)
                if (a != b)
                    err << nbsc::csv_schema_version << ',' << s << ',' << a << ',' << b << ','
                        << nbsc::format_number(nbsc::mc_error_prob(table, a, b, chan, true)) << ','
                        << nbsc::format_number(nbsc::mc_error_prob(table, a, b, chan, false)) << '\n';
        const auto in = nbsc::CapacityInputs::perfect(static_cast<std::size_t>(table.size()));
        cap << nbsc::csv_schema_version << ',' << s << ','
            << nbsc::format_number(nbsc::capacity(table, in, snr, samples, spec.sim.seed, spec.sim.sic_policy))
            << '\n';
    }
    std::filesystem::create_directories(spec.output_dir);
    write_file(spec.output_dir / "sinr.csv", sinr.str());
    write_file(spec.output_dir / "mc_error.csv", err.str());
    write_file(spec.output_dir / "capacity_analytic.csv", cap.str());
    std::printf("wrote sinr.csv, mc_error.csv, capacity_analytic.csv to %s\n", spec.output_dir.string().c_str());
    return 0;
}

int run_validate(std::size_t frames)
{
    const auto bad = nbsc::validate_invariants(frames);
    for (const auto& b : bad) std::printf("FAIL %s\n", b.c_str());
    if (bad.empty()) std::printf("all invariants hold\n");
    return bad.empty() ? 0 : exit_invariant;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Blind OMA/NOMA, modulation and near/far classification simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", nbsc::version_string());

    CommonOptions sweep_opts, opt_opts, an_opts;
    auto* sweep = app.add_subcommand("sweep", "Monte Carlo SNR sweep; writes curves, confusion and capacity CSVs");
    add_common(sweep, sweep_opts);

    auto* opt = app.add_subcommand("optimize-theta", "grid search of the OMA rotation θ_0 for MLC-PRM");
    add_common(opt, opt_opts);
    std::optional<double> opt_snr;
    double opt_step = 0.01;
    std::size_t opt_trials = 10000;
    opt->add_option("--snr", opt_snr, "SNR in dB for the search (preset default otherwise)");
    opt->add_option("--step", opt_step, "grid step in radians");
    opt->add_option("--search-trials", opt_trials, "trials per grid point");

    auto* an = app.add_subcommand("analyze", "closed-form SINR, error probability and capacity tables");
    add_common(an, an_opts);
    std::size_t an_samples = 20000;
    an->add_option("--samples", an_samples, "channel draws for the ergodic capacity");

    auto* val = app.add_subcommand("validate", "run the library invariant suite");
    std::size_t val_frames = 200;
    val->add_option("--frames", val_frames, "noiseless frames per case");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_config;
    }

    try {
        if (*sweep) return run_sweep(sweep_opts);
        if (*opt) return run_optimize(opt_opts, opt_snr, opt_step, opt_trials);
        if (*an) return run_analyze(an_opts, an_samples);
        if (*val) return run_validate(val_frames);
    } catch (const nbsc::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return exit_config;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_invariant;
    }
    return 0;
}
