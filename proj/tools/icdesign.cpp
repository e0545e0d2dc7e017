// icdesign: command-line front end for scenario files.
//
// Exit codes: 0 ok, 1 runtime failure, 2 config error, 3 not incentive
// compatible (or uncertified design), 4 no identifying statistic.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "icdesign/asymptotics.hpp"
#include "icdesign/config.hpp"
#include "icdesign/report.hpp"
#include "icdesign/reproduce.hpp"
#include "icdesign/simulator.hpp"

namespace {

using namespace icdesign;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNotIC = 3;
constexpr int kExitNoStatistic = 4;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> reps;
    std::optional<unsigned> threads;
    std::string method = "analytic";
    std::string out;
    std::string format = "csv";
    std::string target;
};

/// Thrown for problems with the inputs rather than the analysis.
struct ConfigFailure {
    std::string message;
};

ScenarioConfig load(const Options& o) {
    try {
        auto c = load_config(o.config);
        if (o.seed) c.seed = *o.seed;
        if (o.reps) c.reps = *o.reps;
        if (o.threads) c.threads = *o.threads;
        return c;
    } catch (const Error& e) {
        throw ConfigFailure{e.what()};
    }
}

template <class F>
auto config_step(const ScenarioConfig& c, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        throw ConfigFailure{c.source + ": " + e.what()};
    }
}

OutputFormat format_of(const Options& o) { return o.format == "table" ? OutputFormat::Table : OutputFormat::Csv; }

/// Writes to --out when given, stdout otherwise.
void emit(const Options& o, const std::string& text) {
    if (o.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw Error(ErrorCode::ConfigError, "cannot write '" + o.out + "'");
    f << text;
}

std::vector<ActionSpace> spaces_of(const ScenarioConfig& c) {
    if (c.spaces.empty()) throw ConfigFailure{c.source + ": this command needs a [spaces] section"};
    return config_step(c, [&] {
        std::vector<ActionSpace> s;
        for (const auto& g : c.spaces) s.emplace_back(c.family, g);
        return s;
    });
}

int cmd_simulate(const Options& o) {
    const auto c = load(o);
    const std::vector<std::size_t> ks = c.k_list.empty() ? std::vector<std::size_t>{c.m / (c.n * c.blocks)} : c.k_list;
    const std::vector<std::string> transforms = c.transforms.empty() ? std::vector<std::string>{c.transform} : c.transforms;
    const auto profiles = config_step(c, [&] { return build_profiles(c); });

    std::vector<StudyRow> rows;
    for (std::size_t k : ks) {
        for (const auto& t : transforms) {
            auto ck = c;
            ck.m = k * c.n * c.blocks;
            const auto scenario = config_step(ck, [&] { return build_scenario(ck, t); });
            const auto est = estimate_win_prob(scenario, profiles, c.reps, c.seed, c.threads);
            for (std::size_t i = 0; i < c.n; ++i)
                rows.push_back({c.id, k, scenario.score.transform.name(), i, est.p_hat[i], est.se[i], c.reps, c.seed});
        }
    }
    std::ostringstream out;
    study_table(rows).write(out, format_of(o));
    emit(o, out.str());
    return kExitOk;
}

void write_certificate(const Options& o, const ICCertificate& cert, const std::string& preamble) {
    std::ostringstream out;
    if (format_of(o) == OutputFormat::Table) {
        out << "verdict: " << verdict_name(cert.verdict) << " (" << method_name(cert.method) << ", "
            << cert.cells_checked << " cells)\n"
            << preamble;
    }
    certificate_table(cert).write(out, format_of(o));
    emit(o, out.str());
}

int cmd_ic_check(const Options& o) {
    const auto c = load(o);
    const auto spaces = spaces_of(c);
    const auto scenario = config_step(c, [&] { return build_scenario(c); });

    if (o.method == "mc") {
        const auto cert = mc_best_response(scenario, c.reps, c.seed, c.budget, c.threads);
        write_certificate(o, cert, "");
        return cert.verdict == Verdict::IC ? kExitOk : kExitNotIC;
    }

    if (c.family == Family::PoissonInterferenceFig1) {
        std::cerr << "no identifying statistic: with a single test set per agent, different action profiles "
                     "produce identically distributed outcomes, so no statistic identifies the performance "
                     "lam + lamc. Use the two-group design (poisson_interference_fig2).\n";
        try {
            const auto cert = check_ic_closed_form(scenario.model, scenario.score, spaces,
                                                   static_cast<double>(scenario.k()), 1e-9, c.id);
            write_certificate(o, cert, "");
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoClosedForm) throw;
        }
        return kExitNoStatistic;
    }

    const auto cert = check_ic_theorem1(scenario.model, scenario.score, spaces,
                                        static_cast<double>(scenario.statistic_k()), 1e-9, c.id);
    std::string preamble;
    if (!is_interference(c.family)) {
        const auto t2 = check_ic_theorem2(scenario.model, scenario.score, spaces, static_cast<double>(scenario.k()),
                                          c.var_tolerance);
        std::ostringstream p;
        p << "sufficient conditions: composed=" << t2.conditions.is_composed
          << " constant_variance=" << t2.conditions.variance_const << " monotone=" << t2.conditions.monotone
          << " variance_ratio=" << format_sig(t2.variance_ratio) << "\n";
        preamble = p.str();
    }
    write_certificate(o, cert, preamble);
    return cert.verdict == Verdict::IC ? kExitOk : kExitNotIC;
}

int cmd_power(const Options& o) {
    const auto c = load(o);
    if (c.alt_transform.empty()) throw ConfigFailure{c.source + ": power needs [analysis].alt_transform"};
    const auto spaces = spaces_of(c);
    const auto base = config_step(c, [&] { return build_scenario(c); });
    const auto alt = config_step(c, [&] { return build_scenario(c, c.alt_transform); });
    const CertMethod method = o.method == "mc" ? CertMethod::MonteCarlo : CertMethod::Analytic;

    auto certify = [&](const Scenario& s) {
        if (method == CertMethod::MonteCarlo) return mc_best_response(s, c.reps, c.seed, c.budget, c.threads);
        return check_ic_theorem1(s.model, s.score, spaces, static_cast<double>(s.statistic_k()), 1e-9, s.id);
    };
    const Design d{c.transform, base.score, certify(base)};
    const Design dp{c.alt_transform, alt.score, certify(alt)};
    const auto rep = power_compare(d, dp, base.model, base.natural_profile(), base.k(), method, c.reps, c.seed,
                                   c.threads);

    TextTable t;
    t.header = {"scenario_id", "k", "tau", "design", "p_tau", "alt_design", "p_tau_alt", "se_diff", "alt_more_powerful",
                "method"};
    t.rows.push_back({c.id, std::to_string(base.k()), std::to_string(rep.tau + 1), base.score.transform.name(),
                      format_sig(rep.p_tau_D), alt.score.transform.name(), format_sig(rep.p_tau_Dprime),
                      method == CertMethod::MonteCarlo ? format_sig(rep.se_diff) : "",
                      rep.more_powerful ? "true" : "false", std::string(method_name(method))});
    std::ostringstream out;
    t.write(out, format_of(o));
    emit(o, out.str());
    return kExitOk;
}

int cmd_stabilize(const Options& o) {
    const auto c = load(o);
    const auto spaces = spaces_of(c);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : spaces)
        for (const auto& a : s.grid()) {
            lo = std::min(lo, performance(c.family, a));
            hi = std::max(hi, performance(c.family, a));
        }
    if (c.chi_range) std::tie(lo, hi) = *c.chi_range;

    StabilizedTransform st;
    if (c.family == Family::PoissonIID || c.family == Family::NormalCurved) {
        st = build_stabilizer(variance_at_performance(c.family), lo, hi, c.quad_tol, c.knots);
    } else {
        if (is_interference(c.family))
            throw Error(ErrorCode::AssumptionViolated, "variance stabilization needs a model without interference");
        std::vector<Action> grid = spaces[0].grid();
        std::sort(grid.begin(), grid.end(),
                  [&](const Action& a, const Action& b) { return performance(c.family, a) < performance(c.family, b); });
        std::vector<double> chi, s2;
        for (const auto& a : grid) {
            chi.push_back(performance(c.family, a));
            s2.push_back(unit_variance(c.family, a));
        }
        st = build_stabilizer(s2, chi, lo, hi, c.quad_tol, c.knots);
    }

    const auto* table = st.base.table();
    std::ostringstream flags;
    flags << "nu_convex=" << st.convexity.nu_convex << " inv_sqrt_sigma2_convex=" << st.convexity.inv_sqrt_convex
          << " sigma2_convex=" << st.convexity.sigma2_convex << " sigma2_nondecreasing=" << st.sigma2_monotone
          << " knots=" << table->x.size() << " quad_error=" << format_sig(st.quad_error) << "\n";
    std::ostringstream file;
    file << "# variance-stabilizing transform for " << family_name(c.family) << " on [" << format_double(lo) << ", "
         << format_double(hi) << "]\n# " << flags.str() << "# x nu\n";
    for (std::size_t i = 0; i < table->x.size(); ++i)
        file << format_double(table->x[i]) << ' ' << format_double(table->nu[i]) << '\n';
    emit(o, file.str());
    if (!o.out.empty()) std::cout << flags.str();
    return kExitOk;
}

int cmd_reproduce(const Options& o) {
    ReproOptions opt;
    if (o.reps) opt.reps = *o.reps;
    if (o.seed) opt.seed = *o.seed;
    if (o.threads) opt.threads = *o.threads;
    std::vector<std::string_view> targets;
    if (o.target == "all") targets = reproduce_targets();
    else targets.push_back(o.target);

    bool ok = true;
    TextTable all;
    for (auto t : targets) {
        const auto rows = reproduce(t, opt);
        const auto table = repro_table(t, rows);
        all.header = table.header;
        all.rows.insert(all.rows.end(), table.rows.begin(), table.rows.end());
        for (const auto& r : rows) ok = ok && r.pass;
    }
    std::ostringstream out;
    all.write(out, format_of(o));
    emit(o, out.str());
    return ok ? kExitOk : kExitRuntime;
}

int cmd_dump_config(const Options& o) {
    emit(o, dump_config(load(o)));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Incentive-compatible experiment design toolkit"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub, bool needs_config) {
        if (needs_config) sub->add_option("--config", o.config, "Scenario file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "Master seed override");
        sub->add_option("--reps", o.reps, "Replications override");
        sub->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
        sub->add_option("--out", o.out, "Write output to this file instead of stdout");
        sub->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "table"}));
        return sub;
    };
    auto* simulate = common(app.add_subcommand("simulate", "Estimate win probabilities by Monte Carlo"), true);
    auto* ic = common(app.add_subcommand("ic-check", "Certify incentive compatibility on the action grids"), true);
    ic->add_option("--method", o.method, "analytic or mc")->check(CLI::IsMember({"analytic", "mc"}));
    auto* power = common(app.add_subcommand("power", "Compare two certified designs at the natural profile"), true);
    power->add_option("--method", o.method, "analytic or mc")->check(CLI::IsMember({"analytic", "mc"}));
    auto* stabilize = common(app.add_subcommand("stabilize", "Tabulate a variance-stabilizing transform"), true);
    auto* repro = common(app.add_subcommand("reproduce", "Compare computed values against published ones"), false);
    std::vector<std::string> target_names = {"all"};
    for (auto t : reproduce_targets()) target_names.emplace_back(t);
    repro->add_option("target", o.target, "Target")->required()->check(CLI::IsMember(target_names));
    auto* dump = common(app.add_subcommand("dump-config", "Print the normalized scenario file"), true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*simulate) return cmd_simulate(o);
        if (*ic) return cmd_ic_check(o);
        if (*power) return cmd_power(o);
        if (*stabilize) return cmd_stabilize(o);
        if (*repro) return cmd_reproduce(o);
        if (*dump) return cmd_dump_config(o);
    } catch (const ConfigFailure& e) {
        std::cerr << "config error: " << e.message << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
        if (e.code() == ErrorCode::NoIdentifyingStatistic) return kExitNoStatistic;
        if (e.code() == ErrorCode::NotCertified) return kExitNotIC;
        if (e.code() == ErrorCode::ConfigError) return kExitConfig;
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitRuntime;
}
