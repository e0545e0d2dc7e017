#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "outcome_models.hpp"
#include "scoring.hpp"
#include "simulator.hpp"

namespace icdesign {

/// Scenario file contents. Sections and keys:
///
///   [scenario]   id
///   [model]      family, gamma
///   [design]     statistic, transform, aggregation
///   [units]      m (required), n, blocks
///   [spaces]     agent1 = "p,p; p,p" ... one grid per agent
///   [profile]    agent1 = "p,p; p,p" ... one action per block (optional)
///   [simulation] reps, seed, threads, sampling, budget
///   [analysis]   k_list, transforms, alt_transform, var_tolerance, quad_tol,
///                chi_range, knots
struct ScenarioConfig {
    std::string source = "<memory>";
    std::string id = "scenario";

    Family family = Family::PoissonIID;
    std::optional<double> gamma;

    Statistic statistic = Statistic::SampleMeanPerAgent;
    std::string transform = "identity";
    Aggregation aggregation = Aggregation::SummedScores;

    std::size_t m = 0;
    std::size_t n = 2;
    std::size_t blocks = 1;

    std::vector<std::vector<Action>> spaces;   // [agent][grid point]
    std::vector<std::vector<Action>> profile;  // [agent][block]

    std::uint64_t reps = 10000;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    SamplingMode sampling = SamplingMode::SufficientStatistic;
    std::size_t budget = 1000000;

    std::vector<std::size_t> k_list;
    std::vector<std::string> transforms;
    std::string alt_transform;
    double var_tolerance = 1e-6;
    double quad_tol = 1e-10;
    std::optional<std::pair<double, double>> chi_range;
    std::size_t knots = 1025;

    friend bool operator==(const ScenarioConfig& a, const ScenarioConfig& b) {
        // the file name is not part of the scenario
        auto tie = [](const ScenarioConfig& c) {
            return std::tie(c.id, c.family, c.gamma, c.statistic, c.transform, c.aggregation, c.m, c.n, c.blocks,
                            c.spaces, c.profile, c.reps, c.seed, c.threads, c.sampling, c.budget, c.k_list,
                            c.transforms, c.alt_transform, c.var_tolerance, c.quad_tol, c.chi_range, c.knots);
        };
        return tie(a) == tie(b);
    }
};

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

/// Fixed number of significant digits, '.' separator regardless of locale.
inline std::string format_sig(double v, int digits = 6) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
    return std::string(buf, r.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

class ConfigReader {
public:
    ConfigReader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void error(std::size_t line, const std::string& msg) const {
        if (line == 0) fail(ErrorCode::ConfigError, source_ + ": " + msg);
        fail(ErrorCode::ConfigError, source_ + ":" + std::to_string(line) + ": " + msg);
    }

    double to_double(std::size_t line, const std::string& key, std::string_view text) const {
        const auto v = parse_double(text);
        if (!v) error(line, key + ": '" + std::string(text) + "' is not a number");
        return *v;
    }

    template <class Int>
    Int to_uint(std::size_t line, const std::string& key, std::string_view text) const {
        text = trim(text);
        Int v{};
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
            error(line, key + ": '" + std::string(text) + "' is not a non-negative integer");
        return v;
    }

    std::vector<Action> actions(std::size_t line, const std::string& key, std::string_view text) const {
        std::vector<Action> out;
        for (auto part : split(text, ';')) {
            if (part.empty()) error(line, key + ": empty action");
            Action a;
            for (auto p : split(part, ',')) a.params.push_back(to_double(line, key, p));
            out.push_back(std::move(a));
        }
        return out;
    }

private:
    std::string source_;
};

inline std::optional<std::size_t> agent_slot(std::string_view key) {
    constexpr std::string_view prefix = "agent";
    if (key.substr(0, prefix.size()) != prefix) return std::nullopt;
    const auto digits = key.substr(prefix.size());
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size() || v == 0) return std::nullopt;
    return v - 1;
}

}  // namespace detail

inline ScenarioConfig parse_config(std::string_view text, const std::string& source = "<memory>") {
    using detail::trim;
    const detail::ConfigReader rd(source);
    ScenarioConfig c;
    c.source = source;

    std::string section;
    std::map<std::string, std::size_t> seen;  // "section.key" -> line
    std::map<std::size_t, std::pair<std::size_t, std::vector<Action>>> spaces, profile;  // slot -> (line, actions)
    std::size_t lineno = 0;
    std::size_t pos = 0;

    while (pos <= text.size()) {
        const auto eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') rd.error(lineno, "malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            static const std::vector<std::string> known = {"scenario", "model", "design", "units",
                                                           "spaces", "profile", "simulation", "analysis"};
            if (std::find(known.begin(), known.end(), section) == known.end())
                rd.error(lineno, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) rd.error(lineno, "expected key = value");
        if (section.empty()) rd.error(lineno, "key outside of any section");
        const std::string key(trim(line.substr(0, eq)));
        std::string_view value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        const std::string full = section + "." + key;
        if (auto [it, fresh] = seen.emplace(full, lineno); !fresh)
            rd.error(lineno, "duplicate key [" + section + "]." + key + " (first set on line " +
                                 std::to_string(it->second) + ")");
        auto unknown = [&] { rd.error(lineno, "unknown key '" + key + "' in section [" + section + "]"); };

        if (section == "spaces" || section == "profile") {
            const auto slot = detail::agent_slot(key);
            if (!slot) unknown();
            auto& target = section == "spaces" ? spaces : profile;
            target[*slot] = {lineno, rd.actions(lineno, full, value)};
        } else if (section == "scenario") {
            if (key == "id") c.id = std::string(value);
            else unknown();
        } else if (section == "model") {
            if (key == "family") {
                const auto f = parse_family(value);
                if (!f) rd.error(lineno, "unknown family '" + std::string(value) + "'");
                c.family = *f;
            } else if (key == "gamma") {
                c.gamma = rd.to_double(lineno, full, value);
            } else {
                unknown();
            }
        } else if (section == "design") {
            if (key == "statistic") {
                const auto s = parse_statistic(value);
                if (!s) rd.error(lineno, "unknown statistic '" + std::string(value) + "'");
                c.statistic = *s;
            } else if (key == "transform") {
                c.transform = std::string(value);
            } else if (key == "aggregation") {
                if (value == "summed") c.aggregation = Aggregation::SummedScores;
                else if (value == "majority") c.aggregation = Aggregation::MajorityOfBlocks;
                else rd.error(lineno, "aggregation must be summed or majority");
            } else {
                unknown();
            }
        } else if (section == "units") {
            if (key == "m") c.m = rd.to_uint<std::size_t>(lineno, full, value);
            else if (key == "n") c.n = rd.to_uint<std::size_t>(lineno, full, value);
            else if (key == "blocks") c.blocks = rd.to_uint<std::size_t>(lineno, full, value);
            else unknown();
        } else if (section == "simulation") {
            if (key == "reps") c.reps = rd.to_uint<std::uint64_t>(lineno, full, value);
            else if (key == "seed") c.seed = rd.to_uint<std::uint64_t>(lineno, full, value);
            else if (key == "threads") c.threads = rd.to_uint<unsigned>(lineno, full, value);
            else if (key == "budget") c.budget = rd.to_uint<std::size_t>(lineno, full, value);
            else if (key == "sampling") {
                if (value == "sufficient") c.sampling = SamplingMode::SufficientStatistic;
                else if (value == "per_unit") c.sampling = SamplingMode::PerUnit;
                else rd.error(lineno, "sampling must be sufficient or per_unit");
            } else {
                unknown();
            }
        } else if (section == "analysis") {
            if (key == "k_list") {
                for (auto p : detail::split(value, ',')) c.k_list.push_back(rd.to_uint<std::size_t>(lineno, full, p));
            } else if (key == "transforms") {
                for (auto p : detail::split(value, ',')) {
                    if (p.empty()) rd.error(lineno, full + ": empty transform name");
                    c.transforms.emplace_back(p);
                }
            } else if (key == "alt_transform") {
                c.alt_transform = std::string(value);
            } else if (key == "var_tolerance") {
                c.var_tolerance = rd.to_double(lineno, full, value);
            } else if (key == "quad_tol") {
                c.quad_tol = rd.to_double(lineno, full, value);
            } else if (key == "knots") {
                c.knots = rd.to_uint<std::size_t>(lineno, full, value);
            } else if (key == "chi_range") {
                const auto parts = detail::split(value, ',');
                if (parts.size() != 2) rd.error(lineno, full + ": expected 'lo, hi'");
                c.chi_range = std::pair{rd.to_double(lineno, full, parts[0]), rd.to_double(lineno, full, parts[1])};
            } else {
                unknown();
            }
        }
    }

    auto require = [&](const std::string& key) {
        if (!seen.count(key)) {
            const auto dot = key.find('.');
            fail(ErrorCode::ConfigError, source + ": missing required key [" + key.substr(0, dot) + "]." +
                                             key.substr(dot + 1));
        }
    };
    require("model.family");
    require("units.m");

    auto collect = [&](auto& table, std::vector<std::vector<Action>>& out, const std::string& sec) {
        for (std::size_t i = 0; i < table.size(); ++i)
            if (!table.count(i))
                fail(ErrorCode::ConfigError, source + ": [" + sec + "] is missing agent" + std::to_string(i + 1));
        for (auto& [slot, entry] : table) {
            for (const auto& a : entry.second) {
                try {
                    validate_action(c.family, a);
                } catch (const Error& e) {
                    rd.error(entry.first, "[" + sec + "].agent" + std::to_string(slot + 1) + ": " + e.what());
                }
            }
            out.push_back(std::move(entry.second));
        }
    };
    collect(spaces, c.spaces, "spaces");
    collect(profile, c.profile, "profile");

    auto check = [&](bool ok, const std::string& key, const std::string& msg) {
        if (!ok) rd.error(seen.count(key) ? seen[key] : 0, msg);
    };
    check(c.n >= 2, "units.n", "[units].n must be >= 2");
    check(c.blocks >= 1, "units.blocks", "[units].blocks must be >= 1");
    check(c.m > 0 && c.m % (c.n * c.blocks) == 0, "units.m", "[units].m must be a positive multiple of n*blocks");
    check(c.spaces.empty() || c.spaces.size() == c.n, "units.n", "[spaces] must list one grid per agent");
    check(c.profile.empty() || c.profile.size() == c.n, "units.n", "[profile] must list one entry per agent");
    if (!c.profile.empty()) {
        const std::size_t expected = is_interference(c.family) ? 1 : c.blocks;
        for (const auto& p : c.profile)
            check(p.size() == expected, "units.blocks",
                  "[profile] entries need " + std::to_string(expected) + " action(s), one per block");
    }
    check(c.reps >= 1, "simulation.reps", "[simulation].reps must be >= 1");
    check(c.quad_tol > 0.0, "analysis.quad_tol", "[analysis].quad_tol must be positive");
    check(c.knots >= 2, "analysis.knots", "[analysis].knots must be >= 2");
    return c;
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::ConfigError, "cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

inline std::string dump_config(const ScenarioConfig& c) {
    auto actions = [](const std::vector<Action>& list) {
        std::string s;
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (i) s += "; ";
            for (std::size_t p = 0; p < list[i].size(); ++p) {
                if (p) s += ",";
                s += format_double(list[i][p]);
            }
        }
        return s;
    };
    auto join = [](const auto& items, auto fmt) {
        std::string s;
        for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ", " : "") + fmt(items[i]);
        return s;
    };
    std::ostringstream o;
    o << "[scenario]\nid = " << c.id << "\n\n";
    o << "[model]\nfamily = " << family_name(c.family) << "\n";
    if (c.gamma) o << "gamma = " << format_double(*c.gamma) << "\n";
    o << "\n[design]\nstatistic = " << statistic_name(c.statistic) << "\ntransform = " << c.transform
      << "\naggregation = " << aggregation_name(c.aggregation) << "\n\n";
    o << "[units]\nm = " << c.m << "\nn = " << c.n << "\nblocks = " << c.blocks << "\n";
    if (!c.spaces.empty()) {
        o << "\n[spaces]\n";
        for (std::size_t i = 0; i < c.spaces.size(); ++i) o << "agent" << i + 1 << " = " << actions(c.spaces[i]) << "\n";
    }
    if (!c.profile.empty()) {
        o << "\n[profile]\n";
        for (std::size_t i = 0; i < c.profile.size(); ++i)
            o << "agent" << i + 1 << " = " << actions(c.profile[i]) << "\n";
    }
    o << "\n[simulation]\nreps = " << c.reps << "\nseed = " << c.seed << "\nthreads = " << c.threads
      << "\nsampling = " << sampling_name(c.sampling) << "\nbudget = " << c.budget << "\n";
    o << "\n[analysis]\n";
    if (!c.k_list.empty()) o << "k_list = " << join(c.k_list, [](std::size_t k) { return std::to_string(k); }) << "\n";
    if (!c.transforms.empty()) o << "transforms = " << join(c.transforms, [](const std::string& s) { return s; }) << "\n";
    if (!c.alt_transform.empty()) o << "alt_transform = " << c.alt_transform << "\n";
    o << "var_tolerance = " << format_double(c.var_tolerance) << "\nquad_tol = " << format_double(c.quad_tol) << "\n";
    if (c.chi_range)
        o << "chi_range = " << format_double(c.chi_range->first) << ", " << format_double(c.chi_range->second) << "\n";
    o << "knots = " << c.knots << "\n";
    return o.str();
}

inline OutcomeModel build_model(const ScenarioConfig& c) { return OutcomeModel(c.family, c.gamma); }

inline Scenario build_scenario(const ScenarioConfig& c, const std::string& transform_name = {}) {
    Scenario s;
    s.id = c.id;
    s.model = build_model(c);
    s.score = ScoreFunction{c.statistic, parse_transform(transform_name.empty() ? c.transform : transform_name)};
    for (const auto& grid : c.spaces) s.spaces.emplace_back(c.family, grid);
    s.m = c.m;
    s.n = c.n;
    s.blocks = c.blocks;
    s.aggregation = c.aggregation;
    s.sampling = c.sampling;
    s.validate();
    return s;
}

/// Per-block profiles: the [profile] section when present, otherwise every
/// agent's natural action in every block.
inline std::vector<ActionProfile> build_profiles(const ScenarioConfig& c) {
    const std::size_t count = is_interference(c.family) ? 1 : c.blocks;
    std::vector<ActionProfile> out(count);
    if (!c.profile.empty()) {
        for (std::size_t b = 0; b < count; ++b)
            for (const auto& agent : c.profile) out[b].actions.push_back(agent[b]);
        return out;
    }
    if (c.spaces.empty())
        fail(ErrorCode::ConfigError, c.source + ": need a [profile] or [spaces] section to pick actions");
    for (std::size_t b = 0; b < count; ++b)
        for (const auto& grid : c.spaces) out[b].actions.push_back(ActionSpace(c.family, grid).natural());
    return out;
}

}  // namespace icdesign
