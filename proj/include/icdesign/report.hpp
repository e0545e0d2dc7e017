#pragma once

#include <algorithm>
#include <ostream>
#include <string>
#include <vector>

#include "asymptotics.hpp"
#include "config.hpp"
#include "simulator.hpp"

namespace icdesign {

enum class OutputFormat { Csv, Table };

/// Rows of preformatted cells rendered as CSV or as an aligned text table.
struct TextTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void write(std::ostream& out, OutputFormat format) const {
        if (format == OutputFormat::Csv) {
            write_csv_row(out, header);
            for (const auto& r : rows) write_csv_row(out, r);
            return;
        }
        std::vector<std::size_t> width(header.size());
        for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
        for (const auto& r : rows)
            for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
        auto line = [&](const std::vector<std::string>& cells) {
            std::string text;
            for (std::size_t c = 0; c < cells.size(); ++c) {
                text += cells[c];
                if (c + 1 < cells.size()) text += std::string(width[c] - cells[c].size() + 2, ' ');
            }
            text.erase(text.find_last_not_of(' ') + 1);
            out << text << '\n';
        };
        line(header);
        std::vector<std::string> rule;
        for (auto w : width) rule.emplace_back(w, '-');
        line(rule);
        for (const auto& r : rows) line(r);
    }

private:
    static void write_csv_row(std::ostream& out, const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c) out << ',';
            const auto& s = cells[c];
            if (s.find_first_of(",\"\n") == std::string::npos) {
                out << s;
                continue;
            }
            out << '"';
            for (char ch : s) {
                if (ch == '"') out << '"';
                out << ch;
            }
            out << '"';
        }
        out << '\n';
    }
};

inline std::string format_action(const Action& a) {
    std::string s = "(";
    for (std::size_t p = 0; p < a.size(); ++p) s += (p ? "," : "") + format_sig(a[p]);
    return s + ")";
}

inline std::string format_index(const std::vector<std::size_t>& idx) {
    std::string s;
    for (std::size_t i = 0; i < idx.size(); ++i) s += (i ? ";" : "") + std::to_string(idx[i]);
    return s;
}

inline TextTable study_table(const std::vector<StudyRow>& rows) {
    TextTable t;
    t.header = {"scenario_id", "k", "transform", "agent", "p_hat", "se", "reps", "seed"};
    for (const auto& r : rows)
        t.rows.push_back({r.scenario_id, std::to_string(r.k), r.transform, std::to_string(r.agent + 1),
                          format_sig(r.p_hat), format_sig(r.se), std::to_string(r.reps), std::to_string(r.seed)});
    return t;
}

/// One row per witness; an IC certificate yields a single row with empty
/// witness columns. Agents and grid indices are 1-based.
inline TextTable certificate_table(const ICCertificate& cert) {
    TextTable t;
    t.header = {"design_id", "method",    "verdict",     "cells_checked", "agent", "opponent",
                "profile",   "deviation", "p_deviation", "p_natural",     "se"};
    const std::vector<std::string> lead = {cert.design_id, std::string(method_name(cert.method)),
                                           std::string(verdict_name(cert.verdict)),
                                           std::to_string(cert.cells_checked)};
    if (cert.witnesses.empty()) {
        auto row = lead;
        row.resize(t.header.size());
        t.rows.push_back(row);
    }
    for (const auto& w : cert.witnesses) {
        auto row = lead;
        std::vector<std::size_t> one_based = w.profile_index;
        for (auto& v : one_based) ++v;
        row.insert(row.end(), {std::to_string(w.agent + 1), std::to_string(w.opponent + 1), format_index(one_based),
                               format_action(w.deviation), format_sig(w.p_deviation), format_sig(w.p_natural),
                               cert.method == CertMethod::MonteCarlo ? format_sig(w.se) : ""});
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace icdesign
