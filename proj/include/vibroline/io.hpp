#pragma once

// Text formats used by the command-line front end. Every parse error is a
// CliError named ParseError whose message starts with "<file>:<line>:<col>:".

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vibroline/error.hpp"
#include "vibroline/ifcfit.hpp"
#include "vibroline/model.hpp"
#include "vibroline/thermal.hpp"

namespace vibroline::io {

/// `%.12g`, the precision of every number written to CSV and JSON.
inline std::string format12(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

/// Value rounded to 12 significant digits, for JSON emission.
inline double round12(double v) { return std::strtod(format12(v).c_str(), nullptr); }

inline std::string format_exact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Token {
    std::string text;
    std::size_t column = 0;  // 1-based
};

/// Line-oriented reader that remembers positions for error messages.
class TextSource {
public:
    TextSource(std::string name, const std::string& content) : name_(std::move(name)) {
        std::istringstream in(content);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines_.push_back(line);
        }
    }

    static TextSource from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw CliError("ParseError", path + ":0:0: cannot open file");
        std::ostringstream ss;
        ss << in.rdbuf();
        return TextSource(path, ss.str());
    }

    std::size_t line_count() const noexcept { return lines_.size(); }
    const std::string& name() const noexcept { return name_; }

    /// Line `number` (1-based).
    const std::string& line(std::size_t number) const {
        if (number == 0 || number > lines_.size()) fail(number, 0, "unexpected end of file");
        return lines_[number - 1];
    }

    std::vector<Token> tokens(std::size_t number, char separator = ' ') const {
        const std::string& text = line(number);
        std::vector<Token> out;
        std::size_t i = 0;
        const auto is_sep = [&](char ch) {
            return separator == ' ' ? (ch == ' ' || ch == '\t') : ch == separator;
        };
        if (separator == ' ') {
            while (i < text.size()) {
                while (i < text.size() && is_sep(text[i])) ++i;
                if (i >= text.size()) break;
                const std::size_t start = i;
                while (i < text.size() && !is_sep(text[i])) ++i;
                out.push_back({text.substr(start, i - start), start + 1});
            }
        } else {
            std::size_t start = 0;
            for (;;) {
                const std::size_t end = text.find(separator, start);
                std::string field = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
                const auto first = field.find_first_not_of(" \t");
                const auto last = field.find_last_not_of(" \t");
                out.push_back({first == std::string::npos ? "" : field.substr(first, last - first + 1),
                               start + 1 + (first == std::string::npos ? 0 : first)});
                if (end == std::string::npos) break;
                start = end + 1;
            }
        }
        return out;
    }

    bool blank(std::size_t number) const {
        return line(number).find_first_not_of(" \t") == std::string::npos;
    }

    [[noreturn]] void fail(std::size_t line_number, std::size_t column, const std::string& message) const {
        throw CliError("ParseError",
                       name_ + ":" + std::to_string(line_number) + ":" + std::to_string(column) + ": " + message);
    }

    double number(std::size_t line_number, const Token& tok) const {
        const char* begin = tok.text.c_str();
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (tok.text.empty() || end != begin + tok.text.size() || !std::isfinite(v))
            fail(line_number, tok.column, "expected a number, got '" + tok.text + "'");
        return v;
    }

    long integer(std::size_t line_number, const Token& tok) const {
        const char* begin = tok.text.c_str();
        char* end = nullptr;
        const long v = std::strtol(begin, &end, 10);
        if (tok.text.empty() || end != begin + tok.text.size())
            fail(line_number, tok.column, "expected an integer, got '" + tok.text + "'");
        return v;
    }

    std::vector<double> numbers(std::size_t line_number, std::size_t count) const {
        const auto toks = tokens(line_number);
        if (toks.size() != count)
            fail(line_number, toks.size() > count ? toks[count].column : line(line_number).size() + 1,
                 "expected " + std::to_string(count) + " values, found " + std::to_string(toks.size()));
        std::vector<double> out;
        for (const auto& t : toks) out.push_back(number(line_number, t));
        return out;
    }

    void expect_trailing_blank(std::size_t from) const {
        for (std::size_t k = from; k <= lines_.size(); ++k)
            if (!blank(k)) fail(k, 1, "unexpected trailing content");
    }

private:
    std::string name_;
    std::vector<std::string> lines_;
};

/// Structure file: comment line, three lattice rows (Å), atom count, then
/// `symbol mass x y z` per atom (amu, Cartesian Å). An all-zero lattice marks
/// a non-periodic structure.
inline CrystalStructure parse_structure(const TextSource& src) {
    Mat3 lattice;
    for (int r = 0; r < 3; ++r) {
        const auto row = src.numbers(2 + static_cast<std::size_t>(r), 3);
        for (int c = 0; c < 3; ++c) lattice(r, c) = row[static_cast<std::size_t>(c)];
    }
    const auto count_tokens = src.tokens(5);
    if (count_tokens.size() != 1) src.fail(5, 1, "expected the atom count");
    const long n = src.integer(5, count_tokens[0]);
    if (n < 1) src.fail(5, count_tokens[0].column, "atom count must be positive");
    std::vector<AtomSite> sites;
    for (long a = 0; a < n; ++a) {
        const std::size_t ln = 6 + static_cast<std::size_t>(a);
        const auto toks = src.tokens(ln);
        if (toks.size() != 5)
            src.fail(ln, toks.size() > 5 ? toks[5].column : src.line(ln).size() + 1,
                     "expected 'symbol mass x y z'");
        AtomSite s;
        s.species = toks[0].text;
        s.mass = src.number(ln, toks[1]);
        if (!(s.mass > 0.0)) src.fail(ln, toks[1].column, "mass must be positive");
        s.position = Vec3(src.number(ln, toks[2]), src.number(ln, toks[3]), src.number(ln, toks[4]));
        sites.push_back(std::move(s));
    }
    src.expect_trailing_blank(6 + static_cast<std::size_t>(n));
    const bool periodic = lattice.cwiseAbs().maxCoeff() > 0.0;
    if (periodic && !(lattice.determinant() > 0.0)) src.fail(2, 1, "lattice must be right-handed with nonzero volume");
    return CrystalStructure(periodic ? lattice : Mat3::Zero(), std::move(sites), periodic);
}

inline CrystalStructure read_structure(const std::string& path) { return parse_structure(TextSource::from_file(path)); }

inline std::string write_structure(const CrystalStructure& s, const std::string& comment = "structure") {
    std::ostringstream out;
    out << comment << '\n';
    for (int r = 0; r < 3; ++r)
        out << format_exact(s.lattice()(r, 0)) << ' ' << format_exact(s.lattice()(r, 1)) << ' '
            << format_exact(s.lattice()(r, 2)) << '\n';
    out << s.size() << '\n';
    for (const auto& site : s.sites())
        out << site.species << ' ' << format_exact(site.mass) << ' ' << format_exact(site.position[0]) << ' '
            << format_exact(site.position[1]) << ' ' << format_exact(site.position[2]) << '\n';
    return out.str();
}

/// Force-constant file: atom count, then per stored pair a `i j` header
/// (0-based) and three rows of the 3x3 block in eV/Å². Missing pairs are zero
/// and a transpose partner may be omitted.
inline ForceConstants parse_force_constants(const TextSource& src) {
    const auto head = src.tokens(1);
    if (head.size() != 1) src.fail(1, 1, "expected the atom count");
    const long n = src.integer(1, head[0]);
    if (n < 1) src.fail(1, head[0].column, "atom count must be positive");
    ForceConstants::BlockMap blocks;
    std::size_t ln = 2;
    while (ln <= src.line_count()) {
        if (src.blank(ln)) {
            ++ln;
            continue;
        }
        const auto toks = src.tokens(ln);
        if (toks.size() != 2) src.fail(ln, 1, "expected a block header 'i j'");
        const long i = src.integer(ln, toks[0]);
        const long j = src.integer(ln, toks[1]);
        if (i < 0 || i >= n) src.fail(ln, toks[0].column, "atom index out of range");
        if (j < 0 || j >= n) src.fail(ln, toks[1].column, "atom index out of range");
        Mat3 b;
        for (int r = 0; r < 3; ++r) {
            const auto row = src.numbers(ln + 1 + static_cast<std::size_t>(r), 3);
            for (int c = 0; c < 3; ++c) b(r, c) = row[static_cast<std::size_t>(c)];
        }
        const ForceConstants::Key key{static_cast<std::size_t>(i), static_cast<std::size_t>(j)};
        if (blocks.count(key)) src.fail(ln, 1, "duplicate block");
        blocks.emplace(key, b);
        ln += 4;
    }
    try {
        return ForceConstants(static_cast<std::size_t>(n), blocks);
    } catch (const Error& e) {
        src.fail(1, 1, e.what());
    }
}

inline ForceConstants read_force_constants(const std::string& path) {
    return parse_force_constants(TextSource::from_file(path));
}

inline std::string write_force_constants(const ForceConstants& fc) {
    std::ostringstream out;
    out << fc.natoms() << '\n';
    for (const auto& [key, b] : fc.blocks()) {
        out << key.first << ' ' << key.second << '\n';
        for (int r = 0; r < 3; ++r)
            out << format_exact(b(r, 0)) << ' ' << format_exact(b(r, 1)) << ' ' << format_exact(b(r, 2)) << '\n';
    }
    return out.str();
}

/// Snapshot file: repeated `snapshot k` headers followed by `natoms` lines of
/// `dx dy dz fx fy fz` (Å, eV/Å).
inline std::vector<TrainingSnapshot> parse_snapshots(const TextSource& src, std::size_t natoms) {
    std::vector<TrainingSnapshot> out;
    std::size_t ln = 1;
    while (ln <= src.line_count()) {
        if (src.blank(ln)) {
            ++ln;
            continue;
        }
        const auto toks = src.tokens(ln);
        if (toks.size() != 2 || toks[0].text != "snapshot") src.fail(ln, 1, "expected 'snapshot <k>'");
        src.integer(ln, toks[1]);
        TrainingSnapshot snap;
        for (std::size_t a = 0; a < natoms; ++a) {
            const auto v = src.numbers(ln + 1 + a, 6);
            snap.displacements.emplace_back(v[0], v[1], v[2]);
            snap.forces.emplace_back(v[3], v[4], v[5]);
        }
        out.push_back(std::move(snap));
        ln += 1 + natoms;
    }
    return out;
}

inline std::vector<TrainingSnapshot> read_snapshots(const std::string& path, std::size_t natoms) {
    return parse_snapshots(TextSource::from_file(path), natoms);
}

inline std::string write_snapshots(const std::vector<TrainingSnapshot>& snapshots) {
    std::ostringstream out;
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
        out << "snapshot " << s << '\n';
        for (std::size_t a = 0; a < snapshots[s].displacements.size(); ++a) {
            const auto& u = snapshots[s].displacements[a];
            const auto& f = snapshots[s].forces[a];
            out << format_exact(u[0]) << ' ' << format_exact(u[1]) << ' ' << format_exact(u[2]) << ' '
                << format_exact(f[0]) << ' ' << format_exact(f[1]) << ' ' << format_exact(f[2]) << '\n';
        }
    }
    return out.str();
}

/// Thermal CSV with header `T_K,value` or `T_K,value,sigma`.
inline ThermalSeries parse_thermal_csv(const TextSource& src) {
    const auto header = src.tokens(1, ',');
    const bool with_sigma = header.size() == 3;
    if (!(header.size() == 2 || with_sigma) || header[0].text != "T_K" || header[1].text != "value" ||
        (with_sigma && header[2].text != "sigma"))
        src.fail(1, 1, "expected header 'T_K,value[,sigma]'");
    std::vector<ThermalPoint> points;
    for (std::size_t ln = 2; ln <= src.line_count(); ++ln) {
        if (src.blank(ln)) continue;
        const auto f = src.tokens(ln, ',');
        if (f.size() != header.size())
            src.fail(ln, f.size() > header.size() ? f[header.size()].column : src.line(ln).size() + 1,
                     "expected " + std::to_string(header.size()) + " columns");
        ThermalPoint p;
        p.temperature = src.number(ln, f[0]);
        p.value = src.number(ln, f[1]);
        if (with_sigma) p.sigma = src.number(ln, f[2]);
        points.push_back(p);
    }
    if (points.size() < 4)
        src.fail(src.line_count() + 1, 1, "at least 4 data rows are required, found " + std::to_string(points.size()));
    try {
        return ThermalSeries(std::move(points), header[1].text);
    } catch (const ThermalError& e) {
        src.fail(1, 1, e.what());
    }
}

/// Three rows of three numbers; blank lines and `#` comments are skipped.
inline Mat3 parse_lattice(const TextSource& src) {
    Mat3 out;
    int row = 0;
    for (std::size_t ln = 1; ln <= src.line_count(); ++ln) {
        const auto& text = src.line(ln);
        const auto first = text.find_first_not_of(" \t");
        if (first == std::string::npos || text[first] == '#') continue;
        if (row == 3) src.fail(ln, first + 1, "more than three lattice rows");
        const auto v = src.numbers(ln, 3);
        for (int c = 0; c < 3; ++c) out(row, c) = v[static_cast<std::size_t>(c)];
        ++row;
    }
    if (row != 3) src.fail(src.line_count() + 1, 1, "expected three lattice rows");
    return out;
}

/// One reduced wavevector `qx qy qz` per line; blank lines and `#` comments
/// are skipped.
inline std::vector<Vec3> parse_qpoints(const TextSource& src) {
    std::vector<Vec3> out;
    for (std::size_t ln = 1; ln <= src.line_count(); ++ln) {
        const auto& text = src.line(ln);
        const auto first = text.find_first_not_of(" \t");
        if (first == std::string::npos || text[first] == '#') continue;
        const auto v = src.numbers(ln, 3);
        out.emplace_back(v[0], v[1], v[2]);
    }
    return out;
}

}  // namespace vibroline::io
