#include <catch_amalgamated.hpp>

#include <random>
#include <string>

#include "support.hpp"
#include "vibroline/io.hpp"

using namespace vibroline;
using namespace vibroline::testing;

namespace {

std::string parse_error(const std::function<void()>& f) {
    try {
        f();
    } catch (const CliError& e) {
        CHECK(e.name() == "ParseError");
        return e.what();
    }
    FAIL("expected ParseError");
    return {};
}

}  // namespace

TEST_CASE("parse errors cite line and column", "[io]") {
    const std::string text =
        "bad\n"
        "3.0 0 0\n"
        "0 3.0 x7\n"
        "0 0 3.0\n"
        "1\n"
        "Si 28 0 0 0\n";
    const auto msg = parse_error([&] { io::parse_structure(io::TextSource("cell.txt", text)); });
    CHECK(msg.find("cell.txt:3:7:") != std::string::npos);

    const auto short_row = parse_error([&] { io::parse_lattice(io::TextSource("lat", "1 0 0\n0 1\n0 0 1\n")); });
    CHECK(short_row.find("lat:2:") != std::string::npos);

    const auto count = parse_error([&] {
        io::parse_structure(io::TextSource("s", "c\n1 0 0\n0 1 0\n0 0 1\n2\nSi 28 0 0 0\n"));
    });
    CHECK(count.find("s:7:") != std::string::npos);

    const auto trailing = parse_error([&] {
        io::parse_structure(io::TextSource("s", "c\n1 0 0\n0 1 0\n0 0 1\n1\nSi 28 0 0 0\nextra\n"));
    });
    CHECK(trailing.find("s:7:1:") != std::string::npos);
}

TEST_CASE("structures round-trip exactly", "[io]") {
    std::mt19937 rng(2);
    const auto s = random_structure(rng, 9, 7.5, 1.1);
    const auto back = io::parse_structure(io::TextSource("rt", io::write_structure(s)));
    REQUIRE(back.size() == s.size());
    CHECK(back.lattice() == s.lattice());
    CHECK(back.periodic() == s.periodic());
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(back.sites()[i].species == s.sites()[i].species);
        CHECK(back.sites()[i].mass == s.sites()[i].mass);
        CHECK(back.position(i) == s.position(i));
    }

    const auto mol = io::parse_structure(io::TextSource("m", "co\n0 0 0\n0 0 0\n0 0 0\n2\nC 12 0 0 0\nO 16 1.13 0 0\n"));
    CHECK_FALSE(mol.periodic());
}

TEST_CASE("force constants round-trip exactly", "[io]") {
    const auto s = sic_4h_like();
    const auto fc = spring_model(s, 3.2, 12.0, 2.0);
    const auto back = io::parse_force_constants(io::TextSource("fc", io::write_force_constants(fc)));
    CHECK(back.natoms() == fc.natoms());
    CHECK(back.dense() == fc.dense());

    const auto range = parse_error([] {
        io::parse_force_constants(io::TextSource("fc", "2\n0 5\n1 0 0\n0 1 0\n0 0 1\n"));
    });
    CHECK(range.find("fc:2:3:") != std::string::npos);
    const auto dup = parse_error([] {
        io::parse_force_constants(io::TextSource("fc", "2\n0 1\n1 0 0\n0 1 0\n0 0 1\n0 1\n1 0 0\n0 1 0\n0 0 1\n"));
    });
    CHECK(dup.find("fc:6:") != std::string::npos);
}

TEST_CASE("snapshots round-trip exactly", "[io]") {
    const auto s = sic_4h_like();
    std::mt19937 rng(5);
    const auto snaps = harmonic_snapshots(spring_model(s, 3.2, 12.0, 2.0), 3, 0.03, 0.01, rng);
    const auto back = io::parse_snapshots(io::TextSource("snap", io::write_snapshots(snaps)), s.size());
    REQUIRE(back.size() == snaps.size());
    for (std::size_t k = 0; k < snaps.size(); ++k) {
        CHECK(back[k].displacements == snaps[k].displacements);
        CHECK(back[k].forces == snaps[k].forces);
    }
    // Declaring more atoms than present runs off the end of the last block.
    parse_error([&] { io::parse_snapshots(io::TextSource("snap", io::write_snapshots(snaps)), s.size() + 1); });
}

TEST_CASE("thermal CSV parsing", "[io]") {
    const auto s = io::parse_thermal_csv(io::TextSource("t.csv", "T_K,value,sigma\n300,0.3,0.01\n10,1,0.01\n100,0.9,0.01\n200,0.6,0.01\n"));
    CHECK(s.points().size() == 4);
    CHECK(s.points().front().temperature == 10.0);
    CHECK(s.points().front().sigma.value() == 0.01);

    const auto few = parse_error([] { io::parse_thermal_csv(io::TextSource("t.csv", "T_K,value\n10,1\n20,0.9\n30,0.8\n")); });
    CHECK(few.find("at least 4") != std::string::npos);
    const auto header = parse_error([] { io::parse_thermal_csv(io::TextSource("t.csv", "T,v\n")); });
    CHECK(header.find("t.csv:1:1:") != std::string::npos);
    const auto cols = parse_error(
        [] { io::parse_thermal_csv(io::TextSource("t.csv", "T_K,value\n10,1\n20,0.9,4\n30,0.8\n40,0.7\n")); });
    CHECK(cols.find("t.csv:3:") != std::string::npos);
}

TEST_CASE("q-point lists skip comments", "[io]") {
    const auto q = io::parse_qpoints(io::TextSource("q", "# path\n0 0 0\n\n0.5 0 0\n"));
    REQUIRE(q.size() == 2);
    CHECK(q[1] == Vec3(0.5, 0, 0));
    CHECK(io::parse_qpoints(io::TextSource("q", "")).empty());
}

TEST_CASE("number formatting", "[io]") {
    CHECK(io::format12(0.1 + 0.2) == "0.3");
    CHECK(io::format12(1.0 / 3.0) == "0.333333333333");
    CHECK(io::format12(1e-20) == "1e-20");
    CHECK(io::round12(0.1 + 0.2) == 0.3);
    const double x = 0.1 + 0.2;
    CHECK(std::stod(io::format_exact(x)) == x);
}
