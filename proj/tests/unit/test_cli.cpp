#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "app/commands.hpp"
#include "app/config.hpp"
#include "app/report.hpp"
#include "selfaffine/expansion_io.hpp"
#include "support.hpp"

using namespace selfaffine;
using namespace selfaffine::cli;

namespace {

const char* kCantor = R"(
[system]
matrix = 3
digits = 0; 2
mode = exact-integer
[norm]
variant = exact-similarity
[measure]
depth = 8
)";

ErrorCode config_error_code(const std::string& text) {
    try {
        parse_config(text);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Io;  // sentinel: no error
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("exact number literals") {
    CHECK(parse_rational("3") == Rational(3));
    CHECK(parse_rational("-1/2") == Rational(-1, 2));
    CHECK(parse_rational("0.125") == Rational(1, 8));
    CHECK(parse_rational("1e-3") == Rational(1, 1000));
    CHECK(parse_rational("2.5E1") == Rational(25));
    CHECK(parse_rational("+.5") == Rational(1, 2));
    CHECK(parse_rational("3/0.5") == Rational(6));
    CHECK_THROWS_AS(parse_rational("abc"), Error);
    CHECK_THROWS_AS(parse_rational("1/0"), Error);
    CHECK_THROWS_AS(parse_rational("1.2.3"), Error);
    CHECK_THROWS_AS(parse_rational(""), Error);
}

TEST_CASE("config defaults and matrices") {
    RunConfig c = parse_config(kCantor);
    CHECK(c.dim == 1);
    CHECK(c.matrix == std::vector<Rational>{3});
    CHECK(c.digits.size() == 2);
    CHECK(c.variant == NormVariant::ExactSimilarity);
    CHECK(c.depth == 8);
    CHECK(c.seed == 1);
    CHECK(c.sweep.substeps == SweepOptions{}.substeps);

    RunConfig p = parse_config("[system]\nmatrix = 2 0; 0 3\ndigits = 0 0; 1 0; 0 1; 1 1; 0 2; 1 2\nmode = exact-integer\n");
    CHECK(p.dim == 2);
    CHECK(p.matrix == std::vector<Rational>{2, 0, 0, 3});
    CHECK(p.digits[4] == std::vector<Rational>{0, 2});
    auto sys = build_system(p);
    CHECK(sys.q() == doctest::Approx(6.0));
    CHECK(sys.digit_count() == 6);
}

TEST_CASE("config errors are config-class") {
    CHECK(config_error_code("[system]\nmatrix = 3\ndigits = 0; 2\n") == ErrorCode::Config);  // no mode
    CHECK(config_error_code(std::string(kCantor) + "[measure]\nbogus = 1\n") == ErrorCode::Config);
    CHECK(config_error_code(std::string(kCantor) + "[extra]\nx = 1\n") == ErrorCode::Config);
    CHECK(config_error_code("[system]\nmatrix = 1 2; 3\ndigits = 0 0\nmode = float\n") == ErrorCode::Config);
    CHECK(config_error_code("[system]\nmatrix = 3\ndigits = 0 1; 2\nmode = exact-integer\n") == ErrorCode::Config);
    CHECK(config_error_code("[system]\nmatrix = 3\ndigits = 0; 2\nmode = approximate\n") == ErrorCode::Config);
    CHECK(config_error_code(std::string(kCantor) + "[norm]\ndelta = 0.7\n") == ErrorCode::Config);
    CHECK(config_error_code(std::string(kCantor) + "[run]\nseed = -4\n") == ErrorCode::Config);
    CHECK(config_error_code("[system\nmatrix = 3\n") == ErrorCode::Config);
    auto bad = parse_config("[system]\nmatrix = 1/2\ndigits = 0; 1\nmode = exact-rational\n");
    CHECK_THROWS_AS(build_system(bad), Error);
}

TEST_CASE("config hash depends on content only") {
    const std::string h = config_hash(parse_config(kCantor));
    CHECK(h.size() == 16);
    // reordering, comments, whitespace and explicit defaults
    const char* same = R"(
; comment
[norm]
variant   =   exact-similarity
[measure]
depth = 8
substeps = 4
[system]
mode = exact-integer
digits = 0 ; 2
matrix = 3/1
[run]
out = somewhere/else
threads = 8
)";
    CHECK(config_hash(parse_config(same)) == h);
    CHECK(config_hash(parse_config(std::string(kCantor) + "[run]\nseed = 2\n")) != h);
    RunConfig deeper = parse_config(kCantor);
    deeper.depth = 9;
    CHECK(config_hash(deeper) != h);
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("exit code mapping") {
    CHECK(exit_code_for(ErrorCode::Config) == 64);
    CHECK(exit_code_for(ErrorCode::NotExpanding) == 64);
    CHECK(exit_code_for(ErrorCode::UnsupportedDimension) == 64);
    CHECK(exit_code_for(ErrorCode::BudgetExceeded) == 65);
    CHECK(exit_code_for(ErrorCode::StateBudgetExceeded) == 65);
    CHECK(exit_code_for(ErrorCode::Io) == 74);
    CHECK(exit_code_for(ErrorCode::InvalidWitness) == 70);
}

TEST_CASE("csv and summary layout") {
    CsvTable t("demo", "0123456789abcdef", {"a", "b"});
    t.row({"1", num(0.5)});
    t.row({num(-0.0), num(std::nan(""))});
    CHECK(t.text() == "# demo config_hash=0123456789abcdef\na,b\n1,0.5\n0,nan\n");
    CHECK_THROWS_AS(t.row({"1"}), Error);
    Summary s("demo", "0123456789abcdef");
    s.add("x", 0.1);
    CHECK(s.text("[run]\nseed = 1\n") ==
          "# demo config_hash=0123456789abcdef\n[report]\nconfig_hash = 0123456789abcdef\nx = 0.1\n[run]\nseed = 1\n");
}

TEST_CASE("expansion set cache round trip") {
    auto sys = build_system(parse_config(kCantor));
    ExpansionSet e = enumerate_DM(sys, 6);
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    write_expansion_set(ss, sys, e);
    ExpansionSet r = read_expansion_set(ss, sys);
    CHECK(r.depth == 6);
    CHECK(r.points.coords == e.points.coords);
    CHECK(r.multiplicity == e.multiplicity);
    CHECK(r.word_code == e.word_code);
    CHECK(r.keys == e.keys);
    auto other = build_system(parse_config("[system]\nmatrix = 3\ndigits = 0; 1\nmode = exact-integer\n"));
    std::stringstream again(std::ios::in | std::ios::out | std::ios::binary);
    write_expansion_set(again, sys, e);
    CHECK_THROWS_AS(read_expansion_set(again, other), Error);
}

TEST_CASE("commands write hashed outputs and reuse caches") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "selfaffine_test_cli";
    fs::remove_all(dir);
    RunConfig c = parse_config(kCantor);
    c.out = (dir / "a").string();
    std::ostringstream log;
    CHECK(run_command("check-osc", c, log) == kExitHolds);
    CHECK(run_command("measure", c, log) == 0);
    const std::string h = config_hash(c);
    const std::string summary = slurp(dir / "a" / "measure_summary.txt");
    CHECK(summary.rfind("# measure config_hash=" + h + "\n", 0) == 0);
    CHECK(summary.find("\nH_lo = ") != std::string::npos);
    CHECK(summary.find("\n[system]\nmatrix") == std::string::npos);  // dim comes first
    CHECK(summary.find("\n[system]\ndim = 1\nmatrix = 3\n") != std::string::npos);
    CHECK(slurp(dir / "a" / "density.csv").rfind("# density config_hash=" + h + "\nscale,family,", 0) == 0);

    // second run hits the D_M cache and reproduces the bytes
    const std::string csv = slurp(dir / "a" / "density.csv");
    std::ostringstream log2;
    CHECK(run_command("measure", c, log2) == 0);
    CHECK(log2.str().find("cache hit") != std::string::npos);
    CHECK(slurp(dir / "a" / "density.csv") == csv);
    CHECK(slurp(dir / "a" / "measure_summary.txt") == summary);

    RunConfig cube = parse_config("[system]\nmatrix = 2 0 0; 0 2 0; 0 0 2\ndigits = 0 0 0; 1 0 0; 0 1 0; 0 0 1\n"
                                  "mode = exact-integer\n[render]\ndepth = 2\n");
    cube.out = (dir / "cube").string();
    std::ostringstream log3, err3;
    CHECK(run_guarded("render", cube, log3, err3) == kExitConfig);
    CHECK(err3.str().find("UnsupportedDimension") != std::string::npos);
    CHECK(fs::exists(dir / "cube" / "cloud.csv"));

    RunConfig big = parse_config(kCantor);
    big.depth = 30;
    big.out = (dir / "big").string();
    std::ostringstream log4, err4;
    CHECK(run_guarded("measure", big, log4, err4) == kExitBudget);
    fs::remove_all(dir);
}
