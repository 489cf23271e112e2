#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "ntktst/error.hpp"
#include "ntktst/io.hpp"

using namespace ntktst;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "ntktst_test_io";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}
}  // namespace

TEST_CASE("csv round trip keeps header, LF endings and exact doubles") {
    auto path = scratch("a.csv");
    {
        CsvWriter w(path, {"t", "value"});
        w.row({0.1, 1.0 / 3.0});
        w.row({1e-300, -2.5});
    }
    const auto text = slurp(path);
    CHECK(text.find('\r') == std::string::npos);
    CHECK(text.rfind("t,value\n", 0) == 0);
    auto table = read_csv(path);
    REQUIRE(table.rows.size() == 2);
    CHECK(std::stod(table.rows[0][table.column("value")]) == 1.0 / 3.0);
    CHECK(std::stod(table.rows[1][table.column("t")]) == 1e-300);
}

TEST_CASE("csv rows must match the header width") {
    CsvWriter w(scratch("b.csv"), {"a", "b"});
    CHECK_THROWS(w.row({1.0}));
}

TEST_CASE("missing column is reported by name") {
    auto path = scratch("c.csv");
    { CsvWriter w(path, {"a"}); }
    auto table = read_csv(path);
    CHECK_THROWS_WITH(table.column("power"), doctest::Contains("power"));
}

TEST_CASE("format_double round-trips") {
    for (double v : {0.1, 2.0 / 3.0, 1e-17, 123456789.123456789, -0.0})
        CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("json carries format_version and mismatches are rejected") {
    auto path = scratch("d.json");
    write_json(path, {{"x", 1}});
    auto j = read_versioned_json(path);
    CHECK(j["format_version"] == kFormatVersion);
    CHECK(j["x"] == 1);

    std::ofstream(scratch("e.json")) << R"({"format_version": 999})";
    CHECK_THROWS_AS(read_versioned_json(scratch("e.json")), FormatError);
    std::ofstream(scratch("f.json")) << R"({"x": 1})";
    CHECK_THROWS_AS(read_versioned_json(scratch("f.json")), FormatError);
}

TEST_CASE("binary doubles are little-endian IEEE 754") {
    auto path = scratch("g.bin");
    const double vals[] = {1.0, -2.0};
    write_f64_le(path, vals);
    const auto bytes = slurp(path);
    REQUIRE(bytes.size() == 16);
    // 1.0 = 0x3FF0000000000000
    CHECK(static_cast<unsigned char>(bytes[6]) == 0xF0);
    CHECK(static_cast<unsigned char>(bytes[7]) == 0x3F);
    CHECK(read_f64_le(path) == std::vector<double>{1.0, -2.0});
}
