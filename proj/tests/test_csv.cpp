#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "btdiff/csv.hpp"
#include "btdiff/error.hpp"
#include "btdiff/rng.hpp"

using namespace btdiff;

TEST_CASE("parse trims fields and skips blank lines") {
    const auto rows = csv::parse(" a , b\r\n\n1,2 \n");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == csv::Row{"a", "b"});
    CHECK(rows[1] == csv::Row{"1", "2"});
}

TEST_CASE("empty trailing field is kept") {
    const auto rows = csv::parse("x,,y,\n");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0] == csv::Row{"x", "", "y", ""});
}

TEST_CASE("strict decimal grammar") {
    CHECK(csv::parse_double("1.5").value() == 1.5);
    CHECK(csv::parse_double("-2e3").value() == -2000.0);
    CHECK(csv::parse_double("+.5").value() == 0.5);
    CHECK(csv::parse_double("7.").value() == 7.0);
    CHECK_FALSE(csv::parse_double("1,000"));
    CHECK_FALSE(csv::parse_double("0x10"));
    CHECK_FALSE(csv::parse_double("inf"));
    CHECK_FALSE(csv::parse_double("nan"));
    CHECK_FALSE(csv::parse_double("1e"));
    CHECK_FALSE(csv::parse_double(""));
    CHECK_FALSE(csv::parse_double("."));
}

TEST_CASE("parse_int") {
    CHECK(csv::parse_int("42").value() == 42);
    CHECK(csv::parse_int("-3").value() == -3);
    CHECK_FALSE(csv::parse_int("4.2"));
    CHECK_FALSE(csv::parse_int("x"));
}

TEST_CASE("format_double round-trips bit-exactly") {
    CounterRng rng(99);
    for (int i = 0; i < 2000; ++i) {
        const double x = std::ldexp(rng.uniform() - 0.5, static_cast<int>(rng.below(80)) - 40);
        const auto back = csv::parse_double(csv::format_double(x));
        REQUIRE(back);
        CHECK(*back == x);
    }
    CHECK(csv::parse_double(csv::format_double(0.1)).value() == 0.1);
    CHECK(csv::parse_double(csv::format_double(std::numeric_limits<double>::denorm_min())).value() ==
          std::numeric_limits<double>::denorm_min());
}

TEST_CASE("write_text into a missing directory fails with IoError") {
    CHECK_THROWS_AS(csv::write_text("/nonexistent-dir-xyz/file.csv", "a"), IoError);
    CHECK_THROWS_AS(csv::read_text("/nonexistent-dir-xyz/file.csv"), IoError);
}

TEST_CASE("write then read") {
    const auto path = std::filesystem::temp_directory_path() / "btdiff_csv_roundtrip.csv";
    csv::write_text(path, "a,b\n1,2\n");
    CHECK(csv::read_text(path) == "a,b\n1,2\n");
    CHECK(csv::read_file(path).size() == 2);
    std::filesystem::remove(path);
}
