#include "doctest.h"

#include "povmap/common.hpp"
#include "povmap/csv.hpp"

#include "fixtures.hpp"

using namespace povmap::csv;
using povmap::Error;

TEST_CASE("csv parses plain tables") {
    auto t = parse_csv("a,b,c\n1,2,3\n4,5,6\n", "mem");
    CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1] == std::vector<std::string>{"4", "5", "6"});
    CHECK(t.col("b") == 1);
    CHECK_THROWS_AS(t.col("missing"), Error);
}

TEST_CASE("csv handles quoting, CRLF, BOM, and missing final newline") {
    auto t = parse_csv("\xef\xbb\xbfid,note\r\n"
                       "1,\"hello, world\"\r\n"
                       "2,\"line\nbreak\"\r\n"
                       "3,\"she said \"\"hi\"\"\"",
                       "mem");
    CHECK(t.header == std::vector<std::string>{"id", "note"});
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[0][1] == "hello, world");
    CHECK(t.rows[1][1] == "line\nbreak");
    CHECK(t.rows[2][1] == "she said \"hi\"");
}

TEST_CASE("csv keeps empty fields and skips blank lines") {
    auto t = parse_csv("a,b\n,\n\nx,\n", "mem");
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0] == std::vector<std::string>{"", ""});
    CHECK(t.rows[1] == std::vector<std::string>{"x", ""});
}

TEST_CASE("csv errors") {
    CHECK_THROWS_AS(parse_csv("a,b\n1,\"oops\n", "mem"), Error);
    CHECK_THROWS_AS(parse_csv("", "mem"), Error);
    CHECK_THROWS_AS(read_csv("/nonexistent/nope.csv"), Error);
}

TEST_CASE("csv write-read round trip preserves every cell") {
    Table t;
    t.header = {"id", "text", "num"};
    t.rows = {
        {"1", "plain", "3.5"},
        {"2", "comma, inside", "-0.25"},
        {"3", "quote \" inside", ""},
        {"4", "new\nline", "1e-9"},
        {"5", "", "0"},
    };
    fixtures::TempDir dir("csv");
    const auto file = dir.path() / "t.csv";
    write_csv(file, t);
    auto back = read_csv(file);
    CHECK(back.header == t.header);
    CHECK(back.rows == t.rows);
}
