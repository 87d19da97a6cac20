// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "bhm/error.hpp"
#include "textio.hpp"

using namespace bhm;

namespace {
std::filesystem::path tmp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}
} // namespace

TEST_CASE("format_double round-trips exactly") {
  const double values[] = {0.0,     -0.0,   1.0,       0.1,         1.0 / 3.0,
                           1e-300,  1e300,  -2.5e-7,   3600.000001, 98.76543210123,
                           0.009518};
  for (double v : values) {
    const std::string s = textio::format_double(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(textio::format_double(1.0) == "1");
  CHECK(textio::format_double(0.5) == "0.5");
}

TEST_CASE("parse_double accepts full numbers only") {
  CHECK(textio::parse_double("3.25") == 3.25);
  CHECK(textio::parse_double("-1e3") == -1000.0);
  CHECK(!textio::parse_double("3.25x"));
  CHECK(!textio::parse_double(""));
  CHECK(!textio::parse_double("nanx"));
  CHECK(textio::parse_int("42") == 42);
  CHECK(!textio::parse_int("42.5"));
}

TEST_CASE("fnv1a64 matches reference vectors") {
  // Published FNV-1a test vectors.
  CHECK(textio::fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(textio::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(textio::fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(textio::hash_hex("") == "cbf29ce484222325");
  CHECK(textio::hash_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("read_csv skips comments, tracks line numbers, validates shape") {
  const auto path = tmp_file("bhm_textio_test.csv");
  textio::write_text_file(path, "# comment\na,b\n1,2\n\n# mid comment\n3,4\n");
  const textio::CsvTable t = textio::read_csv(path);
  REQUIRE(t.header.size() == 2);
  CHECK(t.header[0] == "a");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0] == std::vector<std::string>{"1", "2"});
  CHECK(t.rows[1] == std::vector<std::string>{"3", "4"});
  REQUIRE(t.line_numbers.size() == 2);
  CHECK(t.line_numbers[0] == 3);
  CHECK(t.line_numbers[1] == 6);
  CHECK(t.column("b") == 1);
  CHECK(t.column("missing") == -1);

  textio::write_text_file(path, "a,b\n1\n");
  CHECK_THROWS_AS((void)textio::read_csv(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("dump_json keeps insertion order") {
  nlohmann::ordered_json j;
  j["zebra"] = 1;
  j["alpha"] = 2;
  const std::string s = textio::dump_json(j);
  CHECK(s.find("zebra") < s.find("alpha"));
  CHECK(s.back() == '\n');
}
