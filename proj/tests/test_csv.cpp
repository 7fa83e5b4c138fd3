#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "dmval/csv.hpp"
#include "dmval/errors.hpp"

namespace fs = std::filesystem;
using namespace dmval;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  fs::path p = fs::temp_directory_path() / "dmval_csv_tests";
  fs::create_directories(p);
  p /= name;
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p;
}

}  // namespace

TEST_CASE("read_file parses header and rows") {
  auto p = write_temp("basic.csv", "a,b,c\n1,2,3\n4,5,6\n");
  csv::Table t = csv::read_file(p);
  REQUIRE(t.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0] == std::vector<std::string>{"1", "2", "3"});
  CHECK(t.column("b") == 1);
  CHECK(t.has_column("c"));
  CHECK_FALSE(t.has_column("d"));
}

TEST_CASE("read_file handles quoted cells, CRLF and blank lines") {
  auto p = write_temp("quoted.csv", "a,b\r\n\"x,y\",\"he said \"\"hi\"\"\"\r\n\n1,2\n");
  csv::Table t = csv::read_file(p);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][0] == "x,y");
  CHECK(t.rows[0][1] == "he said \"hi\"");
  CHECK(t.rows[1][0] == "1");
}

TEST_CASE("read_file rejects ragged rows with file:line context") {
  auto p = write_temp("ragged.csv", "a,b\n1,2\n3\n");
  CHECK_THROWS_WITH_AS(csv::read_file(p), doctest::Contains(":3"), SchemaError);
}

TEST_CASE("read_file rejects unterminated quotes and empty files") {
  auto p = write_temp("quote.csv", "a,b\n\"oops,2\n");
  CHECK_THROWS_AS(csv::read_file(p), SchemaError);
  auto e = write_temp("empty.csv", "");
  CHECK_THROWS_AS(csv::read_file(e), SchemaError);
}

TEST_CASE("missing column names the file and the column") {
  auto p = write_temp("cols.csv", "a,b\n1,2\n");
  csv::Table t = csv::read_file(p);
  CHECK_THROWS_WITH_AS(t.column("zz"), doctest::Contains("zz"), SchemaError);
}

TEST_CASE("to_double / to_int parse cells and report 1-based physical lines") {
  auto p = write_temp("nums.csv", "v,w\n1.5,2\nx,3.25\n10,2.0\n");
  csv::Table t = csv::read_file(p);
  CHECK(csv::to_double(t, 0, 0) == 1.5);
  CHECK(csv::to_int(t, 0, 1) == 2);
  // integral value written as a decimal is tolerated
  CHECK(csv::to_int(t, 2, 1) == 2);
  CHECK_THROWS_WITH_AS(csv::to_double(t, 1, 0), doctest::Contains(":3"), SchemaError);
  CHECK_THROWS_AS(csv::to_int(t, 1, 1), SchemaError);  // 3.25 is not integral
}

TEST_CASE("split_double_list splits semicolon lists") {
  auto v = csv::split_double_list("8.51;12.59;16.43", "ctx");
  REQUIRE(v.size() == 3);
  CHECK(v[0] == 8.51);
  CHECK(v[2] == 16.43);
  CHECK(csv::split_double_list("", "ctx").empty());
  CHECK(csv::split_double_list(";;", "ctx").empty());
  CHECK_THROWS_WITH_AS(csv::split_double_list("1;x;3", "metafile"), doctest::Contains("metafile"),
                       SchemaError);
}

TEST_CASE("Writer serializes deterministically with %.10g floats") {
  CHECK(csv::Writer::format(0.1) == "0.1");
  CHECK(csv::Writer::format(-1.0) == "-1");
  CHECK(csv::Writer::format(1234567890.0) == "1234567890");
  CHECK(csv::Writer::format(1e-30) == "1e-30");

  csv::Writer w({"a", "b"});
  w.add_row({"1", "two, quoted"});
  w.add_row({csv::Writer::format(2.5), "plain"});
  std::string got = w.str();
  CHECK(got == "a,b\n1,\"two, quoted\"\n2.5,plain\n");
  CHECK_THROWS_AS(w.add_row({"only-one"}), ContractError);
}

TEST_CASE("Writer output round-trips through read_file") {
  csv::Writer w({"x", "note"});
  w.add_row({"1.25", "a \"q\" and, comma"});
  auto p = write_temp("roundtrip.csv", w.str());
  csv::Table t = csv::read_file(p);
  REQUIRE(t.rows.size() == 1);
  CHECK(csv::to_double(t, 0, 0) == 1.25);
  CHECK(t.rows[0][1] == "a \"q\" and, comma");
}
