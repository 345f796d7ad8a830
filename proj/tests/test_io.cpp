#include <algorithm>
#include <filesystem>
#include <string>

#include "decompound/error.hpp"
#include "decompound/io.hpp"
#include "doctest.h"

using namespace decompound;

TEST_CASE("blob hash matches git") {
  // git hash-object of "hello\n" and of the empty file
  CHECK(io::blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(io::blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("increment CSV round trip keeps every bit") {
  const IncrementSample s(2, 0.5, {0.0, 0.0, 0.1, -1.0 / 3.0, 1e-300, 12345.678901234567});
  const auto text = io::format_increments_csv(s);
  CHECK(text.rfind("z1,z2\n", 0) == 0);
  const auto back = io::parse_increments_csv(text, 0.5);
  CHECK(back.dim == 2);
  CHECK(back.mesh == 0.5);
  CHECK(back.z == s.z);
  CHECK(back.zero_count() == 1);
}

TEST_CASE("increment CSV validation") {
  CHECK(io::parse_increments_csv("z1\n", 1.0).size() == 0);
  CHECK_THROWS_AS(io::parse_increments_csv("", 1.0), InputError);
  CHECK_THROWS_AS(io::parse_increments_csv("x,y\n1,2\n", 1.0), InputError);
  CHECK_THROWS_AS(io::parse_increments_csv("z1,z2\n1\n", 1.0), InputError);
  CHECK_THROWS_AS(io::parse_increments_csv("z1\nabc\n", 1.0), InputError);
  CHECK_THROWS_AS(io::parse_increments_csv("z1\nnan\n", 1.0), InputError);
}

TEST_CASE("files are written atomically into new directories") {
  const auto dir = std::filesystem::temp_directory_path() / "decompound_io_test" / "nested";
  std::filesystem::remove_all(dir.parent_path());
  io::write_file(dir / "a.txt", "payload");
  CHECK(io::read_file(dir / "a.txt") == "payload");
  CHECK_FALSE(std::filesystem::exists(dir / "a.txt.tmp"));
  CHECK_THROWS_AS(io::read_file(dir / "missing"), InputError);
  std::filesystem::remove_all(dir.parent_path());
}

TEST_CASE("json dump is stable") {
  nlohmann::json j = {{"b", 1}, {"a", {1.5, 2}}};
  CHECK(io::dump_json(j) == io::dump_json(nlohmann::json::parse(io::dump_json(j))));
  CHECK(io::dump_json(j).back() == '\n');
}

TEST_CASE("density and chain outputs") {
  DensityBand band{Grid::line(0, 1, 3), {1, 2, 3}, {0.5, 1, 2}, {2, 3, 4}};
  const auto csv = io::format_density_csv(band);
  CHECK(csv.rfind("x1,mean,lower,upper\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  ChainOutput out;
  out.states.push_back({10, 1.25, 7, NormalMixture::gaussian1d(0, 1), -3.5});
  const auto jsonl = io::format_chain_jsonl(out);
  const auto rec = nlohmann::json::parse(jsonl.substr(0, jsonl.find('\n')));
  CHECK(rec["iter"] == 10);
  CHECK(rec["lambda"] == 1.25);
  CHECK(rec["jump_count_total"] == 7);
  CHECK(rec["mixture"]["dim"] == 1);
}
