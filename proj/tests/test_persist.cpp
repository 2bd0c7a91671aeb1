#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "rap/common.hpp"
#include "rap/persist.hpp"
#include "rap/wire.hpp"

using namespace rap;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  ck.config_text = "dim=8\nlayers=2\nseed=42\n";
  Rng rng(7);
  auto fill = [&](std::vector<int> shape) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = float(rng.normal());
    return t;
  };
  ck.tensors.emplace_back("block0.w", fill({4, 6}));
  ck.tensors.emplace_back("block0.b", fill({6}));
  ck.tensors.emplace_back("opt.step", fill({1}));
  return ck;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(bytes.data(), std::streamsize(bytes.size()));
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_SUITE("persist") {

TEST_CASE("checkpoint round-trips bit-exactly and deterministically") {
  Checkpoint ck = sample_checkpoint();
  TempFile a("ck_a.rapc"), b("ck_b.rapc");
  save_checkpoint(ck, a.path);
  save_checkpoint(ck, b.path);
  CHECK(slurp(a.path) == slurp(b.path));  // no timestamps, byte-identical

  Checkpoint rt = load_checkpoint(a.path);
  CHECK(rt.config_text == ck.config_text);
  REQUIRE(rt.tensors.size() == ck.tensors.size());
  for (size_t i = 0; i < rt.tensors.size(); ++i) {
    CHECK(rt.tensors[i].first == ck.tensors[i].first);
    CHECK(bitwise_equal(rt.tensors[i].second, ck.tensors[i].second));
  }
}

TEST_CASE("truncation anywhere raises a format error") {
  Checkpoint ck = sample_checkpoint();
  TempFile full("ck_full.rapc"), cut("ck_cut.rapc");
  save_checkpoint(ck, full.path);
  std::string bytes = slurp(full.path);
  for (size_t n : {size_t(2), size_t(6), size_t(20), bytes.size() / 2, bytes.size() - 2}) {
    spit(cut.path, bytes.substr(0, n));
    CHECK_THROWS_AS(load_checkpoint(cut.path), FormatError);
  }
}

TEST_CASE("payload corruption is caught by the checksum") {
  Checkpoint ck = sample_checkpoint();
  TempFile f("ck_corrupt.rapc");
  save_checkpoint(ck, f.path);
  std::string bytes = slurp(f.path);
  bytes[bytes.size() - 10] ^= 0x40;  // inside the payload
  spit(f.path, bytes);
  CHECK_THROWS_WITH_AS(load_checkpoint(f.path), doctest::Contains("checksum mismatch"),
                       FormatError);
}

TEST_CASE("future versions and trailing garbage are rejected") {
  Checkpoint ck = sample_checkpoint();
  TempFile f("ck_ver.rapc");
  save_checkpoint(ck, f.path);
  std::string bytes = slurp(f.path);
  std::string bumped = bytes;
  bumped[4] = 2;  // version field follows the magic
  spit(f.path, bumped);
  CHECK_THROWS_WITH_AS(load_checkpoint(f.path), doctest::Contains("unsupported checkpoint version"),
                       FormatError);
  spit(f.path, bytes + "x");
  CHECK_THROWS_WITH_AS(load_checkpoint(f.path), doctest::Contains("trailing bytes"), FormatError);
  spit(f.path, "RAPX" + bytes.substr(4));
  CHECK_THROWS_WITH_AS(load_checkpoint(f.path), doctest::Contains("bad magic"), FormatError);
}

TEST_CASE("tensor table offsets must be dense and increasing") {
  std::ostringstream f;
  f.write("RAPC", 4);
  wire::wr_u32(f, 1);
  wire::wr_u64(f, 0);  // empty config
  wire::wr_u32(f, 1);  // one tensor
  wire::wr_u32(f, 1);
  f.write("a", 1);
  wire::wr_u32(f, 0);  // dtype f32
  wire::wr_u32(f, 1);  // rank 1
  wire::wr_u32(f, 2);  // dim 2
  wire::wr_u64(f, 4);  // wrong: first tensor must start at 0
  TempFile t("ck_offset.rapc");
  spit(t.path, f.str());
  CHECK_THROWS_WITH_AS(load_checkpoint(t.path), doctest::Contains("expected 0"), FormatError);
}

TEST_CASE("save rejects duplicate or empty tensor names") {
  Checkpoint ck;
  ck.tensors.emplace_back("w", Tensor({2}));
  ck.tensors.emplace_back("w", Tensor({3}));
  CHECK_THROWS_WITH_AS(save_checkpoint(ck, "ck_dup.rapc"), doctest::Contains("duplicate"),
                       FormatError);
  ck.tensors[1].first = "";
  CHECK_THROWS_WITH_AS(save_checkpoint(ck, "ck_dup.rapc"), doctest::Contains("empty name"),
                       FormatError);
}

TEST_CASE("crc32 matches the standard check value") {
  const char* s = "123456789";
  CHECK(wire::crc32_update(0, s, 9) == 0xCBF43926u);
}

TEST_CASE("kv files parse comments, whitespace, and typed lookups") {
  KvFile kv = parse_kv("# run setup\n dim = 8 \nlr=1e-3\nname=hybrid a\n\nflag=\n");
  CHECK(kv.get_int("dim") == 8);
  CHECK(kv.get_num("lr") == 1e-3);
  CHECK(kv.get_str("name") == "hybrid a");
  CHECK(kv.get_str("flag").empty());
  CHECK(kv.get_int("missing", 5) == 5);
  CHECK(kv.get_num("missing", 0.5) == 0.5);
  CHECK(kv.get_str("missing", "d") == "d");
  CHECK(!kv.has("missing"));
  CHECK_THROWS_WITH_AS(kv.get_str("missing"), doctest::Contains("missing"), FormatError);
  CHECK_THROWS_WITH_AS(kv.get_num("name"), doctest::Contains("bad number"), FormatError);
  CHECK_THROWS_WITH_AS(kv.get_int("lr"), doctest::Contains("bad integer"), FormatError);
}

TEST_CASE("kv parse errors carry line numbers") {
  CHECK_THROWS_WITH_AS(parse_kv("a=1\nbroken line\n"), doctest::Contains("line 2"), FormatError);
  CHECK_THROWS_WITH_AS(parse_kv("a=1\n\na=2\n"), doctest::Contains("line 3"), FormatError);
  CHECK_THROWS_WITH_AS(parse_kv("=5\n"), doctest::Contains("empty key"), FormatError);
}

TEST_CASE("kv set and render round-trip") {
  KvFile kv = parse_kv("a=1\nb=2\n");
  kv.set("b", "9");
  kv.set("c", "3");
  CHECK(render_kv(kv) == "a=1\nb=9\nc=3\n");
  KvFile again = parse_kv(render_kv(kv));
  CHECK(again.get_int("b") == 9);
  CHECK(again.get_int("c") == 3);
}

}  // TEST_SUITE
