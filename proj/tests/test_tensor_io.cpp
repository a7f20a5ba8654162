#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "trajtok/manifest.hpp"
#include "trajtok/rng.hpp"
#include "trajtok/tensor_io.hpp"

using namespace trajtok;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() / ("trajtok_io_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("tensor round-trips bit-exactly") {
  const fs::path dir = temp_dir();
  Tensor t({2, 2}, {1, 2, 3, 4});
  write_tensor(dir / "t.trok", t);
  Tensor back = read_tensor(dir / "t.trok");
  REQUIRE(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
}

TEST_CASE("random tensors round-trip bit-exactly (property)") {
  const fs::path dir = temp_dir();
  Rng rng(42);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t rank = 1 + rng.index(4);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = 1 + rng.index(6);
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i)
      t[i] = static_cast<float>(rng.uniform(-1e6, 1e6));
    const fs::path p = dir / ("r" + std::to_string(trial) + ".trok");
    write_tensor(p, t);
    Tensor back = read_tensor(p);
    REQUIRE(back.shape() == shape);
    for (std::size_t i = 0; i < t.size(); ++i)
      REQUIRE(std::bit_cast<std::uint32_t>(back[i]) == std::bit_cast<std::uint32_t>(t[i]));
  }
}

TEST_CASE("zero dimension is rejected") {
  CHECK_THROWS_AS(Tensor({std::size_t(0)}), Error);
  try {
    Tensor t({std::size_t(0)});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidShape);
  }
}

TEST_CASE("file size follows the container layout") {
  // magic(4) + version(4) + dtype(1) + rank(1) + rank*u64 dims + 4 bytes per value
  const fs::path dir = temp_dir();
  Tensor t({256, 8, 2});
  write_tensor(dir / "traj.trok", t);
  const auto expected = 10 + 3 * 8 + 256 * 8 * 2 * 4;
  CHECK(fs::file_size(dir / "traj.trok") == static_cast<std::uintmax_t>(expected));
}

TEST_CASE("bad magic is rejected") {
  const fs::path dir = temp_dir();
  std::ofstream out(dir / "bad.trok", std::ios::binary);
  out << "XXXX";
  for (int i = 0; i < 32; ++i) out.put(0);
  out.close();
  CHECK_THROWS_AS(read_tensor(dir / "bad.trok"), Error);
  try {
    read_tensor(dir / "bad.trok");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadMagic);
  }
}

TEST_CASE("unsupported version is rejected") {
  const fs::path dir = temp_dir();
  Tensor t({2}, {1, 2});
  write_tensor(dir / "v.trok", t);
  // bump the version field in place
  std::fstream f(dir / "v.trok", std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(4);
  f.put(9);
  f.close();
  try {
    read_tensor(dir / "v.trok");
    FAIL("expected UnsupportedVersion");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnsupportedVersion);
  }
}

TEST_CASE("truncated payload is rejected") {
  const fs::path dir = temp_dir();
  Tensor t({4, 4});
  write_tensor(dir / "t.trok", t);
  const auto full = fs::file_size(dir / "t.trok");
  fs::resize_file(dir / "t.trok", full - 7);
  try {
    read_tensor(dir / "t.trok");
    FAIL("expected TruncatedPayload");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TruncatedPayload);
  }
}

TEST_CASE("non-finite payload is rejected on write") {
  const fs::path dir = temp_dir();
  Tensor t({2}, {1.0f, std::numeric_limits<float>::infinity()});
  CHECK_THROWS_AS(write_tensor(dir / "inf.trok", t), Error);
}

TEST_CASE("manifest loads, validates splits and checks files") {
  const fs::path dir = temp_dir();
  // assets the manifest refers to
  write_tensor(dir / "f0.trok", Tensor({1}, {0.f}));
  write_tensor(dir / "f1.trok", Tensor({1}, {0.f}));

  DatasetManifest m;
  m.class_names = {"a", "b", "c", "d"};
  m.split["train"] = {0, 1};
  m.split["test"] = {2, 3};
  m.videos.push_back({"v0", 0, "f0.trok", ""});
  m.videos.push_back({"v1", 2, "f1.trok", ""});
  save_manifest(dir / "manifest.json", m);

  DatasetManifest loaded = load_manifest(dir / "manifest.json");
  REQUIRE(loaded.videos.size() == 2);
  CHECK(loaded.videos[0].id == "v0");
  CHECK(loaded.videos[1].label == 2);
  CHECK(fs::path(loaded.videos[0].feature_path).is_absolute());

  SUBCASE("split overlap is rejected") {
    m.split["test"] = {1, 3};
    save_manifest(dir / "overlap.json", m);
    try {
      load_manifest(dir / "overlap.json");
      FAIL("expected SplitOverlap");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SplitOverlap);
    }
  }

  SUBCASE("missing asset is rejected") {
    m.videos[0].feature_path = "missing.trok";
    save_manifest(dir / "missing.json", m);
    try {
      load_manifest(dir / "missing.json");
      FAIL("expected MissingAsset");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingAsset);
    }
  }
}

TEST_CASE("manifest loading preserves video order") {
  const fs::path dir = temp_dir();
  DatasetManifest m;
  m.class_names = {"a", "b"};
  m.split["train"] = {0};
  m.split["test"] = {1};
  for (int i = 0; i < 12; ++i) {
    const std::string name = "f" + std::to_string(i) + ".trok";
    write_tensor(dir / name, Tensor({1}, {float(i)}));
    m.videos.push_back({"v" + std::to_string(i), i % 2, name, ""});
  }
  save_manifest(dir / "manifest.json", m);
  DatasetManifest a = load_manifest(dir / "manifest.json");
  DatasetManifest b = load_manifest(dir / "manifest.json");
  REQUIRE(a.videos.size() == 12);
  for (std::size_t i = 0; i < a.videos.size(); ++i) {
    CHECK(a.videos[i].id == "v" + std::to_string(i));
    CHECK(a.videos[i].id == b.videos[i].id);
  }
}
