#include <algorithm>
#include <fstream>
#include <map>

#include "gradformer/data.hpp"
#include "gradformer/io.hpp"
#include "support.hpp"

using namespace gradformer;
using testing::bitwise_equal;
using testing::random_tensor;
using testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> directory_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_file(e.path().string());
  }
  return out;
}

std::string pgm(int w, int h, const std::vector<std::uint8_t>& px) {
  std::string s = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  s.append(px.begin(), px.end());
  return s;
}

}  // namespace

TEST_CASE("tensor container layout") {
  TempDir dir("grdt");
  const Tensor<float> t({2, 3}, {1.0f, -2.0f, 0.5f, 3.25f, 0.0f, -0.0f});
  write_tensor(dir.file("t.grdt"), t);
  const auto bytes = read_file(dir.file("t.grdt"));
  REQUIRE(bytes.size() == 48);
  CHECK(bytes.substr(0, 4) == "GRDT");
  CHECK(bytes[4] == 1);  // version
  CHECK(bytes[5] == 0);  // float32
  CHECK(bytes[6] == 2);  // ndim
  CHECK(bytes[7] == 0);  // reserved
  CHECK(bytes[8] == 2);  // dim 0, u64 LE
  for (int i = 9; i < 16; ++i) CHECK(bytes[i] == 0);
  CHECK(bytes[16] == 3);
  // 1.0f little-endian: 00 00 80 3f
  CHECK(static_cast<unsigned char>(bytes[24]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[26]) == 0x80);
  CHECK(static_cast<unsigned char>(bytes[27]) == 0x3f);
  CHECK(encode_tensor(t) == bytes);

  CHECK(encode_tensor(Tensor<double>({2, 3}, std::vector<double>(6, 0.0))).size() == 4 + 4 + 16 + 48);
}

TEST_CASE("tensor round trips are bitwise exact") {
  TempDir dir("grdt_rt");
  Xorshift64Star rng(1);
  const auto f = random_tensor<float>({2, 3, 4, 5}, rng, -1e3, 1e3);
  const auto d = random_tensor({7}, rng, -1e-300, 1e300);
  write_tensor(dir.file("f"), f);
  write_tensor(dir.file("d"), d);
  CHECK(bitwise_equal(read_tensor<float>(dir.file("f")), f));
  CHECK(bitwise_equal(read_tensor<double>(dir.file("d")), d));
  // Widening then narrowing a float is exact.
  CHECK(bitwise_equal(read_tensor<double>(dir.file("f")), Tensor<double>(f.shape(), {f.data().begin(), f.data().end()})));
}

TEST_CASE("tensor corruption probes") {
  TempDir dir("grdt_bad");
  Xorshift64Star rng(2);
  const auto t = random_tensor({2, 3}, rng);
  const auto good = encode_tensor(t);

  auto payload = good;
  payload[30] ^= 0x01;
  write_file(dir.file("payload"), payload);
  const auto changed = read_tensor<double>(dir.file("payload"));
  CHECK_FALSE(bitwise_equal(changed, t));

  auto magic = good;
  magic[1] = 'X';
  write_file(dir.file("magic"), magic);
  CHECK_THROWS_AS(read_tensor<double>(dir.file("magic")), FormatError);

  write_file(dir.file("short"), good.substr(0, good.size() - 3));
  try {
    read_tensor<double>(dir.file("short"));
    FAIL("truncated file accepted");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }

  auto dtype = good;
  dtype[5] = 7;
  write_file(dir.file("dtype"), dtype);
  CHECK_THROWS_AS(read_tensor<double>(dir.file("dtype")), FormatError);

  auto version = good;
  version[4] = 9;
  write_file(dir.file("version"), version);
  try {
    read_tensor<double>(dir.file("version"));
    FAIL("unknown version accepted");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 4);
  }
}

TEST_CASE("checkpoints") {
  TempDir dir("ckpt");
  RunConfig cfg;
  cfg.model = ModelConfig::tiny();
  cfg.model.seed = 3;
  const auto model = GradFormer<float>::build(cfg.model);
  save_checkpoint(dir.file("m.ckpt"), model, cfg);

  SUBCASE("save, load, forward is bitwise identical") {
    Xorshift64Star rng(4);
    const auto pre = random_tensor<float>({2, 3, 32, 32}, rng, 0, 1);
    const auto post = random_tensor<float>({2, 3, 32, 32}, rng, 0, 1);
    const auto loaded = load_checkpoint<float>(dir.file("m.ckpt"));
    CHECK(loaded.config == cfg);
    NoGradGuard no_grad;
    CHECK(bitwise_equal(loaded.model.forward(pre, post), model.forward(pre, post)));
  }
  SUBCASE("entries carry the hierarchical parameter names") {
    const auto data = read_checkpoint(dir.file("m.ckpt"));
    const auto params = model.parameters();
    REQUIRE(data.entries.size() == params.size());
    for (std::size_t i = 0; i < params.size(); ++i) CHECK(data.entries[i].name == params[i].name);
    CHECK(std::any_of(data.entries.begin(), data.entries.end(),
                      [](const auto& e) { return e.name == "enc.stage1.block0.afrar.glfr.wq.weight"; }));
    std::int64_t tensors = 0;
    for (const auto& g : model.parameter_groups()) tensors += g.tensors;
    CHECK(static_cast<std::int64_t>(data.entries.size()) == tensors);
  }
  SUBCASE("a mismatched config names the first offending entry") {
    auto other = cfg.model;
    other.stage_channels[1] = 48;
    auto target = GradFormer<float>::build(other);
    try {
      apply_checkpoint(read_checkpoint(dir.file("m.ckpt")), target);
      FAIL("mismatched checkpoint applied");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("enc.stage2.embed.conv.weight") != std::string::npos);
    }
    auto simple = cfg.model;
    simple.attention = AttentionKind::kSimple;
    auto s = GradFormer<float>::build(simple);
    CHECK_THROWS_AS(apply_checkpoint(read_checkpoint(dir.file("m.ckpt")), s), FormatError);
  }
  SUBCASE("double models round trip too") {
    const auto md = GradFormer<double>::build(cfg.model);
    save_checkpoint(dir.file("d.ckpt"), md, cfg);
    const auto back = load_checkpoint<double>(dir.file("d.ckpt"));
    const auto a = md.parameters(), b = back.model.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(bitwise_equal(a[i].tensor, b[i].tensor));
  }
  SUBCASE("corrupt checkpoint magic") {
    auto bytes = read_file(dir.file("m.ckpt"));
    bytes[0] = 'X';
    write_file(dir.file("bad.ckpt"), bytes);
    CHECK_THROWS_AS(read_checkpoint(dir.file("bad.ckpt")), FormatError);
  }
}

TEST_CASE("default-config checkpoint has one entry per parameter tensor") {
  TempDir dir("ckpt_default");
  RunConfig cfg;
  const auto model = GradFormer<float>::build(cfg.model);
  save_checkpoint(dir.file("d.ckpt"), model, cfg);
  const auto data = read_checkpoint(dir.file("d.ckpt"));
  std::int64_t tensors = 0, scalars = 0;
  for (const auto& g : model.parameter_groups()) tensors += g.tensors;
  for (const auto& e : data.entries) scalars += e.tensor.values.numel();
  CHECK(static_cast<std::int64_t>(data.entries.size()) == tensors);
  CHECK(scalars == model.count_parameters());
}

TEST_CASE("netpbm images and masks") {
  TempDir dir("pnm");
  SUBCASE("all-255 mask reads as all ones") {
    write_file(dir.file("m.pgm"), pgm(3, 2, std::vector<std::uint8_t>(6, 255)));
    const auto m = read_mask(dir.file("m.pgm"));
    CHECK(m.height == 2);
    CHECK(m.width == 3);
    CHECK(std::all_of(m.values.begin(), m.values.end(), [](auto v) { return v == 1; }));
  }
  SUBCASE("threshold at 128") {
    write_file(dir.file("t.pgm"), pgm(4, 1, {127, 128, 0, 200}));
    CHECK(read_mask(dir.file("t.pgm")).values == std::vector<std::uint8_t>{0, 1, 0, 1});
  }
  SUBCASE("8-bit images round trip byte for byte") {
    Xorshift64Star rng(5);
    std::string ppm = "P6\n5 4\n255\n";
    for (int i = 0; i < 60; ++i) ppm.push_back(static_cast<char>(rng.below(256)));
    write_file(dir.file("a.ppm"), ppm);
    const auto img = read_image(dir.file("a.ppm"));
    CHECK(img.shape() == Shape{3, 4, 5});
    CHECK(img[0] == static_cast<float>(static_cast<unsigned char>(ppm[11])) / 255.0f);
    write_image(dir.file("b.ppm"), img);
    CHECK(read_file(dir.file("b.ppm")) == ppm);

    BinaryMask m(1, 2, 2);
    m.values = {0, 1, 1, 0};
    write_mask(dir.file("m.pgm"), m);
    CHECK(read_file(dir.file("m.pgm")) == pgm(2, 2, {0, 255, 255, 0}));
  }
  SUBCASE("rejections") {
    write_file(dir.file("p2.pgm"), "P2\n1 1\n255\n0\n");
    CHECK_THROWS_AS(read_mask(dir.file("p2.pgm")), FormatError);
    write_file(dir.file("max.pgm"), "P5\n1 1\n15\n\x01");
    CHECK_THROWS_AS(read_mask(dir.file("max.pgm")), FormatError);
    write_file(dir.file("short.ppm"), "P6\n2 2\n255\nabc");
    CHECK_THROWS_AS(read_image(dir.file("short.ppm")), FormatError);
    write_file(dir.file("gray.pgm"), pgm(1, 1, {9}));
    CHECK_THROWS_AS(read_image(dir.file("gray.pgm")), FormatError);
  }
}

TEST_CASE("synthetic generator") {
  SUBCASE("split sizes") {
    const auto s = split_sizes(250);
    CHECK(s.train == 200);
    CHECK(s.val == 25);
    CHECK(s.test == 25);
    const auto t = split_sizes(10);
    CHECK(t.train == 8);
    CHECK(t.val == 1);
    CHECK(t.test == 1);
    const auto u = split_sizes(7);
    CHECK(u.train + u.val + u.test == 7);
  }
  SUBCASE("same seed gives identical directories; another seed differs") {
    TempDir a("synth_a"), b("synth_b"), c("synth_c");
    synth_generate({10, 64, 1, false}, a.path());
    synth_generate({10, 64, 1, false}, b.path());
    synth_generate({10, 64, 2, false}, c.path());
    const auto ca = directory_contents(a.path());
    CHECK(ca.size() == 33);
    CHECK(ca == directory_contents(b.path()));
    CHECK(ca.at("A/00000.ppm") != directory_contents(c.path()).at("A/00000.ppm"));
    CHECK(ca.at("train.txt") == "00000\n00001\n00002\n00003\n00004\n00005\n00006\n00007\n");
    CHECK(ca.at("val.txt") == "00008\n");
    CHECK(ca.at("test.txt") == "00009\n");
    CHECK(ca.count("label/00009.pgm") == 1);

    // On-disk samples equal the in-memory ones.
    const auto mem = synth_dataset({10, 64, 1, false});
    const auto disk = load_split(a.path(), "test");
    REQUIRE(disk.size() == 1);
    CHECK(disk.samples[0].name == "00009");
    CHECK(bitwise_equal(disk.samples[0].pre, mem.samples[9].pre));
    CHECK(bitwise_equal(disk.samples[0].post, mem.samples[9].post));
    CHECK(disk.samples[0].mask == mem.samples[9].mask);
    CHECK_THROWS(load_split(a.path(), "missing"));
  }
  SUBCASE("mask coverage is positive and under half the image") {
    const auto data = synth_dataset({60, 64, 7, false});
    for (const auto& s : data.samples) {
      const auto on = std::count(s.mask.values.begin(), s.mask.values.end(), 1);
      CHECK(on > 0);
      CHECK(on < 64 * 64 / 2);
      for (float v : s.pre.data()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
  }
  SUBCASE("distractor-only pairs differ but carry empty masks") {
    const auto data = synth_dataset({5, 32, 3, true});
    for (const auto& s : data.samples) {
      CHECK(std::all_of(s.mask.values.begin(), s.mask.values.end(), [](auto v) { return v == 0; }));
      CHECK_FALSE(bitwise_equal(s.pre, s.post));
    }
  }
  SUBCASE("sizes not divisible by 32 are rejected") {
    TempDir d("synth_bad");
    CHECK_THROWS_AS(synth_generate({2, 100, 0, false}, d.path()), ConfigError);
  }
}

TEST_CASE("batches and paired flips") {
  const auto data = synth_dataset({3, 32, 11, false});
  const auto plain = make_batch<double>(data, {2, 0});
  CHECK(plain.pre.shape() == Shape{2, 3, 32, 32});
  CHECK(plain.target.shape() == Shape{2, 32, 32});
  CHECK(plain.pre[0] == static_cast<double>(data.samples[2].pre[0]));

  const auto flipped = make_batch<double>(data, {2, 0}, {{true, false}, {true, true}});
  const auto plane = 32 * 32;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      // sample 0: horizontal flip only
      CHECK(flipped.pre[y * 32 + x] == plain.pre[y * 32 + (31 - x)]);
      CHECK(flipped.target[y * 32 + x] == plain.target[y * 32 + (31 - x)]);
      // sample 1: both flips, post image and mask moved together
      CHECK(flipped.post[(3 + 2) * plane + y * 32 + x] == plain.post[(3 + 2) * plane + (31 - y) * 32 + (31 - x)]);
      CHECK(flipped.mask.values[plane + y * 32 + x] == plain.mask.values[plane + (31 - y) * 32 + (31 - x)]);
    }
  CHECK_THROWS_AS(make_batch<float>(data, {}), ContractError);
}
