#include <doctest.h>

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "dssa/io/config.hpp"
#include "dssa/io/image.hpp"
#include "dssa/io/weights.hpp"
#include "support.hpp"

using namespace dssa;
using namespace dssa::io;

namespace {

std::vector<WeightEntry> random_entries(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> d(-3, 3);
  std::vector<WeightEntry> out;
  for (Shape s : {Shape{3}, Shape{2, 5}, Shape{1, 1, 7}, Shape{4, 4, 2, 3}}) {
    WeightEntry e{"layer" + std::to_string(out.size()) + ".w", s, {}};
    e.values.resize(shape_numel(s));
    for (auto& v : e.values) v = d(rng);
    out.push_back(std::move(e));
  }
  out[0].values[1] = -0.0f;
  out[1].values[2] = std::numeric_limits<float>::denorm_min();
  return out;
}

bool bitwise_equal(const std::vector<WeightEntry>& a, const std::vector<WeightEntry>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].shape != b[i].shape) return false;
    if (a[i].values.size() != b[i].values.size()) return false;
    if (std::memcmp(a[i].values.data(), b[i].values.data(), a[i].values.size() * 4) != 0) return false;
  }
  return true;
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 | std::uint32_t(b[at + 2]) << 16 |
         std::uint32_t(b[at + 3]) << 24;
}

void write_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) b[at + k] = std::uint8_t(v >> (8 * k));
}

void reseal(std::vector<std::uint8_t>& b) {
  const std::uint32_t header = read_u32(b, 12);
  write_u32(b, header - 4, std::uint32_t(crc32(0L, b.data(), uInt(header - 4))));
}

// Byte position of each entry's offset field.
std::vector<std::size_t> offset_fields(const std::vector<std::uint8_t>& b) {
  std::vector<std::size_t> out;
  std::size_t pos = 16;
  for (std::uint32_t i = 0; i < read_u32(b, 8); ++i) {
    pos += 2 + (b[pos] | b[pos + 1] << 8);
    const std::size_t rank = b[pos + 1];
    pos += 2 + 4 * rank;
    out.push_back(pos);
    pos += 8;
  }
  return out;
}

}  // namespace

TEST_CASE("weight containers round-trip bitwise") {
  std::mt19937_64 rng(1);
  const auto entries = random_entries(rng);
  const auto bytes = encode_weights(entries);
  CHECK(std::memcmp(bytes.data(), "DSSW", 4) == 0);
  CHECK(bitwise_equal(decode_weights(bytes), entries));
  for (std::size_t at : offset_fields(bytes)) CHECK(bytes[at] % kPayloadAlignment == 0);
  CHECK(encode_weights(decode_weights(bytes)) == bytes);

  testing::TempDir dir("weights");
  save_weights(dir.path() / "w.dssw", entries);
  CHECK(bitwise_equal(load_weights(dir.path() / "w.dssw"), entries));
}

TEST_CASE("corrupted containers are rejected") {
  std::mt19937_64 rng(2);
  const auto good = encode_weights(random_entries(rng));

  auto magic = good;
  magic[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_weights(magic), doctest::Contains("magic"), FormatError);

  auto version = good;
  version[4] = 2;
  CHECK_THROWS_WITH_AS(decode_weights(version), doctest::Contains("version"), FormatError);

  auto crc = good;
  crc[17] ^= 0x20;
  CHECK_THROWS_WITH_AS(decode_weights(crc), doctest::Contains("CRC"), FormatError);

  auto overlap = good;
  const auto fields = offset_fields(overlap);
  for (int k = 0; k < 8; ++k) overlap[fields[1] + k] = overlap[fields[0] + k];
  reseal(overlap);
  CHECK_THROWS_WITH_AS(decode_weights(overlap), doctest::Contains("overlap"), FormatError);

  auto outside = good;
  outside[fields.back() + 3] = 0x7f;
  reseal(outside);
  CHECK_THROWS_AS(decode_weights(outside), FormatError);

  CHECK_THROWS_AS(decode_weights(std::vector<std::uint8_t>(good.begin(), good.begin() + 40)),
                  FormatError);
  CHECK_THROWS_AS(decode_weights({}), FormatError);
}

TEST_CASE("assigning weights checks names and shapes") {
  std::mt19937_64 rng(3);
  auto a = testing::to_float(testing::random_tensor({2, 3}, rng), true);
  auto b = testing::to_float(testing::random_tensor({4}, rng), true);
  ParamList<float> params{{"a", a}, {"b", b}};
  const auto entries = entries_from(params);
  CHECK(entries.size() == 2);

  auto fresh_a = Tensor<float>(Shape{2, 3}, 0.0f, true), fresh_b = Tensor<float>(Shape{4}, 0.0f, true);
  ParamList<float> fresh{{"a", fresh_a}, {"b", fresh_b}};
  assign_weights(entries, fresh);
  CHECK(testing::values(fresh_a) == testing::values(a));
  CHECK(testing::values(fresh_b) == testing::values(b));

  CHECK_THROWS_AS(assign_weights({entries[0]}, fresh), FormatError);
  auto wrong = entries;
  wrong[1].shape = {2, 2};
  CHECK_THROWS_AS(assign_weights(wrong, fresh), FormatError);
  auto extra = entries;
  extra.push_back({"c", {1}, {1.0f}});
  CHECK_THROWS_AS(assign_weights(extra, fresh), FormatError);
}

TEST_CASE("images and masks round-trip through netpbm and png") {
  testing::TempDir dir("images");
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> byte(0, 255), label(0, 2);
  Image gray{7, 5, 1, std::vector<std::uint8_t>(35)}, rgb{6, 4, 3, std::vector<std::uint8_t>(72)};
  for (auto& p : gray.pixels) p = std::uint8_t(byte(rng));
  for (auto& p : rgb.pixels) p = std::uint8_t(byte(rng));
  for (const char* ext : {".pgm", ".png"}) {
    const auto path = dir.path() / (std::string("g") + ext);
    write_image(path, gray);
    const auto back = read_image(path);
    CHECK(back.width == 7);
    CHECK(back.height == 5);
    CHECK(back.channels == 1);
    CHECK(back.pixels == gray.pixels);
  }
  for (const char* ext : {".ppm", ".png"}) {
    const auto path = dir.path() / (std::string("c") + ext);
    write_image(path, rgb);
    const auto back = read_image(path);
    CHECK(back.channels == 3);
    CHECK(back.pixels == rgb.pixels);
  }

  LabelMask m(9, 6);
  for (auto& l : m.labels) l = std::uint8_t(label(rng));
  for (const char* ext : {".pgm", ".png"}) {
    const auto path = dir.path() / (std::string("m") + ext);
    write_mask(path, m);
    const auto back = read_mask(path, 0.3);
    CHECK(back.labels == m.labels);
    CHECK(back.spacing == 0.3);
  }

  std::ofstream(dir.path() / "bad.pgm") << "P2\n2 2\n255\n0 0 0 0\n";
  CHECK_THROWS_AS(read_image(dir.path() / "bad.pgm"), FormatError);
  std::ofstream(dir.path() / "short.pgm") << "P5\n4 4\n255\nab";
  CHECK_THROWS_AS(read_image(dir.path() / "short.pgm"), FormatError);
  CHECK_THROWS(read_image(dir.path() / "missing.pgm"));
  gray.pixels[0] = 7;
  write_image(dir.path() / "seven.pgm", gray);
  CHECK_THROWS_AS(read_mask(dir.path() / "seven.pgm"), DataError);
}

TEST_CASE("gray conversion and resampling") {
  Image rgb{1, 1, 3, {255, 0, 0}};
  CHECK(int(rgb.to_gray().pixels[0]) == 76);
  Image flat{4, 4, 1, std::vector<std::uint8_t>(16, 90)};
  const auto up = resize_image(flat, 10, 6);
  CHECK(up.width == 10);
  CHECK(up.height == 6);
  for (auto p : up.pixels) CHECK(p == 90);

  LabelMask m(8, 8, kBackground, 0.5);
  for (std::size_t y = 2; y < 6; ++y)
    for (std::size_t x = 2; x < 6; ++x) m.at(x, y) = (x + y) % 2 ? kFetalHead : kPubicSymphysis;
  const auto r = resize_mask(m, 13, 5);
  for (auto l : r.labels) CHECK(l <= 2);
  CHECK(r.width == 13);
  const auto same = resize_mask(m, 8, 8);
  CHECK(same.labels == m.labels);
  CHECK(resize_mask(m, 16, 16).spacing == 0.25);
}

TEST_CASE("run configs parse, validate and render") {
  const auto c = parse_run_config(
      "# a comment\n"
      "lr = 3e-4   # trailing\n"
      "\n"
      "preset = small\n"
      "lambda = 1/8\n"
      "k1 = [2, 8, 32, 64]\n"
      "skips = 4, 8\n"
      "mff = false\n"
      "train_dir = data/train\n"
      "image_size = 64\n");
  CHECK(c.train.lr == 3e-4);
  CHECK(c.model.channels == ModelConfig::small().channels);
  CHECK(c.model.lambda == 0.125);
  CHECK(c.model.k1_schedule == std::vector<std::size_t>{2, 8, 32, 64});
  CHECK(c.model.skips == std::set<std::size_t>{4, 8});
  CHECK_FALSE(c.model.mff_enabled);
  CHECK(c.data.train_dir == "data/train");
  CHECK(c.data.image_size == 64);

  const auto text = to_text(c);
  CHECK(to_text(parse_run_config(text)) == text);
  CHECK(parse_run_config("").train.lr == 1e-4);
  CHECK(to_text(parse_run_config("skips = none\n")).find("skips = none") != std::string::npos);

  CHECK_THROWS_AS(parse_run_config("learning_rate = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("lr\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("lr = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("lr = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("image_size = 100\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("preset = huge\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("mff = maybe\n"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.cfg"), ConfigError);
}
