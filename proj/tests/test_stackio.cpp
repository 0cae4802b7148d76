#include <gtest/gtest.h>

#include "support.hpp"

using namespace ddlsff;
using test::TempDir;

namespace {

Image constant_image(int h, int w, int c, double v) { return Image(h, w, c, std::vector<double>(h * w * c, v)); }

void write_manifest(const fs::path& path, const std::vector<std::string>& images, const std::vector<double>& d,
                    const std::string& mode = "gray") {
  nlohmann::json j;
  j["images"] = images;
  j["focal_distances"] = d;
  j["color_mode"] = mode;
  io::write_file_atomic(path, j.dump());
}

}  // namespace

TEST(StackIo, LoadsFiveSliceStackWithFocalDistances) {
  TempDir dir("load5");
  const Image img = test::random_image(256, 256, 1, 3);
  std::vector<std::string> names;
  for (int i = 0; i < 5; ++i) {
    names.push_back("s" + std::to_string(i) + ".png");
    io::write_image(dir / names.back(), img, 16);
  }
  write_manifest(dir / "m.json", names, {0.1, 0.15, 0.3, 0.7, 1.5});
  const FocalStack stack = io::load_stack(io::read_manifest(dir / "m.json"));
  EXPECT_EQ(stack.size(), 5);
  EXPECT_EQ(stack.height(), 256);
  EXPECT_EQ(stack.width(), 256);
  EXPECT_EQ(stack.focal_distances(), (std::vector<double>{0.1, 0.15, 0.3, 0.7, 1.5}));
  for (double v : stack.slice(2).values()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(StackIo, RejectsNonMonotonicDistances) {
  TempDir dir("mono");
  io::write_image(dir / "a.png", constant_image(8, 8, 1, 0.2));
  io::write_image(dir / "b.png", constant_image(8, 8, 1, 0.4));
  write_manifest(dir / "m.json", {"a.png", "b.png"}, {1.0, 1.0});
  EXPECT_THROW(io::load_stack(io::read_manifest(dir / "m.json")), ValidationError);
  EXPECT_THROW(FocalStack({constant_image(4, 4, 1, 0), constant_image(4, 4, 1, 0)}, {1, 1}), ValidationError);
  EXPECT_NO_THROW(FocalStack({constant_image(4, 4, 1, 0), constant_image(4, 4, 1, 0)}, {2, 1}));
}

TEST(StackIo, RejectsDimensionMismatch) {
  TempDir dir("dims");
  io::write_image(dir / "a.png", constant_image(64, 64, 1, 0.2));
  io::write_image(dir / "b.png", constant_image(32, 32, 1, 0.4));
  write_manifest(dir / "m.json", {"a.png", "b.png"}, {1.0, 2.0});
  EXPECT_THROW(io::load_stack(io::read_manifest(dir / "m.json")), ValidationError);
}

TEST(StackIo, MissingFilesAreIoErrors) {
  TempDir dir("missing");
  EXPECT_THROW(io::read_manifest(dir / "nope.json"), IoError);
  write_manifest(dir / "m.json", {"a.png", "b.png"}, {1.0, 2.0});
  EXPECT_THROW(io::load_stack(io::read_manifest(dir / "m.json")), IoError);
}

TEST(StackIo, UnsupportedFormatIsRejected) {
  TempDir dir("fmt");
  io::write_file_atomic(dir / "a.bmp", "BM");
  io::write_file_atomic(dir / "b.bmp", "BM");
  write_manifest(dir / "m.json", {"a.bmp", "b.bmp"}, {1.0, 2.0});
  EXPECT_THROW(io::load_stack(io::read_manifest(dir / "m.json")), IoError);
}

TEST(StackIo, EightAndSixteenBitInputsNormalise) {
  TempDir dir("bits");
  Image img(1, 3, 1, std::vector<double>{0.0, 0.5, 1.0});
  io::write_image(dir / "a8.png", img, 8);
  io::write_image(dir / "a16.png", img, 16);
  io::write_image(dir / "a.pgm", img);
  const Image a8 = io::read_image(dir / "a8.png");
  const Image a16 = io::read_image(dir / "a16.png");
  const Image pgm = io::read_image(dir / "a.pgm");
  EXPECT_EQ(a8.at(0, 0, 2), 1.0);
  EXPECT_NEAR(a8.at(0, 0, 1), 128.0 / 255.0, 1e-12);
  EXPECT_NEAR(a16.at(0, 0, 1), 32768.0 / 65535.0, 1e-12);
  EXPECT_EQ(pgm.values()[1], a16.values()[1]);
}

TEST(StackIo, RgbStackKeepsColourAndGrayModeConverts) {
  TempDir dir("rgb");
  Image red(2, 2, 3);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) red.at(0, y, x) = 1.0;
  io::write_image(dir / "a.png", red);
  io::write_image(dir / "b.png", red);
  write_manifest(dir / "rgb.json", {"a.png", "b.png"}, {1, 2}, "rgb");
  write_manifest(dir / "gray.json", {"a.png", "b.png"}, {1, 2}, "gray");
  EXPECT_EQ(io::load_stack(io::read_manifest(dir / "rgb.json")).channels(), 3);
  const FocalStack g = io::load_stack(io::read_manifest(dir / "gray.json"));
  EXPECT_EQ(g.channels(), 1);
  EXPECT_DOUBLE_EQ(g.slice(0).at(0, 0, 0), 1.0 / 3.0);
}

TEST(Grayscale, Examples) {
  Image px(1, 1, 3, std::vector<double>{0.3, 0.3, 0.3});
  EXPECT_DOUBLE_EQ(to_grayscale(px).values()[0], 0.3);
  Image red(1, 1, 3, std::vector<double>{1.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(to_grayscale(red).values()[0], 1.0 / 3.0);
  const Image black = constant_image(4, 4, 3, 0.0);
  for (const auto res = to_grayscale(black); double v : res.values()) EXPECT_EQ(v, 0.0);
  const Image gray = test::random_image(5, 5, 1, 2);
  EXPECT_EQ(to_grayscale(gray).values()[7], gray.values()[7]);
}

TEST(Grayscale, StaysInUnitRange) {
  const Image img = test::random_image(16, 16, 3, 11);
  for (auto f : {GrayFormula::channel_mean, GrayFormula::rec601})
    for (const auto res = to_grayscale(img, f); double v : res.values()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  Image white = constant_image(2, 2, 3, 1.0);
  for (const auto res = to_grayscale(white, GrayFormula::rec601); double v : res.values()) EXPECT_LE(v, 1.0);
}

TEST(MeanImage, Examples) {
  const FocalStack two({constant_image(3, 3, 1, 0.0), constant_image(3, 3, 1, 1.0)}, {1, 2});
  for (const auto res = mean_image(two); double v : res.values()) EXPECT_EQ(v, 0.5);

  const Image tex = test::random_image(7, 5, 3, 8);
  const FocalStack same({tex, tex, tex, tex, tex, tex, tex}, {1, 2, 3, 4, 5, 6, 7});
  EXPECT_TRUE(test::bit_equal(mean_image(same).values(), tex.values()));

  const FocalStack three({constant_image(1, 1, 1, 0.1), constant_image(1, 1, 1, 0.2), constant_image(1, 1, 1, 0.6)},
                         {1, 2, 3});
  EXPECT_NEAR(mean_image(three).values()[0], 0.3, 1e-15);
}

TEST(MeanImage, CommutesWithPermutation) {
  std::vector<Image> slices;
  for (int i = 0; i < 6; ++i) slices.push_back(test::random_image(9, 9, 3, 100 + i));
  const Image ref = mean_image(std::span<const Image>(slices));
  std::vector<int> order = {0, 1, 2, 3, 4, 5};
  std::mt19937 gen(4);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(order.begin(), order.end(), gen);
    std::vector<Image> perm;
    for (int i : order) perm.push_back(slices[static_cast<std::size_t>(i)]);
    EXPECT_TRUE(test::bit_equal(mean_image(std::span<const Image>(perm)).values(), ref.values()));
  }
}

TEST(Pfm, RoundTripIsBitExact) {
  TempDir dir("pfm");
  Plane p(13, 7);
  std::mt19937 gen(1);
  std::uniform_real_distribution<float> dist(-100.0f, 100.0f);
  for (double& v : p.values()) v = static_cast<double>(dist(gen));
  io::write_pfm(dir / "a.pfm", p);
  const Plane q = io::read_pfm(dir / "a.pfm");
  ASSERT_TRUE(q.same_shape(p));
  EXPECT_TRUE(test::bit_equal(q.values(), p.values()));
  io::write_pfm(dir / "b.pfm", q);
  EXPECT_EQ(io::read_file(dir / "a.pfm"), io::read_file(dir / "b.pfm"));
}

TEST(Pfm, HeaderAndRowOrder) {
  Plane p(2, 1);
  p(0, 0) = 1.0;  // top row
  p(1, 0) = 2.0;
  const std::string bytes = io::encode_pfm(p);
  ASSERT_EQ(bytes.substr(0, 3), "Pf\n");
  EXPECT_NE(bytes.find("-1"), std::string::npos);
  float first;
  std::memcpy(&first, bytes.data() + bytes.size() - 8, 4);
  EXPECT_EQ(first, 2.0f);  // stored bottom-to-top
  EXPECT_THROW(io::decode_pfm("PF\n1 1\n-1.0\n0000"), IoError);
  EXPECT_THROW(io::decode_pfm("Pf\n2 2\n-1.0\n0000"), IoError);
}

TEST(DepthIo, ConstantPfmRoundTrip) {
  TempDir dir("dpfm");
  DepthMap d{Plane(4, 6, 5.0), DepthUnit::index};
  io::write_depth(d, dir / "d.pfm");
  const DepthMap r = io::read_depth(dir / "d.pfm");
  for (double v : r.values.values()) EXPECT_EQ(v, 5.0);
}

TEST(DepthIo, Png16RecordsRangeInSidecar) {
  TempDir dir("dpng");
  DepthMap d{Plane(3, 3), DepthUnit::focal_distance};
  for (int i = 0; i < 9; ++i) d.values.values()[static_cast<std::size_t>(i)] = 10.0 + 90.0 * i / 8.0;
  io::write_depth(d, dir / "d.png");
  const std::string side = io::read_file(io::png16_sidecar(dir / "d.png"));
  EXPECT_EQ(side, "min 10\nmax 100\n");
  const DepthMap r = io::read_depth(dir / "d.png", DepthUnit::focal_distance);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(r.values.values()[i], d.values.values()[i], 90.0 / 65535.0);
  EXPECT_EQ(r.values(0, 0), 10.0);
  EXPECT_EQ(r.values(2, 2), 100.0);
}

TEST(DepthIo, NanIsRejected) {
  TempDir dir("dnan");
  DepthMap d{Plane(2, 2, 1.0), DepthUnit::index};
  d.values(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(io::write_depth(d, dir / "d.pfm"), ValidationError);
  EXPECT_THROW(io::write_depth(d, dir / "d.png"), ValidationError);
  d.values(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(io::write_depth(d, dir / "d.pfm"), ValidationError);
  EXPECT_FALSE(fs::exists(dir / "d.pfm"));
}

TEST(Stack, WriteAndReloadThroughManifest) {
  TempDir dir("wstack");
  const FocalStack s = test::random_stack(3, 8, 9, 3, 5);
  io::write_stack(dir.path(), s);
  const FocalStack r = io::load_stack(io::read_manifest(dir / "manifest.json"));
  EXPECT_EQ(r.size(), 3);
  EXPECT_EQ(r.channels(), 3);
  for (std::size_t i = 0; i < s.slice(1).values().size(); ++i)
    ASSERT_NEAR(r.slice(1).values()[i], s.slice(1).values()[i], 0.5 / 65535.0 + 1e-15);
}
