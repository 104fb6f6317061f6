#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "appledet/common/error.hpp"
#include "appledet/common/rng.hpp"
#include "appledet/data/augment.hpp"
#include "appledet/data/dataset.hpp"
#include "appledet/data/image.hpp"
#include "appledet/data/labels.hpp"
#include "appledet/data/netpbm.hpp"
#include "appledet/data/scene.hpp"

using namespace appledet;
using namespace appledet::data;
using boxloss::Box;
namespace fs = std::filesystem;

namespace {

Image random_image(Rng& rng, int w, int h, int channels = 3) {
  Image img = channels == 3 ? Image::rgb(w, h) : Image::gray(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.integer(0, 255));
  return img;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Netpbm, RoundTripColorAndGray) {
  Rng rng(1);
  for (int channels : {3, 1}) {
    const Image img = random_image(rng, 13, 7, channels);
    EXPECT_EQ(decode_netpbm(encode_netpbm(img)), img);
  }
  TempDir dir("appledet_netpbm");
  const Image img = generate_scene(5).image;
  write_netpbm(dir.path / "a.ppm", img);
  EXPECT_EQ(read_netpbm(dir.path / "a.ppm"), img);
}

TEST(Netpbm, HeaderCommentsAccepted) {
  const std::string bytes = std::string("P5\n# comment\n2 1\n255\n") + '\x07' + '\x09';
  const Image img = decode_netpbm(bytes);
  EXPECT_EQ(img.width, 2);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{7, 9}));
}

TEST(Netpbm, ErrorsNamePosition) {
  const std::string good = encode_netpbm(Image::rgb(4, 4, 9));
  try {
    decode_netpbm(good.substr(0, good.size() - 5));
    FAIL() << "truncated data accepted";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
  }
  EXPECT_THROW(decode_netpbm("P3\n1 1\n255\n0 0 0"), InvalidInput);
  EXPECT_THROW(decode_netpbm("P6\n1 1\n65535\n"), InvalidInput);
  EXPECT_THROW(decode_netpbm("P6\nx 1\n255\n"), InvalidInput);
  EXPECT_THROW(read_netpbm("/nonexistent/image.ppm"), InvalidInput);
}

TEST(Labels, ParseFormatAndConvert) {
  const auto boxes = parse_labels("0 0.5 0.5 0.25 0.25\n\n1 0.1 0.2 0.1 0.05\n");
  ASSERT_EQ(boxes.size(), 2u);
  const Box px = to_pixels(boxes[0], 64, 64);
  EXPECT_DOUBLE_EQ(px.cx, 32.0);
  EXPECT_DOUBLE_EQ(px.cy, 32.0);
  EXPECT_DOUBLE_EQ(px.w, 16.0);
  EXPECT_DOUBLE_EQ(px.h, 16.0);
  EXPECT_EQ(boxes[1].class_id, 1);

  Rng rng(2);
  std::vector<Box> random;
  for (int i = 0; i < 20; ++i)
    random.push_back(Box{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.01, 0.3),
                         rng.uniform(0.01, 0.3), rng.integer(0, 1)});
  const auto back = parse_labels(format_labels(random));
  ASSERT_EQ(back.size(), random.size());
  for (std::size_t i = 0; i < random.size(); ++i) {
    EXPECT_NEAR(back[i].cx, random[i].cx, 5e-7);
    EXPECT_NEAR(back[i].h, random[i].h, 5e-7);
    EXPECT_EQ(back[i].class_id, random[i].class_id);
  }
  EXPECT_EQ(format_labels(back), format_labels(random));
}

TEST(Labels, RejectionsCarryLineNumbers) {
  auto message = [](const std::string& text) {
    try {
      parse_labels(text);
    } catch (const InvalidInput& e) {
      return std::string(e.what());
    }
    return std::string("accepted");
  };
  EXPECT_NE(message("0 0.5 0.5 0.1 0.1\n2 0.5 0.5 0.1 0.1\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("2 0.5 0.5 0.1 0.1").find("unknown class"), std::string::npos);
  EXPECT_EQ(message("0 1.5 0.5 0.1 0.1").find("accepted"), std::string::npos);
  EXPECT_EQ(message("0 0.5 0.5 0.1").find("accepted"), std::string::npos);
  EXPECT_EQ(message("0 0.5 0.5 0 0.1").find("accepted"), std::string::npos);
}

TEST(Scene, Deterministic) {
  const Scene a = generate_scene(42), b = generate_scene(42), c = generate_scene(43);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.truths, b.truths);
  EXPECT_NE(a.image, c.image);
}

TEST(Scene, TruthsInsideCanvasAndClassesValid) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = generate_scene(seed);
    EXPECT_EQ(s.truths.size(), s.meta.size());
    for (const auto& b : s.truths) {
      EXPECT_GE(b.x1(), 0.0);
      EXPECT_GE(b.y1(), 0.0);
      EXPECT_LE(b.x2(), 64.0);
      EXPECT_LE(b.y2(), 64.0);
      EXPECT_TRUE(b.valid());
      EXPECT_TRUE(b.class_id == 0 || b.class_id == 1);
    }
  }
}

TEST(Scene, LabelRuleFollowsOcclusion) {
  const SceneConfig cfg;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const Scene s = generate_scene(seed, cfg);
    for (const auto& m : s.meta) {
      const bool block = m.occlusion > cfg.block_threshold && m.radius >= cfg.small_radius_px;
      EXPECT_EQ(m.class_id, block ? 1 : 0);
    }
  }
}

TEST(Scene, NoOccludersMeansNoBlocks) {
  SceneConfig cfg;
  cfg.occluder_density = 0.0;
  cfg.max_objects = 1;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    for (const auto& b : generate_scene(seed, cfg).truths) EXPECT_EQ(b.class_id, 0);
  }
}

// Census over seeds mix_seed(7, i), i < 100: 67 of 253 objects were blocks.
TEST(Scene, BlockFractionWithinCensusBand) {
  int blocks = 0, total = 0;
  for (int i = 0; i < 100; ++i) {
    for (const auto& b : generate_scene(mix_seed(7, i)).truths) {
      ++total;
      blocks += b.class_id;
    }
  }
  const double fraction = static_cast<double>(blocks) / total;
  EXPECT_GE(fraction, 0.22);
  EXPECT_LE(fraction, 0.31);
}

TEST(Scene, RejectsBadSize) {
  SceneConfig cfg;
  cfg.size = 50;
  EXPECT_THROW(generate_scene(1, cfg), InvalidInput);
}

TEST(Augment, IdentitySettingsAreExact) {
  Rng rng(3);
  const Image img = random_image(rng, 32, 32);
  EXPECT_EQ(adjust_contrast(img, 1.0), img);
  EXPECT_EQ(edge_enhance(img, 0.0), img);
  EXPECT_EQ(motion_blur(img, 1, 0.7), img);
  EXPECT_EQ(salt_pepper(img, 0.0, 9), img);
  EXPECT_EQ(max_pool(img, 1), img);
  EXPECT_EQ(color_temperature(img, 1.0), img);
  EXPECT_EQ(warp_perspective(img, perspective_homography(32, 32, 0.0, 4)), img);
  const Image flat = Image::rgb(32, 32, 77);
  EXPECT_EQ(clahe(flat, 2.0), flat);

  Scene s = generate_scene(8);
  for (Method m : kAllMethods) {
    AugmentStep step = random_step(m, 5);
    const Scene out = apply_step(s, step);
    EXPECT_EQ(out.image.width, s.image.width);
    EXPECT_EQ(out.image.height, s.image.height);
    if (m != Method::perspective) {
      EXPECT_EQ(out.truths, s.truths) << to_string(m);
    }
  }
  const Scene still = apply_step(s, {Method::perspective, 0.0, 3});
  EXPECT_EQ(still.image, s.image);
  EXPECT_EQ(still.truths, s.truths);
}

TEST(Augment, PointOperations) {
  Image img = Image::rgb(2, 1);
  img.pixels = {0, 100, 200, 128, 255, 10};
  const Image c = adjust_contrast(img, 1.5);
  EXPECT_EQ(c.pixels[0], 0);    // (0-128)*1.5+128 < 0
  EXPECT_EQ(c.pixels[1], 86);   // (100-128)*1.5+128
  EXPECT_EQ(c.pixels[3], 128);
  const Image t = color_temperature(img, 1.25);
  EXPECT_EQ(t.pixels[0], 0);
  EXPECT_EQ(t.pixels[1], 100);
  EXPECT_EQ(t.pixels[2], 160);  // 200 / 1.25
  EXPECT_EQ(t.pixels[3], 160);  // 128 * 1.25
}

TEST(Augment, EdgeKernelAndMaxPool) {
  Image img = Image::gray(3, 3, 10);
  img.at(1, 1, 0) = 20;
  const Image e = edge_enhance(img, 1.0);
  EXPECT_EQ(e.at(1, 1, 0), 60);  // 5 * 20 - 4 * 10
  EXPECT_EQ(e.at(0, 1, 0), 0);   // 5 * 10 - 20 - 10 - 10 - 10 (replicated border) = 0

  Image q = Image::gray(4, 2);
  q.pixels = {1, 2, 3, 4, 5, 6, 7, 8};
  const Image p = max_pool(q, 2);
  EXPECT_EQ(p.pixels, (std::vector<std::uint8_t>{6, 6, 8, 8, 6, 6, 8, 8}));
}

TEST(Augment, BlurKernelAndConstantImage) {
  for (double angle : {0.0, 0.4, 1.3, 2.9}) {
    const auto k = line_kernel(9, angle);
    EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-12);
  }
  const Image flat = Image::rgb(20, 16, 93);
  EXPECT_EQ(motion_blur(flat, 9, 0.8), flat);
}

TEST(Augment, SaltPepperRate) {
  const Image img = Image::rgb(100, 100, 128);
  const Image out = salt_pepper(img, 0.02, 11);
  int changed = 0;
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 100; ++x) {
      const auto v = out.at(x, y, 0);
      if (v != 128) {
        ++changed;
        EXPECT_TRUE(v == 0 || v == 255);
        EXPECT_EQ(out.at(x, y, 1), v);
      }
    }
  EXPECT_GT(changed, 120);
  EXPECT_LT(changed, 290);
}

TEST(Augment, ClaheClipStructure) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    std::array<double, 256> hist{};
    const int pixels = 64;
    for (int i = 0; i < pixels; ++i) hist[rng.integer(100, 110)] += 1;
    const double limit = clahe_bin_limit(2.0, pixels);
    const auto r = clip_histogram(hist, limit);
    double before = 0, after = 0;
    for (int b = 0; b < 256; ++b) {
      EXPECT_LE(r.clipped[b], limit);
      before += hist[b];
      after += r.redistributed[b];
    }
    EXPECT_NEAR(before, after, 1e-9);
  }
  EXPECT_EQ(clahe_bin_limit(2.0, 64), 1.0);
  EXPECT_EQ(clahe_bin_limit(2.0, 1024), 8.0);
}

TEST(Augment, PerspectiveBoxMatchesWarpedMask) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const int x1 = rng.integer(4, 30), y1 = rng.integer(4, 30);
    const int x2 = x1 + rng.integer(6, 28), y2 = y1 + rng.integer(6, 28);
    Image mask = Image::gray(64, 64, 0);
    for (int y = y1; y < y2; ++y)
      for (int x = x1; x < x2; ++x) mask.at(x, y, 0) = 255;
    const auto h = perspective_homography(64, 64, 0.05, seed + 100);
    const Image warped = warp_perspective(mask, h, 0);
    int mx1 = 64, my1 = 64, mx2 = -1, my2 = -1;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (warped.at(x, y, 0) >= 128) {
          mx1 = std::min(mx1, x);
          my1 = std::min(my1, y);
          mx2 = std::max(mx2, x + 1);
          my2 = std::max(my2, y + 1);
        }
    Box out;
    ASSERT_TRUE(warp_box(Box::from_corners(x1, y1, x2, y2), h, 64, 64, &out));
    EXPECT_NEAR(out.x1(), mx1, 1.0);
    EXPECT_NEAR(out.y1(), my1, 1.0);
    EXPECT_NEAR(out.x2(), mx2, 1.0);
    EXPECT_NEAR(out.y2(), my2, 1.0);
  }
}

TEST(Augment, PerspectiveDropsBoxesOutsideCanvas) {
  Scene s = generate_scene(3);
  s.truths = {Box::from_corners(-20, -20, -10, -10)};
  s.meta.resize(1);
  AugmentLog log;
  const Scene out = apply_step(s, {Method::perspective, 0.05, 1}, &log);
  EXPECT_TRUE(out.truths.empty());
  EXPECT_EQ(log.entries.size(), 1u);
}

TEST(Augment, ChainSerializeAndReplay) {
  AugmentationChain chain;
  for (Method m : kAllMethods) chain.steps.push_back(random_step(m, 21));
  const auto parsed = AugmentationChain::parse("# header\n\n" + chain.serialize());
  EXPECT_EQ(parsed, chain);
  const Scene s = generate_scene(17);
  const Scene a = augment(s, chain), b = augment(s, parsed);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.truths, b.truths);
  EXPECT_THROW(parse_method("sepia"), InvalidInput);
  EXPECT_THROW(AugmentationChain::parse("contrast oops 3"), InvalidInput);
}

TEST(Letterbox, PadsToMultiple) {
  const Image img = Image::rgb(50, 64, 5);
  const auto lb = letterbox(img, 32);
  EXPECT_EQ(lb.image.width, 64);
  EXPECT_EQ(lb.image.height, 64);
  EXPECT_TRUE(lb.padded);
  EXPECT_EQ(lb.pad_left, 7);
  EXPECT_EQ(lb.image.at(0, 0, 0), 114);
  EXPECT_EQ(lb.image.at(7, 0, 0), 5);
  EXPECT_FALSE(letterbox(Image::rgb(64, 32), 32).padded);
}

TEST(Dataset, GenerateSplitAndExpand) {
  TempDir dir("appledet_dataset");
  GenerateOptions opt;
  opt.counts = split_counts(4, 0.85);
  opt.seed = 3;
  EXPECT_EQ(opt.counts.train, 3);
  EXPECT_EQ(opt.counts.test, 1);
  const auto ds = generate_dataset(dir.path / "src", opt);
  EXPECT_EQ(ds.split(Split::train).size(), 3u);
  const Scene loaded = ds.load(ds.entries()[0]);
  const Scene fresh = generate_scene(mix_seed(3, 0));
  EXPECT_EQ(loaded.image, fresh.image);
  ASSERT_EQ(loaded.truths.size(), fresh.truths.size());
  for (std::size_t i = 0; i < fresh.truths.size(); ++i) EXPECT_NEAR(loaded.truths[i].cx, fresh.truths[i].cx, 1e-4);

  // One source image: the original plus one variant per method.
  write_manifest(dir.path / "src", {ds.entries()[0]});
  const auto report = dataset_expand(Dataset::open(dir.path / "src"), dir.path / "out", 9);
  EXPECT_EQ(report.sources, 1);
  EXPECT_EQ(report.variants, 8);
  EXPECT_EQ(report.originals, 1);
  int images = 0, labels = 0;
  for (const auto& e : fs::directory_iterator(dir.path / "out" / "images")) images += e.is_regular_file();
  for (const auto& e : fs::directory_iterator(dir.path / "out" / "labels")) labels += e.is_regular_file();
  EXPECT_EQ(images, 9);
  EXPECT_EQ(labels, 9);
  EXPECT_EQ(Dataset::open(dir.path / "out").entries().size(), 9u);

  // Stored chains replay bit-identically: "# <stem>" then that variant's steps.
  const auto out = Dataset::open(dir.path / "out");
  std::ifstream chains(dir.path / "out" / "chains" / (ds.entries()[0].stem + ".txt"));
  std::string line, stem;
  int replayed = 0;
  while (std::getline(chains, line)) {
    if (line.rfind("# ", 0) == 0) {
      stem = line.substr(2);
      continue;
    }
    const Scene again = augment(loaded, AugmentationChain::parse(line));
    const Scene stored = out.load({stem, Split::train});
    EXPECT_EQ(stored.image, again.image) << stem;
    EXPECT_EQ(stored.truths.size(), again.truths.size()) << stem;
    ++replayed;
  }
  EXPECT_EQ(replayed, 8);
  EXPECT_THROW(Dataset::open(dir.path / "missing"), InvalidInput);
}
