#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <set>

#include "mctseg/dataset.hpp"
#include "mctseg/image.hpp"
#include "mctseg/imageio.hpp"
#include "support.hpp"

using namespace mctseg;
using testing_support::TempDir;

namespace {

DatasetManifest synthetic_manifest(int n) {
    DatasetManifest m;
    for (int i = 0; i < n; ++i) {
        m.entries.push_back({"img" + std::to_string(i), "images/" + std::to_string(i) + ".png",
                             "labels/" + std::to_string(i) + ".png"});
    }
    return m;
}

void expect_throw_containing(const std::function<void()>& fn, const std::string& needle) {
    try {
        fn();
        FAIL() << "expected an exception containing '" << needle << "'";
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
}

} // namespace

TEST(GrayImage, RejectsValuesOutsideUnitInterval) {
    EXPECT_THROW(GrayImage(2, 1, std::vector<double>{0.5, 1.5}), data_error);
    EXPECT_THROW(GrayImage(2, 1, std::vector<double>{-0.1, 0.5}), data_error);
    EXPECT_THROW(GrayImage(1, 1, std::vector<double>{std::nan("")}), data_error);
    EXPECT_THROW(GrayImage(0, 3), data_error);
    EXPECT_NO_THROW(GrayImage(2, 1, std::vector<double>{0.0, 1.0}));
}

TEST(LabelMap, RejectsOutOfRangeLabels) {
    expect_throw_containing([] { LabelMap(2, 1, std::vector<std::uint8_t>{0, 3}); }, "label out of range");
}

TEST(OneHot, EncodesSinglePixels) {
    LabelMap l(2, 1, std::vector<std::uint8_t>{2, 0});
    const auto oh = one_hot_encode(l);
    EXPECT_EQ(oh(0, 0, 0), 0);
    EXPECT_EQ(oh(1, 0, 0), 0);
    EXPECT_EQ(oh(2, 0, 0), 1);
    EXPECT_EQ(oh(0, 0, 1), 1);
    EXPECT_EQ(oh(1, 0, 1), 0);
    EXPECT_EQ(oh(2, 0, 1), 0);
}

TEST(OneHot, DecodesAndRejectsNonOneHot) {
    EXPECT_EQ(one_hot_decode(OneHotMap(1, 1, {0, 1, 0}))(0, 0), 1);
    EXPECT_EQ(one_hot_decode(OneHotMap(1, 1, {1, 0, 0}))(0, 0), 0);
    expect_throw_containing([] { one_hot_decode(OneHotMap(1, 1, {1, 1, 0})); }, "not one-hot");
    expect_throw_containing([] { one_hot_decode(OneHotMap(1, 1, {0, 0, 0})); }, "not one-hot");
}

TEST(OneHot, RoundTripOnRandomMaps) {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const auto l = testing_support::random_labels(16, 16, rng);
        const auto oh = one_hot_encode(l);
        // Channel i is 1 exactly where the label equals i.
        for (int r = 0; r < 16; ++r) {
            for (int c = 0; c < 16; ++c) {
                int sum = 0;
                for (int ch = 0; ch < kNumClasses; ++ch) {
                    EXPECT_EQ(oh(ch, r, c), l(r, c) == ch ? 1 : 0);
                    sum += oh(ch, r, c);
                }
                EXPECT_EQ(sum, 1);
            }
        }
        EXPECT_EQ(one_hot_decode(oh), l);
    }
}

TEST(LoadPair, ScalesByContainerDepth) {
    TempDir dir;
    write_gray8_png(dir / "img8.png", 4, 3, std::vector<std::uint8_t>(12, 255));
    write_gray8_png(dir / "lab.png", 4, 3, std::vector<std::uint8_t>(12, 1));
    const auto p = load_pair(dir / "img8.png", dir / "lab.png");
    EXPECT_EQ(p.image.width(), 4);
    EXPECT_EQ(p.image.height(), 3);
    for (double v : p.image.values()) EXPECT_EQ(v, 1.0);

    // A dark 16-bit image keeps its absolute level rather than being stretched.
    write_gray16_png(dir / "img16.png", 4, 3, std::vector<std::uint16_t>(12, 6553));
    const auto q = load_pair(dir / "img16.png", dir / "lab.png");
    for (double v : q.image.values()) EXPECT_DOUBLE_EQ(v, 6553.0 / 65535.0);
}

TEST(LoadPair, ReadsPgm) {
    TempDir dir;
    std::vector<std::uint8_t> px(64 * 64);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i % 256);
    write_pgm(dir / "img.pgm", 64, 64, px);
    write_gray8_png(dir / "lab.png", 64, 64, std::vector<std::uint8_t>(64 * 64, 2));
    const auto p = load_pair(dir / "img.pgm", dir / "lab.png");
    EXPECT_EQ(p.image.width(), 64);
    EXPECT_EQ(p.labels.height(), 64);
    EXPECT_DOUBLE_EQ(p.image(0, 255 % 64), 63.0 / 255.0);
    EXPECT_EQ(p.labels.counts()[2], 64u * 64u);
}

TEST(LoadPair, ReportsErrorsWithPaths) {
    TempDir dir;
    write_gray8_png(dir / "img.png", 4, 4, std::vector<std::uint8_t>(16, 10));
    write_gray8_png(dir / "small.png", 3, 4, std::vector<std::uint8_t>(12, 0));
    auto bad = std::vector<std::uint8_t>(16, 0);
    bad[5] = 3;
    write_gray8_png(dir / "bad.png", 4, 4, bad);
    expect_throw_containing([&] { load_pair(dir / "img.png", dir / "small.png"); }, "small.png");
    expect_throw_containing([&] { load_pair(dir / "img.png", dir / "bad.png"); }, "label out of range");
    expect_throw_containing([&] { load_pair(dir / "img.png", dir / "bad.png"); }, "bad.png");
    expect_throw_containing([&] { load_pair(dir / "missing.png", dir / "bad.png"); }, "missing.png");
}

TEST(LoadPair, Idempotent) {
    TempDir dir;
    Rng rng(5);
    const auto img = testing_support::random_image(16, 8, rng);
    write_gray16_png(dir / "img.png", 16, 8, quantize16(img));
    write_gray8_png(dir / "lab.png", 16, 8, testing_support::random_labels(16, 8, rng).values());
    const auto a = load_pair(dir / "img.png", dir / "lab.png");
    const auto b = load_pair(dir / "img.png", dir / "lab.png");
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.labels, b.labels);
}

TEST(Manifest, RoundTripsWithRelativePaths) {
    TempDir dir;
    DatasetManifest m;
    m.tag = SplitTag::test;
    m.entries.push_back({"a", dir / "images" / "a.png", dir / "labels" / "a.png"});
    m.entries.push_back({"b", dir / "images" / "b.png", dir / "labels" / "b.png"});
    write_manifest(dir / "manifest.tsv", m);
    const auto text = testing_support::read_text(dir / "manifest.tsv");
    EXPECT_NE(text.find("a\timages/a.png\tlabels/a.png"), std::string::npos);
    const auto back = read_manifest(dir / "manifest.tsv");
    EXPECT_EQ(back.tag, SplitTag::test);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.entries[1].id, "b");
    EXPECT_EQ(std::filesystem::weakly_canonical(back.entries[1].image),
              std::filesystem::weakly_canonical(dir / "images" / "b.png"));
}

TEST(Manifest, RejectsDuplicateIds) {
    DatasetManifest m;
    m.entries.push_back({"x", "a", "b"});
    m.entries.push_back({"x", "c", "d"});
    EXPECT_THROW(m.validate(), data_error);
}

TEST(Splits, TwentyThirteen) {
    const auto m = synthetic_manifest(33);
    const auto [train, test] = make_splits(m, 20, 7);
    EXPECT_EQ(train.size(), 20u);
    EXPECT_EQ(test.size(), 13u);
    EXPECT_EQ(train.tag, SplitTag::train);
    EXPECT_EQ(test.tag, SplitTag::test);
    const auto [train10, test23] = make_splits(m, 10, 7);
    EXPECT_EQ(train10.size(), 10u);
    EXPECT_EQ(test23.size(), 23u);
}

TEST(Splits, PartitionForManySeeds) {
    const auto m = synthetic_manifest(33);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto [train, test] = make_splits(m, 20, seed);
        std::set<std::string> ids;
        for (const auto& e : train.entries) ids.insert(e.id);
        for (const auto& e : test.entries) EXPECT_TRUE(ids.insert(e.id).second) << "overlap at seed " << seed;
        EXPECT_EQ(ids.size(), 33u);
    }
}

TEST(Splits, DeterministicAndSeedSensitive) {
    const auto m = synthetic_manifest(33);
    EXPECT_EQ(make_splits(m, 20, 3), make_splits(m, 20, 3));
    EXPECT_NE(make_splits(m, 20, 3).first, make_splits(m, 20, 4).first);
}

TEST(Splits, RejectsTrainCountAtLeastTotal) {
    const auto m = synthetic_manifest(5);
    EXPECT_THROW(make_splits(m, 5, 1), config_error);
    EXPECT_THROW(make_splits(m, 6, 1), config_error);
}

TEST(Splits, SubsampleKeepsTestSetFixed) {
    const auto m = synthetic_manifest(33);
    const auto [train, test] = make_splits(m, 20, 11);
    const auto reduced = subsample_train(train, 10, 11);
    EXPECT_EQ(reduced.size(), 10u);
    for (const auto& e : reduced.entries) {
        EXPECT_NE(std::find(train.entries.begin(), train.entries.end(), e), train.entries.end());
    }
    EXPECT_EQ(subsample_train(train, 20, 11), train);
}
