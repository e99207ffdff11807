#include <doctest.h>

#include <cmath>

#include "strukt/annotations.hpp"
#include "strukt/error.hpp"

using namespace strukt;

namespace {

SegmentTrack simple_track(LabelVocab& vocab) {
    return parse_segments_text("0.0\t10.0\tverse\n10.0\t20.0\tchorus\n20.0\t30.0\tverse\n", 30.0,
                               vocab);
}

}  // namespace

TEST_CASE("parse_segments reads a two-segment TSV") {
    LabelVocab vocab;
    const SegmentTrack track =
        parse_segments_text("0.0\t10.0\tverse\n10.0\t20.0\tchorus\n", 20.0, vocab);
    REQUIRE(track.segments.size() == 2);
    CHECK(vocab.size() == 2);
    CHECK(vocab.name(0) == "verse");
    CHECK(vocab.name(1) == "chorus");
    CHECK(track.segments[0].label == 0);
    CHECK(track.segments[1].label == 1);
    track.validate(vocab.size());
}

TEST_CASE("small gaps snap to the midpoint") {
    LabelVocab vocab;
    const SegmentTrack track =
        parse_segments_text("0.0\t10.0\ta\n10.03\t20.0\tb\n", 20.0, vocab);
    CHECK(track.segments[0].end == doctest::Approx(10.015));
    CHECK(track.segments[1].start == doctest::Approx(10.015));
}

TEST_CASE("parse failures carry line numbers") {
    LabelVocab vocab;
    SUBCASE("overlap beyond tolerance") {
        try {
            parse_segments_text("0.0\t10.0\ta\n9.5\t20.0\tb\n", 20.0, vocab);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line == 2);
        }
    }
    SUBCASE("non-monotonic end") {
        try {
            parse_segments_text("0.0\t10.0\ta\n10.0\t8.0\tb\n", 20.0, vocab);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line == 2);
        }
    }
    SUBCASE("unsupported label characters") {
        CHECK_THROWS_AS(parse_segments_text("0.0\t10.0\tver!se\n", 10.0, vocab), ParseError);
    }
    SUBCASE("labels are lowercased before interning") {
        LabelVocab v;
        parse_segments_text("0.0\t5.0\tVerse\n5.0\t10.0\tVERSE\n", 10.0, v);
        CHECK(v.size() == 1);
        CHECK(v.name(0) == "verse");
    }
}

TEST_CASE("Hamming bump has the exact five-tap shape") {
    LabelVocab vocab;
    const SegmentTrack track = simple_track(vocab);
    // grid 1 fps, ramp 5 s -> M = 5; boundary at t=10 lands on frame 10.
    const ActivationTargets t = targets_from_track(track, {0.0, 30.0}, 1.0, 5.0, vocab.size());
    REQUIRE(t.boundary.size() == 30);
    const double expect[5] = {0.08, 0.54, 1.0, 0.54, 0.08};
    for (int i = 0; i < 5; ++i)
        CHECK(t.boundary[static_cast<std::size_t>(8 + i)] ==
              doctest::Approx(expect[i]).epsilon(1e-12));
    CHECK(t.boundary[7] == 0.0);
    // bump symmetric about its center
    CHECK(t.boundary[9] == doctest::Approx(t.boundary[11]));
    CHECK(t.boundary[8] == doctest::Approx(t.boundary[12]));
}

TEST_CASE("a single-segment track emits no boundary bump") {
    LabelVocab vocab;
    SegmentTrack track;
    track.duration = 20.0;
    track.segments = {{0.0, 20.0, vocab.intern("only")}};
    const ActivationTargets t = targets_from_track(track, {0.0, 20.0}, 2.0, 1.0, vocab.size());
    for (double v : t.boundary) CHECK(v == 0.0);
}

TEST_CASE("one-hot rows switch at round(t * grid_rate)") {
    LabelVocab vocab;
    const SegmentTrack track = simple_track(vocab);
    const double rate = 12.5;
    // window offset 4 s: the verse->chorus boundary sits at window time 6 s.
    const ActivationTargets t = targets_from_track(track, {4.0, 16.0}, rate, 1.0, vocab.size());
    const int switch_frame = static_cast<int>(std::llround(6.0 * rate));
    REQUIRE(static_cast<int>(t.functions.size()) == 200);
    CHECK(t.functions[static_cast<std::size_t>(switch_frame) - 1][0] == 1.0);
    CHECK(t.functions[static_cast<std::size_t>(switch_frame)][1] == 1.0);
    // rows are one-hot on valid frames
    for (std::size_t l = 0; l < t.functions.size(); ++l) {
        double sum = 0.0;
        for (double v : t.functions[l]) sum += v;
        CHECK(sum == (t.valid_mask[l] ? 1.0 : 0.0));
    }
}

TEST_CASE("frames past the song end are masked invalid") {
    LabelVocab vocab;
    const SegmentTrack track = simple_track(vocab);  // 30 s song
    const ActivationTargets t = targets_from_track(track, {20.0, 20.0}, 2.0, 1.0, vocab.size());
    REQUIRE(t.valid_mask.size() == 40);
    for (int l = 0; l < 20; ++l) CHECK(t.valid_mask[static_cast<std::size_t>(l)]);
    for (int l = 20; l < 40; ++l) CHECK(!t.valid_mask[static_cast<std::size_t>(l)]);
    // masked function rows are all-zero
    for (int l = 20; l < 40; ++l)
        for (double v : t.functions[static_cast<std::size_t>(l)]) CHECK(v == 0.0);
}

TEST_CASE("boundary target peaks at exactly 1.0 on the snapped frame") {
    LabelVocab vocab;
    const SegmentTrack track = simple_track(vocab);
    const double rate = 12.5;
    const ActivationTargets t = targets_from_track(track, {0.0, 30.0}, rate, 1.0, vocab.size());
    const int b1 = static_cast<int>(std::llround(10.0 * rate));
    const int b2 = static_cast<int>(std::llround(20.0 * rate));
    CHECK(t.boundary[static_cast<std::size_t>(b1)] == 1.0);
    CHECK(t.boundary[static_cast<std::size_t>(b2)] == 1.0);
}

TEST_CASE("targets are translation-consistent under whole-frame shifts") {
    LabelVocab vocab;
    const SegmentTrack track = simple_track(vocab);
    const double rate = 8.0;
    const int k = 16;  // shift by 2 s = 16 frames
    const ActivationTargets a = targets_from_track(track, {2.0, 20.0}, rate, 1.0, vocab.size());
    const ActivationTargets b =
        targets_from_track(track, {2.0 + k / rate, 20.0}, rate, 1.0, vocab.size());
    const int L = static_cast<int>(a.boundary.size());
    for (int l = 0; l + k < L; ++l) {
        CHECK(a.boundary[static_cast<std::size_t>(l + k)] ==
              doctest::Approx(b.boundary[static_cast<std::size_t>(l)]));
        if (b.valid_mask[static_cast<std::size_t>(l)])
            CHECK(a.functions[static_cast<std::size_t>(l + k)] ==
                  b.functions[static_cast<std::size_t>(l)]);
    }
}

TEST_CASE("overlapping bumps combine by elementwise max") {
    LabelVocab vocab;
    SegmentTrack track;
    track.duration = 10.0;
    track.segments = {{0.0, 4.0, vocab.intern("a")},
                      {4.0, 5.0, vocab.intern("b")},
                      {5.0, 10.0, vocab.intern("a")}};
    // 1 fps with 5 s ramps: bumps at frames 4 and 5 overlap heavily.
    const ActivationTargets t = targets_from_track(track, {0.0, 10.0}, 1.0, 5.0, vocab.size());
    for (double v : t.boundary) CHECK(v <= 1.0);
    CHECK(t.boundary[4] == 1.0);
    CHECK(t.boundary[5] == 1.0);
    CHECK(t.boundary[3] == doctest::Approx(0.54));  // max(0.54, 0.08)
}

TEST_CASE("segment_pairs enumerates a three-segment window") {
    LabelVocab vocab;
    const SegmentTrack track = simple_track(vocab);
    Rng rng(1);
    const WindowSegments ws = segment_pairs(track, {0.0, 30.0}, 64, rng);
    REQUIRE(ws.segments.size() == 3);
    REQUIRE(ws.pairs.size() == 3);
    int n_same = 0;
    for (const auto& p : ws.pairs) {
        const bool same = ws.segments[static_cast<std::size_t>(p.i)].label ==
                          ws.segments[static_cast<std::size_t>(p.j)].label;
        CHECK(p.same_label == same);
        if (p.same_label) ++n_same;
    }
    CHECK(n_same == 1);  // the verse-verse pair
}

TEST_CASE("single-segment window yields no pairs") {
    LabelVocab vocab;
    const SegmentTrack track = simple_track(vocab);
    Rng rng(1);
    CHECK(segment_pairs(track, {2.0, 5.0}, 64, rng).pairs.empty());
}

TEST_CASE("subsampling balances negatives to at most 70%") {
    // 100 segments cycling over 4 labels: plenty of positives and negatives.
    LabelVocab vocab;
    SegmentTrack track;
    const char* names[4] = {"a", "b", "c", "d"};
    double t0 = 0.0;
    for (int i = 0; i < 100; ++i) {
        track.segments.push_back({t0, t0 + 2.0, vocab.intern(names[i % 4])});
        t0 += 2.0;
    }
    track.duration = t0;
    Rng rng(7);
    const WindowSegments ws = segment_pairs(track, {0.0, t0}, 64, rng);
    CHECK(ws.pairs.size() == 64);
    int negatives = 0;
    for (const auto& p : ws.pairs)
        if (!p.same_label) ++negatives;
    CHECK(negatives <= 45);
}

TEST_CASE("segments intersecting the window under one second are dropped") {
    LabelVocab vocab;
    const SegmentTrack track = simple_track(vocab);
    Rng rng(1);
    // Window [9.5, 20.5): verse tail is 0.5 s -> dropped; verse head 0.5 s too.
    const WindowSegments ws = segment_pairs(track, {9.5, 11.0}, 64, rng);
    CHECK(ws.segments.size() == 1);
    CHECK(ws.pairs.empty());
}
