#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "strukt/harness.hpp"
#include "strukt/trainer.hpp"

#include "oracles.hpp"

using namespace strukt;

namespace {

// Small, fast corpus: 8 kHz audio, short songs, three labels.
struct MicroSetup {
    LabelVocab vocab;
    Corpus songs;
    FrontendConfig frontend;
    EncoderConfig encoder;
    TrainConfig train_cfg;
};

MicroSetup micro_setup(int n_songs = 3, std::uint64_t seed = 5) {
    MicroSetup s;
    s.frontend.sample_rate = 8000;
    s.frontend.n_fft = 512;
    s.frontend.base_hop = 120;
    s.frontend.n_mels = 24;

    s.encoder.d_model = 16;
    s.encoder.n_backbone_blocks = 1;
    s.encoder.n_head_blocks = 1;
    s.encoder.n_heads = 2;
    s.encoder.conv_kernel = 3;
    s.encoder.stem_stride = 4;
    s.encoder.proj_dim = 4;
    s.encoder.n_mels = s.frontend.n_mels;

    CorpusParams params;
    params.n_labels = 3;
    params.sample_rate = 8000;
    params.min_section_s = 4.0;
    params.max_section_s = 7.0;
    for (int i = 0; i < n_songs; ++i) {
        const SongSpec spec = make_song_spec(seed, i, params);
        auto [clip, track] = synthesize_song(spec, s.vocab);
        s.songs.push_back({"song_" + std::to_string(i), std::move(clip), std::move(track)});
    }

    s.train_cfg.window_T = 6.0;
    s.train_cfg.ratio_N = 1;
    s.train_cfg.batch_size = 2;
    s.train_cfg.total_steps = 6;
    s.train_cfg.eval_every = 0;
    s.train_cfg.seed = 99;
    s.train_cfg.threads = 1;
    return s;
}

}  // namespace

TEST_CASE("adam matches a straight-line scalar trace to 1e-12") {
    AdamState adam(1);
    oracle::ScalarAdamTrace trace;
    std::vector<double> p = {1.7};
    double p_oracle = 1.7;
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
        const double g = rng.uniform(-2.0, 2.0);
        const double lr = 0.05 * std::pow(0.9, t);
        adam.step(p, std::vector<double>{g}, lr);
        trace.update(p_oracle, g, lr);
        CHECK(p[0] == doctest::Approx(p_oracle).epsilon(1e-12));
    }
}

TEST_CASE("learning rate schedule: step 1000 with defaults") {
    TrainConfig cfg;
    cfg.lr0 = 1e-3;
    cfg.lr_decay_gamma = 0.99;
    cfg.lr_decay_every = 500;
    CHECK(cfg.lr_at(0) == doctest::Approx(1e-3));
    CHECK(cfg.lr_at(499) == doctest::Approx(1e-3));
    CHECK(cfg.lr_at(500) == doctest::Approx(1e-3 * 0.99));
    CHECK(cfg.lr_at(1000) == doctest::Approx(9.801e-4).epsilon(1e-12));
}

TEST_CASE("two identically seeded runs produce identical parameters") {
    MicroSetup a = micro_setup();
    MicroSetup b = micro_setup();
    const TrainResult ra =
        train(a.songs, {}, a.encoder, a.frontend, a.train_cfg, a.vocab, nullptr);
    const TrainResult rb =
        train(b.songs, {}, b.encoder, b.frontend, b.train_cfg, b.vocab, nullptr);
    CHECK(ra.model.params == rb.model.params);  // bit-identical
}

TEST_CASE("parallel batch mode reproduces sequential results bit-exactly") {
    MicroSetup a = micro_setup();
    MicroSetup b = micro_setup();
    b.train_cfg.threads = 2;
    const TrainResult ra =
        train(a.songs, {}, a.encoder, a.frontend, a.train_cfg, a.vocab, nullptr);
    const TrainResult rb =
        train(b.songs, {}, b.encoder, b.frontend, b.train_cfg, b.vocab, nullptr);
    CHECK(ra.model.params == rb.model.params);
}

TEST_CASE("the optimizer touches every parameter") {
    MicroSetup s = micro_setup();
    // Long windows cover a-b-a section patterns, so same-label pairs exist
    // and the contrastive path reaches the projection head.
    s.train_cfg.window_T = 16.0;
    s.train_cfg.batch_size = 4;
    s.train_cfg.total_steps = 10;
    Encoder reference(
        [&] {
            EncoderConfig c = s.encoder;
            c.n_classes = s.vocab.size();
            c.n_mels = s.frontend.n_mels;
            return c;
        }(),
        Rng(s.train_cfg.seed).fork(0x1417).next_u64());
    const TrainResult r = train(s.songs, {}, s.encoder, s.frontend, s.train_cfg, s.vocab, nullptr);
    REQUIRE(r.model.params.size() == reference.params().total());
    std::size_t unchanged = 0;
    for (std::size_t i = 0; i < r.model.params.size(); ++i)
        if (r.model.params[i] == reference.params().values()[i]) ++unchanged;
    CHECK(unchanged == 0);
}

TEST_CASE("model files round-trip bit-exactly") {
    MicroSetup s = micro_setup();
    const TrainResult r = train(s.songs, {}, s.encoder, s.frontend, s.train_cfg, s.vocab, nullptr);

    namespace fs = std::filesystem;
    const std::string p1 = (fs::temp_directory_path() / "strukt_model_a.stkm").string();
    const std::string p2 = (fs::temp_directory_path() / "strukt_model_b.stkm").string();
    save_model(p1, r.model);
    const ModelBundle loaded = load_model(p1);
    CHECK(loaded.params == r.model.params);
    CHECK(loaded.vocabulary == r.model.vocabulary);
    CHECK(loaded.mel_mean == r.model.mel_mean);
    CHECK(loaded.mel_std == r.model.mel_std);
    save_model(p2, loaded);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("full-song inference grid matches the target grid") {
    MicroSetup s = micro_setup();
    const TrainResult r = train(s.songs, {}, s.encoder, s.frontend, s.train_cfg, s.vocab, nullptr);
    const Song& song = s.songs[0];
    const Inference inf = infer_full_song(r.model, song.clip);

    const int frames = frame_count(song.clip.samples.size(), s.frontend.effective_hop());
    const int l_expected = Encoder::output_length(frames, s.encoder.stem_stride);
    CHECK(static_cast<int>(inf.boundary.size()) == l_expected);
    CHECK(inf.function_logits.rows == l_expected);
    CHECK(inf.function_logits.cols == s.vocab.size());
    CHECK(inf.grid_rate == doctest::Approx(s.frontend.frame_rate() / s.encoder.stem_stride));

    // targets built for the same (duration, N) share the grid
    const ActivationTargets t = targets_from_track(
        song.track, {0.0, song.clip.duration()}, inf.grid_rate, 1.0, s.vocab.size(), l_expected);
    CHECK(static_cast<int>(t.boundary.size()) == static_cast<int>(inf.boundary.size()));

    // boundary outputs are activations in (0, 1)
    for (double v : inf.boundary) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("inference rejects a mismatched sample rate") {
    MicroSetup s = micro_setup();
    const TrainResult r = train(s.songs, {}, s.encoder, s.frontend, s.train_cfg, s.vocab, nullptr);
    AudioClip wrong = s.songs[0].clip;
    wrong.sample_rate = 44100;
    CHECK_THROWS_AS(infer_full_song(r.model, wrong), InputError);
}

TEST_CASE("training logs one JSON line per step with all components") {
    MicroSetup s = micro_setup();
    s.train_cfg.total_steps = 4;
    std::ostringstream log;
    train(s.songs, {}, s.encoder, s.frontend, s.train_cfg, s.vocab, &log);
    std::istringstream lines(log.str());
    std::string line;
    int count = 0;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        CHECK(line.find("\"combined\"") != std::string::npos);
        CHECK(line.find("\"boundary_wbce\"") != std::string::npos);
        CHECK(line.find("\"function_wbce\"") != std::string::npos);
        CHECK(line.find("\"contrastive\"") != std::string::npos);
        CHECK(line.find("\"pair_count\"") != std::string::npos);
        ++count;
    }
    CHECK(count == 4);
}

TEST_CASE("class weights are inverse-frequency, mean one, capped") {
    MicroSetup s = micro_setup(6);
    const auto w = class_weights(s.songs, s.vocab.size());
    REQUIRE(static_cast<int>(w.size()) == s.vocab.size());
    for (double x : w) {
        CHECK(x > 0.0);
        CHECK(x <= 10.0);
    }
}

TEST_CASE("mel statistics standardize the training corpus") {
    MicroSetup s = micro_setup();
    const MelStats stats = compute_mel_stats(s.songs, s.frontend);
    REQUIRE(static_cast<int>(stats.mean.size()) == s.frontend.n_mels);
    // re-standardizing the corpus gives near-zero mean per band
    std::vector<double> sum(static_cast<std::size_t>(s.frontend.n_mels), 0.0);
    long long frames = 0;
    for (const auto& song : s.songs) {
        const MelGram mel = melgram(song.clip, s.frontend);
        const Tensor t = standardized_mel_tensor(mel, stats.mean, stats.std_dev);
        for (int f = 0; f < t.rows; ++f)
            for (int m = 0; m < t.cols; ++m) sum[static_cast<std::size_t>(m)] += t.at(f, m);
        frames += t.rows;
    }
    for (double x : sum) CHECK(std::abs(x / static_cast<double>(frames)) < 1e-9);
}
