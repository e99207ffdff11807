#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "strukt/harness.hpp"

using namespace strukt;

namespace {

FrontendConfig micro_frontend() {
    FrontendConfig fe;
    fe.sample_rate = 8000;
    fe.n_fft = 512;
    fe.base_hop = 120;
    fe.n_mels = 24;
    return fe;
}

EncoderConfig micro_encoder() {
    EncoderConfig enc;
    enc.d_model = 16;
    enc.n_backbone_blocks = 1;
    enc.n_head_blocks = 1;
    enc.n_heads = 2;
    enc.conv_kernel = 3;
    enc.stem_stride = 4;
    enc.proj_dim = 4;
    enc.n_classes = 3;
    enc.n_mels = 24;
    return enc;
}

Corpus micro_corpus(LabelVocab& vocab, int n_songs) {
    CorpusParams params;
    params.n_labels = 3;
    params.sample_rate = 8000;
    params.min_section_s = 4.0;
    params.max_section_s = 7.0;
    Corpus corpus;
    for (int i = 0; i < n_songs; ++i) {
        const SongSpec spec = make_song_spec(31, i, params);
        auto [clip, track] = synthesize_song(spec, vocab);
        corpus.push_back({"song_" + std::to_string(i), std::move(clip), std::move(track)});
    }
    return corpus;
}

}  // namespace

TEST_CASE("corpus splits are deterministic and disjoint") {
    LabelVocab vocab;
    const Corpus corpus = micro_corpus(vocab, 10);
    const CorpusSplit a = split_corpus(corpus, 7);
    const CorpusSplit b = split_corpus(corpus, 7);
    CHECK(a.train.size() == b.train.size());
    CHECK(a.train.size() + a.val.size() + a.test.size() == corpus.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].id == b.train[i].id);
    for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i].id == b.test[i].id);
    CHECK(!a.val.empty());
    CHECK(!a.test.empty());

    const CorpusSplit c = split_corpus(corpus, 8);
    bool any_difference = c.train.size() != a.train.size();
    for (std::size_t i = 0; !any_difference && i < a.train.size(); ++i)
        any_difference = a.train[i].id != c.train[i].id;
    CHECK(any_difference);
}

TEST_CASE("equal-cost diagonal: matched sequence lengths give identical counts") {
    const FrontendConfig fe = micro_frontend();
    const EncoderConfig enc = micro_encoder();
    // frames(4 s, hop 120) = ceil(32000/120) = 267 = frames(8 s, hop 240)
    const CostRow a = profile_cost(4.0, 1, fe, enc, 1, 2, 1);
    const CostRow b = profile_cost(8.0, 2, fe, enc, 1, 2, 1);
    CHECK(a.seq_len == b.seq_len);
    CHECK(a.analytic_flops == b.analytic_flops);
    CHECK(a.analytic_activation_floats == b.analytic_activation_floats);
    CHECK(a.attn_activation_floats == b.attn_activation_floats);
    CHECK(a.peak_param_floats == b.peak_param_floats);
}

TEST_CASE("attention activations quadruple exactly when the grid doubles") {
    const FrontendConfig fe = micro_frontend();
    const EncoderConfig enc = micro_encoder();
    // frames: 3.84 s -> 256 -> L' 64; 7.68 s -> 512 -> L' 128
    const CostRow a = profile_cost(3.84, 1, fe, enc, 1, 2, 1);
    const CostRow b = profile_cost(7.68, 1, fe, enc, 1, 2, 1);
    REQUIRE(b.seq_len == 2 * a.seq_len);
    CHECK(b.attn_activation_floats == 4.0 * a.attn_activation_floats);
    // analytic log-log slope of the quadratic term is exactly 2
    const double slope = std::log2(b.attn_activation_floats / a.attn_activation_floats) /
                         std::log2(static_cast<double>(b.seq_len) / a.seq_len);
    CHECK(slope == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("ratio N has no effect on activation floats at matched L'") {
    const FrontendConfig fe = micro_frontend();
    const EncoderConfig enc = micro_encoder();
    const CostRow n1 = profile_cost(3.84, 1, fe, enc, 1, 2, 1);
    const CostRow n4 = profile_cost(15.36, 4, fe, enc, 1, 2, 1);
    REQUIRE(n1.seq_len == n4.seq_len);
    CHECK(n1.analytic_activation_floats == n4.analytic_activation_floats);
}

TEST_CASE("ablation grid: every cell appears exactly once, deterministically") {
    LabelVocab vocab;
    const Corpus corpus = micro_corpus(vocab, 6);

    AblationSpec spec;
    spec.T_values = {4.0, 6.0};
    spec.N_values = {1, 2};
    spec.cl_enabled = {true};
    spec.repeats = 1;
    spec.frontend = micro_frontend();
    spec.encoder = micro_encoder();
    spec.base.batch_size = 2;
    spec.base.total_steps = 3;
    spec.base.eval_every = 0;
    spec.base.seed = 21;
    spec.base.threads = 1;

    const auto rows = run_ablation(spec, corpus, vocab, nullptr);
    REQUIRE(rows.size() == 4);
    for (const auto& row : rows) {
        CHECK(row.ok);
        CHECK(row.acc >= 0.0);
        CHECK(row.acc <= 1.0);
    }

    // identical spec + seed: identical metric columns (times may differ)
    const auto rows2 = run_ablation(spec, corpus, vocab, nullptr);
    REQUIRE(rows2.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].acc == rows2[i].acc);
        CHECK(rows[i].hr05f == rows2[i].hr05f);
        CHECK(rows[i].hr3f == rows2[i].hr3f);
    }

    // CSV mirror holds one line per cell plus the header
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "strukt_grid.csv").string();
    write_ablation_csv(path, rows);
    std::ifstream in(path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 5);
}

TEST_CASE("a failing cell is recorded and the grid continues") {
    LabelVocab vocab;
    const Corpus corpus = micro_corpus(vocab, 6);
    AblationSpec spec;
    spec.T_values = {4.0};
    spec.N_values = {1};
    spec.cl_enabled = {true};
    spec.frontend = micro_frontend();
    spec.encoder = micro_encoder();
    spec.base.batch_size = 2;
    spec.base.total_steps = 3;
    spec.base.eval_every = 0;
    spec.base.seed = 21;
    spec.base.lr0 = std::nan("");  // poison the cell
    const auto rows = run_ablation(spec, corpus, vocab, nullptr);
    REQUIRE(rows.size() == 1);
    CHECK(!rows[0].ok);
    CHECK(!rows[0].error.empty());
}
