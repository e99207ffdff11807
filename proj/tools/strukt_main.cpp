// strukt: music structure analysis toolkit.
// Subcommands: synth, melgram, train, segment, score, ablate, profile.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "strukt/harness.hpp"
#include "strukt/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace strukt;

namespace {

std::string song_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "song_%03d", index);
    return buf;
}

json song_spec_to_json(const SongSpec& spec) {
    json plan = json::array();
    for (const auto& [label, dur] : spec.section_plan)
        plan.push_back({{"label", label}, {"duration", dur}});
    json timbres = json::array();
    for (const auto& [label, t] : spec.timbre_map)
        timbres.push_back({{"label", label},
                           {"fundamental_hz", t.fundamental_hz},
                           {"harmonic_amps", t.harmonic_amps},
                           {"noise_level", t.noise_level}});
    return json{{"seed", spec.seed},
                {"sample_rate", spec.sample_rate},
                {"section_plan", plan},
                {"timbre_map", timbres}};
}

int run_synth(const std::string& out_dir, int n_songs, std::uint64_t seed, CorpusParams params) {
    fs::create_directories(out_dir);
    LabelVocab vocab;
    json manifest = json::array();
    for (int i = 0; i < n_songs; ++i) {
        const SongSpec spec = make_song_spec(seed, i, params);
        auto [clip, track] = synthesize_song(spec, vocab);
        const std::string stem = (fs::path(out_dir) / song_name(i)).string();
        save_wav(stem + ".wav", clip);
        write_segments(stem + ".tsv", track, vocab);
        manifest.push_back(song_spec_to_json(spec));
    }
    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    write_vocabulary((fs::path(out_dir) / "vocabulary.txt").string(), vocab.names());
    std::printf("wrote %d songs to %s\n", n_songs, out_dir.c_str());
    return 0;
}

int run_melgram(const std::string& in_wav, const std::string& out_path, FrontendConfig cfg) {
    const AudioClip clip = load_wav(in_wav);
    if (clip.sample_rate != cfg.sample_rate)
        throw InputError("sample rate " + std::to_string(clip.sample_rate) + " does not match " +
                         std::to_string(cfg.sample_rate) + " (resampling is out of scope)");
    const MelGram mel = melgram(clip, cfg);
    write_melg(out_path, mel);
    std::printf("%s: %d frames x %d bands at %.4f fps -> %s\n", in_wav.c_str(), mel.frames,
                mel.bands, mel.frame_rate, out_path.c_str());
    return 0;
}

void apply_config_file(const std::string& path, TrainConfig& cfg, EncoderConfig& enc,
                       FrontendConfig& fe) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file: " + path);
    json j;
    in >> j;
    auto set_d = [&](const char* key, double& out) {
        if (j.contains(key)) out = j[key];
    };
    auto set_i = [&](const char* key, int& out) {
        if (j.contains(key)) out = j[key];
    };
    set_d("T", cfg.window_T);
    set_i("N", cfg.ratio_N);
    set_i("batch_size", cfg.batch_size);
    set_i("steps", cfg.total_steps);
    set_d("lr0", cfg.lr0);
    set_d("lr_decay_gamma", cfg.lr_decay_gamma);
    set_i("lr_decay_every", cfg.lr_decay_every);
    set_i("eval_every", cfg.eval_every);
    set_i("max_pairs", cfg.max_pairs);
    set_i("threads", cfg.threads);
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("contrastive")) cfg.contrastive_enabled = j["contrastive"].get<bool>();
    if (j.contains("loss")) {
        const json& l = j["loss"];
        auto set_l = [&](const char* key, double& out) {
            if (l.contains(key)) out = l[key];
        };
        set_l("alpha", cfg.loss.alpha);
        set_l("beta", cfg.loss.beta);
        set_l("gamma", cfg.loss.gamma);
        set_l("margin", cfg.loss.margin);
        set_l("focal_gamma", cfg.loss.focal_gamma);
        set_l("focal_alpha", cfg.loss.focal_alpha);
        set_l("smooth_l1_beta", cfg.loss.smooth_l1_beta);
    }
    set_i("d_model", enc.d_model);
    set_i("backbone_blocks", enc.n_backbone_blocks);
    set_i("head_blocks", enc.n_head_blocks);
    set_i("heads", enc.n_heads);
    set_i("ff_mult", enc.ff_mult);
    set_i("conv_kernel", enc.conv_kernel);
    set_i("stem_stride", enc.stem_stride);
    set_i("proj_dim", enc.proj_dim);
    set_i("n_fft", fe.n_fft);
    set_i("n_mels", fe.n_mels);
    set_i("base_hop", fe.base_hop);
    set_i("sample_rate", fe.sample_rate);
}

int run_train(const std::string& corpus_dir, const std::string& out_model,
              const std::string& log_path, double val_frac, TrainConfig cfg, EncoderConfig enc,
              FrontendConfig fe) {
    tune_allocator_for_training();
    LabelVocab vocab;
    const Corpus corpus = load_corpus(corpus_dir, vocab);

    // Deterministic train/val split for checkpoint selection.
    Corpus train_songs, val_songs;
    if (corpus.size() >= 3 && val_frac > 0.0) {
        const CorpusSplit split = split_corpus(corpus, cfg.seed, 1.0 - val_frac - 1e-9, val_frac);
        train_songs = split.train;
        val_songs = split.val;
        for (const auto& song : split.test) train_songs.push_back(song);
    } else {
        train_songs = corpus;
    }
    std::printf("corpus: %zu songs (%zu train, %zu val), %d labels\n", corpus.size(),
                train_songs.size(), val_songs.size(), vocab.size());

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path);
        if (!log) throw InputError("cannot open log file: " + log_path);
    }
    const TrainResult result =
        train(train_songs, val_songs, enc, fe, cfg, vocab, log.is_open() ? &log : nullptr);
    if (!result.abort_reason.empty())
        std::fprintf(stderr, "training aborted: %s (best checkpoint retained)\n",
                     result.abort_reason.c_str());
    save_model(out_model, result.model);
    std::printf("model -> %s (best step %d, val ACC %.4f, %.3fs/step)\n", out_model.c_str(),
                result.best_step, result.best_val_acc, result.median_step_seconds);
    return result.abort_reason.empty() ? 0 : 1;
}

int run_segment(const std::string& in_wav, const std::string& model_path,
                const std::string& out_tsv, const std::string& act_out,
                const PeakPickConfig& peak) {
    const ModelBundle bundle = load_model(model_path);
    const AudioClip clip = load_wav(in_wav);
    const Inference inf = infer_full_song(bundle, clip);

    const std::vector<double> boundaries = peak_pick(inf.boundary, inf.grid_rate, peak);
    const SegmentTrack track =
        reconstruct_track(boundaries, inf.function_logits, inf.grid_rate, clip.duration());
    const LabelVocab vocab = bundle.vocab();
    write_segments(out_tsv, track, vocab);
    if (!act_out.empty()) {
        // dump sigmoid function scores next to the boundary activation
        Tensor scores(inf.function_logits.rows, inf.function_logits.cols);
        for (std::size_t i = 0; i < scores.size(); ++i)
            scores.data[i] = 1.0 / (1.0 + std::exp(-inf.function_logits.data[i]));
        write_activations(act_out, inf.boundary, scores, inf.grid_rate);
    }
    std::printf("%s: %zu segments -> %s\n", in_wav.c_str(), track.segments.size(), out_tsv.c_str());
    return 0;
}

SegmentTrack parse_track_file(const std::string& path, LabelVocab& vocab) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open annotation file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    // Track duration is the last segment end.
    double duration = 0.0;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos) continue;
        try {
            duration = std::max(duration, std::stod(line.substr(tab1 + 1, tab2 - tab1 - 1)));
        } catch (const std::exception&) {
        }
    }
    return parse_segments_text(text, duration, vocab);
}

int run_score(const std::string& ref_dir, const std::string& est_dir, const std::string& out_json) {
    constexpr double kGridFps = 100.0;
    LabelVocab vocab;
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(ref_dir))
        if (entry.path().extension() == ".tsv") stems.push_back(entry.path().stem().string());
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw InputError("no .tsv annotations in " + ref_dir);

    json songs = json::array();
    double acc_sum = 0;
    HitRate hr05_sum, hr3_sum;
    int n_scored = 0;
    std::string csv = "song_id,acc,hr05_p,hr05_r,hr05_f,hr3_p,hr3_r,hr3_f\n";
    for (const auto& stem : stems) {
        const std::string est_path = (fs::path(est_dir) / (stem + ".tsv")).string();
        if (!fs::exists(est_path)) {
            std::fprintf(stderr, "warning: no estimate for %s, skipping\n", stem.c_str());
            continue;
        }
        const SegmentTrack ref =
            parse_track_file((fs::path(ref_dir) / (stem + ".tsv")).string(), vocab);
        const SegmentTrack est = parse_track_file(est_path, vocab);

        const int L = static_cast<int>(std::llround(ref.duration * kGridFps));
        const std::vector<int> ref_labels = track_frame_labels(ref, kGridFps, L);
        const std::vector<int> est_labels = track_frame_labels(est, kGridFps, L);
        std::vector<bool> mask(static_cast<std::size_t>(L));
        for (int l = 0; l < L; ++l)
            mask[static_cast<std::size_t>(l)] = ref_labels[static_cast<std::size_t>(l)] >= 0 &&
                                                est_labels[static_cast<std::size_t>(l)] >= 0;
        const double acc = frame_accuracy(est_labels, ref_labels, mask);
        const HitRate hr05 = hit_rate_f(ref.interior_boundaries(), est.interior_boundaries(), 0.5);
        const HitRate hr3 = hit_rate_f(ref.interior_boundaries(), est.interior_boundaries(), 3.0);

        songs.push_back({{"song_id", stem},
                         {"acc", acc},
                         {"hr05", {{"p", hr05.precision}, {"r", hr05.recall}, {"f", hr05.f}}},
                         {"hr3", {{"p", hr3.precision}, {"r", hr3.recall}, {"f", hr3.f}}}});
        char row[256];
        std::snprintf(row, sizeof(row), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", stem.c_str(),
                      acc, hr05.precision, hr05.recall, hr05.f, hr3.precision, hr3.recall, hr3.f);
        csv += row;
        acc_sum += acc;
        hr05_sum.precision += hr05.precision;
        hr05_sum.recall += hr05.recall;
        hr05_sum.f += hr05.f;
        hr3_sum.precision += hr3.precision;
        hr3_sum.recall += hr3.recall;
        hr3_sum.f += hr3.f;
        ++n_scored;
    }
    if (n_scored == 0) throw InputError("no matching ref/est pairs");

    const double n = n_scored;
    json report{{"songs", songs},
                {"corpus",
                 {{"acc", acc_sum / n},
                  {"hr05_f", hr05_sum.f / n},
                  {"hr3_f", hr3_sum.f / n},
                  {"n_songs", n_scored}}}};
    std::ofstream jf(out_json);
    jf << report.dump(2) << "\n";
    const std::string csv_path = fs::path(out_json).replace_extension(".csv").string();
    std::ofstream cf(csv_path);
    cf << csv;
    std::printf("scored %d songs: ACC %.4f HR.5F %.4f HR3F %.4f -> %s\n", n_scored, acc_sum / n,
                hr05_sum.f / n, hr3_sum.f / n, out_json.c_str());
    return 0;
}

int run_ablate_cmd(const std::string& spec_path, const std::string& out_csv,
                   const std::string& corpus_override) {
    tune_allocator_for_training();
    std::ifstream in(spec_path);
    if (!in) throw InputError("cannot open ablation spec: " + spec_path);
    json j;
    in >> j;

    AblationSpec spec;
    spec.T_values = j.at("T_values").get<std::vector<double>>();
    spec.N_values = j.at("N_values").get<std::vector<int>>();
    if (j.contains("cl_enabled")) spec.cl_enabled = j["cl_enabled"].get<std::vector<bool>>();
    spec.repeats = j.value("repeats", 1);
    apply_config_file(spec_path, spec.base, spec.encoder, spec.frontend);

    const std::string corpus_dir =
        !corpus_override.empty() ? corpus_override : j.at("corpus").get<std::string>();
    LabelVocab vocab;
    const Corpus corpus = load_corpus(corpus_dir, vocab);
    const auto rows = run_ablation(spec, corpus, vocab, &std::cerr);
    write_ablation_csv(out_csv, rows);
    std::printf("%zu grid cells -> %s\n", rows.size(), out_csv.c_str());
    return 0;
}

int run_profile(const std::vector<double>& T_values, const std::vector<int>& N_values, int batch,
                int steps, int warmup, const std::string& out_csv, EncoderConfig enc,
                FrontendConfig fe) {
    tune_allocator_for_training();
    std::vector<CostRow> rows;
    for (double T : T_values)
        for (int N : N_values) {
            const CostRow row = profile_cost(T, N, fe, enc, batch, steps, warmup);
            std::printf("T=%.1fs N=%d L'=%d time/batch=%.4fs flops=%.3e act=%.3e attn=%.3e\n",
                        row.T, row.N, row.seq_len, row.time_per_batch, row.analytic_flops,
                        row.analytic_activation_floats, row.attn_activation_floats);
            rows.push_back(row);
        }
    if (!out_csv.empty()) write_cost_csv(out_csv, rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"strukt: temporal-adaptation music structure analysis"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "generate a synthetic structured-song corpus");
    std::string synth_out;
    int n_songs = 40;
    std::uint64_t synth_seed = 0;
    CorpusParams corpus_params;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--n-songs", n_songs, "number of songs");
    synth->add_option("--seed", synth_seed, "corpus seed");
    synth->add_option("--labels", corpus_params.n_labels, "number of section labels");
    synth->add_option("--min-sections", corpus_params.min_sections, "minimum sections per song");
    synth->add_option("--max-sections", corpus_params.max_sections, "maximum sections per song");
    synth->add_option("--min-section-s", corpus_params.min_section_s, "minimum section seconds");
    synth->add_option("--max-section-s", corpus_params.max_section_s, "maximum section seconds");
    synth->add_option("--sr", corpus_params.sample_rate, "sample rate");

    auto* mel = app.add_subcommand("melgram", "extract a mel spectrogram dump");
    std::string mel_in, mel_out;
    FrontendConfig mel_cfg;
    mel->add_option("input", mel_in, "input WAV")->required();
    mel->add_option("--out", mel_out, "output .melg path")->required();
    mel->add_option("--ratio", mel_cfg.ratio_N, "down-sampling ratio N");
    mel->add_option("--n-fft", mel_cfg.n_fft, "FFT size");
    mel->add_option("--n-mels", mel_cfg.n_mels, "mel bands");
    mel->add_option("--hop", mel_cfg.base_hop, "base hop in samples");
    mel->add_option("--sr", mel_cfg.sample_rate, "expected sample rate");

    auto* tr = app.add_subcommand("train", "train a model on a corpus directory");
    std::string tr_corpus, tr_out = "model.stkm", tr_log, tr_config;
    double val_frac = 0.15;
    TrainConfig tr_cfg;
    EncoderConfig tr_enc;
    FrontendConfig tr_fe;
    bool no_cl = false;
    tr->add_option("--corpus", tr_corpus, "corpus directory (wav + tsv pairs)")->required();
    tr->add_option("--out", tr_out, "output model path");
    tr->add_option("--log", tr_log, "JSONL training log path");
    tr->add_option("--config", tr_config, "JSON config file overriding any flag");
    tr->add_option("--T", tr_cfg.window_T, "training window seconds");
    tr->add_option("--N", tr_cfg.ratio_N, "down-sampling ratio");
    tr->add_option("--steps", tr_cfg.total_steps, "training steps");
    tr->add_option("--batch", tr_cfg.batch_size, "batch size");
    tr->add_option("--lr0", tr_cfg.lr0, "initial learning rate");
    tr->add_option("--lr-gamma", tr_cfg.lr_decay_gamma, "exponential decay factor");
    tr->add_option("--lr-every", tr_cfg.lr_decay_every, "decay interval in steps");
    tr->add_option("--seed", tr_cfg.seed, "training seed");
    tr->add_option("--eval-every", tr_cfg.eval_every, "validation interval in steps");
    tr->add_option("--max-pairs", tr_cfg.max_pairs, "contrastive pairs per window");
    tr->add_option("--threads", tr_cfg.threads, "batch worker threads (1 = sequential)");
    tr->add_option("--val-frac", val_frac, "held-out validation fraction");
    tr->add_flag("--no-contrastive", no_cl, "disable the contrastive term");
    tr->add_option("--d-model", tr_enc.d_model, "model width");
    tr->add_option("--backbone-blocks", tr_enc.n_backbone_blocks, "Conformer-style blocks");
    tr->add_option("--head-blocks", tr_enc.n_head_blocks, "Transformer head blocks");
    tr->add_option("--heads", tr_enc.n_heads, "attention heads");
    tr->add_option("--ff-mult", tr_enc.ff_mult, "feed-forward width multiplier");
    tr->add_option("--conv-kernel", tr_enc.conv_kernel, "depthwise kernel size");
    tr->add_option("--stem-stride", tr_enc.stem_stride, "stem stride");
    tr->add_option("--proj-dim", tr_enc.proj_dim, "contrastive projection width");
    tr->add_option("--n-fft", tr_fe.n_fft, "FFT size");
    tr->add_option("--n-mels", tr_fe.n_mels, "mel bands");
    tr->add_option("--hop", tr_fe.base_hop, "base hop in samples");
    tr->add_option("--sr", tr_fe.sample_rate, "corpus sample rate");

    auto* seg = app.add_subcommand("segment", "segment one song with a trained model");
    std::string seg_in, seg_model, seg_out, seg_act;
    PeakPickConfig seg_peak;
    seg->add_option("input", seg_in, "input WAV")->required();
    seg->add_option("--model", seg_model, "trained .stkm model")->required();
    seg->add_option("--out", seg_out, "output TSV path")->required();
    seg->add_option("--act-out", seg_act, "optional activation dump (.actv)");
    seg->add_option("--peak-max-window", seg_peak.max_window, "strict-max window seconds");
    seg->add_option("--peak-mean-window", seg_peak.mean_window, "local-mean window seconds");
    seg->add_option("--peak-delta", seg_peak.delta, "activation offset above the local mean");
    seg->add_option("--peak-min-separation", seg_peak.min_separation, "minimum peak distance");

    auto* sc = app.add_subcommand("score", "score estimate TSVs against references");
    std::string sc_ref, sc_est, sc_out = "report.json";
    sc->add_option("--ref", sc_ref, "reference annotation directory")->required();
    sc->add_option("--est", sc_est, "estimated annotation directory")->required();
    sc->add_option("--out", sc_out, "report JSON path (CSV mirror written next to it)");

    auto* ab = app.add_subcommand("ablate", "run a (T, N, contrastive) ablation grid");
    std::string ab_spec, ab_out = "grid.csv", ab_corpus;
    ab->add_option("--spec", ab_spec, "ablation spec JSON")->required();
    ab->add_option("--out", ab_out, "output CSV path");
    ab->add_option("--corpus", ab_corpus, "corpus directory (overrides the spec)");

    auto* pr = app.add_subcommand("profile", "profile training-step cost for (T, N) cells");
    std::vector<double> pr_T = {48.0};
    std::vector<int> pr_N = {1};
    int pr_batch = 8, pr_steps = 20, pr_warmup = 5;
    std::string pr_out;
    EncoderConfig pr_enc;
    FrontendConfig pr_fe;
    pr->add_option("--T", pr_T, "window seconds (repeatable)");
    pr->add_option("--N", pr_N, "down-sampling ratio (repeatable)");
    pr->add_option("--batch", pr_batch, "batch size");
    pr->add_option("--steps", pr_steps, "timed steps");
    pr->add_option("--warmup", pr_warmup, "warmup steps");
    pr->add_option("--out", pr_out, "output CSV path");
    pr->add_option("--d-model", pr_enc.d_model, "model width");
    pr->add_option("--backbone-blocks", pr_enc.n_backbone_blocks, "Conformer-style blocks");
    pr->add_option("--head-blocks", pr_enc.n_head_blocks, "Transformer head blocks");
    pr->add_option("--heads", pr_enc.n_heads, "attention heads");
    pr->add_option("--stem-stride", pr_enc.stem_stride, "stem stride");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return run_synth(synth_out, n_songs, synth_seed, corpus_params);
        if (mel->parsed()) return run_melgram(mel_in, mel_out, mel_cfg);
        if (tr->parsed()) {
            if (no_cl) tr_cfg.contrastive_enabled = false;
            if (!tr_config.empty()) apply_config_file(tr_config, tr_cfg, tr_enc, tr_fe);
            return run_train(tr_corpus, tr_out, tr_log, val_frac, tr_cfg, tr_enc, tr_fe);
        }
        if (seg->parsed()) return run_segment(seg_in, seg_model, seg_out, seg_act, seg_peak);
        if (sc->parsed()) return run_score(sc_ref, sc_est, sc_out);
        if (ab->parsed()) return run_ablate_cmd(ab_spec, ab_out, ab_corpus);
        if (pr->parsed())
            return run_profile(pr_T, pr_N, pr_batch, pr_steps, pr_warmup, pr_out, pr_enc, pr_fe);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
