#include "strukt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "strukt/error.hpp"

namespace strukt {
namespace {

std::string csv_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

CorpusSplit split_corpus(const Corpus& corpus, std::uint64_t seed, double train_frac,
                         double val_frac) {
    if (corpus.size() < 3) throw InputError("split_corpus: need at least 3 songs");
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed).fork(0x5317);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_index(i)]);

    const auto n = corpus.size();
    auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
    auto n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 2);
    n_val = std::clamp<std::size_t>(n_val, 1, n - n_train - 1);

    CorpusSplit split;
    for (std::size_t i = 0; i < n; ++i) {
        const Song& song = corpus[order[i]];
        if (i < n_train)
            split.train.push_back(song);
        else if (i < n_train + n_val)
            split.val.push_back(song);
        else
            split.test.push_back(song);
    }
    return split;
}

void AblationSpec::validate() const {
    if (T_values.empty() || N_values.empty() || cl_enabled.empty())
        throw ConfigError("ablation: empty axis");
    if (repeats < 1) throw ConfigError("ablation: repeats must be >= 1");
    for (double T : T_values)
        for (int N : N_values) {
            if (T * frontend.sample_rate < static_cast<double>(frontend.n_fft) * N)
                throw ConfigError("ablation: cell T=" + std::to_string(T) +
                                  " N=" + std::to_string(N) + " violates the window invariant");
        }
}

std::vector<AblationRow> run_ablation(const AblationSpec& spec, const Corpus& corpus,
                                      const LabelVocab& vocab, std::ostream* progress) {
    spec.validate();
    const CorpusSplit split = split_corpus(corpus, spec.base.seed);

    std::vector<AblationRow> rows;
    int cell_index = 0;
    for (double T : spec.T_values)
        for (int N : spec.N_values)
            for (bool cl : spec.cl_enabled)
                for (int rep = 0; rep < spec.repeats; ++rep, ++cell_index) {
                    AblationRow row;
                    row.T = T;
                    row.N = N;
                    row.cl = cl;
                    row.repeat = rep;
                    try {
                        TrainConfig cfg = spec.base;
                        cfg.window_T = T;
                        cfg.ratio_N = N;
                        cfg.contrastive_enabled = cl;
                        cfg.seed = Rng(spec.base.seed)
                                       .fork(0xAB1A + static_cast<std::uint64_t>(rep) * 7919 +
                                             static_cast<std::uint64_t>(cell_index))
                                       .next_u64();
                        if (progress)
                            (*progress) << "[ablate] T=" << T << " N=" << N << " cl=" << cl
                                        << " repeat=" << rep << "\n"
                                        << std::flush;
                        const TrainResult trained = train(split.train, split.val, spec.encoder,
                                                          spec.frontend, cfg, vocab, nullptr);
                        if (!trained.abort_reason.empty())
                            throw NumericError("training aborted: " + trained.abort_reason);

                        double acc = 0, hr05 = 0, hr3 = 0;
                        for (const auto& song : split.test) {
                            const MetricsReport r =
                                evaluate_on_song(trained.model, song, cfg.peak);
                            acc += r.acc;
                            hr05 += r.hr_05.f;
                            hr3 += r.hr_3.f;
                        }
                        const double n = static_cast<double>(split.test.size());
                        row.acc = acc / n;
                        row.hr05f = hr05 / n;
                        row.hr3f = hr3 / n;
                        row.time_per_batch = trained.median_step_seconds;
                        row.ok = true;
                    } catch (const std::exception& e) {
                        row.ok = false;
                        row.error = e.what();
                        if (progress)
                            (*progress) << "[ablate] cell failed: " << e.what() << "\n";
                    }
                    rows.push_back(std::move(row));
                }
    return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write ablation CSV: " + path);
    out << "T,N,cl,repeat,acc,hr05f,hr3f,time_per_batch\n";
    for (const auto& r : rows) {
        out << csv_double(r.T) << "," << r.N << "," << (r.cl ? 1 : 0) << "," << r.repeat << ",";
        if (r.ok)
            out << csv_double(r.acc) << "," << csv_double(r.hr05f) << "," << csv_double(r.hr3f)
                << "," << csv_double(r.time_per_batch) << "\n";
        else
            out << "nan,nan,nan,nan\n";
    }
}

CostRow profile_cost(double T, int N, FrontendConfig frontend, EncoderConfig encoder,
                     int batch_size, int timed_steps, int warmup_steps, std::uint64_t seed) {
    frontend.ratio_N = N;
    frontend.validate();
    encoder.n_mels = frontend.n_mels;
    encoder.validate();

    const auto n_samples = static_cast<std::size_t>(std::llround(T * frontend.sample_rate));
    const int frames = frame_count(n_samples, frontend.effective_hop());
    const int l_out = Encoder::output_length(frames, encoder.stem_stride);
    const double grid_rate = frontend.frame_rate() / encoder.stem_stride;

    Encoder model(encoder, Rng(seed).fork(1).next_u64());
    Rng rng = Rng(seed).fork(2);

    // Random mel input and plausible targets: a boundary bump roughly every
    // eight seconds, one-hot labels switching at the bumps.
    auto make_mel = [&]() {
        Tensor mel(frames, frontend.n_mels);
        for (double& x : mel.data) x = rng.normal();
        return mel;
    };
    SegmentTrack fake_track;
    {
        const double section = 8.0;
        double t0 = 0.0;
        int label = 0;
        while (t0 < T) {
            const double end = std::min(T, t0 + section);
            fake_track.segments.push_back({t0, end, label % encoder.n_classes});
            ++label;
            t0 = end;
        }
        fake_track.duration = T;
    }
    const ActivationTargets targets =
        targets_from_track(fake_track, {0.0, T}, grid_rate, 1.0, encoder.n_classes, l_out);

    Tensor b_target(l_out, 1), b_mask(l_out, 1), ones(l_out, 1), b_binary(l_out, 1);
    for (int l = 0; l < l_out; ++l) {
        b_target.at(l, 0) = targets.boundary[static_cast<std::size_t>(l)];
        b_binary.at(l, 0) = b_target.at(l, 0) > 0.5 ? 1.0 : 0.0;
        b_mask.at(l, 0) = 1.0;
        ones.at(l, 0) = 1.0;
    }
    Tensor f_target(l_out, encoder.n_classes), f_mask(l_out, encoder.n_classes),
        f_ones(l_out, encoder.n_classes);
    for (int l = 0; l < l_out; ++l)
        for (int c = 0; c < encoder.n_classes; ++c) {
            f_target.at(l, c) =
                targets.functions[static_cast<std::size_t>(l)][static_cast<std::size_t>(c)];
            f_mask.at(l, c) = 1.0;
            f_ones.at(l, c) = 1.0;
        }

    LossWeights weights;
    auto run_pass = [&](Tape& tape, const Tensor& mel, std::span<double> grad) {
        const auto outputs = model.forward(tape, mel);
        const int b_pred = tape.sigmoid(outputs.boundary_logits);
        const int f_pred = tape.sigmoid(outputs.function_logits);
        const int b_wbce = wbce_node(tape, b_pred, b_target, ones, b_mask);
        const int b_sl1 = smooth_l1_node(tape, b_pred, b_target, b_mask, weights.smooth_l1_beta);
        const int b_focal =
            focal_node(tape, b_pred, b_binary, b_mask, weights.focal_alpha, weights.focal_gamma);
        const int f_wbce = wbce_node(tape, f_pred, f_target, f_ones, f_mask);
        const int combined =
            combine_node(tape, b_wbce, b_sl1, b_focal, f_wbce, std::nullopt, weights, nullptr);
        tape.backward(combined, grad);
    };

    CostRow row;
    row.T = T;
    row.N = N;
    row.seq_len = l_out;
    row.peak_param_floats = 4.0 * static_cast<double>(model.params().total());

    // Shape-only counters from one untimed tape.
    {
        Tape tape;
        std::vector<double> grad(model.params().total(), 0.0);
        const Tensor mel = make_mel();
        run_pass(tape, mel, grad);
        row.analytic_flops =
            (tape.forward_flops() + tape.backward_flops()) * static_cast<double>(batch_size);
        row.analytic_activation_floats = tape.activation_floats();
        row.attn_activation_floats = tape.tagged_floats(Tape::Tag::kAttentionScores) +
                                     tape.tagged_floats(Tape::Tag::kAttentionProbs);
    }

    std::vector<double> times;
    std::vector<double> grad(model.params().total(), 0.0);
    for (int step = 0; step < warmup_steps + timed_steps; ++step) {
        std::vector<Tensor> mels;
        mels.reserve(static_cast<std::size_t>(batch_size));
        for (int b = 0; b < batch_size; ++b) mels.push_back(make_mel());
        const auto t0 = std::chrono::steady_clock::now();
        for (int b = 0; b < batch_size; ++b) {
            Tape tape;
            std::fill(grad.begin(), grad.end(), 0.0);
            run_pass(tape, mels[static_cast<std::size_t>(b)], grad);
        }
        const auto t1 = std::chrono::steady_clock::now();
        if (step >= warmup_steps)
            times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    row.time_per_batch = times[times.size() / 2];
    return row;
}

void write_cost_csv(const std::string& path, const std::vector<CostRow>& rows) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write cost CSV: " + path);
    out << "T,N,seq_len,time_per_batch,analytic_flops,analytic_activation_floats,"
           "attn_activation_floats,peak_param_floats\n";
    for (const auto& r : rows) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%.6f,%d,%d,%.6f,%.0f,%.0f,%.0f,%.0f\n", r.T, r.N,
                      r.seq_len, r.time_per_batch, r.analytic_flops, r.analytic_activation_floats,
                      r.attn_activation_floats, r.peak_param_floats);
        out << buf;
    }
}

}  // namespace strukt
