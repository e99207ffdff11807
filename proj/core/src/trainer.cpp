#include "strukt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "strukt/error.hpp"

namespace strukt {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct ItemDraw {
    int song = 0;
    double offset = 0.0;
    std::uint64_t pair_seed = 0;
};

struct ItemResult {
    std::vector<double> grad;
    LossReport report;
    bool ok = false;
    std::string error;
};

// One batch item: crop, features, targets, forward, four-part loss, backward.
ItemResult run_item(const Song& song, const ItemDraw& draw, const Encoder& encoder,
                    const FrontendConfig& frontend, const TrainConfig& cfg,
                    const MelStats& stats, const std::vector<double>& fn_class_weights) {
    ItemResult out;
    try {
        const auto crop = crop_window(song.clip, draw.offset, cfg.window_T);
        const MelGram mel = melgram(crop.clip, frontend);
        const Tensor mel_in = standardized_mel_tensor(mel, stats.mean, stats.std_dev);

        const int l_out = Encoder::output_length(mel.frames, encoder.config().stem_stride);
        const double grid_rate = frontend.frame_rate() / encoder.config().stem_stride;
        const ActivationTargets targets =
            targets_from_track(song.track, {draw.offset, cfg.window_T}, grid_rate,
                               cfg.ramp_width, encoder.config().n_classes, l_out);

        Tape tape;
        const auto outputs = encoder.forward(tape, mel_in);
        const int boundary_pred = tape.sigmoid(outputs.boundary_logits);
        const int function_pred = tape.sigmoid(outputs.function_logits);

        // Boundary tensors [L' x 1].
        Tensor b_target(l_out, 1), b_mask(l_out, 1), b_weights(l_out, 1), b_binary(l_out, 1);
        double mass = 0.0;
        int n_valid = 0;
        for (int l = 0; l < l_out; ++l) {
            const bool valid = targets.valid_mask[static_cast<std::size_t>(l)];
            b_target.at(l, 0) = targets.boundary[static_cast<std::size_t>(l)];
            b_mask.at(l, 0) = valid ? 1.0 : 0.0;
            b_binary.at(l, 0) = targets.boundary[static_cast<std::size_t>(l)] > 0.5 ? 1.0 : 0.0;
            if (valid) {
                mass += targets.boundary[static_cast<std::size_t>(l)];
                ++n_valid;
            }
        }
        // Positive-ish frames get L/mass (capped); everything else weight 1.
        const double pos_w = mass > 0.0 ? std::min(20.0, n_valid / mass) : 1.0;
        for (int l = 0; l < l_out; ++l)
            b_weights.at(l, 0) = b_target.at(l, 0) > 0.5 ? pos_w : 1.0;

        // Function tensors [L' x C] with per-class weights.
        const int C = encoder.config().n_classes;
        Tensor f_target(l_out, C), f_mask(l_out, C), f_weights(l_out, C);
        for (int l = 0; l < l_out; ++l) {
            const bool valid = targets.valid_mask[static_cast<std::size_t>(l)];
            for (int c = 0; c < C; ++c) {
                f_target.at(l, c) = targets.functions[static_cast<std::size_t>(l)][static_cast<std::size_t>(c)];
                f_mask.at(l, c) = valid ? 1.0 : 0.0;
                f_weights.at(l, c) = fn_class_weights[static_cast<std::size_t>(c)];
            }
        }

        const int b_wbce = wbce_node(tape, boundary_pred, b_target, b_weights, b_mask);
        const int b_sl1 =
            smooth_l1_node(tape, boundary_pred, b_target, b_mask, cfg.loss.smooth_l1_beta);
        const int b_focal = focal_node(tape, boundary_pred, b_binary, b_mask,
                                       cfg.loss.focal_alpha, cfg.loss.focal_gamma);
        const int f_wbce = wbce_node(tape, function_pred, f_target, f_weights, f_mask);

        // Contrastive pairs over window-intersecting segments mapped onto
        // the output grid; sub-frame spans are dropped.
        std::optional<int> cl_node;
        int pair_count = 0;
        if (cfg.contrastive_enabled) {
            Rng pair_rng(draw.pair_seed);
            const WindowSegments ws =
                segment_pairs(song.track, {draw.offset, cfg.window_T}, cfg.max_pairs, pair_rng);
            std::vector<std::pair<int, int>> spans(ws.segments.size(), {0, 0});
            std::vector<bool> span_ok(ws.segments.size(), false);
            for (std::size_t s = 0; s < ws.segments.size(); ++s) {
                int a = static_cast<int>(std::llround(ws.segments[s].start * grid_rate));
                int b = static_cast<int>(std::llround(ws.segments[s].end * grid_rate));
                a = std::clamp(a, 0, l_out);
                b = std::clamp(b, 0, l_out);
                if (b - a >= 1) {
                    spans[s] = {a, b};
                    span_ok[s] = true;
                }
            }
            std::vector<std::pair<int, int>> z_pairs;
            std::vector<bool> same;
            std::vector<std::pair<int, int>> wanted_spans;
            std::vector<int> span_node_of(ws.segments.size(), -1);
            for (const auto& pr : ws.pairs) {
                if (!span_ok[static_cast<std::size_t>(pr.i)] ||
                    !span_ok[static_cast<std::size_t>(pr.j)])
                    continue;
                for (int idx : {pr.i, pr.j})
                    if (span_node_of[static_cast<std::size_t>(idx)] < 0) {
                        span_node_of[static_cast<std::size_t>(idx)] =
                            static_cast<int>(wanted_spans.size());
                        wanted_spans.push_back(spans[static_cast<std::size_t>(idx)]);
                    }
                z_pairs.emplace_back(span_node_of[static_cast<std::size_t>(pr.i)],
                                     span_node_of[static_cast<std::size_t>(pr.j)]);
                same.push_back(pr.same_label);
            }
            if (!z_pairs.empty()) {
                const auto z_nodes =
                    encoder.project_embeddings(tape, outputs.embeddings, wanted_spans);
                std::vector<std::pair<int, int>> node_pairs;
                node_pairs.reserve(z_pairs.size());
                for (const auto& [a, b] : z_pairs)
                    node_pairs.emplace_back(z_nodes[static_cast<std::size_t>(a)],
                                            z_nodes[static_cast<std::size_t>(b)]);
                cl_node = contrastive_node(tape, node_pairs, same, cfg.loss.margin);
                pair_count = static_cast<int>(node_pairs.size());
            }
        }

        const int combined =
            combine_node(tape, b_wbce, b_sl1, b_focal, f_wbce, cl_node, cfg.loss, &out.report);
        out.report.pair_count = pair_count;

        out.grad.assign(encoder.params().total(), 0.0);
        tape.backward(combined, out.grad);
        out.ok = true;
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
    return out;
}

std::vector<int> pred_argmax(const Tensor& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.rows));
    for (int l = 0; l < logits.rows; ++l) {
        int best = 0;
        for (int c = 1; c < logits.cols; ++c)
            if (logits.at(l, c) > logits.at(l, best)) best = c;
        out[static_cast<std::size_t>(l)] = best;
    }
    return out;
}

}  // namespace

Corpus load_corpus(const std::string& dir, LabelVocab& vocab) {
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".wav") stems.push_back(entry.path().stem().string());
    }
    std::sort(stems.begin(), stems.end());
    Corpus corpus;
    for (const auto& stem : stems) {
        const std::string wav = (fs::path(dir) / (stem + ".wav")).string();
        const std::string tsv = (fs::path(dir) / (stem + ".tsv")).string();
        if (!fs::exists(tsv)) continue;
        Song song;
        song.id = stem;
        song.clip = load_wav(wav);
        song.track = parse_segments(tsv, song.clip.duration(), vocab);
        corpus.push_back(std::move(song));
    }
    if (corpus.empty()) throw InputError("no wav/tsv pairs found in " + dir);
    return corpus;
}

void TrainConfig::validate(const FrontendConfig& frontend) const {
    if (window_T * frontend.sample_rate < frontend.n_fft * static_cast<double>(ratio_N))
        throw ConfigError("train: window_T * sample_rate must cover n_fft * ratio_N");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (total_steps < 1) throw ConfigError("train: total_steps must be >= 1");
    if (lr0 <= 0 || lr_decay_gamma <= 0 || lr_decay_every < 1)
        throw ConfigError("train: bad learning-rate schedule");
    loss.validate();
}

double TrainConfig::lr_at(int step) const {
    return lr0 * std::pow(lr_decay_gamma, static_cast<double>(step / lr_decay_every));
}

void AdamState::step(std::span<double> params, std::span<const double> grad, double lr) {
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw ContractError("adam: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
        v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
}

MelStats compute_mel_stats(const Corpus& songs, const FrontendConfig& cfg) {
    std::vector<double> sum(static_cast<std::size_t>(cfg.n_mels), 0.0);
    std::vector<double> sumsq(static_cast<std::size_t>(cfg.n_mels), 0.0);
    long long frames = 0;
    for (const auto& song : songs) {
        const MelGram mel = melgram(song.clip, cfg);
        for (int f = 0; f < mel.frames; ++f)
            for (int m = 0; m < mel.bands; ++m) {
                const double x = mel.at(f, m);
                sum[static_cast<std::size_t>(m)] += x;
                sumsq[static_cast<std::size_t>(m)] += x * x;
            }
        frames += mel.frames;
    }
    if (frames == 0) throw InputError("compute_mel_stats: empty corpus");
    MelStats stats;
    stats.mean.resize(static_cast<std::size_t>(cfg.n_mels));
    stats.std_dev.resize(static_cast<std::size_t>(cfg.n_mels));
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double mu = sum[static_cast<std::size_t>(m)] / static_cast<double>(frames);
        const double var =
            sumsq[static_cast<std::size_t>(m)] / static_cast<double>(frames) - mu * mu;
        stats.mean[static_cast<std::size_t>(m)] = mu;
        stats.std_dev[static_cast<std::size_t>(m)] = std::sqrt(std::max(var, 1e-12));
    }
    return stats;
}

Tensor standardized_mel_tensor(const MelGram& mel, const std::vector<double>& mean,
                               const std::vector<double>& std_dev) {
    if (static_cast<int>(mean.size()) != mel.bands || static_cast<int>(std_dev.size()) != mel.bands)
        throw ContractError("standardize: statistics do not match band count");
    Tensor out(mel.frames, mel.bands);
    for (int f = 0; f < mel.frames; ++f)
        for (int m = 0; m < mel.bands; ++m)
            out.at(f, m) = (mel.at(f, m) - mean[static_cast<std::size_t>(m)]) /
                           std_dev[static_cast<std::size_t>(m)];
    return out;
}

std::vector<double> class_weights(const Corpus& songs, int n_classes) {
    std::vector<double> duration(static_cast<std::size_t>(n_classes), 0.0);
    double total = 0.0;
    for (const auto& song : songs)
        for (const auto& seg : song.track.segments) {
            if (seg.label >= 0 && seg.label < n_classes) {
                duration[static_cast<std::size_t>(seg.label)] += seg.end - seg.start;
                total += seg.end - seg.start;
            }
        }
    std::vector<double> w(static_cast<std::size_t>(n_classes), 1.0);
    if (total <= 0.0) return w;
    for (int c = 0; c < n_classes; ++c) {
        const double freq = duration[static_cast<std::size_t>(c)] / total;
        w[static_cast<std::size_t>(c)] = freq > 0.0 ? 1.0 / freq : 1.0;
    }
    double mean = 0.0;
    for (double x : w) mean += x;
    mean /= n_classes;
    for (double& x : w) x = std::min(10.0, x / mean);
    return w;
}

Inference infer_full_song(const ModelBundle& bundle, const AudioClip& clip) {
    FrontendConfig frontend = bundle.frontend;
    if (clip.sample_rate != frontend.sample_rate)
        throw InputError("infer: clip sample rate " + std::to_string(clip.sample_rate) +
                         " does not match the model's " + std::to_string(frontend.sample_rate));
    if (clip.samples.size() <
        static_cast<std::size_t>(frontend.n_fft))
        throw InputError("infer: clip shorter than one analysis window");

    const Encoder encoder(bundle.encoder, bundle.params);
    const MelGram mel = melgram(clip, frontend);
    const Tensor mel_in = standardized_mel_tensor(mel, bundle.mel_mean, bundle.mel_std);

    Tape tape;
    const auto outputs = encoder.forward(tape, mel_in);
    const int b_act = tape.sigmoid(outputs.boundary_logits);

    Inference result;
    result.grid_rate = frontend.frame_rate() / bundle.encoder.stem_stride;
    const Tensor& b = tape.value(b_act);
    result.boundary.assign(b.data.begin(), b.data.end());
    result.function_logits = tape.value(outputs.function_logits);
    return result;
}

MetricsReport evaluate_on_song(const ModelBundle& bundle, const Song& song,
                               const PeakPickConfig& peak_cfg) {
    const Inference inf = infer_full_song(bundle, song.clip);
    return evaluate_song(inf.boundary, inf.function_logits, inf.grid_rate, song.track, peak_cfg);
}

TrainResult train(const Corpus& train_songs, const Corpus& val_songs, EncoderConfig encoder_cfg,
                  FrontendConfig frontend_cfg, const TrainConfig& cfg, const LabelVocab& vocab,
                  std::ostream* jsonl_log) {
    frontend_cfg.ratio_N = cfg.ratio_N;
    frontend_cfg.validate();
    cfg.validate(frontend_cfg);
    if (train_songs.empty()) throw InputError("train: empty corpus");
    encoder_cfg.n_classes = vocab.size() > 0 ? vocab.size() : encoder_cfg.n_classes;
    encoder_cfg.n_mels = frontend_cfg.n_mels;

    Encoder encoder(encoder_cfg, Rng(cfg.seed).fork(0x1417).next_u64());
    const MelStats stats = compute_mel_stats(train_songs, frontend_cfg);
    const std::vector<double> fn_weights = class_weights(train_songs, encoder_cfg.n_classes);

    TrainResult result;
    result.model.encoder = encoder_cfg;
    result.model.frontend = frontend_cfg;
    result.model.vocabulary = vocab.names();
    result.model.mel_mean = stats.mean;
    result.model.mel_std = stats.std_dev;
    result.model.init_seed = encoder.params().init_seed();
    result.model.params = encoder.params().values();  // step-0 fallback

    AdamState adam(encoder.params().total());
    Rng base(cfg.seed);
    const int n_threads = cfg.threads > 0
                              ? cfg.threads
                              : std::max(1u, std::thread::hardware_concurrency());

    auto run_validation = [&](int step) {
        if (val_songs.empty()) return;
        ModelBundle current = result.model;
        current.params = encoder.params().values();
        double acc = 0, hr05 = 0, hr3 = 0;
        for (const auto& song : val_songs) {
            const MetricsReport r = evaluate_on_song(current, song, cfg.peak);
            acc += r.acc;
            hr05 += r.hr_05.f;
            hr3 += r.hr_3.f;
        }
        const double n = static_cast<double>(val_songs.size());
        EvalRecord rec{step, acc / n, hr05 / n, hr3 / n};
        result.evals.push_back(rec);
        if (rec.acc > result.best_val_acc) {
            result.best_val_acc = rec.acc;
            result.best_step = step;
            result.model.params = encoder.params().values();
        }
        if (jsonl_log) {
            json j{{"step", step},
                   {"val_acc", rec.acc},
                   {"val_hr05f", rec.hr05f},
                   {"val_hr3f", rec.hr3f}};
            (*jsonl_log) << j.dump() << "\n";
        }
    };

    std::vector<double> step_seconds;
    for (int step = 0; step < cfg.total_steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();

        // All randomness is drawn sequentially before the parallel section.
        Rng step_rng = base.fork(0x57E0 + static_cast<std::uint64_t>(step));
        std::vector<ItemDraw> draws(static_cast<std::size_t>(cfg.batch_size));
        for (auto& d : draws) {
            d.song = static_cast<int>(step_rng.uniform_index(train_songs.size()));
            const double span =
                std::max(0.0, train_songs[static_cast<std::size_t>(d.song)].clip.duration() -
                                  cfg.window_T);
            d.offset = span > 0.0 ? step_rng.uniform(0.0, span) : 0.0;
            d.pair_seed = step_rng.next_u64();
        }

        std::vector<ItemResult> items(static_cast<std::size_t>(cfg.batch_size));
        auto worker = [&](int begin, int stride) {
            for (int i = begin; i < cfg.batch_size; i += stride)
                items[static_cast<std::size_t>(i)] =
                    run_item(train_songs[static_cast<std::size_t>(draws[static_cast<std::size_t>(i)].song)],
                             draws[static_cast<std::size_t>(i)], encoder, frontend_cfg, cfg, stats,
                             fn_weights);
        };
        const int workers = std::min(n_threads, cfg.batch_size);
        if (workers <= 1) {
            worker(0, 1);
        } else {
            std::vector<std::thread> pool;
            for (int w = 1; w < workers; ++w) pool.emplace_back(worker, w, workers);
            worker(0, workers);
            for (auto& th : pool) th.join();
        }

        // Fixed-order reduction keeps parallel and sequential runs identical.
        std::vector<double> grad(encoder.params().total(), 0.0);
        LossReport mean_report;
        for (int i = 0; i < cfg.batch_size; ++i) {
            const ItemResult& item = items[static_cast<std::size_t>(i)];
            if (!item.ok) {
                result.abort_reason =
                    "step " + std::to_string(step) + ": " + item.error;
                run_validation(step);
                return result;
            }
            for (std::size_t g = 0; g < grad.size(); ++g) grad[g] += item.grad[g];
            mean_report.boundary_wbce += item.report.boundary_wbce;
            mean_report.boundary_smooth_l1 += item.report.boundary_smooth_l1;
            mean_report.boundary_focal += item.report.boundary_focal;
            mean_report.function_wbce += item.report.function_wbce;
            mean_report.contrastive += item.report.contrastive;
            mean_report.combined += item.report.combined;
            mean_report.pair_count += item.report.pair_count;
        }
        const double inv_b = 1.0 / cfg.batch_size;
        for (double& g : grad) g *= inv_b;
        mean_report.boundary_wbce *= inv_b;
        mean_report.boundary_smooth_l1 *= inv_b;
        mean_report.boundary_focal *= inv_b;
        mean_report.function_wbce *= inv_b;
        mean_report.contrastive *= inv_b;
        mean_report.combined *= inv_b;

        bool finite = true;
        for (double g : grad)
            if (!std::isfinite(g)) finite = false;
        if (!finite) {
            result.abort_reason = "step " + std::to_string(step) + ": non-finite gradient";
            run_validation(step);
            return result;
        }

        const double lr = cfg.lr_at(step);
        adam.step(encoder.params().values(), grad, lr);

        const auto t1 = std::chrono::steady_clock::now();
        if (step >= 5)
            step_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());

        if (jsonl_log) {
            json j{{"step", step},
                   {"lr", lr},
                   {"boundary_wbce", mean_report.boundary_wbce},
                   {"boundary_smooth_l1", mean_report.boundary_smooth_l1},
                   {"boundary_focal", mean_report.boundary_focal},
                   {"function_wbce", mean_report.function_wbce},
                   {"contrastive", mean_report.contrastive},
                   {"combined", mean_report.combined},
                   {"pair_count", mean_report.pair_count}};
            (*jsonl_log) << j.dump() << "\n";
        }

        if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0) run_validation(step + 1);
    }
    if (result.evals.empty() || result.evals.back().step != cfg.total_steps)
        run_validation(cfg.total_steps);
    if (result.best_step < 0) result.model.params = encoder.params().values();

    if (!step_seconds.empty()) {
        std::sort(step_seconds.begin(), step_seconds.end());
        result.median_step_seconds = step_seconds[step_seconds.size() / 2];
    }
    return result;
}

}  // namespace strukt
