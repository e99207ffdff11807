#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "strukt/tape.hpp"

namespace strukt {

struct EncoderConfig {
    int d_model = 64;
    int n_backbone_blocks = 4;  // Conformer-style; paper scale 12
    int n_head_blocks = 2;      // plain Transformer; paper scale 4
    int n_heads = 4;
    int ff_mult = 2;
    int conv_kernel = 7;
    int stem_stride = 4;
    int n_classes = 5;
    int proj_dim = 16;          // contrastive projection; paper scale 64
    int n_mels = 128;

    void validate() const;  // throws ConfigError
};

// Flat parameter vector with a name -> (offset, shape) index. Layout is a
// pure function of the config, so a stored vector can be rebound to a fresh
// Encoder of the same config.
class ParamStore {
  public:
    enum class Init { kZeros, kOnes, kUniformFanInOut, kUniformKernel };

    struct Entry {
        std::string name;
        int offset = 0;
        int rows = 0;
        int cols = 0;
        Init init = Init::kZeros;
        std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
    };

    int add(const std::string& name, int rows, int cols, Init init);
    const Entry& entry(int idx) const { return entries_[static_cast<std::size_t>(idx)]; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t total() const { return values_.size(); }

    std::span<const double> view(int idx) const;
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    // Scaled-uniform init: +-sqrt(6/(fan_in+fan_out)) for linear maps,
    // +-sqrt(6/(K+1)) for depthwise kernels, zeros/ones per entry kind.
    void initialize(std::uint64_t seed);
    std::uint64_t init_seed() const { return init_seed_; }

  private:
    std::vector<Entry> entries_;
    std::vector<double> values_;
    std::uint64_t init_seed_ = 0;
};

// Conformer-style encoder: strided depthwise+pointwise stem, sinusoidal
// absolute positions, pre-norm backbone blocks (half-step FF, MHSA, conv
// sub-block with GLU and layernorm, half-step FF), plain pre-norm
// Transformer head blocks, one final layernorm, and three linear output
// maps (boundary, function, contrastive projection).
class Encoder {
  public:
    Encoder(EncoderConfig cfg, std::uint64_t init_seed);
    Encoder(EncoderConfig cfg, std::vector<double> flat_params);  // rebind loaded params

    const EncoderConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    static int output_length(int frames, int stem_stride) {
        return (frames + stem_stride - 1) / stem_stride;
    }

    struct Outputs {
        int boundary_logits = -1;  // [L' x 1]
        int function_logits = -1;  // [L' x C]
        int embeddings = -1;       // [L' x d_model]
    };

    // Builds the forward graph on the tape for one mel window [F x n_mels].
    Outputs forward(Tape& tape, const Tensor& mel) const;

    // Span means of frame embeddings, linearly projected to proj_dim.
    // Spans are [begin, end) frame ranges; each must be non-empty.
    std::vector<int> project_embeddings(Tape& tape, int embeddings,
                                        const std::vector<std::pair<int, int>>& spans) const;

  private:
    void build_layout();
    int p(Tape& tape, int entry_idx) const;  // param leaf

    EncoderConfig cfg_;
    ParamStore params_;
    // entry indices, resolved once at construction
    struct Layout;
    std::vector<int> order_;  // all entries in registration order
};

// Central finite differences on n_probes random coordinates of `params`
// against `analytic_grad`. Returns max |ad-fd| / max(|ad|, |fd|, 1e-3).
// Inputs should be nudged off non-smooth points (clamp edges, huber kink).
double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> analytic_grad, std::span<double> params, int n_probes,
                  double eps, std::uint64_t seed);

// Tape buffers are multi-megabyte and short-lived; glibc serves them via
// mmap/munmap by default, which dominates step time with page faults.
// Call once from main() before training or profiling to keep them on the
// heap. No effect on results, only on speed.
void tune_allocator_for_training();

}  // namespace strukt
